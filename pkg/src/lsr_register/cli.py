"""Command-line front end.

Subcommands: ``register`` (full pipeline), ``segment`` (line-support
segmentation of one image), ``eval`` (fixture-driven method comparison).
Every run writes a manifest recording the command line, effective config,
seed, input hashes, and version, so outputs can be reproduced exactly.

Exit codes: 0 success, 1 usage or I/O error, 2 registration failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from dataclasses import fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__
from .evaluation import comparison_csv, evaluate_fixture, load_fixture
from .imagecore import (
    GrayImage,
    ImageLoadError,
    checkerboard_mosaic,
    downsample,
    load_image,
    save_image,
    warp_image,
)
from .lsr import regions_to_csv, segment
from .pipeline import PipelineConfig, register

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_REGISTRATION_FAILED = 2
MOSAIC_CELL = 32
THREADS_ENV = "LSR_REGISTER_THREADS"


class CliError(Exception):
    """User-facing failure mapped to exit code 1."""


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage errors exit with code 1, not 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat()


def _thread_cap() -> int | None:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return None
    try:
        value = int(raw)
    except ValueError:
        raise CliError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    if value < 1:
        raise CliError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return value


def _write_manifest(out_dir: Path, argv: list[str], config: dict,
                    seed: int, inputs: dict[str, Path], started: str) -> None:
    manifest = {
        "command": argv,
        "config": config,
        "seed": seed,
        "inputs": {
            name: {"path": str(path), "sha256": _sha256(path)}
            for name, path in inputs.items()
        },
        "version": __version__,
        "threads": _thread_cap(),
        "started": started,
        "finished": _timestamp(),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _load_toml_config(path: Path) -> dict:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise CliError(f"cannot read config file {path}: {exc}")
    known = {f.name for f in fields(PipelineConfig)}
    unknown = set(data) - known
    if unknown:
        raise CliError(f"unknown config keys in {path}: {sorted(unknown)}")
    return data


def _build_config(args) -> PipelineConfig:
    """Merge precedence: explicit flags > TOML config file > defaults."""
    values = {}
    if args.config is not None:
        values.update(_load_toml_config(Path(args.config)))
    flag_map = {
        "epsilon": args.epsilon,
        "tau": args.tau,
        "d_ratio": args.dratio,
        "max_levels": args.max_levels,
        "seed": args.seed,
    }
    for key, val in flag_map.items():
        if val is not None:
            values[key] = val
    try:
        return PipelineConfig(**{**PipelineConfig().to_dict(), **values})
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid configuration: {exc}")


def _load_gray(path: Path) -> GrayImage:
    try:
        return load_image(path)
    except ImageLoadError as exc:
        raise CliError(str(exc))


def _cmd_register(args, argv: list[str]) -> int:
    started = _timestamp()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = _build_config(args)
    ref_path, sensed_path = Path(args.ref), Path(args.sensed)
    ref = _load_gray(ref_path)
    sensed = _load_gray(sensed_path)
    try:
        report = register(ref, sensed, cfg, keep_masks=True)
    except ValueError as exc:
        raise CliError(str(exc))

    (out_dir / "report.json").write_text(report.to_json() + "\n")
    for diag in report.per_level:
        for side, mask in (("ref", diag.ref_mask), ("sensed", diag.sensed_mask)):
            if mask is not None:
                save_image(mask.as_gray(), out_dir / f"mask_{side}_L{diag.level}.png")
    if report.survivors is not None:
        (out_dir / "correspondences.csv").write_text(report.survivors.to_csv())
    else:
        (out_dir / "correspondences.csv").write_text("px,py,qx,qy\n")
    if report.success:
        t = report.final_transform
        (out_dir / "transform.json").write_text(
            json.dumps(t.to_dict(), indent=2) + "\n"
        )
        aligned = warp_image(sensed, t.inverse(), ref.width, ref.height)
        save_image(
            checkerboard_mosaic(ref, aligned, MOSAIC_CELL), out_dir / "mosaic.png"
        )
    _write_manifest(
        out_dir, argv, cfg.to_dict(), cfg.seed,
        {"ref": ref_path, "sensed": sensed_path}, started,
    )
    if report.success:
        print(
            f"registered at level {report.level_used}: "
            f"scaled rmse {report.scaled_rmse:.4f} < epsilon {cfg.epsilon}"
        )
        return EXIT_OK
    print("registration failed; see report.json", file=sys.stderr)
    return EXIT_REGISTRATION_FAILED


def _draw_rectangles(img: GrayImage, regions) -> GrayImage:
    """Overlay region rectangle outlines in white on a copy of the image."""
    canvas = img.pixels.copy()
    h, w = canvas.shape
    for reg in regions:
        r = math.radians(reg.angle_deg)
        ux, uy = math.cos(r), math.sin(r)
        vx, vy = -uy, ux
        hl, hw = reg.length / 2.0, reg.width / 2.0
        corners = [
            (reg.cx + sx * hl * ux + sy * hw * vx, reg.cy + sx * hl * uy + sy * hw * vy)
            for sx, sy in ((-1, -1), (1, -1), (1, 1), (-1, 1))
        ]
        for (x0, y0), (x1, y1) in zip(corners, corners[1:] + corners[:1]):
            steps = max(2, int(2 * math.hypot(x1 - x0, y1 - y0)))
            ts = np.linspace(0.0, 1.0, steps)
            xs = np.clip(np.rint(x0 + ts * (x1 - x0)), 0, w - 1).astype(int)
            ys = np.clip(np.rint(y0 + ts * (y1 - y0)), 0, h - 1).astype(int)
            canvas[ys, xs] = 1.0
    return GrayImage(canvas)


def _cmd_segment(args, argv: list[str]) -> int:
    started = _timestamp()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    in_path = Path(args.infile)
    img = _load_gray(in_path)
    tau = args.tau if args.tau is not None else PipelineConfig().tau
    if args.level < 0:
        raise CliError("--level must be nonnegative")
    try:
        img = downsample(img, args.level)
        mask, regions = segment(img, tau)
    except ValueError as exc:
        raise CliError(str(exc))
    save_image(mask.as_gray(), out_dir / "mask.png")
    (out_dir / "regions.csv").write_text(regions_to_csv(regions))
    save_image(_draw_rectangles(img, regions), out_dir / "overlay.png")
    _write_manifest(
        out_dir, argv, {"tau": tau, "level": args.level}, 0,
        {"in": in_path}, started,
    )
    print(f"{len(regions)} regions -> {out_dir}")
    return EXIT_OK


def _cmd_eval(args, argv: list[str]) -> int:
    started = _timestamp()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    fixtures_dir = Path(args.fixtures)
    if not fixtures_dir.is_dir():
        raise CliError(f"fixtures directory not found: {fixtures_dir}")
    paths = sorted(fixtures_dir.glob("*.json"))
    if not paths:
        raise CliError(f"no fixture files in {fixtures_dir}")
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if not methods or any(m not in ("gor", "ransac") for m in methods):
        raise CliError("--methods must be a comma list drawn from: gor, ransac")
    if args.seeds < 1:
        raise CliError("--seeds must be at least 1")
    rows = []
    try:
        for path in paths:
            fixture = load_fixture(path)
            for method in methods:
                rows.append(evaluate_fixture(fixture, method, args.seeds))
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise CliError(f"malformed fixture: {exc}")
    (out_dir / "comparison.csv").write_text(comparison_csv(rows))
    _write_manifest(
        out_dir, argv, {"methods": methods, "seeds": args.seeds}, 0,
        {p.name: p for p in paths}, started,
    )
    print(f"{len(rows)} rows -> {out_dir / 'comparison.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    defaults = PipelineConfig()
    parser = _Parser(
        prog="lsr-register",
        description="Automatic image registration via line-support region "
        "segmentation, masked keypoint matching, and geometrical outlier removal.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_reg = sub.add_parser("register", help="register a sensed image onto a reference")
    p_reg.add_argument("--ref", required=True, help="reference image path")
    p_reg.add_argument("--sensed", required=True, help="sensed image path")
    p_reg.add_argument("--out", required=True, help="output directory")
    p_reg.add_argument("--config", default=None, help="optional TOML config file")
    p_reg.add_argument(
        "--epsilon", type=float, default=None,
        help=f"accept a level when 2^L * rmse drops below this (default: {defaults.epsilon})",
    )
    p_reg.add_argument(
        "--tau", type=float, default=None,
        help=f"region-growing angle tolerance in degrees (default: {defaults.tau})",
    )
    p_reg.add_argument(
        "--dratio", type=float, default=None,
        help=f"nearest/second-nearest distance ratio bound (default: {defaults.d_ratio})",
    )
    p_reg.add_argument(
        "--max-levels", type=int, default=None,
        help=f"number of resolution levels to try (default: {defaults.max_levels})",
    )
    p_reg.add_argument(
        "--seed", type=int, default=None,
        help=f"seed recorded for reproducibility (default: {defaults.seed})",
    )

    p_seg = sub.add_parser("segment", help="segment one image into line-support regions")
    p_seg.add_argument("--in", dest="infile", required=True, help="input image path")
    p_seg.add_argument("--out", required=True, help="output directory")
    p_seg.add_argument(
        "--tau", type=float, default=None,
        help=f"region-growing angle tolerance in degrees (default: {defaults.tau})",
    )
    p_seg.add_argument(
        "--level", type=int, default=0,
        help="downsampling level applied before segmentation (default: 0)",
    )

    p_eval = sub.add_parser("eval", help="compare outlier-removal methods on fixtures")
    p_eval.add_argument("--fixtures", required=True, help="directory of fixture JSON files")
    p_eval.add_argument("--out", required=True, help="output directory")
    p_eval.add_argument(
        "--methods", default="gor,ransac",
        help="comma list of methods to run (default: gor,ransac)",
    )
    p_eval.add_argument(
        "--seeds", type=int, default=100,
        help="seeded repetitions per fixture (default: 100)",
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers = {"register": _cmd_register, "segment": _cmd_segment, "eval": _cmd_eval}
    try:
        return handlers[args.command](args, argv)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
