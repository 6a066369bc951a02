"""Command-line interface.

Exit codes: 0 ok, 1 I/O error, 2 degenerate math (or failed gradient check),
3 divergence, 64 usage error. Machine-readable output goes to stdout as a
single JSON object; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path


from . import core
from .align import DegenerateAlignmentError, apply_affine, fit_scale_shift, normalize_values
from .composite import LossWeights, config_from_json_dict, loss_breakdown
from .core import DepthFormatError, DepthGrid
from .featsim import ExternalFeatures, FilterBankExtractor, triplicate
from .metrics import MAX_DEPTH, MIN_DEPTH, NoValidPixelsError, aggregate, evaluate
from .optimize import (DEMO_SSIM, SCENE_KINDS, DivergenceError, OptimizeConfig,
                       grad_check, mono_only_weights, optimize_depth, synth_scene,
                       write_trace_csv)
from .structsim import InfeasiblePyramidError, SsimConfig
from .suploss import NonPositiveDepthError

EXIT_OK, EXIT_IO, EXIT_MATH, EXIT_DIVERGED, EXIT_USAGE = 0, 1, 2, 3, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def read_depth(path: str, png_scale: float = 0.001) -> DepthGrid:
    if Path(path).suffix.lower() == ".png":
        return core.read_png16(path, png_scale)
    return core.read_pfm(path)


def _emit(obj: dict) -> None:
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


def _load_config(path: str | None, weights: LossWeights, ssim: SsimConfig):
    if path is None:
        return weights, ssim
    with open(path) as f:
        obj = json.load(f)
    if not isinstance(obj, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    try:
        return config_from_json_dict(obj, weights, ssim)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{path}: {exc}") from exc


def cmd_eval(args) -> int:
    if len(args.pred) != len(args.gt):
        raise UsageError("--pred and --gt need the same number of files")
    reports = []
    for pred_path, gt_path in zip(args.pred, args.gt):
        reports.append(evaluate(read_depth(pred_path, args.png_scale),
                                read_depth(gt_path, args.png_scale), args.min, args.max))
    report = aggregate(reports)
    if args.json:
        _emit(report.to_json_dict())
    else:
        for key, value in report.to_json_dict().items():
            print(f"{key:>11} {value}")
    return EXIT_OK


def cmd_align(args) -> int:
    mono = read_depth(args.mono, args.png_scale)
    mvs = read_depth(args.mvs, args.png_scale)
    mono_norm = mono if args.no_normalize else DepthGrid(normalize_values(mono), mono.mask)
    params = fit_scale_shift(mono_norm, mvs)
    if args.out:
        core.write_pfm(apply_affine(mono_norm, params), args.out)
    _emit({"s": params.s, "t": params.t})
    return EXIT_OK


def cmd_loss(args) -> int:
    if (args.gt is None) != (args.intrinsics is None):
        raise UsageError("--gt and --intrinsics must be given together")
    if (args.features_pred is None) != (args.features_mono is None):
        raise UsageError("--features-pred and --features-mono must be given together")
    weights, ssim = _load_config(args.config, LossWeights(), SsimConfig())
    pred = read_depth(args.pred, args.png_scale)
    mono = read_depth(args.mono, args.png_scale)
    gt = read_depth(args.gt, args.png_scale) if args.gt else None
    K = core.read_intrinsics(args.intrinsics) if args.intrinsics else None
    if args.features_pred:
        src = ExternalFeatures(args.features_pred, args.features_mono)
    else:
        src = FilterBankExtractor(args.seed)
    breakdown = loss_breakdown(pred, mono, src, gt, K, ssim, weights,
                               iteration=args.iteration, unsup=args.unsup)
    _emit(breakdown.to_json_dict())
    return EXIT_OK


def cmd_optimize(args) -> int:
    if (args.gt is None) != (args.intrinsics is None):
        raise UsageError("--gt and --intrinsics must be given together")
    if args.iters < 1:
        raise UsageError("--iters must be >= 1")
    weights, ssim = _load_config(args.config, mono_only_weights(), DEMO_SSIM)
    try:
        cfg = OptimizeConfig(iterations=args.iters, step_size=args.step,
                             momentum=args.momentum, weights=weights, ssim=ssim)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    init = read_depth(args.init, args.png_scale)
    mono = read_depth(args.mono, args.png_scale)
    gt = read_depth(args.gt, args.png_scale) if args.gt else None
    K = core.read_intrinsics(args.intrinsics) if args.intrinsics else None
    reference = read_depth(args.reference, args.png_scale) if args.reference else None
    final, trace = optimize_depth(init, mono, gt, K, FilterBankExtractor(args.seed), cfg,
                                  reference=reference)
    core.write_pfm(final, args.out)
    if args.trace:
        write_trace_csv(trace, args.trace)
    _emit(trace[-1].breakdown.to_json_dict())
    return EXIT_OK


def cmd_features(args) -> int:
    depth = read_depth(args.depth, args.png_scale)
    if args.mode == "mono":
        values = normalize_values(depth)
    elif args.mode == "mvs":
        if args.mono is None:
            raise UsageError("--mode mvs needs --mono")
        mono_norm = normalize_values(read_depth(args.mono, args.png_scale))
        p = fit_scale_shift(mono_norm, depth)
        values = (depth.filled() - p.t) / p.s
    else:
        values = depth.filled()
    features = FilterBankExtractor(args.seed).extract(triplicate(values))
    core.write_feature_tensor(features, args.out)
    _emit({"height": features.height, "width": features.width,
           "channels": features.channels, "out": args.out})
    return EXIT_OK


def cmd_synth(args) -> int:
    K = core.CameraIntrinsics.centered(args.size, args.size)
    clean, noisy, mono = synth_scene(args.kind, args.size, K, args.sigma, args.seed)
    prefix = args.out_prefix
    paths = {"clean": f"{prefix}_clean.pfm", "noisy": f"{prefix}_noisy.pfm",
             "mono": f"{prefix}_mono.pfm", "intrinsics": f"{prefix}_intrinsics.json"}
    core.write_pfm(clean, paths["clean"])
    core.write_pfm(noisy, paths["noisy"])
    core.write_pfm(mono, paths["mono"])
    core.write_intrinsics(K, paths["intrinsics"])
    _emit(paths)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    report = grad_check(sizes=[(args.size, args.size)], seed=args.seed, h=args.h,
                        tolerance=args.tol)
    _emit(report.to_json_dict())
    print("PASS" if report.passed else "FAIL", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_MATH


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="depthstruct", description=__doc__.splitlines()[0])
    parser.add_argument("--png-scale", type=float, default=0.001,
                        help="meters per unit for 16-bit PNG depth (default 0.001)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("eval", help="depth metrics against ground truth")
    p.add_argument("--pred", nargs="+", required=True)
    p.add_argument("--gt", nargs="+", required=True)
    p.add_argument("--min", type=float, default=MIN_DEPTH)
    p.add_argument("--max", type=float, default=MAX_DEPTH)
    p.add_argument("--json", action="store_true", help="print a JSON object")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("align", help="fit scale/shift of mono depth onto MVS depth")
    p.add_argument("--mono", required=True)
    p.add_argument("--mvs", required=True)
    p.add_argument("--out")
    p.add_argument("--no-normalize", action="store_true",
                   help="treat --mono as already quantile-normalized")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("loss", help="loss breakdown for one sample")
    p.add_argument("--pred", required=True)
    p.add_argument("--mono", required=True)
    p.add_argument("--gt")
    p.add_argument("--intrinsics")
    p.add_argument("--features-pred")
    p.add_argument("--features-mono")
    p.add_argument("--config")
    p.add_argument("--iteration", type=int, default=0)
    p.add_argument("--unsup", type=float, default=0.0, help="external unsupervised loss value")
    p.add_argument("--seed", type=int, default=42, help="built-in extractor seed")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("optimize", help="descend the composite loss on a depth map")
    p.add_argument("--init", required=True)
    p.add_argument("--mono", required=True)
    p.add_argument("--gt")
    p.add_argument("--intrinsics")
    p.add_argument("--reference", help="depth used only for the abs-rel trace column")
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--step", type=float, default=1e-2)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.add_argument("--trace")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("features", help="export built-in extractor features as FTN1")
    p.add_argument("--depth", required=True)
    p.add_argument("--mode", choices=("raw", "mono", "mvs"), default="raw",
                   help="raw: as-is; mono: quantile-normalize; mvs: map into the "
                        "normalized range of --mono")
    p.add_argument("--mono")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("synth", help="write a synthetic scene fixture")
    p.add_argument("--kind", choices=SCENE_KINDS, default="plane")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("gradcheck", help="finite-difference check of every loss gradient")
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--h", type=float, default=1e-3)
    p.add_argument("--size", type=int, default=16)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits on --help (0) and on usage errors (64 via _Parser).
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"depthstruct: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, DepthFormatError, json.JSONDecodeError) as exc:
        print(f"depthstruct: {exc}", file=sys.stderr)
        return EXIT_IO
    except DivergenceError as exc:
        print(f"depthstruct: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DegenerateAlignmentError, NoValidPixelsError, InfeasiblePyramidError,
            NonPositiveDepthError, ValueError) as exc:
        print(f"depthstruct: {exc}", file=sys.stderr)
        return EXIT_MATH


if __name__ == "__main__":
    sys.exit(main())
