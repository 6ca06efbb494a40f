# -*- coding: utf-8 -*-
"""Command line interface

    mravessel segment INPUT OUTPUT [options]
    mravessel enhance INPUT OUTPUT --sigma S
    mravessel phantom SPEC OUT_PREFIX
    mravessel ablate INPUT OUTDIR [--ground-truth GT] [--phantom-spec SPEC]
    mravessel eval PRED --ground-truth GT [--phantom-spec SPEC]
    mravessel info INPUT
    mravessel sweep INPUT OUTDIR --branch {low,high}
    mravessel batch INPUT... --outdir DIR [--jobs N]

退出码：0 成功；1 运行时错误或I/O错误；2 参数错误。
结果摘要输出到stdout，日志输出到stderr。
"""

import argparse
import sys
from pathlib import Path
from typing import Sequence

from mravessel import __version__
from mravessel.filters import vessel_enhance
from mravessel.libs import (
    InvalidConfig,
    InvalidPhantom,
    PipelineConfig,
    VesselError,
    check_same_geometry,
    default_config_path,
    percentile,
    read_mask,
    read_nifti,
    write_nifti,
)
from mravessel.libs.config import CONFIG_ENV
from mravessel.phantom import PhantomSpec, generate_phantom, evaluate
from mravessel.pipeline import AblationVariant, Pipeline
from mravessel.scheduler import BatchRunner
from mravessel.threshold import threshold_grid
from mravessel.utils import format_fraction, get_logger, parse_pair, set_log_level

__all__ = [
    'build_parser',
    'main',
]

mod_logger = get_logger('Cli', log_level=20)

DEFAULTS = PipelineConfig()
INFO_PERCENTILES = (1.0, 50.0, 99.0, 99.9)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class UsageError(Exception):
    """Bad arguments detected after parsing"""


def _pair(text: str) -> tuple[float, float]:
    try:
        return parse_pair(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {value}")
    return value


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('-v', '--verbose', action='count', default=0, help="more logging (repeatable)")
    common.add_argument('-q', '--quiet', action='store_true', help="only log warnings and errors")
    return common


def _pipeline_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group('pipeline parameters')
    g.add_argument('--config', type=Path, metavar='PATH',
                   help=f"key = value config file (default: ${CONFIG_ENV} if set)")
    g.add_argument('--sigma-low', type=float, metavar='MM',
                   help=f"small-vessel scale σ_l in mm (default: {DEFAULTS.sigma_low_mm})")
    g.add_argument('--sigma-high', type=float, metavar='MM',
                   help=f"large-vessel scale σ_u in mm (default: {DEFAULTS.sigma_high_mm})")
    g.add_argument('--frac-low', type=_pair, metavar='A,B',
                   help="LTV,HTV fractions of the percentile anchor for σ_l "
                        f"(default: {DEFAULTS.frac_low_scale[0]},{DEFAULTS.frac_low_scale[1]})")
    g.add_argument('--frac-high', type=_pair, metavar='A,B',
                   help="LTV,HTV fractions of the percentile anchor for σ_u "
                        f"(default: {DEFAULTS.frac_high_scale[0]},{DEFAULTS.frac_high_scale[1]})")
    g.add_argument('--min-component-mm3', type=float, metavar='MM3',
                   help=f"drop components smaller than this volume (default: {DEFAULTS.min_component_mm3:g})")
    g.add_argument('--percentile', type=float, metavar='P',
                   help=f"anchor percentile of each vesselness map (default: {DEFAULTS.percentile})")
    g.add_argument('--connectivity', type=int, choices=(6, 18, 26),
                   help=f"voxel connectivity (default: {DEFAULTS.connectivity})")
    g.add_argument('--threads', type=_positive_int, default=1, metavar='N',
                   help="threads per volume; output does not depend on N (default: 1)")
    g.add_argument('--save-intermediates', type=Path, metavar='DIR',
                   help="also write vesselness maps and per-branch masks to DIR")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    pipeline = _pipeline_parser()

    parser = argparse.ArgumentParser(
        prog='mravessel',
        description="Dual-scale Hessian vessel segmentation of skull-stripped, "
                    "bias-corrected MR angiography volumes.",
    )
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest='command', metavar='COMMAND', required=True)

    p = sub.add_parser('segment', parents=[common, pipeline], help="segment one volume")
    p.add_argument('input', type=Path, help=".nii or .nii.gz volume")
    p.add_argument('output', type=Path, help="output mask (.nii.gz)")
    p.set_defaults(func=cmd_segment, parser=p)

    p = sub.add_parser('enhance', parents=[common, pipeline], help="write one vesselness map")
    p.add_argument('input', type=Path)
    p.add_argument('output', type=Path)
    p.add_argument('--sigma', type=float, required=True, metavar='MM', help="scale in mm")
    p.set_defaults(func=cmd_enhance, parser=p)

    p = sub.add_parser('phantom', parents=[common], help="write a synthetic tube phantom")
    p.add_argument('spec', type=Path, help="JSON phantom spec")
    p.add_argument('out_prefix', type=Path,
                   help="writes <prefix>_volume.nii.gz, <prefix>_gt.nii.gz and <prefix>_tube<i>.nii.gz")
    p.add_argument('--seed', type=int, help="override rng_seed of the phantom spec file")
    p.set_defaults(func=cmd_phantom, parser=p)

    p = sub.add_parser('ablate', parents=[common, pipeline], help="run the full method and its four ablations")
    p.add_argument('input', type=Path)
    p.add_argument('outdir', type=Path)
    p.add_argument('--ground-truth', type=Path, metavar='PATH', help="ground-truth mask; enables reports")
    p.add_argument('--phantom-spec', type=Path, metavar='PATH', help="phantom spec for per-tube dice")
    p.set_defaults(func=cmd_ablate, parser=p)

    p = sub.add_parser('eval', parents=[common], help="score a mask against ground truth")
    p.add_argument('input', type=Path, help="predicted mask")
    p.add_argument('--ground-truth', type=Path, required=True, metavar='PATH')
    p.add_argument('--phantom-spec', type=Path, metavar='PATH', help="phantom spec for per-tube dice")
    p.add_argument('--connectivity', type=int, choices=(6, 18, 26), default=DEFAULTS.connectivity,
                   help=f"connectivity for component counts (default: {DEFAULTS.connectivity})")
    p.add_argument('--output', type=Path, metavar='PATH', help="also save the report (.json for JSON)")
    p.set_defaults(func=cmd_eval, parser=p)

    p = sub.add_parser('info', parents=[common], help="print dims, spacing, datatype and percentiles")
    p.add_argument('input', type=Path)
    p.set_defaults(func=cmd_info, parser=p)

    p = sub.add_parser('sweep', parents=[common, pipeline], help="hysteresis masks over a grid of fractions")
    p.add_argument('input', type=Path)
    p.add_argument('outdir', type=Path)
    p.add_argument('--branch', choices=('low', 'high'), required=True)
    p.add_argument('--steps', type=int, default=2, help="pairs on each side of the configured pair (default: 2)")
    p.add_argument('--step', type=float, default=0.10, help="fraction step (default: 0.1)")
    p.set_defaults(func=cmd_sweep, parser=p)

    p = sub.add_parser('batch', parents=[common, pipeline], help="segment many volumes")
    p.add_argument('inputs', type=Path, nargs='+', help="files or directories of .nii/.nii.gz")
    p.add_argument('--outdir', type=Path, required=True, help="writes <stem>_vessels.nii.gz")
    p.add_argument('--jobs', type=_positive_int, default=1, help="volumes processed at once (default: 1)")
    p.set_defaults(func=cmd_batch, parser=p)
    return parser


def _log_level(args) -> int:
    if args.quiet:
        return 30
    if args.verbose:
        return 10
    return 20


def _require_file(path: Path, what: str = 'input'):
    if not path.is_file():
        raise UsageError(f"{what} not found: {path}")


def load_config(args) -> PipelineConfig:
    """默认值 < 配置文件 < 命令行参数"""
    path = args.config or default_config_path()
    if path is not None:
        if not Path(path).is_file():
            raise UsageError(f"config file not found: {path}")
        cfg = PipelineConfig.from_file(path)
    else:
        cfg = PipelineConfig()
    return cfg.with_overrides(
        sigma_low_mm=args.sigma_low,
        sigma_high_mm=args.sigma_high,
        frac_low_scale=args.frac_low,
        frac_high_scale=args.frac_high,
        min_component_mm3=args.min_component_mm3,
        percentile=args.percentile,
        connectivity=args.connectivity,
    )


def _pipeline(args) -> Pipeline:
    return Pipeline(
        load_config(args),
        workers=args.threads,
        save_intermediates=args.save_intermediates,
        log_level=_log_level(args),
    )


def _load_phantom_spec(path: Path | None) -> PhantomSpec | None:
    if path is None:
        return None
    _require_file(path, 'phantom spec')
    return PhantomSpec.from_file(path)


def cmd_segment(args) -> int:
    _require_file(args.input)
    pipeline = _pipeline(args)
    vol = read_nifti(args.input)
    result = pipeline.run(vol)
    write_nifti(result.mask, args.output)
    print(f"{args.output}: {result.summary()}")
    return EXIT_OK


def cmd_enhance(args) -> int:
    _require_file(args.input)
    if not args.sigma > 0:
        raise UsageError(f"--sigma must be > 0, got {args.sigma}")
    pipeline = _pipeline(args)
    vol = read_nifti(args.input)
    vmap = vessel_enhance(vol, args.sigma, pipeline.sato_params, workers=pipeline.workers)
    write_nifti(vmap, args.output)
    print(f"{args.output}: σ={vmap.scale_mm}mm max={float(vmap.data.max()):.6g}")
    return EXIT_OK


def cmd_phantom(args) -> int:
    spec = _load_phantom_spec(args.spec)
    if args.seed is not None:
        spec = PhantomSpec.from_dict({**spec.to_dict(), 'rng_seed': args.seed})
    phantom = generate_phantom(spec)

    prefix = str(args.out_prefix)
    write_nifti(phantom.volume, f"{prefix}_volume.nii.gz")
    write_nifti(phantom.ground_truth, f"{prefix}_gt.nii.gz")
    for i, tm in enumerate(phantom.tube_masks):
        write_nifti(tm.mask, f"{prefix}_tube{i}.nii.gz")
    print(f"{prefix}: dims={spec.dims} tubes={len(spec.tubes)} gt_voxels={phantom.ground_truth.count}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    _require_file(args.input)
    if args.ground_truth is not None:
        _require_file(args.ground_truth, 'ground truth')
    spec = _load_phantom_spec(args.phantom_spec)
    pipeline = _pipeline(args)

    vol = read_nifti(args.input)
    gt = read_mask(args.ground_truth) if args.ground_truth is not None else None
    tube_masks = generate_phantom(spec).tube_masks if spec is not None and gt is not None else ()
    for tm in tube_masks:
        check_same_geometry(vol, tm.mask)

    args.outdir.mkdir(parents=True, exist_ok=True)
    for variant, (mask, report) in pipeline.run_ablation(vol, gt, tube_masks).items():
        write_nifti(mask, args.outdir / f"{variant.value}.nii.gz")
        line = f"{variant.value}: voxels={mask.count}"
        if report is not None:
            report.save(args.outdir / f"{variant.value}_report.txt")
            line += f" dice={report.dice:.4f} components={report.component_count_pred}/{report.component_count_gt}"
        print(line)
    return EXIT_OK


def cmd_eval(args) -> int:
    _require_file(args.input)
    _require_file(args.ground_truth, 'ground truth')
    spec = _load_phantom_spec(args.phantom_spec)

    pred = read_mask(args.input)
    gt = read_mask(args.ground_truth)
    tube_masks = generate_phantom(spec).tube_masks if spec is not None else ()
    report = evaluate(pred, gt, tube_masks, connectivity=args.connectivity, name=args.input.name)
    sys.stdout.write(report.dumps())
    if args.output is not None:
        report.save(args.output)
    return EXIT_OK


def cmd_info(args) -> int:
    _require_file(args.input)
    vol = read_nifti(args.input)
    print(f"dims: {'x'.join(str(_) for _ in vol.dims)}")
    print(f"spacing: {' '.join(f'{_:g}' for _ in vol.spacing)}")
    rows = ('[' + ' '.join(f'{v:g}' for v in row) + ']' for row in vol.affine[:3])
    print(f"affine: {' '.join(rows)}")
    print(f"datatype: {vol.source_dtype}")
    print(f"range: {float(vol.data.min()):g} {float(vol.data.max()):g}")
    if vol.has_positive():
        values = ' '.join(f"p{p:g}={percentile(vol, p):g}" for p in INFO_PERCENTILES)
        print(f"percentiles (positive voxels): {values}")
    else:
        print("percentiles (positive voxels): none")
    return EXIT_OK


def cmd_sweep(args) -> int:
    _require_file(args.input)
    pipeline = _pipeline(args)
    try:
        pairs = threshold_grid(pipeline.fractions(args.branch), args.steps, args.step)
    except VesselError as e:
        raise UsageError(str(e))
    vol = read_nifti(args.input)

    args.outdir.mkdir(parents=True, exist_ok=True)
    for th, mask in pipeline.sweep(vol, args.branch, pairs):
        name = f"{args.branch}_L{format_fraction(th.low_frac)}_H{format_fraction(th.high_frac)}.nii.gz"
        write_nifti(mask, args.outdir / name)
        print(f"{name}: LTV={th.low:.6g} HTV={th.high:.6g} voxels={mask.count}")
    return EXIT_OK


def cmd_batch(args) -> int:
    for path in args.inputs:
        if not path.exists():
            raise UsageError(f"input not found: {path}")
    runner = BatchRunner(
        args.inputs,
        args.outdir,
        load_config(args),
        concurrency=args.jobs,
        workers=args.threads,
        log_level=_log_level(args),
    )
    summary = runner.start()
    for outcome in summary.outcomes:
        state = 'ok' if outcome.ok else 'FAILED'
        print(f"{outcome.job.input_path} -> {outcome.job.output_path}: {state} {outcome.message}")
    print(f"{summary.succeeded} succeeded, {summary.failed} failed in {summary.elapsed:.1f}s")
    return EXIT_OK if summary.ok else EXIT_FAILURE


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK

    set_log_level(_log_level(args))
    try:
        return args.func(args)
    except (UsageError, InvalidConfig, InvalidPhantom) as e:
        args.parser.print_usage(sys.stderr)
        print(f"{args.parser.prog}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (VesselError, OSError) as e:
        mod_logger.error(f"{e.__class__.__name__}: {e}")
        return EXIT_FAILURE


if __name__ == '__main__':
    sys.exit(main())
