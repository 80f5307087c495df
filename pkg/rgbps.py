import argparse
import json
import pathlib
import sys

import numpy as np
from yaspin import yaspin

import rgbps.config
from rgbps.common import (
    BENCHMARK_RIG,
    EXIT_BAD_INPUT,
    EXIT_OK,
    EXIT_RUNTIME,
    InvalidInputError,
    SynthesisError,
)
from rgbps.evaluate import angular_error, classical_ps, integrate_normals, simulate_white_captures
from rgbps.formats import ensure_dir, require_file
from rgbps.formats import pfm, png, tables
from rgbps.formats.rig import read_rig
from rgbps.pipeline import (
    bench,
    read_albedo,
    reconstruct,
    write_bench,
    write_error_report,
    write_instance,
    write_reconstruction,
)
from rgbps.preprocess import BAYER_PATTERNS, preprocess_real
from rgbps.shading import render
from rgbps.synth import SynthConfig, gen_instance


def _add_config_flags(parser: argparse.ArgumentParser):
    group = parser.add_argument_group('pipeline configuration')
    group.add_argument(
        '--config',
        type=pathlib.Path,
        help='configuration file to start from; default: ./rgbps.ini',
    )
    for name in rgbps.config.field_names():
        group.add_argument(
            f"--{name.replace('_', '-')}",
            dest=name,
            metavar=name.upper(),
            help=f'override {name}',
        )


def _overrides(args: argparse.Namespace) -> dict:
    return {
        name: rgbps.config.coerce(name, getattr(args, name))
        for name in rgbps.config.field_names()
        if getattr(args, name, None) is not None
    }


def _pipeline_config(args: argparse.Namespace) -> rgbps.config.PipelineConfig:
    cfg = rgbps.config.load(args.config)
    overrides = _overrides(args)
    if getattr(args, 'real', False) and 'h_max' not in overrides:
        overrides['h_max'] = rgbps.config.H_MAX_REAL
    return cfg.with_overrides(**overrides)


def _synth_config(args: argparse.Namespace, cfg: rgbps.config.PipelineConfig) -> SynthConfig:
    return SynthConfig(
        image_size=args.size,
        coarse_size=args.coarse,
        noise_sigma=cfg.noise_sigma,
        seed=cfg.seed,
        n_surfaces=args.count,
        tilt_max_deg=args.tilt,
        amplitude=args.amplitude,
    )


def _read_gains(path: pathlib.Path) -> np.ndarray:
    rows = tables.read_rows(require_file(path))
    try:
        return np.array([float(rows[0][f'gain_{c}']) for c in 'rgb'])
    except (IndexError, KeyError, ValueError):
        raise InvalidInputError(f'{path}: expected columns gain_r, gain_g, gain_b')


def config_show(args):
    cfg = rgbps.config.load(args.config)
    width = max(len(n) for n in rgbps.config.field_names())
    for name in rgbps.config.field_names():
        print(f'{name + ":":<{width + 2}}{getattr(cfg, name)}')


def config_set(args):
    cfg = rgbps.config.load(args.config)
    overrides = _overrides(args)
    if not overrides:
        print('No config options given; nothing to do')
        return
    rgbps.config.save(cfg.with_overrides(**overrides), args.config)


def config_clear(args):
    rgbps.config.clear(args.config)


def synth(args):
    cfg = _pipeline_config(args)
    scfg = _synth_config(args, cfg)
    rig = read_rig(args.rig)
    out = ensure_dir(args.out)

    rows = []
    with yaspin(text=f'Generating {scfg.n_surfaces} instance(s)', color='cyan') as spinner:
        for index in range(scfg.n_surfaces):
            try:
                inst = gen_instance(scfg, rig, index)
            except SynthesisError:
                spinner.fail('💥')
                raise
            target = write_instance(out, inst, rig)
            rows.append((index, target.name, scfg.seed, scfg.image_size, scfg.noise_sigma))
            spinner.text = f'Generating instances: {index + 1}/{scfg.n_surfaces}'
        spinner.ok('✅')
    tables.write_rows(out / 'index.csv', ['index', 'directory', 'seed', 'image_size', 'noise_sigma'], rows)
    print(f'Synthetic instances written to {out}')


def render_cmd(args):
    normals = pfm.read_normals(require_file(args.normals))
    albedo = read_albedo(require_file(args.albedo))
    image = render(normals, albedo, read_rig(args.rig), args.noise_sigma, args.seed)
    ensure_dir(args.out.parent)
    pfm.write_image(args.out, image)
    print(f'Rendered image written to {args.out}')


def reconstruct_cmd(args):
    cfg = _pipeline_config(args)
    image = pfm.read_image(require_file(args.image))
    rig = read_rig(args.rig)
    gains = _read_gains(args.gains) if args.gains else None

    rec = reconstruct(image, rig, cfg, verbose=not args.quiet, trace=args.dump_trace)
    paths = write_reconstruction(
        args.out, rec, gains,
        dump_histogram=args.dump_histogram,
        dump_trace=args.dump_trace,
        dump_coefficients=args.dump_coefficients,
    )
    print(f"Reconstruction written to {args.out}: {', '.join(p.name for p in paths)}")


def baseline_ps(args):
    image = pfm.read_image(require_file(args.image))
    albedo = read_albedo(require_file(args.albedo))
    rig = read_rig(args.rig)
    result = classical_ps(
        simulate_white_captures(image, albedo), albedo, rig,
        mask=image.mask, residual_tol=args.residual_tol,
    )
    out = ensure_dir(args.out)
    pfm.write_normals(out / 'normals.pfm', result.normals)
    png.write_normals_png(out / 'normals_vis.png', result.normals)
    png.write_mask_png(out / 'flagged.png', result.flagged)
    print(f'Classical estimate written to {out} ({int(np.sum(result.flagged))} pixel(s) flagged)')


def integrate(args):
    normals = pfm.read_normals(require_file(args.normals))
    result = integrate_normals(normals)
    ensure_dir(args.out.parent)
    pfm.write_scalar(args.out, result.depth)
    print(f'Depth written to {args.out} (rms gradient residual {result.residual:.3e})')


def eval_cmd(args):
    est = pfm.read_normals(require_file(args.estimate))
    gt = pfm.read_normals(require_file(args.truth))
    report = angular_error(est, gt)
    write_error_report(args.out, report)
    print(f'median {report.median:.3f} deg, mean {report.mean:.3f} deg over {report.values.size} pixel(s)')


def bench_cmd(args):
    cfg = _pipeline_config(args)
    scfg = _synth_config(args, cfg)
    report = bench(cfg, scfg, read_rig(args.rig), verbose=not args.quiet)
    write_bench(args.out, report)
    if report.instances:
        near, far = report.boundary_split()
        print(f'{len(report.instances)} instance(s): median {report.median:.3f} deg '
              f'(boundary {near:.3f}, interior {far:.3f}); '
              f'baseline at least as accurate on {report.baseline_wins}')
    if report.failures:
        print(f'{len(report.failures)} instance(s) failed; see {args.out / "failures.csv"}')


def preprocess(args):
    raw = pfm.read_pfm(require_file(args.input))
    threshold = args.threshold if args.threshold is not None else rgbps.config.load().mask_threshold
    result = preprocess_real(
        raw, demosaic=not args.no_demosaic, pattern=args.pattern, threshold=threshold,
    )
    out = ensure_dir(args.out)
    pfm.write_image(out / 'image.pfm', result.image)
    png.write_mask_png(out / 'mask.png', result.mask)
    tables.write_rows(out / 'gains.csv', ['gain_r', 'gain_g', 'gain_b'], [tuple(result.gains)])
    print(f'Preprocessed image written to {out} ({int(np.sum(result.mask))} pixel(s) in mask)')


def _error(e: Exception, code: int) -> int:
    print(json.dumps({'error': type(e).__name__, 'message': str(e)}), file=sys.stderr)
    return code


def run(args: argparse.Namespace) -> int:
    try:
        args.func(args)
    except InvalidInputError as e:
        return _error(e, EXIT_BAD_INPUT)
    except Exception as e:
        return _error(e, EXIT_RUNTIME)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    argp = argparse.ArgumentParser(
        prog='rgbps',
        description='single-image RGB photometric stereo for piecewise-constant albedo',
    )
    subp = argp.add_subparsers(required=True)

    config_p = subp.add_parser('config', help='configuration options for rgbps')
    config_subp = config_p.add_subparsers(required=True)

    config_show_p = config_subp.add_parser('show', help='show configured options')
    config_show_p.add_argument('--config', type=pathlib.Path, help='configuration file; default: ./rgbps.ini')
    config_show_p.set_defaults(func=config_show)

    config_set_p = config_subp.add_parser('set', help='set configurable options')
    _add_config_flags(config_set_p)
    config_set_p.set_defaults(func=config_set)

    config_clear_p = config_subp.add_parser('clear', help='clear configured options')
    config_clear_p.add_argument('--config', type=pathlib.Path, help='configuration file; default: ./rgbps.ini')
    config_clear_p.set_defaults(func=config_clear)

    def add_synth_flags(p, size, count):
        p.add_argument('--rig', type=pathlib.Path, default=BENCHMARK_RIG, help='lighting rig file; default: bundled benchmark rig')
        p.add_argument('--size', type=int, default=size, help=f'image side in pixels; default: {size}')
        p.add_argument('--coarse', type=int, default=16, help='side of the coarse random depth grid; default: 16')
        p.add_argument('--count', type=int, default=count, help=f'number of instances; default: {count}')
        p.add_argument('--tilt', type=float, default=20.0, help='maximum base-plane tilt in degrees; default: 20')
        p.add_argument('--amplitude', type=float, default=0.2,
                       help='std of the coarse depth field in units of the coarse node spacing; default: 0.2')

    synth_p = subp.add_parser('synth', help='generate synthetic benchmark instances')
    synth_p.add_argument('-o', '--out', type=pathlib.Path, default=pathlib.Path('synth'), help='output directory; default: ./synth')
    add_synth_flags(synth_p, size=256, count=1)
    _add_config_flags(synth_p)
    synth_p.set_defaults(func=synth)

    render_p = subp.add_parser('render', help='render an RGB image from normals and albedo')
    render_p.add_argument('--normals', type=pathlib.Path, required=True, help='normal map (PFM)')
    render_p.add_argument('--albedo', type=pathlib.Path, required=True, help='albedo map (PFM)')
    render_p.add_argument('--rig', type=pathlib.Path, default=BENCHMARK_RIG, help='lighting rig file; default: bundled benchmark rig')
    render_p.add_argument('--noise-sigma', type=float, default=0.0, help='std of additive Gaussian noise; default: 0')
    render_p.add_argument('--seed', type=int, default=0, help='noise seed; default: 0')
    render_p.add_argument('-o', '--out', type=pathlib.Path, default=pathlib.Path('image.pfm'), help='output image; default: ./image.pfm')
    render_p.set_defaults(func=render_cmd)

    recon_p = subp.add_parser('reconstruct', help='estimate surface normals from one RGB image')
    recon_p.add_argument('image', type=pathlib.Path, help='RGB image (PFM); non-finite pixels are masked out')
    recon_p.add_argument('--rig', type=pathlib.Path, default=BENCHMARK_RIG, help='lighting rig file; default: bundled benchmark rig')
    recon_p.add_argument('-o', '--out', type=pathlib.Path, default=pathlib.Path('out'), help='output directory; default: ./out')
    recon_p.add_argument('--real', action='store_true',
                         help=f'real capture: use h_max={rgbps.config.H_MAX_REAL:g} unless --h-max is given')
    recon_p.add_argument('--gains', type=pathlib.Path, help='gains.csv from preprocess, to report albedos before white balance')
    recon_p.add_argument('--dump-histogram', action='store_true', help='also write histogram.csv')
    recon_p.add_argument('--dump-trace', action='store_true', help='also write the per-iteration objective.csv')
    recon_p.add_argument('--dump-coefficients', action='store_true', help='also write the per-patch shape coefficients.csv')
    recon_p.add_argument('-q', '--quiet', action='store_true', help='no progress output')
    _add_config_flags(recon_p)
    recon_p.set_defaults(func=reconstruct_cmd)

    base_p = subp.add_parser('baseline-ps', help='classical three-light photometric stereo with known albedo')
    base_p.add_argument('image', type=pathlib.Path, help='RGB image (PFM)')
    base_p.add_argument('--albedo', type=pathlib.Path, required=True, help='ground-truth albedo map (PFM)')
    base_p.add_argument('--rig', type=pathlib.Path, default=BENCHMARK_RIG, help='lighting rig file; default: bundled benchmark rig')
    base_p.add_argument('--residual-tol', type=float, default=1e-2, help='relative residual above which a pixel is flagged; default: 0.01')
    base_p.add_argument('-o', '--out', type=pathlib.Path, default=pathlib.Path('baseline'), help='output directory; default: ./baseline')
    base_p.set_defaults(func=baseline_ps)

    integrate_p = subp.add_parser('integrate', help='integrate a normal map to depth')
    integrate_p.add_argument('normals', type=pathlib.Path, help='normal map (PFM)')
    integrate_p.add_argument('-o', '--out', type=pathlib.Path, default=pathlib.Path('depth.pfm'), help='output depth map; default: ./depth.pfm')
    integrate_p.set_defaults(func=integrate)

    eval_p = subp.add_parser('eval', help='angular error between two normal maps')
    eval_p.add_argument('estimate', type=pathlib.Path, help='estimated normal map (PFM)')
    eval_p.add_argument('truth', type=pathlib.Path, help='ground-truth normal map (PFM)')
    eval_p.add_argument('-o', '--out', type=pathlib.Path, default=pathlib.Path('eval'), help='output directory; default: ./eval')
    eval_p.set_defaults(func=eval_cmd)

    bench_p = subp.add_parser('bench', help='run the synthetic benchmark')
    bench_p.add_argument('-o', '--out', type=pathlib.Path, default=pathlib.Path('bench'), help='output directory; default: ./bench')
    bench_p.add_argument('-q', '--quiet', action='store_true', help='no progress output')
    add_synth_flags(bench_p, size=128, count=50)
    _add_config_flags(bench_p)
    bench_p.set_defaults(func=bench_cmd)

    pre_p = subp.add_parser('preprocess', help='demosaic, mask and white-balance a linear capture')
    pre_p.add_argument('input', type=pathlib.Path, help='linear Bayer mosaic (1-channel PFM) or RGB image (3-channel PFM)')
    pre_p.add_argument('-o', '--out', type=pathlib.Path, default=pathlib.Path('preprocessed'), help='output directory; default: ./preprocessed')
    pre_p.add_argument('--no-demosaic', action='store_true', help='input is already RGB; only mask and white-balance')
    pre_p.add_argument('--pattern', default='RGGB', choices=list(BAYER_PATTERNS), help='Bayer pattern; default: RGGB')
    pre_p.add_argument('--threshold', type=float, help='mask threshold as a fraction of peak luminance; default: configured mask_threshold')
    pre_p.set_defaults(func=preprocess)

    return argp


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return run(args)


if __name__ == '__main__':
    sys.exit(main())
