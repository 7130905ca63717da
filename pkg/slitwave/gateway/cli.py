import argparse
import logging
import os
import sys
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from dotenv import load_dotenv

from slitwave.analysis.fields import density_grid, drho_dz_grid, slice_density
from slitwave.analysis.nullmap import (TransitionConfig, density_lattice, refine_minimum, region_peak,
                                       sample_monte_carlo, scan_grid, transition_profile)
from slitwave.core.errors import NumericDomainError, SlitwaveError
from slitwave.core.geometry import ObservationPoint, scale_configuration
from slitwave.core.scheduler import ScanRunner
from slitwave.core.specfun import cornu_curve
from slitwave.core.store import (ResultStore, cornu_csv, csv_text, format_number, grid_csv, null_map_csv,
                                 pgm_text, slice_csv)
from slitwave.gateway.config import RunConfig, apply_overrides, build_config, parse_config

SCALECHECK_TOLERANCE = 1e-9


def _key_values(pairs) -> str:
    return "".join(f"{k} = {v}\n" for k, v in pairs)


def _run_density(config: RunConfig, options: Dict[str, Any], store: ResultStore, runner: ScanRunner):
    grid = density_grid(config.require_slits(), config.region, config.nx, config.nz,
                        config.build_evaluator(), config.log_z, runner)
    store.store_result("density.csv", grid_csv(grid))
    if options.get("pgm"):
        image, sidecar = pgm_text(grid.values, options.get("mapping") or "affine")
        store.store_result("density.pgm", image)
        store.store_result("density.pgm.txt", sidecar)


def _run_nullmap(config: RunConfig, options: Dict[str, Any], store: ResultStore, runner: ScanRunner):
    slits = config.require_slits()
    evaluator = config.build_evaluator()
    if config.sampler == "grid":
        null_map = scan_grid(slits, config.region, config.nx, config.nz, config.threshold, evaluator,
                             config.log_z, runner=runner)
    else:
        null_map = sample_monte_carlo(slits, config.region, config.samples, config.threshold, config.seed,
                                      evaluator, config.log_z, runner=runner)
    store.store_result("nullmap.csv", null_map_csv(null_map))
    print(f"{len(null_map.points)} of {null_map.samples_taken} samples below {format_number(config.threshold)}")


def _run_slice(config: RunConfig, options: Dict[str, Any], store: ResultStore, runner: ScanRunner):
    region = config.region
    if options.get("axis", "x2") == "x2":
        axis, default_value, bounds = "FixedZ", region.zpp_max, (region.x2_min, region.x2_max)
    else:
        axis, default_value, bounds = "FixedX", 0.0, (region.zpp_min, region.zpp_max)
    value = options.get("value")
    lo, hi = options.get("lo"), options.get("hi")
    profile = slice_density(config.require_slits(), axis,
                            default_value if value is None else value,
                            (bounds[0] if lo is None else lo, bounds[1] if hi is None else hi),
                            options.get("n") or 1001, config.build_evaluator(),
                            log_spacing=config.log_z and axis == "FixedX", runner=runner)
    store.store_result("slice.csv", slice_csv(profile))


def _run_cornu(config: RunConfig, options: Dict[str, Any], store: ResultStore, runner: ScanRunner):
    u_min, u_max = options.get("range") or (0.0, 8.0)
    store.store_result("cornu.csv", cornu_csv(cornu_curve(u_min, u_max, options.get("n") or 801)))


def _run_transition(config: RunConfig, options: Dict[str, Any], store: ResultStore, runner: ScanRunner):
    zrange = options.get("zrange") or (config.region.zpp_min, config.region.zpp_max)
    transition_config = TransitionConfig(stations=options.get("stations") or 400)
    profile = transition_profile(config.require_slits(), tuple(zrange), transition_config,
                                 config.build_evaluator(), runner)
    rows = zip(profile.zpp, profile.counts, profile.predicted)
    store.store_result("transition.csv", csv_text(("zpp", "count", "predicted"), rows))
    print(f"transition band {format_number(profile.z_lo)} {format_number(profile.z_hi)}")


def _run_scalecheck(config: RunConfig, options: Dict[str, Any], store: ResultStore, runner: ScanRunner):
    slits = config.require_slits()
    factor = options.get("factor") or 10.0
    evaluator = config.build_evaluator()
    scaled_slits, _ = scale_configuration(slits, ObservationPoint(x2=0.0, zpp=config.region.zpp_min), factor)
    base = density_lattice(slits, config.region, config.nx, config.nz, evaluator, config.log_z, runner)
    scaled = density_lattice(scaled_slits, config.region.scaled(factor), config.nx, config.nz,
                             evaluator, config.log_z, runner)
    deviation = float(np.max(np.abs(base / np.max(base) - scaled / np.max(scaled))))
    passed = deviation <= SCALECHECK_TOLERANCE
    store.store_result("scalecheck.txt", _key_values((
        ("factor", format_number(factor)),
        ("max_ratio_deviation", format_number(deviation)),
        ("tolerance", format_number(SCALECHECK_TOLERANCE)),
        ("pass", "true" if passed else "false"),
    )))
    relation = "<=" if passed else ">"
    print(f"max ratio deviation {deviation:.3e} {relation} {SCALECHECK_TOLERANCE:g}")
    if not passed:
        raise SlitwaveError(f"scaled density deviates by {deviation:.3e} under factor {format_number(factor)}")


def _run_drho(config: RunConfig, options: Dict[str, Any], store: ResultStore, runner: ScanRunner):
    grid = drho_dz_grid(config.require_slits(), config.region, config.nx, config.nz, options.get("h"),
                        config.build_evaluator(), config.log_z, runner)
    store.store_result("drho.csv", grid_csv(grid))
    if options.get("pgm"):
        image, sidecar = pgm_text(grid.values, "affine")
        store.store_result("drho.pgm", image)
        store.store_result("drho.pgm.txt", sidecar)


def _run_refine(config: RunConfig, options: Dict[str, Any], store: ResultStore, runner: ScanRunner):
    slits = config.require_slits()
    evaluator = config.build_evaluator()
    region = config.region
    x2 = options.get("x2")
    zpp = options.get("zpp")
    x2 = (region.x2_min + region.x2_max) / 2.0 if x2 is None else x2
    zpp = (region.zpp_min + region.zpp_max) / 2.0 if zpp is None else zpp
    minimum = refine_minimum(slits, x2, zpp, evaluator, fixed_zpp=bool(options.get("fixed_zpp")),
                             polish=bool(options.get("polish")))
    peak = max(region_peak(slits, region, evaluator, config.log_z, runner), minimum.rho_min)
    ratio = minimum.rho_min / peak if peak > 0 else 0.0
    store.store_result("refine.txt", _key_values((
        ("x2", format_number(minimum.x2)),
        ("zpp", format_number(minimum.zpp)),
        ("rho_min", format_number(minimum.rho_min)),
        ("rho_ratio", format_number(ratio)),
        ("null", "true" if ratio < config.threshold else "false"),
        ("converged", "true" if minimum.converged else "false"),
        ("iterations", minimum.iterations),
        ("polished", "true" if minimum.polished else "false"),
    )))


SUBCOMMANDS: Dict[str, Callable] = {
    "density": _run_density,
    "nullmap": _run_nullmap,
    "slice": _run_slice,
    "cornu": _run_cornu,
    "transition": _run_transition,
    "scalecheck": _run_scalecheck,
    "drho": _run_drho,
    "refine": _run_refine,
}


def run_subcommand(name: str, config: RunConfig, options: Optional[Dict[str, Any]] = None,
                   runner: Optional[ScanRunner] = None) -> int:
    """
    Runs one subcommand and returns its exit status: 0 success, 1 failed check, 2 bad
    configuration, 3 numeric-domain failure, 4 I/O failure.
    """
    options = options or {}
    try:
        if name not in SUBCOMMANDS:
            raise ValueError(f"Unknown subcommand: {name}")
        runner = runner or ScanRunner(options.get("threads"))
        store = ResultStore(options.get("output") or config.output)
        logging.info(f"Running {name} with {runner.threads} worker threads into {store.base_path}")
        SUBCOMMANDS[name](config, options, store, runner)
    except ValueError as e:
        return _fail(name, e, 2)
    except NumericDomainError as e:
        return _fail(name, e, 3)
    except OSError as e:
        return _fail(name, e, 4)
    except SlitwaveError as e:
        return _fail(name, e, e.exit_code)
    return 0


def _fail(name: str, error: Exception, code: int) -> int:
    logging.error(f"{name} failed: {error}")
    print(f"error: {error}", file=sys.stderr)
    return code


def load_config(path: Optional[str], overrides: List[str]) -> RunConfig:
    if path is None:
        config = build_config({})
    else:
        with open(path, "r", encoding="utf-8") as f:
            config = parse_config(f.read())
    return apply_overrides(config, overrides)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run file in 'key = value' format")
    common.add_argument("--output", help="output directory (default: SLITWAVE_OUTPUT or ./slitwave-output)")
    common.add_argument("--threads", type=int, help="worker threads (default: SLITWAVE_THREADS or core count)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key; may be repeated")
    common.add_argument("--log-level", default=os.getenv("SLITWAVE_LOG_LEVEL", "INFO"))

    parser = argparse.ArgumentParser(prog="slitwave", description="Slit diffraction null-structure engine")
    sub = parser.add_subparsers(dest="command", required=True)

    density = sub.add_parser("density", parents=[common], help="rho on the configured lattice")
    density.add_argument("--pgm", action="store_true", help="also write a 16-bit PGM heatmap")
    density.add_argument("--mapping", choices=("affine", "log"), default="affine")

    sub.add_parser("nullmap", parents=[common], help="points whose normalised rho is below the threshold")

    slice_parser = sub.add_parser("slice", parents=[common], help="1-D density profile")
    slice_parser.add_argument("--axis", choices=("x2", "zpp"), default="x2",
                              help="coordinate that varies along the slice")
    slice_parser.add_argument("--value", type=float, help="fixed value of the other coordinate")
    slice_parser.add_argument("--lo", type=float)
    slice_parser.add_argument("--hi", type=float)
    slice_parser.add_argument("--n", type=int, default=1001)

    cornu = sub.add_parser("cornu", parents=[common], help="Cornu spiral samples (u, S, C)")
    cornu.add_argument("--range", type=float, nargs=2, default=(0.0, 8.0), metavar=("A", "B"))
    cornu.add_argument("--n", type=int, default=801)

    transition = sub.add_parser("transition", parents=[common], help="braid-to-fringe transition band")
    transition.add_argument("--stations", type=int, default=400)
    transition.add_argument("--zrange", type=float, nargs=2, metavar=("A", "B"))

    scalecheck = sub.add_parser("scalecheck", parents=[common], help="scaling-symmetry check")
    scalecheck.add_argument("--factor", type=float, default=10.0)

    drho = sub.add_parser("drho", parents=[common], help="d(rho)/dz'' on the configured lattice")
    drho.add_argument("--h", type=float, help="finite-difference step in z''")
    drho.add_argument("--pgm", action="store_true")

    refine = sub.add_parser("refine", parents=[common], help="refine one local minimum of rho")
    refine.add_argument("--x2", type=float)
    refine.add_argument("--zpp", type=float)
    refine.add_argument("--fixed-zpp", action="store_true", help="search along x2 only")
    refine.add_argument("--polish", action="store_true", help="Newton polish of Re psi = Im psi = 0")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    try:
        config = load_config(args.config, args.overrides)
    except ValueError as e:
        return _fail(args.command, e, 2)
    except OSError as e:
        return _fail(args.command, e, 4)
    options = {k: v for k, v in vars(args).items() if k not in ("command", "config", "overrides", "log_level")}
    return run_subcommand(args.command, config, options)


if __name__ == "__main__":
    sys.exit(main())
