import logging
import math
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy import integrate

from slitwave.analysis.nullmap import Region, RefinedMinimum, density_lattice, lattice, refine_minimum
from slitwave.core.geometry import SlitArray
from slitwave.core.kernels import AmplitudeEvaluator, FresnelEvaluator
from slitwave.core.scheduler import ScanRunner, get_default_runner

ENCLOSED_RTOL = 1e-8
ENCLOSED_MAX_DOUBLINGS = 12


class ScalarFieldGrid(BaseModel):
    """
    rho or d(rho)/dz'' on an nx x nz lattice. `values` has shape (nz, nx):
    one row per zpp station, x2 fastest.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    region: Region
    nx: int
    nz: int
    log_z: bool = False
    values: np.ndarray
    kind: Literal["Density", "DensityTimeDerivative"]

    @model_validator(mode="after")
    def _consistent(self) -> "ScalarFieldGrid":
        if self.values.shape != (self.nz, self.nx):
            raise ValueError(f"values shape {self.values.shape} does not match (nz, nx) = ({self.nz}, {self.nx})")
        if self.kind == "Density" and np.any(self.values < 0):
            raise ValueError("density values must be non-negative")
        return self

    @property
    def axes(self) -> Tuple[np.ndarray, np.ndarray]:
        return lattice(self.region, self.nx, self.nz, self.log_z)


def density_grid(slits: SlitArray, region: Region, nx: int, nz: int,
                 evaluator: Optional[AmplitudeEvaluator] = None, log_z: bool = False,
                 runner: Optional[ScanRunner] = None) -> ScalarFieldGrid:
    evaluator = evaluator or FresnelEvaluator()
    values = density_lattice(slits, region, nx, nz, evaluator, log_z, runner)
    return ScalarFieldGrid(region=region, nx=nx, nz=nz, log_z=log_z, values=values, kind="Density")


def default_step(zpp: np.ndarray) -> np.ndarray:
    # kept below zpp/2 so zpp - h stays on the physical side
    zpp = np.asarray(zpp, dtype=float)
    return np.minimum(np.maximum(1e-4, 1e-3 * zpp), zpp / 2.5)


def drho_dz_grid(slits: SlitArray, region: Region, nx: int, nz: int, h: Optional[float] = None,
                 evaluator: Optional[AmplitudeEvaluator] = None, log_z: bool = False,
                 runner: Optional[ScanRunner] = None) -> ScalarFieldGrid:
    """
    Central difference (rho(z+h) - rho(z-h)) / 2h on the lattice. z'' stands in
    for elapsed time, so the sign field and zero set match d(rho)/dt.
    """
    if h is not None and not (0 < h < region.zpp_min / 2.0):
        raise ValueError(f"step h must satisfy 0 < h < zpp_min/2 = {region.zpp_min / 2.0} (got {h})")
    evaluator = evaluator or FresnelEvaluator()
    runner = runner or get_default_runner()
    x2, zpp = lattice(region, nx, nz, log_z)
    zz, xx = np.meshgrid(zpp, x2, indexing="ij")
    step = np.full_like(zz, h) if h is not None else default_step(zz)
    upper = runner.evaluate_density(evaluator, slits, xx, zz + step)
    lower = runner.evaluate_density(evaluator, slits, xx, zz - step)
    values = (upper - lower) / (2.0 * step)
    return ScalarFieldGrid(region=region, nx=nx, nz=nz, log_z=log_z, values=values, kind="DensityTimeDerivative")


def drho_dz_at(slits: SlitArray, x2: float, zpp: float, evaluator: AmplitudeEvaluator,
               h: Optional[float] = None) -> float:
    h = float(default_step(zpp)) if h is None else h
    upper = float(evaluator.density(slits, x2, zpp + h))
    lower = float(evaluator.density(slits, x2, zpp - h))
    return (upper - lower) / (2.0 * h)


def slice_density(slits: SlitArray, axis: Literal["FixedZ", "FixedX"], value: float,
                  coord_range: Tuple[float, float], n: int,
                  evaluator: Optional[AmplitudeEvaluator] = None,
                  log_spacing: bool = False,
                  runner: Optional[ScanRunner] = None) -> List[Tuple[float, float]]:
    """
    1-D profile. FixedZ walks x2 at zpp = value; FixedX walks zpp at x2 = value.
    """
    if n < 2:
        raise ValueError("a slice needs at least two samples")
    lo, hi = coord_range
    if not lo < hi:
        raise ValueError(f"slice range must be increasing (got {lo}, {hi})")
    evaluator = evaluator or FresnelEvaluator()
    runner = runner or get_default_runner()
    if axis == "FixedZ":
        if not value > 0:
            raise ValueError("a FixedZ slice needs zpp > 0")
        coords = np.linspace(lo, hi, n)
        rho = runner.evaluate_density(evaluator, slits, coords, np.full(n, value))
    elif axis == "FixedX":
        if not lo > 0:
            raise ValueError("a FixedX slice needs a positive zpp range")
        coords = np.geomspace(lo, hi, n) if log_spacing else np.linspace(lo, hi, n)
        rho = runner.evaluate_density(evaluator, slits, np.full(n, value), coords)
    else:
        raise ValueError(f"Unknown slice axis: {axis}")
    return [(float(c), float(r)) for c, r in zip(coords, rho)]


def _simpson(slits: SlitArray, zpp: float, x_lo: float, x_hi: float, n: int,
             evaluator: AmplitudeEvaluator) -> float:
    x = np.linspace(x_lo, x_hi, n + 1)
    rho = evaluator.density(slits, x, np.full(n + 1, zpp))
    return float(integrate.simpson(rho, x=x))


def enclosed_probability(slits: SlitArray, zpp: float, x_lo: float, x_hi: float, n: int = 256,
                         evaluator: Optional[AmplitudeEvaluator] = None) -> float:
    """
    Composite Simpson integral of rho over [x_lo, x_hi] at fixed zpp. The
    interval count doubles until n and 2n agree to 1e-8 relative.
    """
    if x_lo > x_hi:
        raise ValueError(f"x_lo <= x_hi required (got {x_lo}, {x_hi})")
    if n < 16:
        raise ValueError("enclosed_probability needs n >= 16")
    if not zpp > 0:
        raise ValueError("zpp must be positive")
    if x_lo == x_hi:
        return 0.0
    evaluator = evaluator or FresnelEvaluator()
    n += n % 2
    coarse = _simpson(slits, zpp, x_lo, x_hi, n, evaluator)
    for _ in range(ENCLOSED_MAX_DOUBLINGS):
        n *= 2
        fine = _simpson(slits, zpp, x_lo, x_hi, n, evaluator)
        if abs(fine - coarse) <= ENCLOSED_RTOL * abs(fine):
            return fine
        coarse = fine
    logging.warning(f"enclosed_probability: not refinement-stable at n={n} on [{x_lo}, {x_hi}], zpp={zpp}")
    return coarse


class BubbleStation(BaseModel):
    model_config = ConfigDict(frozen=True)

    zpp: float
    left: RefinedMinimum
    right: RefinedMinimum
    enclosed: float
    rho_peak: float
    boundary_ratio: float
    drho_ratio: float


class QuasiBubbleReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    bottom: BubbleStation
    top: BubbleStation
    relative_change: float
    field_max: float
    is_quasi: bool


def _bubble_station(slits: SlitArray, zpp: float, left_x: float, right_x: float,
                    evaluator: AmplitudeEvaluator, field_max: float, n: int) -> BubbleStation:
    left = refine_minimum(slits, left_x, zpp, evaluator, fixed_zpp=True)
    right = refine_minimum(slits, right_x, zpp, evaluator, fixed_zpp=True)
    inside = np.linspace(left.x2, right.x2, 1025)
    rho_peak = float(np.max(evaluator.density(slits, inside, np.full(inside.size, zpp))))
    enclosed = enclosed_probability(slits, zpp, left.x2, right.x2, n, evaluator)
    boundary = max(left.rho_min, right.rho_min) / rho_peak
    slope = max(abs(drho_dz_at(slits, m.x2, zpp, evaluator)) for m in (left, right))
    return BubbleStation(zpp=zpp, left=left, right=right, enclosed=enclosed, rho_peak=rho_peak,
                         boundary_ratio=boundary, drho_ratio=slope / field_max)


def analyze_quasi_bubble(slits: SlitArray, bottom: Tuple[float, float, float], top: Tuple[float, float, float],
                         evaluator: Optional[AmplitudeEvaluator] = None, n: int = 256,
                         field_resolution: int = 41, change_tolerance: float = 0.01,
                         runner: Optional[ScanRunner] = None) -> QuasiBubbleReport:
    """
    Tests whether a region bounded by side nulls conserves probability.

    `bottom` and `top` are (left_x2, right_x2, zpp) guesses for the side nulls
    at the two stations. Each null is refined along x2, the enclosed
    probability between them is integrated and the boundary density and
    d(rho)/dz'' are compared with the bubble peak and the field maximum.
    A bubble whose enclosed probability changes by more than
    `change_tolerance` while its boundary density stays positive is quasi:
    probability flows through its walls.
    """
    evaluator = evaluator or FresnelEvaluator()
    logging.info("Phase 1: d(rho)/dz'' field over the bubble")
    x_lo = min(bottom[0], top[0])
    x_hi = max(bottom[1], top[1])
    z_lo, z_hi = sorted((bottom[2], top[2]))
    field_region = Region(x2_min=x_lo, x2_max=x_hi, zpp_min=z_lo, zpp_max=z_hi)
    field = drho_dz_grid(slits, field_region, field_resolution, field_resolution,
                         evaluator=evaluator, runner=runner)
    field_max = float(np.max(np.abs(field.values)))

    logging.info("Phase 2: side-null refinement and enclosed probability")
    low = _bubble_station(slits, bottom[2], bottom[0], bottom[1], evaluator, field_max, n)
    high = _bubble_station(slits, top[2], top[0], top[1], evaluator, field_max, n)
    change = abs(high.enclosed - low.enclosed) / low.enclosed
    is_quasi = change > change_tolerance and min(low.left.rho_min, low.right.rho_min,
                                                 high.left.rho_min, high.right.rho_min) > 0
    logging.info(f"analyze_quasi_bubble: C1={low.enclosed:.6e}, C2={high.enclosed:.6e}, change={change:.3%}")
    return QuasiBubbleReport(bottom=low, top=high, relative_change=change, field_max=field_max, is_quasi=is_quasi)
