import logging
import math
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import ndimage, optimize

from slitwave.core.errors import NumericDomainError
from slitwave.core.geometry import SlitArray
from slitwave.core.kernels import AmplitudeEvaluator, FresnelEvaluator
from slitwave.core.scheduler import ScanRunner, get_default_runner
from slitwave.core.worker import MC_BLOCK_SIZE, MonteCarloWorker

NULL_THRESHOLD = 1e-14
# Lattice used to estimate the peak density of a region.
PEAK_LATTICE = (257, 257)

REFINE_SHRINK = 0.5
REFINE_MIN_STEP = 1e-12
REFINE_MAX_ITER = 200


class Region(BaseModel):
    model_config = ConfigDict(frozen=True)

    x2_min: float
    x2_max: float
    zpp_min: float
    zpp_max: float

    @model_validator(mode="after")
    def _ordered(self) -> "Region":
        values = (self.x2_min, self.x2_max, self.zpp_min, self.zpp_max)
        if not all(math.isfinite(v) for v in values):
            raise ValueError("region bounds must be finite")
        if not self.x2_min < self.x2_max:
            raise ValueError(f"x2_min < x2_max required (got {self.x2_min}, {self.x2_max})")
        if not 0 < self.zpp_min < self.zpp_max:
            raise ValueError(f"0 < zpp_min < zpp_max required (got {self.zpp_min}, {self.zpp_max})")
        return self

    @property
    def bounds(self) -> Tuple[float, float, float, float]:
        return self.x2_min, self.x2_max, self.zpp_min, self.zpp_max

    def contains(self, x2: float, zpp: float) -> bool:
        return self.x2_min <= x2 <= self.x2_max and self.zpp_min <= zpp <= self.zpp_max

    def scaled(self, s: float) -> "Region":
        return Region(x2_min=self.x2_min * s, x2_max=self.x2_max * s,
                      zpp_min=self.zpp_min * s * s, zpp_max=self.zpp_max * s * s)


class NullMap(BaseModel):
    """
    Points where the peak-normalised density falls below `threshold`.
    `points` has one row (x2, zpp, rho) per retained sample in deterministic
    order; the grid sampler also keeps the (ix, iz) lattice index per row.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    points: np.ndarray
    threshold: float
    sampler: Literal["Grid", "MonteCarlo"]
    seed: Optional[int] = None
    samples_taken: int
    peak: float
    region: Region
    lattice_index: Optional[np.ndarray] = None
    lattice_shape: Optional[Tuple[int, int]] = None

    @model_validator(mode="after")
    def _consistent(self) -> "NullMap":
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise ValueError("points must have shape (k, 3)")
        if len(self.points) and not np.all(self.points[:, 2] < self.threshold):
            raise ValueError("every stored rho must lie below the threshold")
        return self

    @property
    def retained_fraction(self) -> float:
        return len(self.points) / self.samples_taken if self.samples_taken else 0.0


class RefinedMinimum(BaseModel):
    model_config = ConfigDict(frozen=True)

    x2: float
    zpp: float
    rho_min: float
    converged: bool
    iterations: int = 0
    final_step: float = 0.0
    polished: bool = False


class TransitionConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    stations: int = Field(default=400, ge=4)
    samples_per_spacing: int = Field(default=32, ge=4)
    rel_threshold: float = Field(default=1e-2, gt=0, lt=1)
    far_field_tolerance: float = Field(default=0.1, gt=0, lt=1)
    near_field_ratio: float = Field(default=0.5, gt=0, lt=1)
    max_points_per_station: int = Field(default=2_000_000, ge=64)


class TransitionProfile(BaseModel):
    model_config = ConfigDict(frozen=True)

    zpp: List[float]
    counts: List[int]
    predicted: List[float]
    z_lo: float
    z_hi: float


def lattice(region: Region, nx: int, nz: int, log_z: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """Axes of the nx x nz lattice: uniform in x2, uniform or log-uniform in zpp."""
    if nx < 2 or nz < 2:
        raise ValueError(f"lattice needs nx, nz >= 2 (got {nx}, {nz})")
    x2 = np.linspace(region.x2_min, region.x2_max, nx)
    if log_z:
        zpp = np.geomspace(region.zpp_min, region.zpp_max, nz)
    else:
        zpp = np.linspace(region.zpp_min, region.zpp_max, nz)
    return x2, zpp


def density_lattice(slits: SlitArray, region: Region, nx: int, nz: int, evaluator: AmplitudeEvaluator,
                    log_z: bool = False, runner: Optional[ScanRunner] = None) -> np.ndarray:
    """rho on the lattice as an (nz, nx) array, x2 fastest."""
    runner = runner or get_default_runner()
    x2, zpp = lattice(region, nx, nz, log_z)
    zz, xx = np.meshgrid(zpp, x2, indexing="ij")
    try:
        return runner.evaluate_density(evaluator, slits, xx, zz)
    except NumericDomainError as e:
        index = getattr(e, "index", None)
        if index is None:
            raise
        iz, ix = divmod(index, nx)
        raise NumericDomainError(f"{e} at lattice (ix={ix}, iz={iz})") from e


def region_peak(slits: SlitArray, region: Region, evaluator: AmplitudeEvaluator, log_z: bool = False,
                runner: Optional[ScanRunner] = None) -> float:
    rho = density_lattice(slits, region, PEAK_LATTICE[0], PEAK_LATTICE[1], evaluator, log_z, runner)
    return float(np.max(rho))


def _check_threshold(threshold: float) -> None:
    if not (math.isfinite(threshold) and threshold >= 0):
        raise ValueError(f"threshold must be a finite non-negative number (got {threshold})")


def scan_grid(slits: SlitArray, region: Region, nx: int, nz: int, threshold: float = NULL_THRESHOLD,
              evaluator: Optional[AmplitudeEvaluator] = None, log_z: bool = False,
              peak: Optional[float] = None, runner: Optional[ScanRunner] = None) -> NullMap:
    """
    Marks every lattice point whose density, divided by the region peak, is
    below `threshold`. Rows come out in lattice order (x2 fastest).
    """
    _check_threshold(threshold)
    evaluator = evaluator or FresnelEvaluator()
    x2, zpp = lattice(region, nx, nz, log_z)
    rho = density_lattice(slits, region, nx, nz, evaluator, log_z, runner)
    if peak is None:
        peak = max(float(np.max(rho)), region_peak(slits, region, evaluator, log_z, runner))
    norm = rho / peak
    iz, ix = np.nonzero(norm < threshold)
    points = np.column_stack((x2[ix], zpp[iz], norm[iz, ix])) if len(ix) else np.empty((0, 3))
    logging.info(f"scan_grid: {len(ix)} of {nx * nz} lattice points below {threshold:g}")
    return NullMap(points=points, threshold=threshold, sampler="Grid", samples_taken=nx * nz, peak=peak,
                   region=region, lattice_index=np.column_stack((ix, iz)), lattice_shape=(nx, nz))


def sample_monte_carlo(slits: SlitArray, region: Region, n: int, threshold: float = NULL_THRESHOLD,
                       seed: int = 0, evaluator: Optional[AmplitudeEvaluator] = None, log_z: bool = False,
                       peak: Optional[float] = None, runner: Optional[ScanRunner] = None) -> NullMap:
    """
    Uniform samples from a counter-based stream: sample j depends only on
    (seed, j), so the result is identical for any degree of parallelism.
    """
    if n < 1:
        raise ValueError(f"Monte-Carlo sampling needs n >= 1 (got {n})")
    _check_threshold(threshold)
    evaluator = evaluator or FresnelEvaluator()
    runner = runner or get_default_runner()
    worker = MonteCarloWorker(evaluator, slits, seed, region.bounds, log_z)
    n_blocks = -(-n // MC_BLOCK_SIZE)
    results = runner.map(worker, [{"block": b} for b in range(n_blocks)])
    x2 = np.concatenate([r[0] for r in results])[:n]
    zpp = np.concatenate([r[1] for r in results])[:n]
    rho = np.concatenate([r[2] for r in results])[:n]
    if peak is None:
        peak = max(float(np.max(rho)), region_peak(slits, region, evaluator, log_z, runner))
    norm = rho / peak
    keep = np.nonzero(norm < threshold)[0]
    points = np.column_stack((x2[keep], zpp[keep], norm[keep])) if len(keep) else np.empty((0, 3))
    logging.info(f"sample_monte_carlo: kept {len(keep)} of {n} samples (seed {seed})")
    return NullMap(points=points, threshold=threshold, sampler="MonteCarlo", seed=seed, samples_taken=n,
                   peak=peak, region=region)


def count_null_clusters(null_map: NullMap) -> int:
    """Connected clusters of a grid null map under 8-neighbour linkage."""
    if null_map.sampler != "Grid" or null_map.lattice_shape is None:
        raise ValueError("cluster extraction needs a grid-sampled null map")
    nx, nz = null_map.lattice_shape
    mask = np.zeros((nz, nx), dtype=bool)
    if len(null_map.lattice_index):
        mask[null_map.lattice_index[:, 1], null_map.lattice_index[:, 0]] = True
    _, count = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    return int(count)


def initial_step(slits: SlitArray, zpp: float) -> float:
    """Half the far-field fringe spacing for arrays, a tenth of the slit width for one slit."""
    if slits.n_slits >= 2:
        return zpp / (2.0 * slits.pitch)
    return min(slits.widths) / 10.0


def _polish(slits: SlitArray, evaluator: AmplitudeEvaluator, x2: float, zpp: float,
            radius: float, fixed_zpp: bool) -> Optional[Tuple[float, float, float]]:
    """Newton-type solve of Re psi = Im psi = 0 near (x2, zpp); None if it does not help."""
    if fixed_zpp:
        return None

    def residual(p):
        if p[1] <= 0:
            return [1.0, 1.0]
        psi = complex(evaluator.amplitudes(slits, p[0], p[1]))
        return [psi.real, psi.imag]

    try:
        sol = optimize.root(residual, [x2, zpp], method="hybr")
    except (NumericDomainError, ValueError):
        return None
    px, pz = float(sol.x[0]), float(sol.x[1])
    if pz <= 0 or abs(px - x2) > radius or abs(pz - zpp) > radius:
        return None
    return px, pz, float(evaluator.density(slits, px, pz))


def refine_minimum(slits: SlitArray, x2_0: float, zpp_0: float,
                   evaluator: Optional[AmplitudeEvaluator] = None, step: Optional[float] = None,
                   fixed_zpp: bool = False, polish: bool = False,
                   region: Optional[Region] = None) -> RefinedMinimum:
    """
    Coordinate descent with geometric step shrinkage. Each iteration tries
    x2 +- step (and zpp +- step unless fixed_zpp), moves to the best candidate
    when it lowers rho and halves the step otherwise. Stops once the step
    drops below 1e-12 (converged) or after 200 iterations.
    """
    evaluator = evaluator or FresnelEvaluator()
    if not zpp_0 > 0:
        raise ValueError("starting zpp must be positive")
    if region is not None and not region.contains(x2_0, zpp_0):
        raise ValueError(f"starting point ({x2_0}, {zpp_0}) lies outside the region")
    step = step if step is not None else initial_step(slits, zpp_0)
    first_step = step
    x, z = float(x2_0), float(zpp_0)
    rho = float(evaluator.density(slits, x, z))
    converged = False
    iterations = 0
    while iterations < REFINE_MAX_ITER:
        if step < REFINE_MIN_STEP:
            converged = True
            break
        iterations += 1
        candidates = [(x - step, z), (x + step, z)]
        if not fixed_zpp:
            candidates += [(x, z - step), (x, z + step)]
        candidates = [(px, pz) for px, pz in candidates
                      if pz > 0 and (region is None or region.contains(px, pz))]
        if candidates:
            px = np.array([p[0] for p in candidates])
            pz = np.array([p[1] for p in candidates])
            values = evaluator.density(slits, px, pz)
            best = int(np.argmin(values))
            if values[best] < rho:
                x, z, rho = float(px[best]), float(pz[best]), float(values[best])
                continue
        step *= REFINE_SHRINK
    else:
        converged = step < REFINE_MIN_STEP

    polished = False
    if polish:
        result = _polish(slits, evaluator, x, z, first_step, fixed_zpp)
        if result is not None and result[2] < rho:
            x, z, rho = result
            polished = True
    logging.debug(f"refine_minimum: rho={rho:.3e} at ({x}, {z}) after {iterations} iterations")
    return RefinedMinimum(x2=x, zpp=z, rho_min=rho, converged=converged, iterations=iterations,
                          final_step=step, polished=polished)


def _count_near_null_minima(rho: np.ndarray, window: int, rel_threshold: float) -> int:
    interior = rho[1:-1]
    is_min = (interior < rho[:-2]) & (interior <= rho[2:])
    envelope = ndimage.maximum_filter1d(rho, size=window, mode="nearest")[1:-1]
    return int(np.count_nonzero(is_min & (interior < rel_threshold * envelope)))


def transition_profile(slits: SlitArray, zpp_range: Tuple[float, float],
                       config: Optional[TransitionConfig] = None,
                       evaluator: Optional[AmplitudeEvaluator] = None,
                       runner: Optional[ScanRunner] = None) -> TransitionProfile:
    """
    Counts near-null minima of rho(x2) within one pitch of the array centre on
    log-spaced stations and compares with the far-field count
    (N - 1) * 2 * pitch^2 / zpp.
    """
    config = config or TransitionConfig()
    evaluator = evaluator or FresnelEvaluator()
    runner = runner or get_default_runner()
    if slits.n_slits < 2:
        raise ValueError("transition detection needs at least two slits")
    z_lo, z_hi = zpp_range
    if not 0 < z_lo < z_hi:
        raise ValueError(f"0 < zpp_lo < zpp_hi required (got {z_lo}, {z_hi})")
    pitch = slits.pitch
    centre = slits.centre
    stations = np.geomspace(z_lo, z_hi, config.stations)
    counts, predicted = [], []
    for zpp in stations:
        expected = (slits.n_slits - 1) * 2.0 * pitch * pitch / zpp
        nx = int(min(config.max_points_per_station, max(257, math.ceil(config.samples_per_spacing * expected) + 1)))
        x2 = np.linspace(centre - pitch, centre + pitch, nx)
        rho = runner.evaluate_density(evaluator, slits, x2, np.full(nx, zpp))
        window = 2 * int(math.ceil((nx - 1) / max(expected, 1.0))) + 1
        counts.append(_count_near_null_minima(rho, window, config.rel_threshold))
        predicted.append(expected)

    ratio = np.asarray(counts, dtype=float) / np.asarray(predicted)
    within = np.abs(ratio - 1.0) <= config.far_field_tolerance
    # first station from which every later station stays within tolerance
    tail = np.flip(np.logical_and.accumulate(np.flip(within)))
    if not tail.any():
        raise NumericDomainError(f"no far-field regime reached in zpp range [{z_lo}, {z_hi}]")
    hi_index = int(np.argmax(tail))
    near = np.nonzero(ratio[:hi_index] < config.near_field_ratio)[0]
    lo_index = int(near[-1]) if len(near) else 0
    logging.info(f"transition_profile: band [{stations[lo_index]:.4g}, {stations[hi_index]:.4g}]")
    return TransitionProfile(zpp=[float(z) for z in stations], counts=counts, predicted=predicted,
                             z_lo=float(stations[lo_index]), z_hi=float(stations[hi_index]))


def detect_transition(slits: SlitArray, zpp_range: Tuple[float, float],
                      config: Optional[TransitionConfig] = None,
                      evaluator: Optional[AmplitudeEvaluator] = None,
                      runner: Optional[ScanRunner] = None) -> Tuple[float, float]:
    """z'' band over which braided nulls give way to straight far-field fringes."""
    profile = transition_profile(slits, zpp_range, config, evaluator, runner)
    return profile.z_lo, profile.z_hi
