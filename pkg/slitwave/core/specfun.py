import logging
import math
import threading
from typing import Callable, List, Tuple, Union

import mpmath
import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy import optimize, special

from slitwave.core.errors import NumericDomainError, SeriesConvergenceError

ArrayLike = Union[float, np.ndarray]

# Series termination: stop once |term| < SERIES_RTOL * |partial sum|.
SERIES_RTOL = 1e-16
SERIES_MAX_TERMS = 500

# |x| up to which hyp1f2 promises relative accuracy; -q^4/4 at q = 4.
HYP1F2_DOMAIN = 64.0
# Beyond this float64 partial sums cancel; sum at HYP1F2_DPS digits instead.
HYP1F2_FLOAT_RADIUS = 8.0
HYP1F2_DPS = 40
# t1/t2 sum the series below this radius and use the Fresnel identity above it.
SERIES_SWITCH_RADIUS = 3.0
# Largest |q| accepted by the raw series (hypergeometric evaluator domain).
STABLE_Q_RADIUS = 4.0

SQRT_HALF_PI = math.sqrt(math.pi / 2.0)
SQRT_TWO_OVER_PI = math.sqrt(2.0 / math.pi)
# lim t1 = lim t2 = sqrt(pi/8)
T_LIMIT = math.sqrt(math.pi / 8.0)


def _finite_array(value: ArrayLike, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise NumericDomainError(f"{name} requires a finite argument")
    return arr


def _unwrap(arr: np.ndarray, shape: Tuple[int, ...]) -> ArrayLike:
    arr = arr.reshape(shape)
    return float(arr) if arr.ndim == 0 else arr


def fresnel_pair(z: ArrayLike) -> Tuple[ArrayLike, ArrayLike]:
    """
    (S(z), C(z)) with S = int_0^z sin(pi t^2/2) dt and C the cosine analogue.
    scipy's implementation already switches between the power series and
    the auxiliary-function expansion, which keeps |z| up to 1e3 at ~1e-15.
    """
    z = _finite_array(z, "fresnel")
    s, c = special.fresnel(z)
    return _unwrap(np.asarray(s), z.shape), _unwrap(np.asarray(c), z.shape)


def fresnel_s(z: ArrayLike) -> ArrayLike:
    return fresnel_pair(z)[0]


def fresnel_c(z: ArrayLike) -> ArrayLike:
    return fresnel_pair(z)[1]


def _float_series(a: float, b1: float, b2: float, xs: np.ndarray) -> np.ndarray:
    term = np.ones_like(xs)
    total = np.ones_like(xs)
    for n in range(SERIES_MAX_TERMS):
        term = term * ((a + n) * xs / ((n + 1) * (b1 + n) * (b2 + n)))
        total = total + term
        if np.all(np.abs(term) <= SERIES_RTOL * np.abs(total)):
            logging.debug(f"hyp1f2({a}; {b1}, {b2}) converged after {n + 2} terms")
            return total
    raise SeriesConvergenceError(f"hyp1f2({a}; {b1}, {b2}) did not converge in {SERIES_MAX_TERMS} terms")


_mp_local = threading.local()


def _mp_context() -> mpmath.MPContext:
    # mpmath.mp precision is process-wide; scan threads each get their own context.
    ctx = getattr(_mp_local, "ctx", None)
    if ctx is None:
        ctx = mpmath.MPContext()
        ctx.dps = HYP1F2_DPS
        _mp_local.ctx = ctx
    return ctx


def _extended_series(a: float, b1: float, b2: float, x: float) -> float:
    ctx = _mp_context()
    ma, mb1, mb2, mx = (ctx.mpf(v) for v in (a, b1, b2, x))
    rtol = ctx.mpf(10) ** (8 - HYP1F2_DPS)
    term = ctx.mpf(1)
    total = ctx.mpf(1)
    for n in range(SERIES_MAX_TERMS):
        term = term * (ma + n) * mx / ((n + 1) * (mb1 + n) * (mb2 + n))
        total += term
        if abs(term) <= rtol * abs(total):
            return float(total)
    raise SeriesConvergenceError(f"hyp1f2({a}; {b1}, {b2}) did not converge in {SERIES_MAX_TERMS} terms at x={x}")


def hyp1f2(a: float, b1: float, b2: float, x: ArrayLike) -> ArrayLike:
    """
    Generalized hypergeometric 1F2(a; b1, b2; x) by term-ratio summation.

    Terms grow to ~1e3 near |x| = 64 while the sum stays O(1e-2), so
    arguments beyond HYP1F2_FLOAT_RADIUS are summed at HYP1F2_DPS digits
    and rounded once. The routine declares |x| <= HYP1F2_DOMAIN and raises
    NumericDomainError outside it. Hitting SERIES_MAX_TERMS raises
    SeriesConvergenceError instead of truncating.
    """
    for name, b in (("b1", b1), ("b2", b2)):
        if b <= 0 and float(b).is_integer():
            raise NumericDomainError(f"hyp1f2: {name}={b} is a non-positive integer")
    x = _finite_array(x, "hyp1f2")
    shape = x.shape
    xs = np.atleast_1d(x)
    if np.any(np.abs(xs) > HYP1F2_DOMAIN):
        worst = float(np.max(np.abs(xs)))
        raise NumericDomainError(f"hyp1f2: |x|={worst} exceeds the stable domain |x| <= {HYP1F2_DOMAIN}")

    total = np.empty_like(xs)
    wide = np.abs(xs) > HYP1F2_FLOAT_RADIUS
    if np.any(~wide):
        total[~wide] = _float_series(a, b1, b2, xs[~wide])
    if np.any(wide):
        total[wide] = [_extended_series(a, b1, b2, float(v)) for v in xs[wide]]
    return _unwrap(total, shape)


def _series_domain(q: np.ndarray, name: str) -> None:
    if np.any(np.abs(q) > STABLE_Q_RADIUS):
        worst = float(np.max(np.abs(q)))
        raise NumericDomainError(f"{name}: |q|={worst} outside the series domain |q| <= {STABLE_Q_RADIUS}")


def t1_series(q: ArrayLike) -> ArrayLike:
    """(q^3/3) 1F2(3/4; 3/2, 7/4; -q^4/4) = sum (-1)^n q^(4n+3) / ((2n+1)! (4n+3))."""
    q = _finite_array(q, "t1")
    _series_domain(q, "t1_series")
    return _unwrap(np.asarray(q ** 3 / 3.0 * hyp1f2(0.75, 1.5, 1.75, -q ** 4 / 4.0)), q.shape)


def t2_series(q: ArrayLike) -> ArrayLike:
    """q 1F2(1/4; 1/2, 5/4; -q^4/4) = sum (-1)^n q^(4n+1) / ((2n)! (4n+1))."""
    q = _finite_array(q, "t2")
    _series_domain(q, "t2_series")
    return _unwrap(np.asarray(q * hyp1f2(0.25, 0.5, 1.25, -q ** 4 / 4.0)), q.shape)


def _switched(q: ArrayLike, name: str, series: Callable, fresnel: Callable) -> ArrayLike:
    q = _finite_array(q, name)
    flat = np.atleast_1d(q).astype(float)
    out = np.empty_like(flat)
    small = np.abs(flat) <= SERIES_SWITCH_RADIUS
    if np.any(small):
        out[small] = series(flat[small])
    if np.any(~small):
        out[~small] = SQRT_HALF_PI * fresnel(flat[~small] * SQRT_TWO_OVER_PI)
    return _unwrap(out, q.shape)


def t1(q: ArrayLike) -> ArrayLike:
    """int_0^q sin(v^2) dv; equals sqrt(pi/2) S(q sqrt(2/pi))."""
    return _switched(q, "t1", t1_series, fresnel_s)


def t2(q: ArrayLike) -> ArrayLike:
    """int_0^q cos(v^2) dv; equals sqrt(pi/2) C(q sqrt(2/pi))."""
    return _switched(q, "t2", t2_series, fresnel_c)


class CornuPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    u: float
    s: float
    c: float

    @model_validator(mode="after")
    def _on_bounded_spiral(self) -> "CornuPoint":
        if abs(self.s) >= 0.8 or abs(self.c) >= 0.8:
            raise ValueError(f"({self.s}, {self.c}) is off the Cornu spiral")
        return self


def cornu_curve(u_min: float, u_max: float, n: int) -> List[CornuPoint]:
    if not (math.isfinite(u_min) and math.isfinite(u_max)):
        raise ValueError("Cornu range must be finite")
    if not u_min < u_max:
        raise ValueError(f"empty or inverted Cornu range [{u_min}, {u_max}]")
    if n < 2:
        raise ValueError("a Cornu curve needs at least two points")
    u = np.linspace(u_min, u_max, n)
    s, c = special.fresnel(u)
    return [CornuPoint(u=float(ui), s=float(si), c=float(ci)) for ui, si, ci in zip(u, s, c)]


def oscillation_zeros(func: Callable[[np.ndarray], np.ndarray], lo: float, hi: float,
                      offset: float = 0.0, spacing: float = 1e-3, tol: float = 1e-10) -> List[float]:
    """
    Roots of func(q) - offset on [lo, hi], bracketed by sign changes on a
    uniform scan and polished to `tol`.
    """
    n = int(math.ceil((hi - lo) / spacing)) + 1
    grid = np.linspace(lo, hi, n)
    values = np.asarray(func(grid), dtype=float) - offset
    zeros = []
    for i in np.nonzero(np.sign(values[:-1]) * np.sign(values[1:]) < 0)[0]:
        root = optimize.brentq(lambda q: float(func(q)) - offset, grid[i], grid[i + 1], xtol=tol)
        zeros.append(float(root))
    return zeros
