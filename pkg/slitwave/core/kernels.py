import logging
import math
from abc import ABC, abstractmethod
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator
from scipy import special

from slitwave.core.errors import ConfigError, QuadratureError
from slitwave.core.geometry import (
    ArrayLike,
    ComplexAmplitude,
    ObservationPoint,
    SlitArray,
    SourceConfig,
    reduced_q,
    reduced_u,
)
from slitwave.core.specfun import STABLE_Q_RADIUS, t1_series, t2_series

# amplitude_fresnel * FRESNEL_TO_PATH == amplitude_quadrature (FarField) == amplitude_hypergeometric
FRESNEL_TO_PATH = 1.0 / math.sqrt(2.0)


class QuadratureSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    points_per_panel: int = 16
    max_phase_per_panel: float = math.pi / 2.0

    @field_validator("points_per_panel")
    @classmethod
    def _enough_points(cls, value: int) -> int:
        if value < 2:
            raise ValueError("points_per_panel must be at least 2")
        return value

    @field_validator("max_phase_per_panel")
    @classmethod
    def _phase_range(cls, value: float) -> float:
        if not (0.0 < value <= math.pi):
            raise ValueError("max_phase_per_panel must lie in (0, pi]")
        return value


@lru_cache(maxsize=16)
def _gauss_legendre(n: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


def _panel_breaks(lo: float, hi: float, vertex: float, curvature: float, max_phase: float) -> np.ndarray:
    """
    Breakpoints in [lo, hi] where pi*curvature*(x - vertex)^2 crosses a
    multiple of max_phase, so no panel sees a larger phase change.
    """
    top = math.pi * curvature * max((lo - vertex) ** 2, (hi - vertex) ** 2)
    k = np.arange(1, int(top // max_phase) + 1, dtype=float)
    r = np.sqrt(k * max_phase / (math.pi * curvature))
    pts = np.concatenate(([lo, hi, vertex], vertex - r, vertex + r))
    return np.unique(pts[(pts >= lo) & (pts <= hi)])


def _quadrature_value(slits: SlitArray, x2: float, zpp: float, source: SourceConfig, spec: QuadratureSpec) -> complex:
    if slits.n_slits == 0:
        raise ValueError("quadrature needs a nonempty slit set")
    nodes, weights = _gauss_legendre(spec.points_per_panel)
    finite = source.mode == "Finite"
    curvature = 1.0 / zpp + (1.0 / source.zp if finite else 0.0)
    vertex = (x2 / zpp + (source.x0 / source.zp if finite else 0.0)) / curvature

    total = 0j
    for lo, hi in slits.intervals:
        breaks = _panel_breaks(lo, hi, vertex, curvature, spec.max_phase_per_panel)
        mid = 0.5 * (breaks[1:] + breaks[:-1])
        half = 0.5 * (breaks[1:] - breaks[:-1])
        x = mid[:, None] + half[:, None] * nodes[None, :]
        phase = np.pi * (x - x2) ** 2 / zpp
        if finite:
            phase = phase + np.pi * (x - source.x0) ** 2 / source.zp
        total += np.sum(half[:, None] * weights[None, :] * np.exp(1j * phase))
    value = total / math.sqrt(zpp)
    if not (math.isfinite(value.real) and math.isfinite(value.imag)):
        raise QuadratureError(f"non-finite quadrature result at x2={x2}, zpp={zpp}")
    return value


def fresnel_amplitudes(slits: SlitArray, x2: ArrayLike, zpp: ArrayLike) -> np.ndarray:
    """Sum over edges of +-[C(u) + i S(u)], upper edges positive."""
    x2, zpp = np.broadcast_arrays(np.asarray(x2, dtype=float), np.asarray(zpp, dtype=float))
    u = reduced_u(slits, x2, zpp)
    s, c = special.fresnel(u)
    signs = slits.signs.reshape((-1,) + (1,) * x2.ndim)
    return np.sum(signs * (c + 1j * s), axis=0)


def hypergeometric_amplitudes(slits: SlitArray, x2: ArrayLike, zpp: ArrayLike) -> np.ndarray:
    """(1/sqrt(pi)) sum over edges of +-[t2(q) + i t1(q)]; raises NumericDomainError for |q| > 4."""
    x2, zpp = np.broadcast_arrays(np.asarray(x2, dtype=float), np.asarray(zpp, dtype=float))
    q = reduced_q(slits, x2, zpp)
    terms = np.asarray(t2_series(q)) + 1j * np.asarray(t1_series(q))
    signs = slits.signs.reshape((-1,) + (1,) * x2.ndim)
    return np.sum(signs * terms, axis=0) / math.sqrt(math.pi)


def amplitude_quadrature(slits: SlitArray, point: ObservationPoint,
                         source: Optional[SourceConfig] = None,
                         spec: Optional[QuadratureSpec] = None) -> ComplexAmplitude:
    return ComplexAmplitude.from_complex(
        _quadrature_value(slits, point.x2, point.zpp, source or SourceConfig(), spec or QuadratureSpec())
    )


def amplitude_fresnel(slits: SlitArray, point: ObservationPoint) -> ComplexAmplitude:
    return ComplexAmplitude.from_complex(complex(fresnel_amplitudes(slits, point.x2, point.zpp)))


def amplitude_hypergeometric(slits: SlitArray, point: ObservationPoint) -> ComplexAmplitude:
    return ComplexAmplitude.from_complex(complex(hypergeometric_amplitudes(slits, point.x2, point.zpp)))


def probability_density(psi) -> float:
    """Born rule, rho = |psi|^2."""
    if isinstance(psi, ComplexAmplitude):
        return psi.re * psi.re + psi.im * psi.im
    psi = np.asarray(psi)
    return psi.real ** 2 + psi.imag ** 2


def match_constant(reference: np.ndarray, other: np.ndarray) -> complex:
    """Complex k with other ~ k * reference, taken at the largest |reference|."""
    reference = np.asarray(reference).ravel()
    other = np.asarray(other).ravel()
    i = int(np.argmax(np.abs(reference)))
    return complex(other[i] / reference[i])


def max_component_deviation(reference: np.ndarray, other: np.ndarray) -> float:
    k = match_constant(reference, other)
    diff = np.asarray(other).ravel() - k * np.asarray(reference).ravel()
    return float(max(np.max(np.abs(diff.real)), np.max(np.abs(diff.imag))))


class AmplitudeEvaluator(ABC):
    """
    One way of computing psi on arrays of observation points. Every evaluator
    agrees with the others up to a single global complex constant.
    """
    name = "abstract"
    supports_finite_source = False

    def __init__(self, source: Optional[SourceConfig] = None):
        self.source = source or SourceConfig()
        if self.source.mode == "Finite" and not self.supports_finite_source:
            raise ConfigError(f"the {self.name} evaluator supports FarField sources only")

    @abstractmethod
    def amplitudes(self, slits: SlitArray, x2: ArrayLike, zpp: ArrayLike) -> np.ndarray:
        pass

    def amplitude(self, slits: SlitArray, point: ObservationPoint) -> ComplexAmplitude:
        return ComplexAmplitude.from_complex(complex(self.amplitudes(slits, point.x2, point.zpp)))

    def density(self, slits: SlitArray, x2: ArrayLike, zpp: ArrayLike) -> np.ndarray:
        psi = self.amplitudes(slits, x2, zpp)
        return psi.real ** 2 + psi.imag ** 2


class QuadratureEvaluator(AmplitudeEvaluator):
    name = "quadrature"
    supports_finite_source = True

    def __init__(self, source: Optional[SourceConfig] = None, spec: Optional[QuadratureSpec] = None):
        super().__init__(source)
        self.spec = spec or QuadratureSpec()

    def amplitudes(self, slits: SlitArray, x2: ArrayLike, zpp: ArrayLike) -> np.ndarray:
        x2, zpp = np.broadcast_arrays(np.asarray(x2, dtype=float), np.asarray(zpp, dtype=float))
        if np.any(~(zpp > 0)):
            raise ValueError("zpp must be positive")
        out = np.fromiter(
            (_quadrature_value(slits, float(a), float(b), self.source, self.spec) for a, b in zip(x2.ravel(), zpp.ravel())),
            dtype=complex,
            count=x2.size,
        )
        return out.reshape(x2.shape)


class FresnelEvaluator(AmplitudeEvaluator):
    name = "fresnel"

    def amplitudes(self, slits: SlitArray, x2: ArrayLike, zpp: ArrayLike) -> np.ndarray:
        return fresnel_amplitudes(slits, x2, zpp)


class HypergeometricEvaluator(AmplitudeEvaluator):
    name = "hypergeometric"

    def amplitudes(self, slits: SlitArray, x2: ArrayLike, zpp: ArrayLike) -> np.ndarray:
        return hypergeometric_amplitudes(slits, x2, zpp)


class AutoEvaluator(AmplitudeEvaluator):
    """
    Series evaluator where every |q| <= 4, Fresnel form (rescaled to the same
    normalisation) elsewhere. A Finite source goes to quadrature.
    """
    name = "auto"
    supports_finite_source = True

    def __init__(self, source: Optional[SourceConfig] = None, spec: Optional[QuadratureSpec] = None):
        super().__init__(source)
        self.quadrature = QuadratureEvaluator(self.source, spec) if self.source.mode == "Finite" else None

    def amplitudes(self, slits: SlitArray, x2: ArrayLike, zpp: ArrayLike) -> np.ndarray:
        if self.quadrature is not None:
            return self.quadrature.amplitudes(slits, x2, zpp)
        x2, zpp = np.broadcast_arrays(np.asarray(x2, dtype=float), np.asarray(zpp, dtype=float))
        shape = x2.shape
        x2, zpp = np.atleast_1d(x2).ravel(), np.atleast_1d(zpp).ravel()
        inside = np.all(np.abs(reduced_q(slits, x2, zpp)) <= STABLE_Q_RADIUS, axis=0)
        out = np.empty(x2.shape, dtype=complex)
        if np.any(inside):
            out[inside] = hypergeometric_amplitudes(slits, x2[inside], zpp[inside])
        if not np.all(inside):
            logging.debug(f"AutoEvaluator: {int(np.sum(~inside))} points outside |q| <= {STABLE_Q_RADIUS}, using Fresnel form")
            out[~inside] = fresnel_amplitudes(slits, x2[~inside], zpp[~inside]) * FRESNEL_TO_PATH
        return out.reshape(shape)


class EvaluatorFactory:
    @staticmethod
    def get_evaluator(evaluator_type: str, **kwargs) -> AmplitudeEvaluator:
        evaluator_type = evaluator_type.lower()
        if evaluator_type == "quadrature":
            return QuadratureEvaluator(**kwargs)
        elif evaluator_type == "fresnel":
            kwargs.pop("spec", None)
            return FresnelEvaluator(**kwargs)
        elif evaluator_type == "hypergeometric":
            kwargs.pop("spec", None)
            return HypergeometricEvaluator(**kwargs)
        elif evaluator_type == "auto":
            return AutoEvaluator(**kwargs)
        else:
            raise ValueError(f"Unknown evaluator type: {evaluator_type}")
