import math
from typing import List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

ArrayLike = Union[float, np.ndarray]


class WaveParams(BaseModel):
    """
    Unit convention. Every length in the package is a multiple of the
    de Broglie wavelength, so the wavelength itself is exactly one.
    """
    model_config = ConfigDict(frozen=True)

    wavelength: float = 1.0

    @field_validator("wavelength")
    @classmethod
    def _unit_wavelength(cls, value: float) -> float:
        if value != 1.0:
            raise ValueError("lengths are measured in wavelengths; wavelength must be exactly 1")
        return value


class SlitArray(BaseModel):
    """
    Flat sorted edge list e1 < e2 < ... < e2n; slit i spans [e(2i-1), e(2i)].
    """
    model_config = ConfigDict(frozen=True)

    edges: Tuple[float, ...]

    @field_validator("edges")
    @classmethod
    def _check_edges(cls, edges: Tuple[float, ...]) -> Tuple[float, ...]:
        if len(edges) == 0 or len(edges) % 2:
            raise ValueError("even, nonempty edge list required")
        if not all(math.isfinite(e) for e in edges):
            raise ValueError("slit edges must be finite")
        for lo, hi in zip(edges, edges[1:]):
            if not hi > lo:
                raise ValueError(f"slit edges must be strictly increasing (got {lo} then {hi})")
        return tuple(float(e) for e in edges)

    @classmethod
    def single(cls, width: float, centre: float = 0.0) -> "SlitArray":
        return cls(edges=(centre - width / 2.0, centre + width / 2.0))

    @classmethod
    def equal_pitch(cls, n: int, width: float, pitch: float, centre: float = 0.0) -> "SlitArray":
        """n slits of equal width whose centres are `pitch` apart, symmetric about `centre`."""
        if n < 1:
            raise ValueError("at least one slit required")
        edges: List[float] = []
        for k in range(n):
            c = centre + (k - (n - 1) / 2.0) * pitch
            edges.extend((c - width / 2.0, c + width / 2.0))
        return cls(edges=tuple(edges))

    @property
    def n_slits(self) -> int:
        return len(self.edges) // 2

    @property
    def intervals(self) -> List[Tuple[float, float]]:
        return [(self.edges[2 * i], self.edges[2 * i + 1]) for i in range(self.n_slits)]

    @property
    def widths(self) -> List[float]:
        return [hi - lo for lo, hi in self.intervals]

    @property
    def centres(self) -> List[float]:
        return [(lo + hi) / 2.0 for lo, hi in self.intervals]

    @property
    def centre(self) -> float:
        return (self.edges[0] + self.edges[-1]) / 2.0

    @property
    def pitch(self) -> float:
        """Mean centre-to-centre distance."""
        if self.n_slits < 2:
            raise ValueError("inter-slit distance needs at least two slits")
        c = self.centres
        return (c[-1] - c[0]) / (self.n_slits - 1)

    @property
    def signs(self) -> np.ndarray:
        # lower edges enter with -1, upper edges with +1
        return np.tile([-1.0, 1.0], self.n_slits)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.edges, dtype=float)

    def is_symmetric(self, tol: float = 0.0) -> bool:
        e = self.as_array()
        return bool(np.all(np.abs(e + e[::-1]) <= tol))


class ObservationPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    x2: float
    zpp: float

    @field_validator("x2")
    @classmethod
    def _finite_x2(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("x2 must be finite")
        return value

    @field_validator("zpp")
    @classmethod
    def _positive_zpp(cls, value: float) -> float:
        if not (math.isfinite(value) and value > 0):
            raise ValueError(f"zpp must be positive and finite (got {value})")
        return value


class SourceConfig(BaseModel):
    """FarField drops the source leg of the kernel; Finite keeps (x1 - x0)^2 / z'."""
    model_config = ConfigDict(frozen=True)

    mode: Literal["FarField", "Finite"] = "FarField"
    x0: float = 0.0
    zp: Optional[float] = None

    @model_validator(mode="after")
    def _finite_needs_distance(self) -> "SourceConfig":
        if self.mode == "Finite":
            if self.zp is None or not (math.isfinite(self.zp) and self.zp > 0):
                raise ValueError("Finite source mode requires zp > 0")
            if not math.isfinite(self.x0):
                raise ValueError("x0 must be finite")
        return self


class ComplexAmplitude(BaseModel):
    """Wavefunction value, defined up to one global complex constant per evaluator."""
    model_config = ConfigDict(frozen=True)

    re: float
    im: float

    @model_validator(mode="after")
    def _finite(self) -> "ComplexAmplitude":
        if not (math.isfinite(self.re) and math.isfinite(self.im)):
            raise ValueError(f"amplitude must be finite (got {self.re} + {self.im}i)")
        return self

    @classmethod
    def from_complex(cls, value: complex) -> "ComplexAmplitude":
        return cls(re=float(value.real), im=float(value.imag))

    def __complex__(self) -> complex:
        return complex(self.re, self.im)

    @property
    def value(self) -> complex:
        return complex(self.re, self.im)


def scale_configuration(slits: SlitArray, point: ObservationPoint, s: float) -> Tuple[SlitArray, ObservationPoint]:
    """Edges and x2 scale by s, zpp by s^2; the reduced coordinates do not move."""
    if not (math.isfinite(s) and s > 0):
        raise ValueError(f"scale factor must be positive and finite (got {s})")
    scaled = SlitArray(edges=tuple(e * s for e in slits.edges))
    return scaled, ObservationPoint(x2=point.x2 * s, zpp=point.zpp * s * s)


def edge_offsets(slits: SlitArray, x2: ArrayLike) -> np.ndarray:
    """e_i - x2 with edges along axis 0 and the broadcast shape of x2 behind it."""
    x2 = np.asarray(x2, dtype=float)
    return slits.as_array().reshape((-1,) + (1,) * x2.ndim) - x2


def reduced_q(slits: SlitArray, x2: ArrayLike, zpp: ArrayLike) -> np.ndarray:
    zpp = np.asarray(zpp, dtype=float)
    if np.any(~(zpp > 0)):
        raise ValueError("zpp must be positive")
    return np.sqrt(np.pi / zpp) * edge_offsets(slits, x2)


def reduced_u(slits: SlitArray, x2: ArrayLike, zpp: ArrayLike) -> np.ndarray:
    zpp = np.asarray(zpp, dtype=float)
    if np.any(~(zpp > 0)):
        raise ValueError("zpp must be positive")
    return np.sqrt(2.0 / zpp) * edge_offsets(slits, x2)


def reduced_coordinates(slits: SlitArray, point: ObservationPoint) -> List[Tuple[float, float]]:
    """(q_i, u_i) per edge with q = sqrt(pi/z'')(e - x2) and u = sqrt(2/z'')(e - x2)."""
    if not point.zpp > 0:
        raise ValueError("zpp must be positive")
    q = reduced_q(slits, point.x2, point.zpp)
    u = reduced_u(slits, point.x2, point.zpp)
    return [(float(qi), float(ui)) for qi, ui in zip(q, u)]


def constant_q_path(edge: float, q: float, zpp: ArrayLike) -> np.ndarray:
    """
    Locus x2(z'') on which the edge keeps reduced coordinate q. These
    parabola-like curves are where single-slit quasi-nulls originate.
    """
    zpp = np.asarray(zpp, dtype=float)
    if np.any(~(zpp > 0)):
        raise ValueError("zpp must be positive")
    return edge - q * np.sqrt(zpp / np.pi)
