"""Points, box domains, metrics and deterministic sampling."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from . import kernels
from .errors import ConfigurationError, DimensionError

Point = tuple  # tuple[float, ...]

EQ_TOL = 1e-9

METRIC_KINDS = ("euclidean", "absolute", "discrete")


def as_point(value) -> Point:
    """Coerce a scalar or sequence into a tuple of finite floats."""
    if np.ndim(value) == 0:
        coords = (float(value),)
    else:
        coords = tuple(float(c) for c in np.asarray(value, dtype=float).ravel())
    if not coords:
        raise ConfigurationError("a point needs at least one coordinate")
    if not all(math.isfinite(c) for c in coords):
        raise ConfigurationError(f"point has non-finite coordinates: {coords}")
    return coords


@dataclass(frozen=True)
class Domain:
    """Closed box ``[lo_1, hi_1] x ... x [lo_d, hi_d]``."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo, hi = as_point(self.lo), as_point(self.hi)
        if len(lo) != len(hi):
            raise DimensionError(len(lo), len(hi), "domain bounds")
        if any(a > b for a, b in zip(lo, hi)):
            raise ConfigurationError(f"empty domain: lo={lo} exceeds hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def interval(cls, lo: float, hi: float) -> "Domain":
        return cls((lo,), (hi,))

    @property
    def dimension(self) -> int:
        return len(self.lo)

    @property
    def diameter(self) -> float:
        return math.dist(self.lo, self.hi)

    def contains(self, p: Sequence[float], tol: float = 0.0) -> bool:
        if len(p) != self.dimension:
            raise DimensionError(len(p), self.dimension, "point and domain")
        return all(a - tol <= c <= b + tol for c, a, b in zip(p, self.lo, self.hi))

    def contains_many(self, pts: np.ndarray, tol: float = 0.0) -> np.ndarray:
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((pts >= lo - tol) & (pts <= hi + tol), axis=1)

    def clamp_many(self, pts: np.ndarray) -> np.ndarray:
        return np.clip(pts, np.asarray(self.lo), np.asarray(self.hi))

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi)}


@dataclass(frozen=True)
class Metric:
    kind: str = "euclidean"

    def __post_init__(self):
        if self.kind not in METRIC_KINDS:
            raise ConfigurationError(
                f"unknown metric kind {self.kind!r}; expected one of {METRIC_KINDS}"
            )

    @property
    def code(self) -> int:
        """Integer tag understood by the compiled kernels."""
        return kernels.METRIC_DISCRETE if self.kind == "discrete" else kernels.METRIC_EUCLIDEAN

    def __call__(self, p, q) -> float:
        return distance(self, p, q)

    def pairwise(self, P: np.ndarray, Q: np.ndarray) -> np.ndarray:
        """Distance matrix between the rows of ``P`` (n, d) and ``Q`` (m, d)."""
        return self.rowwise(P[:, None, :], Q[None, :, :])

    def rowwise(self, P: np.ndarray, Q: np.ndarray) -> np.ndarray:
        """Distances between broadcast-compatible point arrays (last axis = coords)."""
        diff = np.asarray(P, dtype=float) - np.asarray(Q, dtype=float)
        if self.kind == "discrete":
            return np.any(diff != 0.0, axis=-1).astype(float)
        if diff.shape[-1] == 1:
            return np.abs(diff[..., 0])
        return np.sqrt(np.sum(diff * diff, axis=-1))


def distance(m: Metric, p, q) -> float:
    p, q = as_point(p), as_point(q)
    if len(p) != len(q):
        raise DimensionError(len(p), len(q))
    if m.kind == "discrete":
        return 0.0 if p == q else 1.0
    if len(p) == 1:
        return abs(p[0] - q[0])
    return math.dist(p, q)


# -- sampling ---------------------------------------------------------------


@dataclass(frozen=True)
class Grid:
    """``n`` evenly spaced values per axis, endpoints included."""

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ConfigurationError(f"grid needs n >= 2 points per axis, got {self.n}")

    def to_dict(self) -> dict:
        return {"grid": self.n}


@dataclass(frozen=True)
class Uniform:
    count: int
    seed: int

    def __post_init__(self):
        if int(self.count) != self.count or self.count < 1:
            raise ConfigurationError(f"uniform sampling needs count >= 1, got {self.count}")
        if self.seed is None:
            raise ConfigurationError("uniform sampling requires an explicit seed")

    def to_dict(self) -> dict:
        return {"uniform": self.count, "seed": self.seed}


Generator = Union[Grid, Uniform]


def generator_from_dict(spec: dict) -> Generator:
    if "grid" in spec:
        return Grid(int(spec["grid"]))
    if "uniform" in spec:
        if "seed" not in spec:
            raise ConfigurationError("uniform sampling requires an explicit seed")
        return Uniform(int(spec["uniform"]), int(spec["seed"]))
    raise ConfigurationError(f"unrecognised sampling spec: {spec!r}")


@dataclass(frozen=True)
class SampleSet:
    domain: Domain
    generator: Generator
    array: np.ndarray = field(repr=False, compare=False)

    @property
    def points(self) -> list:
        return [tuple(float(c) for c in row) for row in self.array]

    def __len__(self) -> int:
        return self.array.shape[0]

    def __iter__(self):
        return iter(self.points)


def axis_values(lo: float, hi: float, n: int) -> np.ndarray:
    if lo == hi:
        return np.array([lo])
    vals = np.linspace(lo, hi, n)
    vals[0], vals[-1] = lo, hi
    return vals


def sample(d: Domain, gen: Generator) -> SampleSet:
    if isinstance(gen, Grid):
        axes = [axis_values(a, b, gen.n) for a, b in zip(d.lo, d.hi)]
        pts = np.array(list(itertools.product(*axes)), dtype=float)
    elif isinstance(gen, Uniform):
        rng = np.random.default_rng(gen.seed)
        pts = rng.uniform(np.asarray(d.lo), np.asarray(d.hi), size=(gen.count, d.dimension))
        pts = d.clamp_many(pts)
    else:
        raise ConfigurationError(f"unknown generator {gen!r}")
    pts.setflags(write=False)
    return SampleSet(d, gen, pts)


# -- metric audit -----------------------------------------------------------


@dataclass
class MetricAudit:
    identity: float
    symmetry: float
    triangle: float
    witnesses: dict
    tol: float

    @property
    def passed(self) -> bool:
        return max(self.identity, self.symmetry, self.triangle) <= self.tol

    def to_dict(self) -> dict:
        return {
            "identity": self.identity,
            "symmetry": self.symmetry,
            "triangle": self.triangle,
            "witnesses": self.witnesses,
            "tol": self.tol,
            "passed": self.passed,
        }


def audit_metric(
    m: Union[Metric, Callable], s: SampleSet, tol: float = 1e-12
) -> MetricAudit:
    """Worst violations of d(p,p)=0, symmetry and the triangle inequality.

    ``m`` may also be a plain callable ``d(p, q)`` so that candidate
    distance functions can be audited before being trusted.
    """
    pts = s.array
    n = pts.shape[0]
    if n < 3:
        raise ConfigurationError("metric audit needs at least 3 sample points")
    if isinstance(m, Metric):
        D = m.pairwise(pts, pts)
    else:
        rows = [tuple(r) for r in pts]
        D = np.array([[float(m(p, q)) for q in rows] for p in rows])

    diag = np.abs(np.diag(D))
    i_id = int(np.argmax(diag))
    asym = np.abs(D - D.T)
    i_sym, j_sym = np.unravel_index(int(np.argmax(asym)), asym.shape)
    tri, i, j, k = kernels.triangle_worst(np.ascontiguousarray(D))
    witnesses = {
        "identity": [list(pts[i_id])],
        "symmetry": [list(pts[i_sym]), list(pts[j_sym])],
        "triangle": [list(pts[i]), list(pts[j]), list(pts[k])],
    }
    return MetricAudit(float(diag[i_id]), float(asym[i_sym, j_sym]), float(tri), witnesses, tol)
