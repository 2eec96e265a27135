"""Contractive conditions for quadruples of self-maps, checked on samples.

All max-type forms share one shape::

    psi(d(Sx,Ty), d(Sx,Ty)) <= phi(M(x, y))

where ``M`` is the six-term majorant (see :func:`majorant`).  The summed
single-map form compares two sums of psi-terms instead.  Verification is
sample-based, so a pass only means that no violation was found at the
sampled density.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import kernels
from .auxiliary import AuxFunction, ControlFunction, eval_phi, eval_psi
from .errors import ConfigurationError
from .maps import PiecewiseMap, preimage
from .metric import Metric, SampleSet, as_point, distance

COND_TOL = 1e-9
MAX_WITNESSES = 100

PHI_MAX = "phi_max"
LINEAR = "linear"
SINGLE_PAIR = "single_pair"
POWER_FAMILY = "power_family"
CHOUDHURY_SUM = "choudhury_sum"
FORM_TAGS = (PHI_MAX, LINEAR, SINGLE_PAIR, POWER_FAMILY, CHOUDHURY_SUM)


@dataclass(frozen=True)
class MapQuadruple:
    A: PiecewiseMap
    B: PiecewiseMap
    S: PiecewiseMap
    T: PiecewiseMap
    metric: Metric = Metric()

    def __post_init__(self):
        domains = {m.domain for m in (self.A, self.B, self.S, self.T)}
        if len(domains) != 1:
            raise ConfigurationError("A, B, S and T must share one domain")

    @classmethod
    def pair(cls, A: PiecewiseMap, T: PiecewiseMap, metric: Metric = Metric()) -> "MapQuadruple":
        """The quadruple (A, A, T, T) used when only one pair of maps is given."""
        return cls(A, A, T, T, metric)

    @property
    def domain(self):
        return self.A.domain

    def __getitem__(self, name: str) -> PiecewiseMap:
        if name not in ("A", "B", "S", "T"):
            raise KeyError(name)
        return getattr(self, name)


@dataclass(frozen=True)
class ConditionForm:
    tag: str
    psi: AuxFunction
    phi: Optional[ControlFunction] = None
    r: Optional[float] = None
    s: Optional[float] = None

    def __post_init__(self):
        if self.tag not in FORM_TAGS:
            raise ConfigurationError(f"unknown condition form {self.tag!r}; expected one of {FORM_TAGS}")
        if self.tag == LINEAR:
            if self.r is None:
                raise ConfigurationError("linear form needs r in [0, 1)")
            object.__setattr__(self, "phi", ControlFunction.linear(self.r))
            object.__setattr__(self, "r", self.phi.r)
        elif self.tag == CHOUDHURY_SUM:
            if self.r is None or self.s is None:
                raise ConfigurationError("summed form needs r and s")
            r, s = float(self.r), float(self.s)
            if not 0.0 < r < 1.0:
                raise ConfigurationError(f"summed form requires 0 < r < 1, got {r}")
            if not 0.0 < s <= 1.0:
                raise ConfigurationError(f"summed form requires 0 < s <= 1, got {s}")
            object.__setattr__(self, "r", r)
            object.__setattr__(self, "s", s)
            object.__setattr__(self, "phi", None)
        else:
            if self.phi is None:
                raise ConfigurationError(f"form {self.tag} needs a control function phi")
            if self.tag == POWER_FAMILY and self.psi.family != "scaled_power":
                raise ConfigurationError("power_family form fixes psi to the scaled_power family")

    @classmethod
    def phi_max(cls, psi, phi):
        return cls(PHI_MAX, psi, phi)

    @classmethod
    def linear(cls, psi, r):
        return cls(LINEAR, psi, r=r)

    @classmethod
    def single_pair(cls, psi, phi):
        return cls(SINGLE_PAIR, psi, phi)

    @classmethod
    def power_family(cls, p, q, r, lam, phi):
        return cls(POWER_FAMILY, AuxFunction.scaled_power(p, q, r, lam), phi)

    @classmethod
    def choudhury_sum(cls, psi, r, s):
        return cls(CHOUDHURY_SUM, psi, r=r, s=s)

    @property
    def is_sum(self) -> bool:
        return self.tag == CHOUDHURY_SUM

    def maps_for(self, q: MapQuadruple) -> MapQuadruple:
        """The quadruple this form actually evaluates."""
        if self.tag == SINGLE_PAIR:
            return MapQuadruple(q.A, q.A, q.T, q.T, q.metric)
        if self.tag == CHOUDHURY_SUM:
            if not (q.A.is_identity and q.B.is_identity):
                raise ConfigurationError("summed single-map form needs A = B = identity")
            if q.S != q.T:
                raise ConfigurationError("summed single-map form needs S = T")
        return q

    def params(self) -> dict:
        """Form-specific parameters, excluding the shared psi/phi."""
        if self.tag == LINEAR:
            return {"r": self.r}
        if self.tag == CHOUDHURY_SUM:
            return {"r": self.r, "s": self.s}
        if self.tag == POWER_FAMILY:
            return {k: getattr(self.psi, k) for k in ("p", "q", "r", "lam")}
        return {}

    def to_dict(self) -> dict:
        out = {"tag": self.tag, **self.params(), "psi": self.psi.to_dict()}
        if self.phi is not None:
            out["phi"] = self.phi.to_dict()
        return out


class PairCheck(NamedTuple):
    lhs: float
    rhs: float
    slack: float
    majorant: Optional[float] = None


# -- scalar reference path --------------------------------------------------


def majorant(q: MapQuadruple, psi: AuxFunction, x, y) -> float:
    """Six-term maximum on the right of the max-type condition at (x, y)."""
    d = q.metric
    Ax, Sx = q.A(x), q.S(x)
    By, Ty = q.B(y), q.T(y)
    d_axby = distance(d, Ax, By)
    d_axsx = distance(d, Ax, Sx)
    d_byty = distance(d, By, Ty)
    d_bysx = distance(d, By, Sx)
    d_axty = distance(d, Ax, Ty)
    return max(
        eval_psi(psi, d_axby, d_axsx),
        eval_psi(psi, d_axby, d_byty),
        eval_psi(psi, d_axsx, d_byty),
        eval_psi(psi, d_byty, d_axsx),
        min(eval_psi(psi, d_bysx, d_axsx), eval_psi(psi, d_axty, d_byty)),
        min(eval_psi(psi, d_bysx, d_byty), eval_psi(psi, d_axty, d_axsx)),
    )


def check_pair(form: ConditionForm, q: MapQuadruple, x, y) -> PairCheck:
    x, y = as_point(x), as_point(y)
    q = form.maps_for(q)
    psi, d = form.psi, q.metric
    if form.is_sum:
        T = q.T
        Tx, Ty = T(x), T(y)
        TTx = T(Tx)
        lhs = eval_psi(psi, distance(d, Tx, Ty), distance(d, x, Tx)) + eval_psi(
            psi, distance(d, y, Ty), distance(d, y, TTx)
        )
        rhs = form.r * eval_psi(psi, distance(d, x, y), distance(d, x, Tx)) + form.s * eval_psi(
            psi, distance(d, y, Ty), distance(d, y, Tx)
        )
        return PairCheck(lhs, rhs, rhs - lhs)
    gap = distance(d, q.S(x), q.T(y))
    lhs = eval_psi(psi, gap, gap)
    m = majorant(q, psi, x, y)
    rhs = eval_phi(form.phi, m)
    return PairCheck(lhs, rhs, rhs - lhs, m)


# -- sampled verification ---------------------------------------------------


@dataclass
class ConditionReport:
    form: dict
    pairs_checked: int
    worst_slack: float
    worst_pair: tuple
    violation_count: int
    violations: list = field(default_factory=list)
    cond_tol: float = COND_TOL

    @property
    def verdict(self) -> bool:
        return self.violation_count == 0

    def to_dict(self) -> dict:
        return {
            "form": self.form,
            "pairs_checked": self.pairs_checked,
            "worst_slack": self.worst_slack,
            "worst_pair": [list(p) for p in self.worst_pair],
            "violation_count": self.violation_count,
            "violations": self.violations,
            "cond_tol": self.cond_tol,
            "verdict": "pass" if self.verdict else "fail",
        }


def _chunks(n: int, workers: int) -> list:
    workers = max(1, min(int(workers), n))
    bounds = np.linspace(0, n, workers + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _run(fn, pieces: list, workers: int) -> list:
    if workers <= 1 or len(pieces) <= 1:
        return [fn(p) for p in pieces]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, pieces))


def pair_tables(form: ConditionForm, q: MapQuadruple, X: np.ndarray, Y: np.ndarray,
                cartesian: bool = True, workers: int = 1):
    """(lhs, rhs, majorant) arrays for all pairs (cartesian) or zipped pairs.

    ``majorant`` is None for the summed form.  Rows are split across
    ``workers`` threads and reassembled in order.
    """
    q = form.maps_for(q)
    code = q.metric.code
    n = X.shape[0]
    if form.is_sum:
        TX = q.T.evaluate_many(X)
        T2X = q.T.evaluate_many(TX)
        TY = q.T.evaluate_many(Y)

        def piece(bounds):
            a, b = bounds
            ys = slice(None) if cartesian else slice(a, b)
            return kernels.sum_form(X[a:b], TX[a:b], T2X[a:b], Y[ys], TY[ys], code,
                                    form.psi, form.r, form.s, cartesian)
    else:
        AX, SX = q.A.evaluate_many(X), q.S.evaluate_many(X)
        BY, TY = q.B.evaluate_many(Y), q.T.evaluate_many(Y)

        def piece(bounds):
            a, b = bounds
            ys = slice(None) if cartesian else slice(a, b)
            return kernels.max_form(AX[a:b], SX[a:b], BY[ys], TY[ys], code, form.psi, cartesian)

    parts = _run(piece, _chunks(n, workers), workers)
    first = np.concatenate([p[0] for p in parts])
    second = np.concatenate([p[1] for p in parts])
    if form.is_sum:
        return first, second, None
    return first, np.asarray(form.phi.vectorized(second), dtype=float), second


def _violation(x, y, lhs, rhs, maj) -> dict:
    return {
        "x": list(map(float, x)),
        "y": list(map(float, y)),
        "lhs": float(lhs),
        "majorant": None if maj is None else float(maj),
        "rhs": float(rhs),
        "slack": float(rhs - lhs),
    }


def verify(form: ConditionForm, q: MapQuadruple, samples: SampleSet,
           cond_tol: float = COND_TOL, workers: int = 1) -> ConditionReport:
    """Check the condition on every ordered pair of sample points (diagonal included)."""
    X = samples.array
    lhs, rhs, maj = pair_tables(form, q, X, X, cartesian=True, workers=workers)
    slack = rhs - lhs
    n = X.shape[0]
    k = int(np.argmin(slack))
    wi, wj = divmod(k, n)
    bad = np.flatnonzero(slack.ravel() < -cond_tol)
    witnesses = []
    for idx in bad[:MAX_WITNESSES]:
        i, j = divmod(int(idx), n)
        witnesses.append(_violation(X[i], X[j], lhs[i, j], rhs[i, j], None if maj is None else maj[i, j]))
    return ConditionReport(
        form=form.to_dict(),
        pairs_checked=int(slack.size),
        worst_slack=float(slack.flat[k]),
        worst_pair=(tuple(map(float, X[wi])), tuple(map(float, X[wj]))),
        violation_count=int(bad.size),
        violations=witnesses,
        cond_tol=cond_tol,
    )


@dataclass
class Violation:
    index: int
    x: tuple
    y: tuple
    lhs: float
    rhs: float
    slack: float
    majorant: Optional[float] = None

    def to_dict(self) -> dict:
        return {"index": self.index, **_violation(self.x, self.y, self.lhs, self.rhs, self.majorant)}


def draw_pairs(domain, budget: int, seed: int):
    if budget < 1:
        raise ConfigurationError("falsify budget must be >= 1")
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(domain.lo), np.asarray(domain.hi)
    X = domain.clamp_many(rng.uniform(lo, hi, size=(budget, domain.dimension)))
    Y = domain.clamp_many(rng.uniform(lo, hi, size=(budget, domain.dimension)))
    return X, Y


def falsify(form: ConditionForm, q: MapQuadruple, budget: int, seed: int,
            cond_tol: float = COND_TOL, workers: int = 1) -> Optional[Violation]:
    """First seeded random pair violating the condition, or None."""
    X, Y = draw_pairs(q.domain, budget, seed)
    lhs, rhs, maj = pair_tables(form, q, X, Y, cartesian=False, workers=workers)
    bad = np.flatnonzero(rhs - lhs < -cond_tol)
    if bad.size == 0:
        return None
    k = int(bad[0])
    return Violation(
        k, tuple(map(float, X[k])), tuple(map(float, Y[k])),
        float(lhs[k]), float(rhs[k]), float(rhs[k] - lhs[k]),
        None if maj is None else float(maj[k]),
    )


# -- range inclusions -------------------------------------------------------


@dataclass
class InclusionReport:
    checks: dict
    preimage_tol: float

    @property
    def passed(self) -> bool:
        return all(not c["failures"] for c in self.checks.values())

    def to_dict(self) -> dict:
        return {"checks": self.checks, "preimage_tol": self.preimage_tol, "passed": self.passed}


def check_inclusions(q: MapQuadruple, samples: SampleSet, preimage_tol: float = 1e-9,
                     resolution: int = 1001) -> InclusionReport:
    """Numerical test of T(K) inside A(K) and S(K) inside B(K).

    Each sampled image must have a preimage, within ``preimage_tol``, under
    the covering map.  Failures list the sample point and its orphan image.
    """
    X = samples.array
    checks = {}
    for source, cover in (("T", "A"), ("S", "B")):
        images = q[source].evaluate_many(X)
        cache = {}
        failures = []
        for x, img in zip(X, images):
            key = tuple(map(float, img))
            if key not in cache:
                cache[key] = preimage(q[cover], key, preimage_tol, resolution, q.metric)
            if cache[key] is None:
                failures.append({"x": list(map(float, x)), "target": list(key)})
        checks[f"{source}(K) in {cover}(K)"] = {
            "source": source,
            "cover": cover,
            "samples": int(len(X)),
            "failures": failures,
            "unreachable_targets": sorted({tuple(f["target"]) for f in failures}),
        }
    return InclusionReport(checks, preimage_tol)
