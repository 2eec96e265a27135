"""Two-variable auxiliary functions (psi), control functions (phi), audits.

Four closed-form psi families are built in, plus arbitrary expressions in
``s`` and ``t``.  The audits are sample-based: a pass means no violation was
found on the given grid.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .errors import ArgumentError, ConfigurationError
from .expr import Expr, evaluate, parse, unparse
from .metric import Domain, Grid, SampleSet, sample

FAMILIES = ("power_sum", "product_power", "max_power", "scaled_power", "custom")

_CODES = {
    "power_sum": kernels.PSI_POWER_SUM,
    "product_power": kernels.PSI_PRODUCT_POWER,
    "max_power": kernels.PSI_MAX_POWER,
    "scaled_power": kernels.PSI_SCALED_POWER,
}

# (name, strictly positive?) per family, in (p, q, r, lam) order
_REQUIRED = {
    "power_sum": (("p", True), ("q", True)),
    "product_power": (("p", True), ("q", False), ("r", True)),
    "max_power": (("p", True), ("q", True)),
    "scaled_power": (("p", True), ("q", False), ("r", False), ("lam", True)),
}

CONTINUITY_THRESHOLD = 1e-6


@dataclass(frozen=True)
class AuxFunction:
    family: str
    p: Optional[float] = None
    q: Optional[float] = None
    r: Optional[float] = None
    lam: Optional[float] = None
    expr: Optional[Expr] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown psi family {self.family!r}; expected one of {FAMILIES}")
        if self.family == "custom":
            if self.expr is None:
                raise ConfigurationError("custom psi needs an expression in s and t")
            if isinstance(self.expr, str):
                object.__setattr__(self, "expr", parse(self.expr, {"s", "t"}))
            for name in ("p", "q", "r", "lam"):
                object.__setattr__(self, name, None)
            return
        if self.expr is not None:
            raise ConfigurationError(f"family {self.family} takes no expression")
        wanted = dict(_REQUIRED[self.family])
        for name in ("p", "q", "r", "lam"):
            value = getattr(self, name)
            if name not in wanted:
                object.__setattr__(self, name, None)
                continue
            if value is None:
                raise ConfigurationError(f"psi family {self.family} requires parameter {name}")
            value = float(value)
            if not np.isfinite(value):
                raise ConfigurationError(f"psi parameter {name} must be finite")
            if wanted[name] and value <= 0:
                raise ConfigurationError(f"psi family {self.family} requires {name} > 0, got {value}")
            if value < 0:
                raise ConfigurationError(f"psi family {self.family} requires {name} >= 0, got {value}")
            object.__setattr__(self, name, value)

    @classmethod
    def power_sum(cls, p, q):
        return cls("power_sum", p=p, q=q)

    @classmethod
    def product_power(cls, p, q, r):
        return cls("product_power", p=p, q=q, r=r)

    @classmethod
    def max_power(cls, p, q):
        return cls("max_power", p=p, q=q)

    @classmethod
    def scaled_power(cls, p, q, r, lam):
        return cls("scaled_power", p=p, q=q, r=r, lam=lam)

    @classmethod
    def custom(cls, text: str):
        return cls("custom", expr=parse(text, {"s", "t"}))

    @classmethod
    def from_tuple(cls, family: str, params):
        """Family from a ``(p, q, r, lam)`` tuple; unused entries are ignored."""
        keys = dict(zip(("p", "q", "r", "lam"), params))
        return cls(family, **{k: keys[k] for k, _ in _REQUIRED[family]})

    def kernel_params(self):
        if self.family == "custom":
            return None
        return (
            _CODES[self.family],
            float(self.p),
            float(self.q),
            float(self.r if self.r is not None else 0.0),
            float(self.lam if self.lam is not None else 1.0),
        )

    def vectorized(self, s, t):
        if self.family == "custom":
            s = np.asarray(s, dtype=float)
            t = np.asarray(t, dtype=float)
            out = evaluate(self.expr, {"s": s, "t": t})
            return np.broadcast_to(np.asarray(out, dtype=float), np.broadcast(s, t).shape)
        return kernels.psi_family_numpy(*self.kernel_params(), s, t)

    def __call__(self, s, t):
        return eval_psi(self, s, t)

    def to_dict(self) -> dict:
        if self.family == "custom":
            return {"family": "custom", "expr": unparse(self.expr)}
        out = {"family": self.family}
        for name, _ in _REQUIRED[self.family]:
            out[name] = getattr(self, name)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "AuxFunction":
        d = dict(d)
        family = d.pop("family", None)
        if family == "custom":
            return cls.custom(str(d["expr"]))
        unknown = set(d) - {"p", "q", "r", "lam"}
        if unknown:
            raise ConfigurationError(f"unexpected psi field(s): {sorted(unknown)}")
        return cls(family, **d)


def eval_psi(psi: AuxFunction, s, t):
    """psi(s, t) for scalar or array arguments; negative inputs are rejected."""
    if np.any(np.asarray(s) < 0) or np.any(np.asarray(t) < 0):
        raise ArgumentError("psi is defined on nonnegative arguments only")
    out = psi.vectorized(s, t)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class ControlFunction:
    kind: str = "linear"
    r: Optional[float] = None
    expr: Optional[Expr] = None

    def __post_init__(self):
        if self.kind == "linear":
            if self.r is None:
                raise ConfigurationError("linear phi needs a ratio r")
            r = float(self.r)
            if not 0.0 <= r:
                raise ConfigurationError(f"r must be >= 0, got {r}")
            if not r < 1.0:
                raise ConfigurationError(f"r must be < 1, got {r}")
            object.__setattr__(self, "r", r)
            object.__setattr__(self, "expr", None)
        elif self.kind == "custom":
            if self.expr is None:
                raise ConfigurationError("custom phi needs an expression in t")
            if isinstance(self.expr, str):
                object.__setattr__(self, "expr", parse(self.expr, {"t"}))
            object.__setattr__(self, "r", None)
        else:
            raise ConfigurationError(f"unknown phi kind {self.kind!r}")

    @classmethod
    def linear(cls, r):
        return cls("linear", r=r)

    @classmethod
    def custom(cls, text: str):
        return cls("custom", expr=parse(text, {"t"}))

    def vectorized(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "linear":
            return self.r * t
        out = evaluate(self.expr, {"t": t})
        return np.broadcast_to(np.asarray(out, dtype=float), t.shape)

    def __call__(self, t):
        return eval_phi(self, t)

    def to_dict(self) -> dict:
        if self.kind == "linear":
            return {"kind": "linear", "r": self.r}
        return {"kind": "custom", "expr": unparse(self.expr)}

    @classmethod
    def from_dict(cls, d: dict) -> "ControlFunction":
        kind = d.get("kind", "linear")
        if kind == "custom":
            return cls.custom(str(d["expr"]))
        return cls.linear(d.get("r"))


def eval_phi(phi: ControlFunction, t):
    if np.any(np.asarray(t) < 0):
        raise ArgumentError("phi is defined on nonnegative arguments only")
    out = phi.vectorized(t)
    return float(out) if np.ndim(out) == 0 else out


# -- audits -----------------------------------------------------------------


@dataclass
class Check:
    name: str
    passed: bool
    worst: float
    witness: Optional[list] = None

    def __post_init__(self):
        self.passed = bool(self.passed)
        self.worst = float(self.worst)
        if self.witness is not None:
            self.witness = [float(v) for v in np.ravel(self.witness)]

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "worst": self.worst, "witness": self.witness}


@dataclass
class AuditReport:
    subject: dict
    checks: list = field(default_factory=list)

    @property
    def overall(self) -> bool:
        return all(c.passed for c in self.checks)

    passed = overall

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "subject": self.subject,
            "checks": [c.to_dict() for c in self.checks],
            "overall": self.overall,
        }


def square_grid(t_max: float = 1.0, n: int = 50) -> SampleSet:
    return sample(Domain((0.0, 0.0), (t_max, t_max)), Grid(n))


def positive_grid(t_max: float = 1.0, n: int = 100) -> SampleSet:
    """``n`` points in (0, t_max], excluding zero."""
    return sample(Domain.interval(t_max / n, t_max), Grid(n))


def _halvings(h0: float = 0.1, floor: float = 1e-6) -> np.ndarray:
    hs = [h0]
    while hs[-1] > floor:
        hs.append(hs[-1] / 2.0)
    return np.array(hs)


def _extrapolated_limit(changes: np.ndarray) -> np.ndarray:
    """Aitken estimate of lim c_k from the last three terms (axis 0 = k)."""
    c0, c1, c2 = changes[-3], changes[-2], changes[-1]
    denom = c2 - 2.0 * c1 + c0
    with np.errstate(divide="ignore", invalid="ignore"):
        lim = c2 - (c2 - c1) ** 2 / denom
    flat = np.abs(denom) <= 1e-300
    return np.abs(np.where(flat, c2, lim))


def continuity_statistic(base: np.ndarray, shift) -> np.ndarray:
    """Scaled size of the jump of a function at each base point.

    ``base`` holds the function values at the base points.

    ``shift(h)`` returns the perturbed arguments for increment ``h`` (or
    None where the increment leaves the domain).  For every base point the
    increments |f(shift(h)) - f(base)| are taken along a halving sequence of
    h from 0.1 to 1e-6; the statistic is the smaller of the final increment
    and an Aitken extrapolation of the increments to h -> 0, divided by
    1 + |f(base)|.  Continuous functions give values near zero, jumps give
    the jump size.
    """
    hs = _halvings()
    changes = []
    valid = np.ones(base.shape, dtype=bool)
    for h in hs:
        value, ok = shift(h)
        changes.append(np.abs(value - base))
        valid &= ok
    changes = np.array(changes)
    stat = np.minimum(changes[-1], _extrapolated_limit(changes)) / (1.0 + np.abs(base))
    return np.where(valid, stat, 0.0)


def _worst_monotone(table: np.ndarray, axis: int):
    drop = np.maximum.accumulate(table, axis=axis) - table
    k = int(np.argmax(drop))
    return float(drop.flat[k]), np.unravel_index(k, table.shape)


def audit_condition_A(psi: AuxFunction, grid: SampleSet, tol: float = 1e-12) -> AuditReport:
    """Sample-based check that ``psi`` is a valid two-variable auxiliary function.

    Monotonicity and continuity are tested in each argument on the tensor
    grid spanned by the sample's distinct coordinate values; definiteness is
    tested on the positive axis values, and a zero of psi must force its
    first argument to zero.
    """
    pts = grid.array
    if pts.shape[1] != 2 or len(pts) == 0:
        raise ConfigurationError("condition audit needs a nonempty 2-d sample over [0, T]^2")
    S = np.unique(pts[:, 0])
    Tv = np.unique(pts[:, 1])
    SS, TT = np.meshgrid(S, Tv, indexing="ij")
    V = psi.vectorized(SS, TT)
    report = AuditReport(psi.to_dict())

    k = int(np.argmin(V))
    i, j = np.unravel_index(k, V.shape)
    report.checks.append(Check("nonnegative", bool(V.flat[k] >= -tol), float(V.flat[k]), [S[i], Tv[j]]))

    for axis, name in ((0, "monotone_first"), (1, "monotone_second")):
        worst, (i, j) = _worst_monotone(V, axis)
        report.checks.append(Check(name, worst <= tol, worst, [S[i], Tv[j]]))

    for axis, name in ((0, "continuous_first"), (1, "continuous_second")):
        stats = []
        for sign in (1.0, -1.0):
            def shift(h, sign=sign, axis=axis):
                if axis == 0:
                    moved = SS + sign * h
                    return psi.vectorized(np.maximum(moved, 0.0), TT), moved >= 0
                moved = TT + sign * h
                return psi.vectorized(SS, np.maximum(moved, 0.0)), moved >= 0
            stats.append(continuity_statistic(V, shift))
        stat = np.maximum(*stats)
        k = int(np.argmax(stat))
        i, j = np.unravel_index(k, stat.shape)
        report.checks.append(
            Check(name, bool(stat.flat[k] < CONTINUITY_THRESHOLD), float(stat.flat[k]), [S[i], Tv[j]])
        )

    origin = float(psi.vectorized(0.0, 0.0))
    report.checks.append(Check("vanishes_at_origin", abs(origin) <= tol, origin, [0.0, 0.0]))

    axis_vals = np.unique(np.concatenate([S, Tv]))
    axis_vals = axis_vals[axis_vals > 0]
    if axis_vals.size:
        on_axis = psi.vectorized(axis_vals, np.zeros_like(axis_vals))
        k = int(np.argmin(on_axis))
        report.checks.append(
            Check("positive_on_axis", bool(on_axis[k] > tol), float(on_axis[k]), [axis_vals[k], 0.0])
        )

    # a zero of psi forces the first argument to vanish
    offending = (V <= tol) & (SS > tol)
    if offending.any():
        k = int(np.argmax(offending))
        i, j = np.unravel_index(k, V.shape)
        report.checks.append(Check("zero_forces_first_zero", False, float(S[i]), [S[i], Tv[j]]))
    else:
        report.checks.append(Check("zero_forces_first_zero", True, 0.0, None))
    return report


def _phi_checks(phi: ControlFunction, t: np.ndarray, report: AuditReport):
    v = phi.vectorized(t)
    worst, (k,) = _worst_monotone(v, 0)
    report.checks.append(Check("monotone", worst <= 0.0, worst, [t[k]]))
    stats = []
    for sign in (1.0, -1.0):
        def shift(h, sign=sign):
            moved = t + sign * h
            return phi.vectorized(np.maximum(moved, 0.0)), moved >= 0
        stats.append(continuity_statistic(v, shift))
    stat = np.maximum(*stats)
    k = int(np.argmax(stat))
    report.checks.append(Check("continuous", bool(stat[k] < CONTINUITY_THRESHOLD), float(stat[k]), [t[k]]))
    return v


def audit_phi(phi: ControlFunction, grid: SampleSet, tol: float = 1e-12) -> AuditReport:
    """Check membership in the control class: monotone, continuous, 0 < phi(t) < t."""
    t = np.sort(grid.array[:, 0])
    if grid.array.shape[1] != 1:
        raise ConfigurationError("phi audit needs a 1-d sample")
    if np.any(t <= 0):
        raise ConfigurationError("phi audit grid must be strictly positive")
    report = AuditReport(phi.to_dict())
    v = _phi_checks(phi, t, report)
    k = int(np.argmin(v))
    report.checks.append(Check("positive", bool(v[k] > 0.0), float(v[k]), [t[k]]))
    gap = v - t
    k = int(np.argmax(gap))
    report.checks.append(Check("below_identity", bool(gap[k] < 0.0), float(gap[k]), [t[k]]))
    at_zero = float(phi.vectorized(0.0))
    report.checks.append(Check("vanishes_at_zero", abs(at_zero) <= tol, at_zero, [0.0]))
    return report


def audit_altering_distance(phi: ControlFunction, grid: SampleSet, tol: float = 1e-12) -> AuditReport:
    """Altering-distance test: continuous, monotone, zero exactly at zero."""
    t = np.sort(grid.array[:, 0])
    report = AuditReport(phi.to_dict())
    _phi_checks(phi, t, report)
    at_zero = float(phi.vectorized(0.0))
    report.checks.append(Check("vanishes_at_zero", abs(at_zero) <= tol, at_zero, [0.0]))
    pos = t[t > 0]
    if pos.size:
        v = phi.vectorized(pos)
        k = int(np.argmin(v))
        report.checks.append(Check("positive", bool(v[k] > tol), float(v[k]), [pos[k]]))
    return report
