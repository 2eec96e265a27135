"""Piecewise-defined self-maps of a box domain and their preimages."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, CoverageError, ParseError, SelfMapError
from .expr import Expr, Var, _Parser, affine_coeffs, evaluate, parse, unparse, variables
from .metric import EQ_TOL, Domain, Grid, Metric, as_point, sample

_FLIP = {"<": ">", "<=": ">=", ">": "<", ">=": "<="}
_ALWAYS = ("otherwise", "true", "else")


def coordinate_index(name: str) -> int:
    return 0 if name == "x" else int(name.split("_", 1)[1]) - 1


def coordinate_names(dimension: int) -> frozenset:
    names = {f"x_{i + 1}" for i in range(dimension)}
    if dimension == 1:
        names.add("x")
    return frozenset(names)


# -- guards -----------------------------------------------------------------


@dataclass(frozen=True)
class Comparison:
    """``variable <op> bound`` where ``bound`` is a constant expression."""

    variable: str
    op: str
    bound: Expr

    @property
    def index(self) -> int:
        return coordinate_index(self.variable)

    @cached_property
    def value(self) -> float:
        return float(evaluate(self.bound, {}))

    def mask(self, coords: np.ndarray) -> np.ndarray:
        c, v = coords, self.value
        if self.op == "<":
            return c < v
        if self.op == "<=":
            return c <= v
        if self.op == ">":
            return c > v
        return c >= v

    def __str__(self) -> str:
        return f"{self.variable} {self.op} {unparse(self.bound)}"


@dataclass(frozen=True)
class Guard:
    """Conjunction of comparisons; the empty conjunction always matches."""

    clauses: tuple = ()

    def mask(self, P: np.ndarray) -> np.ndarray:
        out = np.ones(P.shape[0], dtype=bool)
        for c in self.clauses:
            out &= c.mask(P[:, c.index])
        return out

    def __str__(self) -> str:
        if not self.clauses:
            return "otherwise"
        return " and ".join(str(c) for c in self.clauses)


def parse_guard(text: str, names: Optional[frozenset] = None) -> Guard:
    """Parse ``"3/8 <= x < 1/2 and x_2 > 0"`` style guards."""
    if text.strip().lower() in _ALWAYS:
        return Guard()
    p = _Parser(text, names)
    clauses = []
    while True:
        terms = [p.sum()]
        ops = []
        while p.at_op("<", "<=", ">", ">="):
            ops.append(p.advance().text)
            terms.append(p.sum())
        if not ops:
            raise p.error("expected a comparison")
        for (left, right), op in zip(zip(terms, terms[1:]), ops):
            clauses.append(_normalise(left, op, right, text))
        if p.tok.kind == "name" and p.tok.text == "and":
            p.advance()
            continue
        p.finish()
        return Guard(tuple(clauses))


def _normalise(left: Expr, op: str, right: Expr, text: str) -> Comparison:
    if isinstance(left, Var) and not variables(right):
        return Comparison(left.name, op, right)
    if isinstance(right, Var) and not variables(left):
        return Comparison(right.name, _FLIP[op], left)
    raise ParseError("each comparison needs a bare coordinate on one side and a constant on the other", text, 0)


# -- 1-D interval algebra ---------------------------------------------------


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    lo_closed: bool = True
    hi_closed: bool = True

    @property
    def empty(self) -> bool:
        return self.lo > self.hi or (self.lo == self.hi and not (self.lo_closed and self.hi_closed))

    def contains(self, x: float) -> bool:
        above = x > self.lo or (x == self.lo and self.lo_closed)
        below = x < self.hi or (x == self.hi and self.hi_closed)
        return above and below

    def intersect(self, o: "Interval") -> "Interval":
        if self.lo != o.lo:
            lo, lc = (self.lo, self.lo_closed) if self.lo > o.lo else (o.lo, o.lo_closed)
        else:
            lo, lc = self.lo, self.lo_closed and o.lo_closed
        if self.hi != o.hi:
            hi, hc = (self.hi, self.hi_closed) if self.hi < o.hi else (o.hi, o.hi_closed)
        else:
            hi, hc = self.hi, self.hi_closed and o.hi_closed
        return Interval(lo, hi, lc, hc)

    def minus(self, o: "Interval") -> list:
        if self.intersect(o).empty:
            return [self]
        below = self.intersect(Interval(-math.inf, o.lo, True, not o.lo_closed))
        above = self.intersect(Interval(o.hi, math.inf, not o.hi_closed, True))
        return [piece for piece in (below, above) if not piece.empty]

    def smallest(self) -> float:
        return self.lo if self.lo_closed else float(np.nextafter(self.lo, math.inf))

    def largest(self) -> float:
        return self.hi if self.hi_closed else float(np.nextafter(self.hi, -math.inf))

    def closest(self, x: float) -> float:
        if self.contains(x):
            return x
        return self.smallest() if x <= self.lo else self.largest()


def guard_interval(g: Guard) -> Interval:
    out = Interval(-math.inf, math.inf)
    for c in g.clauses:
        v = c.value
        if c.op == "<":
            piece = Interval(-math.inf, v, True, False)
        elif c.op == "<=":
            piece = Interval(-math.inf, v)
        elif c.op == ">":
            piece = Interval(v, math.inf, False, True)
        else:
            piece = Interval(v, math.inf)
        out = out.intersect(piece)
    return out


# -- maps -------------------------------------------------------------------


@dataclass(frozen=True)
class Branch:
    guard: Guard
    exprs: tuple


@dataclass(frozen=True)
class PiecewiseMap:
    """Ordered guarded branches; the first matching guard wins."""

    domain: Domain
    branches: tuple
    eq_tol: float = EQ_TOL

    def __post_init__(self):
        if not self.branches:
            raise ConfigurationError("a piecewise map needs at least one branch")
        d = self.domain.dimension
        names = coordinate_names(d)
        for br in self.branches:
            if len(br.exprs) != d:
                raise ConfigurationError(
                    f"branch for guard {br.guard} has {len(br.exprs)} components, domain has {d}"
                )
            used = set().union(*(variables(e) for e in br.exprs))
            used |= {c.variable for c in br.guard.clauses}
            unknown = used - names
            if unknown:
                raise ConfigurationError(f"unknown coordinate(s) {sorted(unknown)} for a {d}-d domain")

    # construction

    @classmethod
    def identity(cls, domain: Domain, eq_tol: float = EQ_TOL) -> "PiecewiseMap":
        d = domain.dimension
        exprs = (Var("x"),) if d == 1 else tuple(Var(f"x_{i + 1}") for i in range(d))
        return cls(domain, (Branch(Guard(), exprs),), eq_tol)

    @classmethod
    def from_spec(cls, spec, domain: Domain, eq_tol: float = EQ_TOL) -> "PiecewiseMap":
        """Build from the scenario-file form.

        ``"identity"``, a single expression string, a list of component
        strings, or a list of ``{"if": guard, "then": expr-or-list}``.
        """
        if isinstance(spec, str) and spec.strip() == "identity":
            return cls.identity(domain, eq_tol)
        names = coordinate_names(domain.dimension)
        if isinstance(spec, str) or (isinstance(spec, list) and spec and all(isinstance(s, str) for s in spec)):
            return cls(domain, (Branch(Guard(), _components(spec, names)),), eq_tol)
        if not isinstance(spec, list) or not spec:
            raise ConfigurationError(f"unrecognised map spec: {spec!r}")
        branches = []
        for item in spec:
            if not isinstance(item, dict) or "then" not in item:
                raise ConfigurationError(f"branch must be an object with 'if'/'then': {item!r}")
            guard = parse_guard(str(item.get("if", "otherwise")), names)
            branches.append(Branch(guard, _components(item["then"], names)))
        return cls(domain, tuple(branches), eq_tol)

    def to_spec(self):
        if self.is_identity:
            return "identity"

        def comps(exprs):
            return unparse(exprs[0]) if len(exprs) == 1 else [unparse(e) for e in exprs]

        if len(self.branches) == 1 and not self.branches[0].guard.clauses:
            return comps(self.branches[0].exprs)
        return [{"if": str(b.guard), "then": comps(b.exprs)} for b in self.branches]

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    @property
    def is_identity(self) -> bool:
        if len(self.branches) != 1 or self.branches[0].guard.clauses:
            return False
        return all(
            isinstance(e, Var) and coordinate_index(e.name) == i
            for i, e in enumerate(self.branches[0].exprs)
        )

    def expressions(self) -> list:
        out = []
        for br in self.branches:
            out.extend(br.exprs)
            out.extend(c.bound for c in br.guard.clauses)
        return out

    # evaluation

    def _env(self, P: np.ndarray) -> dict:
        env = {f"x_{i + 1}": P[:, i] for i in range(P.shape[1])}
        if P.shape[1] == 1:
            env["x"] = P[:, 0]
        return env

    def evaluate_many(self, P, strict: bool = True) -> np.ndarray:
        """Images of the rows of ``P``.

        Non-strict evaluation turns coverage gaps, division by zero and
        self-map violations into NaN rows instead of raising.
        """
        P = np.asarray(P, dtype=float).reshape(-1, self.dimension)
        n, d = P.shape
        out = np.full((n, d), np.nan)
        assigned = np.zeros(n, dtype=bool)
        env = self._env(P)
        for br in self.branches:
            mask = ~assigned & br.guard.mask(P)
            if not mask.any():
                continue
            sub = {k: v[mask] for k, v in env.items()}
            for c, e in enumerate(br.exprs):
                out[mask, c] = evaluate(e, sub, strict)
            assigned |= mask
        if strict and not assigned.all():
            bad = P[int(np.argmin(assigned))]
            raise CoverageError(f"no branch matches point {tuple(bad.tolist())}")
        inside = self.domain.contains_many(out, self.eq_tol)
        if strict and not inside.all():
            k = int(np.argmin(inside))
            raise SelfMapError(
                f"image {tuple(out[k].tolist())} of {tuple(P[k].tolist())} lies outside the domain"
            )
        out = self.domain.clamp_many(out)
        out[~inside] = np.nan
        return out

    def evaluate(self, p) -> tuple:
        p = as_point(p)
        if not self.domain.contains(p, self.eq_tol):
            raise SelfMapError(f"point {p} is outside the domain")
        return tuple(float(v) for v in self.evaluate_many(np.array([p]))[0])

    __call__ = evaluate

    def uncovered(self, P: np.ndarray) -> np.ndarray:
        P = np.asarray(P, dtype=float).reshape(-1, self.dimension)
        covered = np.zeros(P.shape[0], dtype=bool)
        for br in self.branches:
            covered |= br.guard.mask(P)
        return ~covered

    # 1-D structure used by the analytic preimage path

    @cached_property
    def _affine(self) -> list:
        names = coordinate_names(1)
        return [affine_coeffs(br.exprs[0], names) for br in self.branches]

    @cached_property
    def _regions(self) -> list:
        dom = Interval(self.domain.lo[0], self.domain.hi[0])
        claimed = []
        regions = []
        for br in self.branches:
            pieces = [dom.intersect(guard_interval(br.guard))]
            for g in claimed:
                pieces = [q for piece in pieces for q in piece.minus(g)]
            regions.append([q for q in pieces if not q.empty])
            claimed.append(guard_interval(br.guard))
        return regions


def _components(spec, names) -> tuple:
    if isinstance(spec, str):
        return (parse(spec, names),)
    return tuple(parse(s, names) for s in spec)


# -- preimages --------------------------------------------------------------


def ternary_min(f, a: np.ndarray, b: np.ndarray, iters: int = 120):
    """Vectorised ternary search for minima of ``f`` on each cell [a_k, b_k]."""
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    for _ in range(iters):
        m1 = a + (b - a) / 3.0
        m2 = b - (b - a) / 3.0
        f1, f2 = f(m1), f(m2)
        left = ~(f1 > f2)  # NaN on the right keeps the left part
        b = np.where(left, m2, b)
        a = np.where(left, a, m1)
    x = 0.5 * (a + b)
    return x, f(x)


def bisect_roots(g, a: np.ndarray, b: np.ndarray, iters: int = 80):
    """Vectorised bisection on cells where ``g`` changes sign."""
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    ga = g(a)
    for _ in range(iters):
        m = 0.5 * (a + b)
        gm = g(m)
        same = np.sign(gm) == np.sign(ga)
        a = np.where(same, m, a)
        ga = np.where(same, gm, ga)
        b = np.where(same, b, m)
    return a, b


def preimage(
    m: PiecewiseMap,
    target,
    tol: float = 1e-9,
    resolution: int = 1001,
    metric: Optional[Metric] = None,
) -> Optional[tuple]:
    """A point ``p`` with ``d(m(p), target) <= tol``, or None.

    Affine branches of 1-d maps are inverted in closed form; anything else
    falls back to a grid search with local refinement.  When several points
    qualify, the lexicographically smallest candidate is returned.
    """
    if tol <= 0:
        raise ConfigurationError("preimage tolerance must be positive")
    metric = metric or Metric()
    target = as_point(target)
    t = np.asarray(target)

    def ok(p) -> bool:
        img = m.evaluate_many(np.array([p], dtype=float), strict=False)[0]
        return bool(np.all(np.isfinite(img))) and metric.rowwise(img, t) <= tol

    candidates = []
    if m.dimension == 1:
        candidates.extend(_affine_candidates(m, target[0], tol, ok))
        if any(coeffs is None for coeffs in m._affine):
            candidates.extend(_search_1d(m, t, tol, resolution, metric))
    else:
        candidates.extend(_search_nd(m, t, tol, resolution, metric))
    candidates = [c for c in candidates if ok(c)]
    if not candidates:
        return None
    return min(candidates)


def _affine_candidates(m: PiecewiseMap, t: float, tol: float, ok) -> list:
    out = []
    for coeffs, region in zip(m._affine, m._regions):
        if coeffs is None:
            continue
        a, b = coeffs
        for piece in region:
            if a == 0.0:
                if abs(b - t) <= tol:
                    out.append((piece.smallest(),))
                continue
            x = (t - b) / a
            if piece.contains(x):
                out.append((x,))
                continue
            # exact solution lies outside this piece: take the nearest point
            # of the piece still within tolerance (closure of the image)
            lo, hi = sorted(((t - tol - b) / a, (t + tol - b) / a))
            window = piece.intersect(Interval(lo, hi))
            if window.empty:
                continue
            near = (window.closest(x),)
            out.append(near if ok(near) else (0.5 * (window.smallest() + window.largest()),))
    return out


def _search_1d(m: PiecewiseMap, t: np.ndarray, tol: float, resolution: int, metric: Metric) -> list:
    xs = sample(m.domain, Grid(max(2, resolution))).array[:, 0]

    def gap(x):
        img = m.evaluate_many(np.asarray(x)[:, None], strict=False)
        return metric.rowwise(img, t)

    def signed(x):
        return m.evaluate_many(np.asarray(x)[:, None], strict=False)[:, 0] - t[0]

    g = gap(xs)
    out = [(float(x),) for x in xs[g <= tol]]
    s = signed(xs)
    flips = np.nonzero(np.sign(s[:-1]) * np.sign(s[1:]) < 0)[0]
    if flips.size:
        a, b = bisect_roots(signed, xs[flips], xs[flips + 1])
        out.extend((float(v),) for v in np.concatenate([a, b]))
    inner = np.arange(1, len(xs) - 1)
    local = inner[(g[inner] <= g[inner - 1]) & (g[inner] <= g[inner + 1])]
    if local.size:
        spread = np.maximum(np.abs(g[local + 1] - g[local]), np.abs(g[local] - g[local - 1]))
        local = local[g[local] <= spread + tol]
    if local.size:
        x, _ = ternary_min(gap, xs[local - 1], xs[local + 1])
        out.extend((float(v),) for v in x)
    return out


def _search_nd(m: PiecewiseMap, t: np.ndarray, tol: float, resolution: int, metric: Metric) -> list:
    per_axis = max(2, min(resolution, 101))
    grid = sample(m.domain, Grid(per_axis)).array
    g = metric.rowwise(m.evaluate_many(grid, strict=False), t)
    g = np.where(np.isfinite(g), g, np.inf)
    out = [tuple(map(float, p)) for p in grid[g <= tol]]
    order = np.argsort(g, kind="stable")[:8]
    step0 = (np.asarray(m.domain.hi) - np.asarray(m.domain.lo)) / (per_axis - 1)
    for k in order:
        if not np.isfinite(g[k]):
            continue
        out.append(_compass(m, grid[k], step0, t, metric))
    return out


def _compass(m, start, step0, t, metric, max_evals: int = 4000) -> tuple:
    p = np.array(start, dtype=float)
    d = p.size
    dirs = np.vstack([np.eye(d), -np.eye(d)])

    def gap(P):
        v = metric.rowwise(m.evaluate_many(P, strict=False), t)
        return np.where(np.isfinite(v), v, np.inf)

    best = gap(p[None, :])[0]
    step = np.array(step0, dtype=float)
    evals = 0
    while evals < max_evals and np.max(step) > 1e-15 * (1.0 + np.max(np.abs(p))):
        trial = m.domain.clamp_many(p + dirs * step)
        vals = gap(trial)
        evals += len(trial)
        k = int(np.argmin(vals))
        if vals[k] < best:
            p, best = trial[k], vals[k]
        else:
            step = step / 2.0
    return tuple(float(v) for v in p)


def image_of(m: PiecewiseMap, samples: Sequence) -> np.ndarray:
    return m.evaluate_many(np.asarray(samples, dtype=float))
