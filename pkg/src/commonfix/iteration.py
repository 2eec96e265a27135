"""Alternating Jungck iteration, its diagnostics and compatibility probes.

Starting from ``x0`` the iteration alternates::

    y_{2n}   = T x_{2n},    x_{2n+1} = any A-preimage of y_{2n}
    y_{2n+1} = S x_{2n+1},  x_{2n+2} = any B-preimage of y_{2n+1}

Preimages are chosen deterministically (lexicographically smallest), so a
given configuration always produces the same trace.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .auxiliary import AuxFunction, ControlFunction
from .contraction import MapQuadruple
from .errors import ConfigurationError
from .expr import evaluate, parse
from .maps import PiecewiseMap, preimage, ternary_min
from .metric import EQ_TOL, Metric, SampleSet, as_point, distance

STABLE_WINDOW = 3


@dataclass(frozen=True)
class IterationConfig:
    x0: tuple
    max_iter: int = 200
    conv_tol: float = 1e-10
    eq_tol: float = EQ_TOL
    preimage_tol: float = 1e-9
    resolution: int = 1001

    def __post_init__(self):
        object.__setattr__(self, "x0", as_point(self.x0))
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ConfigurationError(f"max_iter must be a positive integer, got {self.max_iter}")
        for name in ("conv_tol", "eq_tol", "preimage_tol"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if int(self.resolution) != self.resolution or self.resolution < 2:
            raise ConfigurationError("resolution must be an integer >= 2")

    def to_dict(self) -> dict:
        return {
            "x0": list(self.x0),
            "max_iter": self.max_iter,
            "conv_tol": self.conv_tol,
            "eq_tol": self.eq_tol,
            "preimage_tol": self.preimage_tol,
            "resolution": self.resolution,
        }


@dataclass(frozen=True)
class Terminal:
    kind: str  # "converged" | "max_iter_reached" | "preimage_failure"
    z: Optional[tuple] = None
    step: Optional[int] = None
    target: Optional[tuple] = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "z": None if self.z is None else list(self.z),
            "step": self.step,
            "target": None if self.target is None else list(self.target),
        }


@dataclass
class IterationTrace:
    xs: list
    ys: list
    alphas: list
    terminal: Terminal

    @property
    def converged(self) -> bool:
        return self.terminal.kind == "converged"

    @property
    def steps(self) -> list:
        """(n, x_n, y_n, alpha_n); alpha is None on the final y."""
        out = []
        for n, y in enumerate(self.ys):
            alpha = self.alphas[n] if n < len(self.alphas) else None
            out.append((n, self.xs[n], y, alpha))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "x", "y", "alpha"])
        for n, x, y, alpha in self.steps:
            w.writerow([n, _join(x), _join(y), "" if alpha is None else repr(alpha)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "terminal": self.terminal.to_dict(),
            "steps": len(self.ys),
            "alphas": list(self.alphas),
            "xs": [list(x) for x in self.xs],
            "ys": [list(y) for y in self.ys],
        }


def _join(p) -> str:
    return ";".join(repr(float(c)) for c in p)


def jungck_iterate(q: MapQuadruple, cfg: IterationConfig) -> IterationTrace:
    """Run the alternating iteration until the step sizes settle.

    Stops once ``STABLE_WINDOW`` consecutive alpha_n = d(y_n, y_{n+1}) are at
    most ``conv_tol`` (the sequence has become constant up to tolerance),
    after ``max_iter`` values of y, or when a preimage cannot be found.
    """
    if not q.domain.contains(cfg.x0, cfg.eq_tol):
        raise ConfigurationError(f"x0 = {cfg.x0} lies outside the domain")
    d = q.metric
    xs = [cfg.x0]
    ys = []
    alphas = []
    quiet = 0
    for n in range(cfg.max_iter):
        source, cover = (q.T, q.A) if n % 2 == 0 else (q.S, q.B)
        y = source(xs[n])
        if ys:
            alphas.append(distance(d, ys[-1], y))
            quiet = quiet + 1 if alphas[-1] <= cfg.conv_tol else 0
        ys.append(y)
        if quiet >= STABLE_WINDOW:
            return IterationTrace(xs, ys, alphas, Terminal("converged", z=y))
        nxt = preimage(cover, y, cfg.preimage_tol, cfg.resolution, d)
        if nxt is None:
            return IterationTrace(xs, ys, alphas, Terminal("preimage_failure", step=n, target=y))
        xs.append(nxt)
    # xs holds one point more than ys once the loop runs out
    return IterationTrace(xs[: len(ys)], ys, alphas, Terminal("max_iter_reached"))


# -- Cauchy diagnostics -----------------------------------------------------


@dataclass
class CauchyReport:
    steps_checked: int
    contraction_ok: bool
    first_contraction_failure: Optional[int]
    worst_contraction_excess: float
    monotone_ok: bool
    first_monotone_failure: Optional[int]
    terminal_ok: bool
    final_alpha: Optional[float]

    @property
    def passed(self) -> bool:
        return self.contraction_ok and self.monotone_ok and self.terminal_ok

    def to_dict(self) -> dict:
        return {**self.__dict__, "passed": self.passed}


def diagnose_cauchy(trace: IterationTrace, psi: AuxFunction, phi: ControlFunction,
                    tol: float = 1e-9, monotone_tol: float = 1e-12,
                    conv_tol: Optional[float] = None) -> CauchyReport:
    """Check psi(a_{n+1}, a_{n+1}) <= phi(psi(a_n, a_n)) and a_{n+1} <= a_n."""
    a = np.asarray(trace.alphas, dtype=float)
    if a.size < 2:
        raise ConfigurationError("Cauchy diagnostics need at least two step sizes")
    lhs = psi.vectorized(a[1:], a[1:])
    rhs = phi.vectorized(psi.vectorized(a[:-1], a[:-1]))
    excess = lhs - rhs
    bad = np.flatnonzero(excess > tol)
    rising = np.flatnonzero(a[1:] - a[:-1] > monotone_tol)
    terminal_ok = True
    if trace.converged and conv_tol is not None:
        terminal_ok = bool(a[-1] <= conv_tol)
    return CauchyReport(
        steps_checked=int(excess.size),
        contraction_ok=bad.size == 0,
        first_contraction_failure=int(bad[0]) if bad.size else None,
        worst_contraction_excess=float(np.max(excess)),
        monotone_ok=rising.size == 0,
        first_monotone_failure=int(rising[0]) if rising.size else None,
        terminal_ok=terminal_ok,
        final_alpha=float(a[-1]),
    )


# -- coincidence points -----------------------------------------------------


@dataclass(frozen=True)
class CoincidencePoint:
    point: tuple
    pair: tuple
    gap: float

    def to_dict(self) -> dict:
        return {"point": list(self.point), "pair": list(self.pair), "gap": self.gap}


@dataclass
class CoincidenceReport:
    points: list
    maps_coincide: bool = False
    truncated: bool = False
    rejected: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)

    def to_dict(self) -> dict:
        return {
            "points": [p.to_dict() for p in self.points],
            "maps_coincide": self.maps_coincide,
            "truncated": self.truncated,
            "rejected": self.rejected,
        }


MAX_COINCIDENCES = 100


def _one_sided_limits(gap, x: float, lo: float, hi: float, h0: float) -> float:
    """Largest extrapolated one-sided limit of the gap at ``x``."""
    from .auxiliary import continuity_statistic

    worst = 0.0
    base = np.array([0.0])
    for sign in (1.0, -1.0):
        def shift(h, sign=sign):
            step = h * h0 / 0.1
            moved = x + sign * step
            ok = lo <= moved <= hi
            val = gap(np.array([min(max(moved, lo), hi)])) if ok else np.array([0.0])
            return val, np.array([ok])

        worst = max(worst, float(continuity_statistic(base, shift)[0]))
    return worst


def find_coincidence_points(f: PiecewiseMap, g: PiecewiseMap, s: SampleSet,
                            eq_tol: float = EQ_TOL, pair: Sequence[str] = ("f", "g"),
                            metric: Optional[Metric] = None) -> CoincidenceReport:
    """Points where ``f`` and ``g`` agree to within ``eq_tol``.

    Scans the gap d(f x, g x) on the sample, refines each cell around a local
    minimum by ternary search and keeps refined points whose gap is below
    ``eq_tol``.  A refined point must also have vanishing one-sided limits of
    the gap, which rejects the edges of jump discontinuities where the gap
    only tends to zero from one side.
    """
    if f.domain != g.domain:
        raise ConfigurationError("coincidence search needs maps on the same domain")
    metric = metric or Metric()
    pair = tuple(pair)
    X = s.array

    def gap(P):
        P = np.asarray(P, dtype=float).reshape(-1, f.dimension)
        v = metric.rowwise(f.evaluate_many(P, strict=False), g.evaluate_many(P, strict=False))
        return np.where(np.isfinite(v), v, np.inf)

    G = gap(X)
    if np.all(G <= eq_tol):
        pts = [CoincidencePoint(tuple(map(float, x)), pair, float(v)) for x, v in zip(X, G)]
        return CoincidenceReport(pts[:MAX_COINCIDENCES], True, len(pts) > MAX_COINCIDENCES)

    found = [(tuple(map(float, x)), float(v)) for x, v in zip(X, G) if v <= eq_tol]
    rejected = []
    if f.dimension == 1:
        order = np.argsort(X[:, 0], kind="stable")
        xs, gs = X[order, 0], G[order]
        inner = np.arange(1, len(xs) - 1)
        local = inner[(gs[inner] <= gs[inner - 1]) & (gs[inner] <= gs[inner + 1]) & (gs[inner] > eq_tol)]
        spread = np.maximum(np.abs(gs[local + 1] - gs[local]), np.abs(gs[local] - gs[local - 1]))
        local = local[gs[local] <= spread + eq_tol]
        if local.size:
            scalar_gap = lambda v: gap(np.asarray(v)[:, None])
            xr, gr = ternary_min(scalar_gap, xs[local - 1], xs[local + 1])
            lo, hi = f.domain.lo[0], f.domain.hi[0]
            for k, (xv, gv) in enumerate(zip(xr, gr)):
                if gv > eq_tol:
                    continue
                h0 = max(xs[local[k] + 1] - xs[local[k]], 1e-9)
                jump = _one_sided_limits(scalar_gap, float(xv), lo, hi, h0)
                if jump > eq_tol:
                    rejected.append({"point": [float(xv)], "gap": float(gv), "one_sided_jump": jump})
                    continue
                found.append(((float(xv),), float(gv)))
    else:
        from .maps import _compass

        for k in np.argsort(G, kind="stable")[:8]:
            if not np.isfinite(G[k]) or G[k] <= eq_tol:
                continue
            step0 = (np.asarray(f.domain.hi) - np.asarray(f.domain.lo)) / max(2, round(len(X) ** (1 / f.dimension)))
            p = _compass_gap(f, g, X[k], step0, metric)
            gv = float(gap(np.array([p]))[0])
            if gv <= eq_tol:
                found.append((p, gv))

    # deduplicate at eq_tol resolution, keeping the smallest gap
    found.sort(key=lambda item: (item[1], item[0]))
    kept = []
    for p, v in found:
        if all(distance(metric, p, k) > eq_tol for k, _ in kept):
            kept.append((p, v))
    kept.sort(key=lambda item: item[0])
    pts = [CoincidencePoint(p, pair, v) for p, v in kept]
    return CoincidenceReport(pts[:MAX_COINCIDENCES], False, len(pts) > MAX_COINCIDENCES, rejected)


def _compass_gap(f, g, start, step0, metric, max_evals: int = 4000) -> tuple:
    p = np.array(start, dtype=float)
    d = p.size
    dirs = np.vstack([np.eye(d), -np.eye(d)])

    def gap(P):
        v = metric.rowwise(f.evaluate_many(P, strict=False), g.evaluate_many(P, strict=False))
        return np.where(np.isfinite(v), v, np.inf)

    best = gap(p[None, :])[0]
    step = np.array(step0, dtype=float)
    evals = 0
    while evals < max_evals and np.max(step) > 1e-15 * (1.0 + np.max(np.abs(p))):
        trial = f.domain.clamp_many(p + dirs * step)
        vals = gap(trial)
        evals += len(trial)
        k = int(np.argmin(vals))
        if vals[k] < best:
            p, best = trial[k], vals[k]
        else:
            step = step / 2.0
    return tuple(float(v) for v in p)


# -- compatibility notions --------------------------------------------------


@dataclass
class WeakCompatibilityReport:
    pair: tuple
    commutators: list
    tol: float

    @property
    def vacuous(self) -> bool:
        return not self.commutators

    @property
    def passed(self) -> bool:
        return all(c["distance"] <= self.tol for c in self.commutators)

    def to_dict(self) -> dict:
        return {
            "pair": list(self.pair),
            "commutators": self.commutators,
            "tol": self.tol,
            "vacuous": self.vacuous,
            "passed": self.passed,
        }


def check_weakly_compatible(f: PiecewiseMap, g: PiecewiseMap, coincidences,
                            tol: float = 1e-12, metric: Optional[Metric] = None,
                            pair: Sequence[str] = ("f", "g")) -> WeakCompatibilityReport:
    """Do ``f`` and ``g`` commute at each of the given coincidence points?"""
    metric = metric or Metric()
    rows = []
    for c in coincidences:
        x = c.point if isinstance(c, CoincidencePoint) else as_point(c)
        fgx = f(g(x))
        gfx = g(f(x))
        rows.append({"x": list(x), "fgx": list(fgx), "gfx": list(gfx), "distance": distance(metric, fgx, gfx)})
    return WeakCompatibilityReport(tuple(pair), rows, tol)


@dataclass(frozen=True)
class Witness:
    """A sequence x_n given by expressions in ``n`` (one per coordinate)."""

    exprs: tuple
    text: tuple

    @classmethod
    def parse(cls, spec) -> "Witness":
        texts = (spec,) if isinstance(spec, str) else tuple(spec)
        return cls(tuple(parse(t, {"n"}) for t in texts), texts)

    def at(self, n: float) -> tuple:
        return tuple(float(evaluate(e, {"n": float(n)})) for e in self.exprs)


PREMISE_TOL = 1e-6
HORIZON_STEPS = (100, 10, 1)


@dataclass
class CompatibilityProbe:
    notion: str
    pair: tuple
    witness: tuple
    horizon: int
    premise: bool
    premise_detail: dict
    tail: float
    tail_limit: float
    verdict: str
    tol: float
    premise_tol: float
    ordered_pair: Optional[tuple] = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _witness(witness, N: int, domain):
    w = witness if isinstance(witness, Witness) else Witness.parse(witness)
    if int(N) != N or N < max(HORIZON_STEPS):
        raise ConfigurationError(f"horizon must be an integer >= {max(HORIZON_STEPS)}, got {N}")
    points = []
    for k in HORIZON_STEPS:
        x = w.at(N // k)
        if not domain.contains(x):
            raise ConfigurationError(f"witness x_{N // k} = {x} lies outside the domain")
        points.append(x)
    return w, points


def _limit(values) -> float:
    """Limit of a quantity read at three growing horizons.

    The smaller of the last value and its Aitken extrapolation, so that a
    tail decaying like 1/n is read as zero while a persistent gap is kept.
    """
    from .auxiliary import _extrapolated_limit

    v = np.asarray(values, dtype=float)
    return float(min(v[-1], _extrapolated_limit(v[:, None])[0]))


def check_compatible_on_sequence(f: PiecewiseMap, g: PiecewiseMap, witness, N: int = 10**6,
                                 tol: float = 1e-9, premise_tol: float = PREMISE_TOL,
                                 metric: Optional[Metric] = None,
                                 pair: Sequence[str] = ("f", "g")) -> CompatibilityProbe:
    """Probe compatibility along one witness sequence up to index ``N``.

    Premise: f(x_n) and g(x_n) approach a common limit t, read as their gap
    being below ``premise_tol``.  If it holds, the limit of the tail
    d(f g x_n, g f x_n) is compared with ``tol``; a tail above ``tol``
    exhibits non-compatibility.  Limits are read at n = N/100, N/10, N.
    """
    metric = metric or Metric()
    w, xs = _witness(witness, N, f.domain)
    gaps, tails = [], []
    for x in xs:
        fx, gx = f(x), g(x)
        gaps.append(distance(metric, fx, gx))
        tails.append(distance(metric, f(gx), g(fx)))
    x = xs[-1]
    fx, gx = f(x), g(x)
    premise = _limit(gaps) <= premise_tol
    tail_limit = _limit(tails)
    detail = {"x_N": list(x), "f(x_N)": list(fx), "g(x_N)": list(gx), "gap": gaps[-1],
              "gap_limit": _limit(gaps), "t": list(gx)}
    if not premise:
        verdict = "premise not established"
    elif tail_limit <= tol:
        verdict = "compatible at witness"
    else:
        verdict = "not compatible"
    return CompatibilityProbe("compatible", tuple(pair), w.text, N, premise, detail,
                              tails[-1], tail_limit, verdict, tol, premise_tol)


def check_weak_compatible_ordered(f: PiecewiseMap, g: PiecewiseMap, witness, N: int = 10**6,
                                  tol: float = 1e-9, premise_tol: float = PREMISE_TOL,
                                  metric: Optional[Metric] = None,
                                  pair: Sequence[str] = ("f", "g")) -> CompatibilityProbe:
    """Sequence test for the ordered pair (g, f) in the weak-compatible sense.

    With f = A and g = T this probes the ordered pair (T, A).  Premises:
    f x_n and g x_n share a limit t, and both g f x_n and g g x_n approach
    g t.  Conclusion: f g x_n approaches g t.  The limit t is estimated by
    g(x_N).  When a premise fails the probe is vacuous.
    """
    metric = metric or Metric()
    w, xs = _witness(witness, N, f.domain)
    first, second, tails = [], [], []
    for x in xs:
        fx, gx = f(x), g(x)
        gt = g(gx)  # g applied to the running estimate t_n = g(x_n)
        first.append(distance(metric, fx, gx))
        second.append(max(distance(metric, g(fx), gt), distance(metric, g(gx), gt)))
        tails.append(distance(metric, f(gx), gt))
    t = g(xs[-1])
    premise = _limit(first) <= premise_tol and _limit(second) <= premise_tol
    tail_limit = _limit(tails)
    x = xs[-1]
    fx, gx = f(x), g(x)
    detail = {
        "x_N": list(x), "t": list(t), "g(t)": list(g(t)),
        "gap": first[-1], "gap_limit": _limit(first),
        "second_gap": second[-1], "second_gap_limit": _limit(second),
        "g(f(x_N))": list(g(fx)), "g(g(x_N))": list(g(gx)), "f(g(x_N))": list(f(gx)),
    }
    if not premise:
        verdict = "premise not established (vacuous)"
    elif tail_limit <= tol:
        verdict = "weak compatible at witness"
    else:
        verdict = "not weak compatible"
    return CompatibilityProbe("weak_compatible_ordered", tuple(pair), w.text, N, premise, detail,
                              tails[-1], tail_limit, verdict, tol, premise_tol, (pair[1], pair[0]))


# -- certification ----------------------------------------------------------


@dataclass
class Certificate:
    z: tuple
    residuals: dict
    probes: list
    witnesses: dict
    conv_tol: float

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values())

    @property
    def certified(self) -> bool:
        if self.max_residual > self.conv_tol:
            return False
        return all(p["limit"] is not None and p["distance"] <= self.conv_tol for p in self.probes)

    def to_dict(self) -> dict:
        return {
            "z": list(self.z),
            "residuals": self.residuals,
            "max_residual": self.max_residual,
            "probes": self.probes,
            "witnesses": self.witnesses,
            "conv_tol": self.conv_tol,
            "certified": self.certified,
        }


def certify(q: MapQuadruple, trace: IterationTrace, probes: Sequence, cfg: IterationConfig) -> Certificate:
    """Residuals of the limit z under all four maps plus reruns from ``probes``.

    The witnesses u, v with A u = z = B v are recovered by preimage search
    and reported for inspection.
    """
    if not trace.converged:
        raise ConfigurationError(f"cannot certify a trace that ended with {trace.terminal.kind}")
    z = trace.terminal.z
    d = q.metric
    residuals = {name: distance(d, q[name](z), z) for name in ("A", "B", "S", "T")}
    rows = []
    for start in probes:
        start = as_point(start)
        run = jungck_iterate(q, replace(cfg, x0=start))
        limit = run.terminal.z if run.converged else None
        rows.append({
            "start": list(start),
            "terminal": run.terminal.kind,
            "limit": None if limit is None else list(limit),
            "distance": None if limit is None else distance(d, limit, z),
        })
    u = preimage(q.A, z, cfg.preimage_tol, cfg.resolution, d)
    v = preimage(q.B, z, cfg.preimage_tol, cfg.resolution, d)
    witnesses = {"u": None if u is None else list(u), "v": None if v is None else list(v)}
    return Certificate(z, residuals, rows, witnesses, cfg.conv_tol)
