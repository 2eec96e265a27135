"""Hot numeric loops, compiled with numba when available.

Every kernel has a pure-numpy twin with the same signature and the same
tie-breaking.  The compiled path is used unless ``COMMONFIX_DISABLE_NUMBA``
is set to a truthy value or numba cannot be imported; :func:`set_backend`
switches at runtime (tests and the benchmark use it).

Custom auxiliary functions are Python callables, so they always run on the
numpy path.
"""
from __future__ import annotations

import os
from contextlib import contextmanager

import numpy as np

METRIC_EUCLIDEAN = 0
METRIC_DISCRETE = 1

PSI_POWER_SUM = 0
PSI_PRODUCT_POWER = 1
PSI_MAX_POWER = 2
PSI_SCALED_POWER = 3

_DISABLE = os.environ.get("COMMONFIX_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    if _DISABLE:
        raise ImportError("disabled by COMMONFIX_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda f: f


# -- numpy path -------------------------------------------------------------


def psi_family_numpy(code, p, q, r, lam, s, t):
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if code == PSI_POWER_SUM:
        return s**p + t**q
    if code == PSI_PRODUCT_POWER:
        return s**p * t**q + t**r
    if code == PSI_MAX_POWER:
        return np.maximum(s**p, t**q)
    base = s**p
    if r != 0.0:
        base = base + r * t**q
    return base**lam


def _dist_numpy(metric, P, Q):
    diff = P - Q
    if metric == METRIC_DISCRETE:
        return np.any(diff != 0.0, axis=-1).astype(float)
    if diff.shape[-1] == 1:
        return np.abs(diff[..., 0])
    return np.sqrt(np.sum(diff * diff, axis=-1))


def _broadcast(X, Y, cartesian):
    if cartesian:
        return X[:, None, :], Y[None, :, :]
    return X, Y


def max_form_numpy(AX, SX, BY, TY, metric, psi_fn, cartesian=True):
    """Left side ``psi(d(Sx,Ty), d(Sx,Ty))`` and the six-term majorant.

    With ``cartesian`` the result is an (n, m) table over all (x_i, y_j);
    otherwise x_k is paired with y_k.
    """
    ax, by = _broadcast(AX, BY, cartesian)
    sx, ty = _broadcast(SX, TY, cartesian)
    d_sxty = _dist_numpy(metric, sx, ty)
    d_axby = _dist_numpy(metric, ax, by)
    d_axsx = _dist_numpy(metric, ax, sx)
    d_byty = _dist_numpy(metric, by, ty)
    d_bysx = _dist_numpy(metric, by, sx)
    d_axty = _dist_numpy(metric, ax, ty)
    shape = np.broadcast(d_axby, d_axsx, d_byty).shape
    d_axsx = np.broadcast_to(d_axsx, shape)
    d_byty = np.broadcast_to(d_byty, shape)

    lhs = psi_fn(d_sxty, d_sxty)
    m = np.maximum.reduce(
        [
            psi_fn(d_axby, d_axsx),
            psi_fn(d_axby, d_byty),
            psi_fn(d_axsx, d_byty),
            psi_fn(d_byty, d_axsx),
            np.minimum(psi_fn(d_bysx, d_axsx), psi_fn(d_axty, d_byty)),
            np.minimum(psi_fn(d_bysx, d_byty), psi_fn(d_axty, d_axsx)),
        ]
    )
    return np.broadcast_to(lhs, shape).astype(float), np.asarray(m, dtype=float)


def sum_form_numpy(X, TX, T2X, Y, TY, metric, psi_fn, r, s, cartesian=True):
    """Both sides of the single-map summed inequality."""
    x, y = _broadcast(X, Y, cartesian)
    tx, ty = _broadcast(TX, TY, cartesian)
    t2x, _ = _broadcast(T2X, TY, cartesian)
    d_txty = _dist_numpy(metric, tx, ty)
    d_xtx = _dist_numpy(metric, x, tx)
    d_yty = _dist_numpy(metric, y, ty)
    d_yt2x = _dist_numpy(metric, y, t2x)
    d_xy = _dist_numpy(metric, x, y)
    d_ytx = _dist_numpy(metric, y, tx)
    shape = np.broadcast(d_txty, d_xtx, d_yty).shape
    d_xtx = np.broadcast_to(d_xtx, shape)
    d_yty = np.broadcast_to(d_yty, shape)
    lhs = psi_fn(d_txty, d_xtx) + psi_fn(d_yty, d_yt2x)
    rhs = r * psi_fn(d_xy, d_xtx) + s * psi_fn(d_yty, d_ytx)
    return np.asarray(lhs, dtype=float), np.asarray(rhs, dtype=float)


def triangle_worst_numpy(D):
    """max over (i, j, k) of D[i,k] - D[i,j] - D[j,k]; first maximiser in lex order."""
    n = D.shape[0]
    best, bi, bj, bk = -np.inf, 0, 0, 0
    for i in range(n):
        v = D[i][None, :] - D[i][:, None] - D
        flat = int(np.argmax(v))
        val = v.flat[flat]
        if val > best:
            best = float(val)
            bi = i
            bj, bk = divmod(flat, n)
    return best, bi, bj, bk


# -- compiled path ----------------------------------------------------------


@njit(cache=True, nogil=True, inline="always")
def _pow(x, e):
    if e == 1.0:
        return x
    if e == 2.0:
        return x * x
    if e == 0.5:
        return np.sqrt(x)
    return x**e


@njit(cache=True, nogil=True, inline="always")
def _psi_one(code, p, q, r, lam, s, t):
    return _psi_powered(code, r, lam, _pow(s, p), _pow(t, q), _pow(t, r) if code == 1 else 0.0)


@njit(cache=True, nogil=True, inline="always")
def _psi_powered(code, r, lam, sp, tq, tr):
    """psi from precomputed powers s**p, t**q and (product family only) t**r."""
    if code == 0:
        return sp + tq
    if code == 1:
        return sp * tq + tr
    if code == 2:
        return sp if sp >= tq else tq
    base = sp
    if r != 0.0:
        base = base + r * tq
    return _pow(base, lam)


@njit(cache=True, nogil=True, inline="always")
def _dist_one(metric, P, i, Q, j):
    d = P.shape[1]
    if metric == 1:
        for c in range(d):
            if P[i, c] - Q[j, c] != 0.0:
                return 1.0
        return 0.0
    if d == 1:
        return abs(P[i, 0] - Q[j, 0])
    acc = 0.0
    for c in range(d):
        diff = P[i, c] - Q[j, c]
        acc += diff * diff
    return np.sqrt(acc)


@njit(cache=True, nogil=True, inline="always")
def _max_of_six(code, r, axby_p, axsx_p, axsx_q, axsx_r, byty_p, byty_q, byty_r, bysx_p, axty_p):
    m = _psi_powered(code, r, 1.0, axby_p, axsx_q, axsx_r)
    m = max(m, _psi_powered(code, r, 1.0, axby_p, byty_q, byty_r))
    m = max(m, _psi_powered(code, r, 1.0, axsx_p, byty_q, byty_r))
    m = max(m, _psi_powered(code, r, 1.0, byty_p, axsx_q, axsx_r))
    m = max(m, min(_psi_powered(code, r, 1.0, bysx_p, axsx_q, axsx_r),
                   _psi_powered(code, r, 1.0, axty_p, byty_q, byty_r)))
    m = max(m, min(_psi_powered(code, r, 1.0, bysx_p, byty_q, byty_r),
                   _psi_powered(code, r, 1.0, axty_p, axsx_q, axsx_r)))
    return m


@njit(cache=True, nogil=True, inline="always")
def _max_form_one(AX, SX, BY, TY, i, j, metric, code, p, q, r, lam):
    # Each distance is raised to p (first slot), q and r (second slot) once.
    # For the scaled family the outer power lam is increasing, so max and min
    # are taken on the bases and lam is applied once at the end.
    prod = code == 1
    outer = lam if code == 3 else 1.0
    d_axsx = _dist_one(metric, AX, i, SX, i)
    d_byty = _dist_one(metric, BY, j, TY, j)
    d_sxty = _dist_one(metric, SX, i, TY, j)
    lhs = _psi_powered(code, r, outer, _pow(d_sxty, p), _pow(d_sxty, q), _pow(d_sxty, r) if prod else 0.0)
    m = _max_of_six(
        code, r,
        _pow(_dist_one(metric, AX, i, BY, j), p),
        _pow(d_axsx, p), _pow(d_axsx, q), _pow(d_axsx, r) if prod else 0.0,
        _pow(d_byty, p), _pow(d_byty, q), _pow(d_byty, r) if prod else 0.0,
        _pow(_dist_one(metric, BY, j, SX, i), p),
        _pow(_dist_one(metric, AX, i, TY, j), p),
    )
    return lhs, _pow(m, outer)


@njit(cache=True, nogil=True)
def _max_form_cartesian_nb(AX, SX, BY, TY, metric, code, p, q, r, lam):
    # row and column terms are hoisted out of the pair loop
    n = AX.shape[0]
    m = BY.shape[0]
    prod = code == 1
    outer = lam if code == 3 else 1.0
    col = np.empty((m, 3))
    for j in range(m):
        d = _dist_one(metric, BY, j, TY, j)
        col[j, 0] = _pow(d, p)
        col[j, 1] = _pow(d, q)
        col[j, 2] = _pow(d, r) if prod else 0.0
    lhs = np.empty((n, m))
    maj = np.empty((n, m))
    for i in range(n):
        d = _dist_one(metric, AX, i, SX, i)
        axsx_p = _pow(d, p)
        axsx_q = _pow(d, q)
        axsx_r = _pow(d, r) if prod else 0.0
        for j in range(m):
            d_sxty = _dist_one(metric, SX, i, TY, j)
            lhs[i, j] = _psi_powered(code, r, outer, _pow(d_sxty, p), _pow(d_sxty, q),
                                     _pow(d_sxty, r) if prod else 0.0)
            mm = _max_of_six(
                code, r,
                _pow(_dist_one(metric, AX, i, BY, j), p),
                axsx_p, axsx_q, axsx_r,
                col[j, 0], col[j, 1], col[j, 2],
                _pow(_dist_one(metric, BY, j, SX, i), p),
                _pow(_dist_one(metric, AX, i, TY, j), p),
            )
            maj[i, j] = _pow(mm, outer)
    return lhs, maj


@njit(cache=True, nogil=True)
def _max_form_paired_nb(AX, SX, BY, TY, metric, code, p, q, r, lam):
    n = AX.shape[0]
    lhs = np.empty(n)
    maj = np.empty(n)
    for k in range(n):
        lhs[k], maj[k] = _max_form_one(AX, SX, BY, TY, k, k, metric, code, p, q, r, lam)
    return lhs, maj


@njit(cache=True, nogil=True, inline="always")
def _sum_form_one(X, TX, T2X, Y, TY, i, j, metric, code, p, q, r, lam, rr, ss):
    d_txty = _dist_one(metric, TX, i, TY, j)
    d_xtx = _dist_one(metric, X, i, TX, i)
    d_yty = _dist_one(metric, Y, j, TY, j)
    d_yt2x = _dist_one(metric, Y, j, T2X, i)
    d_xy = _dist_one(metric, X, i, Y, j)
    d_ytx = _dist_one(metric, Y, j, TX, i)
    lhs = _psi_one(code, p, q, r, lam, d_txty, d_xtx) + _psi_one(code, p, q, r, lam, d_yty, d_yt2x)
    rhs = rr * _psi_one(code, p, q, r, lam, d_xy, d_xtx) + ss * _psi_one(code, p, q, r, lam, d_yty, d_ytx)
    return lhs, rhs


@njit(cache=True, nogil=True)
def _sum_form_cartesian_nb(X, TX, T2X, Y, TY, metric, code, p, q, r, lam, rr, ss):
    n = X.shape[0]
    m = Y.shape[0]
    lhs = np.empty((n, m))
    rhs = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            a, b = _sum_form_one(X, TX, T2X, Y, TY, i, j, metric, code, p, q, r, lam, rr, ss)
            lhs[i, j] = a
            rhs[i, j] = b
    return lhs, rhs


@njit(cache=True, nogil=True)
def _sum_form_paired_nb(X, TX, T2X, Y, TY, metric, code, p, q, r, lam, rr, ss):
    n = X.shape[0]
    lhs = np.empty(n)
    rhs = np.empty(n)
    for k in range(n):
        lhs[k], rhs[k] = _sum_form_one(X, TX, T2X, Y, TY, k, k, metric, code, p, q, r, lam, rr, ss)
    return lhs, rhs


@njit(cache=True, nogil=True)
def _triangle_worst_nb(D):
    n = D.shape[0]
    best = -np.inf
    bi = 0
    bj = 0
    bk = 0
    for i in range(n):
        for j in range(n):
            dij = D[i, j]
            for k in range(n):
                v = D[i, k] - dij - D[j, k]
                if v > best:
                    best = v
                    bi = i
                    bj = j
                    bk = k
    return best, bi, bj, bk


# -- dispatch ---------------------------------------------------------------

_backend = "numba" if HAVE_NUMBA else "numpy"


def backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is unavailable")
    _backend = name


@contextmanager
def using(name: str):
    previous = _backend
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def max_form(AX, SX, BY, TY, metric, psi, cartesian=True):
    """Dispatch the six-term pair kernel.

    ``psi`` is an ``AuxFunction``-like object exposing ``kernel_params()``
    (``None`` for custom expressions) and ``vectorized(s, t)``.
    """
    params = psi.kernel_params()
    if _backend == "numba" and params is not None:
        fn = _max_form_cartesian_nb if cartesian else _max_form_paired_nb
        return fn(_f64(AX), _f64(SX), _f64(BY), _f64(TY), metric, *params)
    return max_form_numpy(_f64(AX), _f64(SX), _f64(BY), _f64(TY), metric, psi.vectorized, cartesian)


def sum_form(X, TX, T2X, Y, TY, metric, psi, r, s, cartesian=True):
    params = psi.kernel_params()
    if _backend == "numba" and params is not None:
        fn = _sum_form_cartesian_nb if cartesian else _sum_form_paired_nb
        return fn(_f64(X), _f64(TX), _f64(T2X), _f64(Y), _f64(TY), metric, *params, float(r), float(s))
    return sum_form_numpy(
        _f64(X), _f64(TX), _f64(T2X), _f64(Y), _f64(TY), metric, psi.vectorized, r, s, cartesian
    )


def triangle_worst(D):
    if _backend == "numba":
        best, i, j, k = _triangle_worst_nb(_f64(D))
        return float(best), int(i), int(j), int(k)
    return triangle_worst_numpy(_f64(D))
