"""Independent reference implementations used as test oracles.

Everything here is deliberately written the slow, obvious way (series expansions,
double loops, textbook recursions) and must not import the package's fast paths
for the quantity it checks.
"""

from __future__ import annotations

import math

import numpy as np


# --- regularized incomplete gamma, series + continued fraction ---------------

def _gamma_series(a: float, x: float, itmax: int = 500, eps: float = 3e-14) -> float:
    """Lower regularized incomplete gamma P(a, x) by its power series (x < a + 1)."""
    if x <= 0.0:
        return 0.0
    ap = a
    summ = 1.0 / a
    delta = summ
    for _ in range(itmax):
        ap += 1.0
        delta *= x / ap
        summ += delta
        if abs(delta) < abs(summ) * eps:
            break
    return summ * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf(a: float, x: float, itmax: int = 500, eps: float = 3e-14) -> float:
    """Upper regularized incomplete gamma Q(a, x) by continued fraction (x >= a + 1)."""
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, itmax + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def regularized_gammaq(a: float, x: float) -> float:
    """Q(a, x) = Gamma(a, x) / Gamma(a); chi-square upper tail is Q(df/2, x/2)."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x == 0.0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_cf(a, x)


def chi2_tail_reference(x: float, df: float) -> float:
    return regularized_gammaq(df / 2.0, x / 2.0)


# --- empirical distribution helpers ------------------------------------------

def ks_distance_uniform(values) -> float:
    """Kolmogorov-Smirnov sup distance of a sample from Uniform(0, 1)."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    n = v.size
    if n == 0:
        raise ValueError("empty sample")
    upper = np.max(np.arange(1, n + 1) / n - v)
    lower = np.max(v - np.arange(0, n) / n)
    return float(max(upper, lower))


# --- finite differences -------------------------------------------------------

def central_diff_gradient(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def central_diff_jacobian(g, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Jacobian of a vector map by central differences (Hessian when g is a gradient)."""
    x = np.asarray(x, dtype=np.float64)
    g0 = np.asarray(g(x), dtype=np.float64)
    jac = np.zeros((g0.size, x.size))
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        jac[:, i] = (np.asarray(g(x + e)) - np.asarray(g(x - e))) / (2.0 * h)
    return jac


# --- B-spline values by the Cox-de Boor recursion ------------------------------

def bspline_value(knots, degree: int, i: int, x: float) -> float:
    """b_{i,degree}(x) from the textbook recursion on a clamped knot vector.

    Uses the half-open convention on every span, so the value at the right
    boundary of the overall support is zero, matching the package's truncation.
    """
    t = np.asarray(knots, dtype=np.float64)
    if degree == 0:
        return 1.0 if t[i] <= x < t[i + 1] else 0.0
    left = 0.0
    den = t[i + degree] - t[i]
    if den > 0:
        left = (x - t[i]) / den * bspline_value(t, degree - 1, i, x)
    right = 0.0
    den = t[i + degree + 1] - t[i + 1]
    if den > 0:
        right = (t[i + degree + 1] - x) / den * bspline_value(t, degree - 1, i + 1, x)
    return left + right


# --- brute-force feature streams ----------------------------------------------

def brute_first_order(basis, event_times, eval_times) -> np.ndarray:
    """F_i(t) = sum over events tau < t of b_i(t - tau), by direct double loop."""
    eval_times = np.asarray(eval_times, dtype=np.float64)
    out = np.zeros((eval_times.size, basis.num_basis))
    for r, t in enumerate(eval_times):
        for tau in np.asarray(event_times, dtype=np.float64):
            if tau < t:
                out[r] += basis.evaluate(np.array([t - tau]))[0]
    return out


def brute_pair_tensor(basis, times_a, times_b, eval_times) -> np.ndarray:
    """M[r, i1, i2] = sum over pairs (tau_a < t, tau_b < t) of b_i1(t-tau_a) b_i2(t-tau_b).

    For a same-mark pair pass the identical event array twice; the diagonal
    tau_a = tau_b terms are included, matching the product factorization.
    """
    eval_times = np.asarray(eval_times, dtype=np.float64)
    K = basis.num_basis
    out = np.zeros((eval_times.size, K, K))
    times_a = np.asarray(times_a, dtype=np.float64)
    times_b = np.asarray(times_b, dtype=np.float64)
    for r, t in enumerate(eval_times):
        for ta in times_a:
            if not ta < t:
                continue
            ba = basis.evaluate(np.array([t - ta]))[0]
            for tb in times_b:
                if not tb < t:
                    continue
                bb = basis.evaluate(np.array([t - tb]))[0]
                out[r] += np.outer(ba, bb)
    return out


def fold_same_mark(tensor: np.ndarray) -> np.ndarray:
    """Fold a (n, K, K) tensor to the symmetrized (n, K*(K+1)/2) column layout."""
    n, K, _ = tensor.shape
    cols = []
    for a in range(K):
        for b in range(a, K):
            if a == b:
                cols.append(tensor[:, a, a])
            else:
                cols.append(tensor[:, a, b] + tensor[:, b, a])
    return np.column_stack(cols)


def shd_reference(g1, g2) -> int:
    """Pairwise SHD with flips counted once, from the explicit state table."""
    dist = {
        ((False, False), (False, False)): 0,
        ((False, False), (True, False)): 1,
        ((False, False), (False, True)): 1,
        ((False, False), (True, True)): 2,
        ((True, False), (True, False)): 0,
        ((True, False), (False, True)): 1,
        ((True, False), (True, True)): 1,
        ((False, True), (False, True)): 0,
        ((False, True), (True, True)): 1,
        ((True, True), (True, True)): 0,
    }
    total = 0
    for j in range(g1.d):
        for k in range(j + 1, g1.d):
            s1 = (g1.has_edge(j, k), g1.has_edge(k, j))
            s2 = (g2.has_edge(j, k), g2.has_edge(k, j))
            if (s1, s2) in dist:
                total += dist[(s1, s2)]
            else:
                total += dist[(s2, s1)]
    return total
