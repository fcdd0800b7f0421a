"""Exact mixture-of-Gaussians marginal likelihood.

The marginal likelihood of T points under a k-component mixture with fixed
uniform weights, known noise variance and a shared N(m0, v0) prior on each
component mean is

    P(D|k) = (1/k)^T * sum over assignments z in [k]^T of
             prod_j f(points assigned to j)

where f(s) is the closed-form single-component Gaussian marginal of the
subset s (and f(empty) = 1). The sum over assignments regroups exactly as a
sum over ordered tuples of disjoint subsets covering D, i.e. a k-fold subset
convolution of f with itself. That identity lets us evaluate the sum with
O(3^T) multiply-adds instead of O(k^T) terms, exactly.

Implementation notes:
  - f(s) depends on s only through (count, sum, sum of squares), so the full
    2^T table of per-subset log marginals is built incrementally.
  - The convolution runs in a scaled linear domain: subtracting
    count(s) * alpha with alpha = max_s log f(s)/|s| makes every table entry
    <= 1, so overflow is impossible; the scale factor telescopes through the
    convolution. Rare underflow (scaled sum < 1e-250) falls back to an exact
    log-domain convolution.
  - Everything is batched over R independent datasets of equal size, which
    is the shape of the fake-dataset evidence computation.
  - A literal enumeration over k^T assignments is kept as `log_mllh_brute`;
    it is the reference the fast path is tested against.

The notional enumeration budget is still expressed in k^T terms so callers
can bound the model sizes they are willing to evaluate.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .errors import CapExceededError, InvalidParameterError

LOG_2PI = math.log(2.0 * math.pi)

DEFAULT_MAX_POINTS = 14
DEFAULT_TERM_BUDGET = 10**9

# Scaled sums below this trigger the exact log-domain fallback.
_UNDERFLOW_LIMIT = 1e-250


def check_budget(n_points: int, k: int, max_points: int, term_budget: int) -> None:
    if n_points > max_points:
        raise CapExceededError(
            f"{n_points} points exceed the enumeration cap of {max_points}"
        )
    if k >= 2 and n_points * math.log(k) > math.log(term_budget):
        raise CapExceededError(
            f"k={k} over {n_points} points needs {k}^{n_points} assignment terms, "
            f"budget is {term_budget:g}"
        )


def component_coeffs(sigma2: float, m0: float, v0: float, nmax: int):
    """Coefficients of log f(s) = A[n] + B[n]*S1^2 + D[n]*S1 + C*S2.

    n = |s|, S1 = sum of the points in s, S2 = sum of squares. Derived from
    the closed-form Gaussian marginal of n points sharing one component mean
    drawn from N(m0, v0) with observation noise sigma2.
    """
    if sigma2 <= 0.0 or v0 <= 0.0:
        raise InvalidParameterError("sigma2 and v0 must be > 0")
    n = np.arange(nmax + 1, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = 1.0 / (2.0 * (sigma2 + n * v0))
        A = (
            -(n / 2.0) * LOG_2PI
            - ((n - 1.0) / 2.0) * math.log(sigma2)
            - 0.5 * np.log(sigma2 + n * v0)
            - n * m0 * m0 * q
        )
        B = (1.0 / (2.0 * sigma2) - q) / n
        D = 2.0 * m0 * q
    A[0] = 0.0
    B[0] = 0.0
    D[0] = 0.0
    C = -1.0 / (2.0 * sigma2)
    return A, B, D, C


def subset_log_marginals(points: np.ndarray, sigma2: float, m0: float, v0: float):
    """Table of log f(s) for every subset of the points.

    `points` has shape (n, R): column r is an independent dataset. Returns
    (logf, counts) with logf of shape (2^n, R) and counts of shape (2^n,).
    Bit i of a subset index selects points[i].
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    n, R = pts.shape
    if not np.all(np.isfinite(pts)):
        raise InvalidParameterError("points must be finite")
    M = 1 << n
    S1 = np.zeros((M, R))
    S2 = np.zeros((M, R))
    counts = np.zeros(M, dtype=np.int64)
    for i in range(n):
        lo, hi = 1 << i, 1 << (i + 1)
        S1[lo:hi] = S1[:lo] + pts[i]
        S2[lo:hi] = S2[:lo] + pts[i] * pts[i]
        counts[lo:hi] = counts[:lo] + 1
    A, B, D, C = component_coeffs(sigma2, m0, v0, n)
    logf = A[counts][:, None] + B[counts][:, None] * S1 * S1 + D[counts][:, None] * S1 + C * S2
    return logf, counts


@njit(cache=True, nogil=True)
def _conv_linear(g, f, out):
    """out[s] = sum over submasks u of s of g[u] * f[s^u], per column."""
    M, R = g.shape
    acc = np.empty(R)
    for s in range(M):
        for r in range(R):
            acc[r] = 0.0
        u = s
        while True:
            v = s ^ u
            for r in range(R):
                acc[r] += g[u, r] * f[v, r]
            if u == 0:
                break
            u = (u - 1) & s
        for r in range(R):
            out[s, r] = acc[r]


@njit(cache=True, nogil=True)
def _conv_log(g, f, out):
    """Log-domain subset convolution, one column at a time."""
    M = g.shape[0]
    for s in range(M):
        best = -np.inf
        u = s
        while True:
            val = g[u] + f[s ^ u]
            if val > best:
                best = val
            if u == 0:
                break
            u = (u - 1) & s
        if best == -np.inf:
            out[s] = -np.inf
            continue
        total = 0.0
        u = s
        while True:
            total += math.exp(g[u] + f[s ^ u] - best)
            if u == 0:
                break
            u = (u - 1) & s
        out[s] = best + math.log(total)


def _scaled_tables(logf: np.ndarray, counts: np.ndarray):
    """Per-column scale alpha and the scaled linear table exp(logf - n*alpha)."""
    per_point = logf[1:] / counts[1:, None]
    alpha = per_point.max(axis=0)
    ftab = np.exp(logf - counts[:, None] * alpha[None, :])
    return alpha, ftab


def _log_conv_tables(logf_col: np.ndarray, jmax: int) -> list[np.ndarray]:
    """Exact log-domain tables [log C_1, ..., log C_jmax] for one dataset."""
    tables = [logf_col]
    for _ in range(1, jmax):
        out = np.empty_like(logf_col)
        _conv_log(tables[-1], logf_col, out)
        tables.append(out)
    return tables


def _log_mllh_log_domain(logf_col: np.ndarray, k: int) -> float:
    """Exact log-domain evaluation at the full mask, used as fallback."""
    if k == 1:
        return float(logf_col[-1])
    a = k // 2
    b = k - a
    tables = _log_conv_tables(logf_col, max(a, b))
    vals = tables[a - 1] + tables[b - 1][::-1]
    mx = vals.max()
    return float(mx + np.log(np.exp(vals - mx).sum()))


def log_mllh_multi_k(points, ks, sigma2, m0, v0,
                     max_points=DEFAULT_MAX_POINTS, term_budget=DEFAULT_TERM_BUDGET):
    """Exact log P(D|k) for several k over a batch of equal-size datasets.

    `points` has shape (n, R); returns an array of shape (len(ks), R). The
    subset table and its pairwise convolution are shared by every k, which
    is what makes the per-step candidate comparison affordable.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    n, R = pts.shape
    ks = [int(k) for k in ks]
    if any(k < 1 for k in ks):
        raise InvalidParameterError("component counts must be >= 1")
    for k in ks:
        check_budget(n, k, max_points, term_budget)
    if n == 0:
        return np.zeros((len(ks), R))

    logf, counts = subset_log_marginals(pts, sigma2, m0, v0)
    alpha, ftab = _scaled_tables(logf, counts)
    full = (1 << n) - 1

    kmax = max(ks)
    # Scaled linear tables C_j for j up to ceil(kmax/2); C_1 is ftab itself.
    tables = [ftab]
    half = max(1, (kmax + 1) // 2)
    for _ in range(1, half):
        out = np.empty_like(ftab)
        _conv_linear(tables[-1], ftab, out)
        tables.append(out)

    result = np.empty((len(ks), R))
    for row, k in enumerate(ks):
        if k == 1:
            result[row] = logf[full]
            continue
        a = k // 2
        b = k - a
        vals = np.einsum("ur,ur->r", tables[a - 1], tables[b - 1][::-1])
        with np.errstate(divide="ignore"):
            logged = np.log(vals)
        result[row] = logged + n * alpha - n * math.log(k)
        bad = ~np.isfinite(logged) | (vals < _UNDERFLOW_LIMIT)
        if np.any(bad):
            for r in np.nonzero(bad)[0]:
                result[row, r] = _log_mllh_log_domain(logf[:, r].copy(), k) - n * math.log(k)
    return result


def log_mllh_single(points, k, sigma2, m0, v0,
                    max_points=DEFAULT_MAX_POINTS, term_budget=DEFAULT_TERM_BUDGET) -> float:
    pts = np.asarray(points, dtype=float).reshape(-1, 1)
    return float(log_mllh_multi_k(pts, [k], sigma2, m0, v0, max_points, term_budget)[0, 0])


def log_mllh_prefixes(points, ks, sigma2, m0, v0,
                      max_points=DEFAULT_MAX_POINTS, term_budget=DEFAULT_TERM_BUDGET):
    """Exact log P(prefix_t | k) for every prefix length t = 0..n at once.

    Returns shape (len(ks), n+1). Prefixes are subsets too (mask 2^t - 1),
    so one set of convolution tables serves every prefix; this is what the
    unconstrained learner's per-step trajectory uses.
    """
    pts = np.asarray(points, dtype=float).reshape(-1)
    n = pts.shape[0]
    ks = [int(k) for k in ks]
    if any(k < 1 for k in ks):
        raise InvalidParameterError("component counts must be >= 1")
    for k in ks:
        check_budget(n, k, max_points, term_budget)
    out = np.zeros((len(ks), n + 1))
    if n == 0:
        return out

    logf, counts = subset_log_marginals(pts[:, None], sigma2, m0, v0)
    logf_col = logf[:, 0]
    alpha, ftab = _scaled_tables(logf, counts)
    a0 = float(alpha[0])
    prefix_masks = (1 << np.arange(n + 1)) - 1
    t_sizes = np.arange(n + 1)

    kmax = max(ks)
    tables = [ftab[:, 0].copy()]
    for _ in range(1, kmax):
        nxt = np.empty_like(tables[-1])
        _conv_linear(tables[-1][:, None], ftab, nxt[:, None])
        tables.append(nxt)

    log_tables: dict[int, np.ndarray] = {}
    for row, k in enumerate(ks):
        vals = tables[k - 1][prefix_masks]
        with np.errstate(divide="ignore"):
            logged = np.log(vals)
        res = logged + t_sizes * a0 - t_sizes * math.log(k)
        bad = ~np.isfinite(logged) | (vals < _UNDERFLOW_LIMIT)
        if np.any(bad):
            if not log_tables:
                lt = _log_conv_tables(logf_col.copy(), kmax)
                log_tables.update(enumerate(lt, start=1))
            res = log_tables[k][prefix_masks] - t_sizes * math.log(k)
        out[row] = res
    return out


def log_mllh_brute(points, k, sigma2, m0, v0, brute_budget=2 * 10**7) -> float:
    """Reference implementation: literal sum over all k^n assignments.

    Kept deliberately independent of the convolution path; only shares the
    per-subset closed form. Intended for tests and small inputs.
    """
    pts = np.asarray(points, dtype=float).reshape(-1)
    n = pts.shape[0]
    k = int(k)
    if k < 1:
        raise InvalidParameterError("component count must be >= 1")
    if n == 0:
        return 0.0
    n_terms = k**n
    if n_terms > brute_budget:
        raise CapExceededError(f"{k}^{n} = {n_terms} terms exceed brute budget {brute_budget:g}")
    A, B, D, C = component_coeffs(sigma2, m0, v0, n)

    log_terms = np.empty(n_terms)
    chunk = 1 << 16
    for start in range(0, n_terms, chunk):
        idx = np.arange(start, min(start + chunk, n_terms))
        digits = (idx[:, None] // k ** np.arange(n)) % k
        total = np.zeros(idx.shape[0])
        for j in range(k):
            sel = digits == j
            nj = sel.sum(axis=1)
            s1 = (sel * pts).sum(axis=1)
            s2 = (sel * pts * pts).sum(axis=1)
            total += A[nj] + B[nj] * s1 * s1 + D[nj] * s1 + C * s2
        log_terms[start : start + idx.shape[0]] = total
    mx = log_terms.max()
    return float(mx + math.log(np.exp(log_terms - mx).sum()) - n * math.log(k))
