"""Hot kernels: numba-compiled loops with pure-numpy fallbacks.

Three kernel families:

* ``induce_edges``      -- restrict whole-graph adjacency to each sub-graph's
                           member set (sampler hot path);
* ``scatter_rows``      -- weighted row scatter-add used by the GNN
                           aggregation step;
* ``ln_expected_bound`` -- the accountant's per-out-degree log-sum-exp scan
                           of E_{k~rho}[B_k].

Each has a ``_loops`` implementation (compiled when numba is active) and a
``_numpy`` implementation; the public name dispatches on the backend chosen
in :mod:`nodedp._accel`. Both variants are importable for benchmarks and
equivalence tests.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln

from ._accel import NUMBA_ENABLED, njit

_SQRT2 = np.sqrt(2.0)


# -- sub-graph edge induction ---------------------------------------------


def _induce_edges_loops(out_ptr, out_idx, members, mem_off, e_src, e_dst, e_sub):
    """Fill pack-indexed local edges; returns the edge count.

    ``members`` holds sorted global ids per sub-graph; an output edge (a, b)
    means members[a] -> members[b] exists in the whole graph and both ends
    sit in the same sub-graph.
    """
    ne = 0
    n_sub = mem_off.shape[0] - 1
    for s in range(n_sub):
        lo = mem_off[s]
        hi = mem_off[s + 1]
        for a in range(lo, hi):
            u = members[a]
            r0 = out_ptr[u]
            r1 = out_ptr[u + 1]
            if r1 == r0:
                continue
            for b in range(lo, hi):
                if b == a:
                    continue
                v = members[b]
                lo2 = r0
                hi2 = r1
                while lo2 < hi2:
                    mid = (lo2 + hi2) // 2
                    w = out_idx[mid]
                    if w < v:
                        lo2 = mid + 1
                    elif w > v:
                        hi2 = mid
                    else:
                        e_src[ne] = a
                        e_dst[ne] = b
                        e_sub[ne] = s
                        ne += 1
                        break
    return ne


def _induce_edges_numpy(out_ptr, out_idx, members, mem_off, e_src, e_dst, e_sub):
    ne = 0
    n_sub = mem_off.shape[0] - 1
    for s in range(n_sub):
        lo, hi = mem_off[s], mem_off[s + 1]
        mem = members[lo:hi]
        m = hi - lo
        for a in range(lo, hi):
            u = members[a]
            row = out_idx[out_ptr[u] : out_ptr[u + 1]]
            if not len(row):
                continue
            pos = np.searchsorted(mem, row)
            ok = pos < m
            ok[ok] = mem[pos[ok]] == row[ok]
            hits = pos[ok]
            cnt = len(hits)
            if cnt:
                e_src[ne : ne + cnt] = a
                e_dst[ne : ne + cnt] = lo + hits
                e_sub[ne : ne + cnt] = s
                ne += cnt
    return ne


# -- weighted scatter-add of feature rows ---------------------------------


def _scatter_rows_loops(acc, rows, srcs, coef, feats):
    for e in range(rows.shape[0]):
        r = rows[e]
        u = srcs[e]
        c = coef[e]
        for j in range(feats.shape[1]):
            acc[r, j] += c * feats[u, j]


def _scatter_rows_numpy(acc, rows, srcs, coef, feats):
    if len(rows):
        np.add.at(acc, rows, coef[:, None] * feats[srcs])


# -- accountant scan -------------------------------------------------------
#
# For one Renyi order alpha and noise scale sigma, compute
#     max_{D in [0, max_dout]}  ln E_{k ~ rho(D)}[B_k]
# where rho(D) is the sub-sampling mixture (mass q_b at k=0.5 when the
# overlap rule is enforced, binomial mass at integers) and
#     ln B_k = logaddexp(ln(alpha/(2alpha-1)) + sqrt(2)(alpha-1) k / sigma,
#              ln 1/2)                       for the heavy-tailed noise, or
#     ln B_k = alpha (alpha-1) k^2 / (2 sigma^2)   for Gaussian noise.
# Everything stays in log space; the binomial pmf uses the multiplicative
# recurrence (error O(D * eps), negligible at desk scale).


def _ln_bound_scan_loops(max_dout, q_b, M, alpha, sigma, enforce, quadratic):
    def laddexp(a, b):
        # scalar logaddexp tolerating -inf on either side
        if a < b:
            a, b = b, a
        if b == -np.inf:
            return a
        d = b - a
        if d < -40.0:
            return a
        return a + np.log1p(np.exp(d))

    ln_q = np.log(q_b)
    ln_1mq = np.log(1.0 - q_b) if q_b < 1.0 else -np.inf
    ln_half = -0.6931471805599453
    ln_a = np.log(alpha / (2.0 * alpha - 1.0))
    c_lin = _SQRT2 * (alpha - 1.0) / sigma
    # reciprocal form: sigma^2 can underflow to 0 for tiny scales, which
    # would divide by zero; overflowing to inf instead lets the caller's
    # finiteness check reject the result
    inv_sigma = 1.0 / sigma
    a_quad = alpha * (alpha - 1.0) * 0.5 * inv_sigma * inv_sigma

    def ln_bk_at(k):
        if quadratic:
            return a_quad * k * k
        return laddexp(ln_a + c_lin * k, ln_half)

    # ln B at the half-integer offset used by the enforced / shifted masses
    ln_b_half = ln_bk_at(0.5)

    best = -np.inf
    arg = 0
    for d_out in range(0, max_dout + 1):
        if d_out == 0:
            ln_e = laddexp(ln_1mq + ln_bk_at(0.0), ln_q + ln_b_half)
        else:
            ratio = M / d_out
            if ratio > 1.0:
                ratio = 1.0
            p = q_b * ratio
            if p <= 0.0:
                lo_k, hi_k = 0, 0
            elif p >= 1.0:
                lo_k, hi_k = d_out, d_out
            else:
                lo_k, hi_k = 0, d_out
            ln_p = np.log(p) if p > 0.0 else -np.inf
            ln_1mp = np.log(1.0 - p) if p < 1.0 else -np.inf
            # running log-sum-exp over k
            run_max = -np.inf
            run_sum = 0.0
            ln_bi = d_out * ln_1mp if 0.0 < p < 1.0 else 0.0
            for k in range(lo_k, hi_k + 1):
                if k > lo_k:
                    ln_bi += np.log((d_out - (k - 1)) / k) + ln_p - ln_1mp
                kk = float(k)
                if enforce:
                    term = ln_1mq + ln_bi + ln_bk_at(kk)
                else:
                    term = ln_bi + laddexp(
                        ln_1mq + ln_bk_at(kk), ln_q + ln_bk_at(kk + 0.5)
                    )
                if term == -np.inf:
                    continue
                if term <= run_max:
                    run_sum += np.exp(term - run_max)
                else:
                    run_sum = run_sum * np.exp(run_max - term) + 1.0
                    run_max = term
            ln_e = run_max + np.log(run_sum) if run_sum > 0.0 else -np.inf
            if enforce:
                ln_e = laddexp(ln_e, ln_q + ln_b_half)
        if ln_e > best:
            best = ln_e
            arg = d_out
    return best, arg


def _log_binom_pmf(k, n, p):
    """Vectorized log Bi(k; n, p) via gammaln; handles p in {0, 1}."""
    k = np.asarray(k, dtype=np.float64)
    if p <= 0.0:
        return np.where(k == 0, 0.0, -np.inf)
    if p >= 1.0:
        return np.where(k == n, 0.0, -np.inf)
    return (
        gammaln(n + 1.0)
        - gammaln(k + 1.0)
        - gammaln(n - k + 1.0)
        + k * np.log(p)
        + (n - k) * np.log1p(-p)
    )


def _logsumexp(v):
    m = np.max(v)
    if not np.isfinite(m):
        return m
    return m + np.log(np.sum(np.exp(v - m)))


def _ln_bound_scan_numpy(max_dout, q_b, M, alpha, sigma, enforce, quadratic):
    ln_q = np.log(q_b)
    with np.errstate(divide="ignore"):
        ln_1mq = np.log1p(-q_b) if q_b < 1.0 else -np.inf
    ln_half = np.log(0.5)
    ln_a = np.log(alpha / (2.0 * alpha - 1.0))
    c_lin = _SQRT2 * (alpha - 1.0) / sigma
    inv_sigma = 1.0 / sigma  # avoids sigma^2 underflowing to a zero divisor
    a_quad = alpha * (alpha - 1.0) * 0.5 * inv_sigma * inv_sigma

    def ln_b(k):
        if quadratic:
            return a_quad * k * k
        return np.logaddexp(ln_a + c_lin * k, ln_half)

    best, arg = -np.inf, 0
    for d_out in range(0, max_dout + 1):
        if d_out == 0:
            ln_e = np.logaddexp(ln_1mq + float(ln_b(0.0)), ln_q + float(ln_b(0.5)))
        else:
            p = q_b * min(1.0, M / d_out)
            k = np.arange(d_out + 1, dtype=np.float64)
            ln_bi = _log_binom_pmf(k, d_out, p)
            if enforce:
                terms = np.append(ln_1mq + ln_bi + ln_b(k), ln_q + float(ln_b(0.5)))
            else:
                terms = ln_bi + np.logaddexp(
                    ln_1mq + ln_b(k), ln_q + ln_b(k + 0.5)
                )
            ln_e = _logsumexp(terms)
        if ln_e > best:
            best, arg = ln_e, d_out
    return float(best), int(arg)


# -- dispatch --------------------------------------------------------------

if NUMBA_ENABLED:
    _induce_edges_compiled = njit(cache=True)(_induce_edges_loops)
    _scatter_rows_compiled = njit(cache=True)(_scatter_rows_loops)
    _ln_bound_scan_compiled = njit(cache=True)(_ln_bound_scan_loops)

    induce_edges = _induce_edges_compiled
    scatter_rows = _scatter_rows_compiled

    def ln_bound_scan(max_dout, q_b, M, alpha, sigma, enforce, quadratic):
        best, arg = _ln_bound_scan_compiled(
            int(max_dout),
            float(q_b),
            float(M),
            float(alpha),
            float(sigma),
            bool(enforce),
            bool(quadratic),
        )
        return float(best), int(arg)

else:  # numpy fallback
    induce_edges = _induce_edges_numpy
    scatter_rows = _scatter_rows_numpy

    def ln_bound_scan(max_dout, q_b, M, alpha, sigma, enforce, quadratic):
        return _ln_bound_scan_numpy(
            int(max_dout),
            float(q_b),
            float(M),
            float(alpha),
            float(sigma),
            bool(enforce),
            bool(quadratic),
        )


def warmup() -> None:
    """Trigger one-time JIT compilation of every kernel (no-op on numpy)."""
    if not NUMBA_ENABLED:
        return
    out_ptr = np.array([0, 1, 1], dtype=np.int64)
    out_idx = np.array([1], dtype=np.int64)
    members = np.array([0, 1], dtype=np.int64)
    mem_off = np.array([0, 2], dtype=np.int64)
    e = np.empty(2, dtype=np.int64)
    induce_edges(out_ptr, out_idx, members, mem_off, e.copy(), e.copy(), e.copy())
    acc = np.zeros((2, 2))
    scatter_rows(
        acc,
        np.array([0], dtype=np.int64),
        np.array([1], dtype=np.int64),
        np.array([1.0]),
        np.ones((2, 2)),
    )
    ln_bound_scan(2, 0.5, 1.0, 2.0, 1.0, True, False)
    ln_bound_scan(2, 0.5, 1.0, 2.0, 1.0, False, True)
