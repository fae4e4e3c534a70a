"""Renyi-DP accounting for the sub-sampled, clipped, noised gradient sum.

The per-iteration mechanism releases the sum of per-sub-graph gradients
clipped to norm 1/2 plus heavy-tailed (or Gaussian) noise. Changing one node
z of the input graph changes that sum by at most

* 0.5    when z is sampled as a central node (one extra sub-graph), or
* k * 1  when z lands as a peripheral in k sub-graphs (k replaced pairs).

The number k is distributed as the mixture ``rho``: with probability q_b the
central case (encoded as k = 0.5), otherwise binomial over z's out-degree
with per-trial probability q_b * min(1, M / D_out). A Renyi divergence bound
B_k for the noise at shift k then gives the iteration's order-alpha
guarantee gamma <= (T / (alpha - 1)) * ln E_{k~rho}[B_k], maximized over all
out-degrees the graph can contain, and the usual conversion turns composed
Renyi guarantees into (epsilon, delta).

All probability arithmetic is carried in log space.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import binom

from . import _kernels
from .errors import AccountantOverflowError, CalibrationError, ConfigError

_SQRT2 = np.sqrt(2.0)

NOISE_SML = "sml"
NOISE_GAUSSIAN = "gaussian"

SIGMA_MIN = 1e-3
SIGMA_MAX = 1e6


def default_alpha_grid() -> np.ndarray:
    """Renyi orders 1.1, 1.2, ..., 9.9, 10.0."""
    return np.linspace(1.1, 10.0, 90)


@dataclass(frozen=True)
class AccountantConfig:
    q_b: float
    M: float
    iterations: int
    delta: float
    max_dout: int
    enforce_no_overlap: bool = True
    noise_kind: str = NOISE_SML
    alpha_grid: np.ndarray = field(default_factory=default_alpha_grid)

    def __post_init__(self):
        if not (0.0 < self.q_b <= 1.0):
            raise ConfigError(f"q_b={self.q_b} outside (0, 1]")
        if self.M < 0.0:
            raise ConfigError(f"M={self.M} negative")
        if self.iterations < 1:
            raise ConfigError(f"iterations={self.iterations} must be >= 1")
        if not (0.0 < self.delta < 1.0):
            raise ConfigError(f"delta={self.delta} outside (0, 1)")
        if self.max_dout < 0:
            raise ConfigError(f"max_dout={self.max_dout} negative")
        if self.noise_kind not in (NOISE_SML, NOISE_GAUSSIAN):
            raise ConfigError(f"unknown noise kind {self.noise_kind!r}")
        grid = np.asarray(self.alpha_grid, dtype=np.float64)
        if grid.ndim != 1 or len(grid) == 0 or np.any(grid <= 1.0):
            raise ConfigError("alpha grid must be 1-D with every order > 1")
        object.__setattr__(self, "alpha_grid", grid)


# -- the sub-sampling mixture ---------------------------------------------


@dataclass(frozen=True)
class RhoPmf:
    """Distribution of the per-iteration sensitivity index k.

    Support mixes the central marker 0.5 with integer peripheral counts
    (plus half-integer shifts when the overlap rule is not enforced).
    """

    support: np.ndarray
    log_probs: np.ndarray
    d_out: int
    q_b: float
    M: float
    enforced: bool

    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    def prob_of(self, k: float) -> float:
        i = np.flatnonzero(self.support == k)
        return float(np.exp(self.log_probs[i[0]])) if len(i) else 0.0


def _trial_probability(d_out: int, q_b: float, M: float) -> float:
    """Per out-neighbor probability that it is a central that samples z:
    central coin q_b times the neighbor-sampling clamp min(1, M/D_out)."""
    if d_out <= 0:
        return 0.0
    return q_b * min(1.0, M / d_out)


def _check_pmf_args(d_out, q_b, M):
    if d_out < 0:
        raise ConfigError(f"d_out={d_out} negative")
    if not (0.0 < q_b <= 1.0):
        raise ConfigError(f"q_b={q_b} outside (0, 1]")
    if M < 0.0:
        raise ConfigError(f"M={M} negative")


def rho_pmf(d_out: int, q_b: float, M: float) -> RhoPmf:
    """Sensitivity-index law with the overlap rule enforced.

    Mass q_b at k = 0.5 (z central; its appearances elsewhere are nulled),
    mass (1 - q_b) * Bi(k; d_out, q_b * min(1, M/d_out)) at integers k.
    """
    _check_pmf_args(d_out, q_b, M)
    p = _trial_probability(d_out, q_b, M)
    ks = np.arange(d_out + 1, dtype=np.float64)
    with np.errstate(divide="ignore"):
        log_bi = binom.logpmf(ks, d_out, p)
        log_ints = np.log1p(-q_b) + log_bi if q_b < 1.0 else np.full_like(log_bi, -np.inf)
    support = np.concatenate([ks, [0.5]])
    log_probs = np.concatenate([log_ints, [np.log(q_b)]])
    order = np.argsort(support, kind="stable")
    return RhoPmf(support[order], log_probs[order], d_out, q_b, M, True)


def rho_pmf_no_enforce(d_out: int, q_b: float, M: float) -> RhoPmf:
    """Sensitivity-index law without overlap enforcement: when z is central
    its peripheral appearances still count, shifting the binomial by 0.5."""
    _check_pmf_args(d_out, q_b, M)
    p = _trial_probability(d_out, q_b, M)
    ks = np.arange(d_out + 1, dtype=np.float64)
    with np.errstate(divide="ignore"):
        log_bi = binom.logpmf(ks, d_out, p)
        log_ints = np.log1p(-q_b) + log_bi if q_b < 1.0 else np.full_like(log_bi, -np.inf)
        log_halves = np.log(q_b) + log_bi
    support = np.concatenate([ks, ks + 0.5])
    log_probs = np.concatenate([log_ints, log_halves])
    order = np.argsort(support, kind="stable")
    return RhoPmf(support[order], log_probs[order], d_out, q_b, M, False)


# -- noise divergence bounds ----------------------------------------------


def _check_alpha_sigma(alpha, sigma):
    if not (alpha > 1.0):
        raise ConfigError(f"alpha={alpha} must be > 1")
    if not (sigma > 0.0):
        raise ConfigError(f"sigma={sigma} must be > 0")


def laplace_renyi_divergence(k, alpha: float, sigma: float):
    """Closed-form Renyi divergence of order alpha between two univariate
    Laplace densities with scale sigma/sqrt(2) whose means differ by k:

        (1/(alpha-1)) ln( (alpha/(2alpha-1)) e^{sqrt2 (alpha-1) k / sigma}
                        + ((alpha-1)/(2alpha-1)) e^{-sqrt2 alpha k / sigma} )

    Symmetric in the argument order; 0 at k = 0. Evaluated in log space so
    huge shifts stay finite.
    """
    _check_alpha_sigma(alpha, sigma)
    k = np.abs(np.asarray(k, dtype=np.float64))
    t1 = np.log(alpha / (2.0 * alpha - 1.0)) + _SQRT2 * (alpha - 1.0) * k / sigma
    t2 = np.log((alpha - 1.0) / (2.0 * alpha - 1.0)) - _SQRT2 * alpha * k / sigma
    out = np.logaddexp(t1, t2) / (alpha - 1.0)
    # identical densities have exactly zero divergence; the two log terms
    # above sum to ln(1) only up to rounding, so pin the k = 0 case
    out = np.where(k == 0.0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def log_bk_sml(k, alpha: float, sigma: float):
    """ln B_k for the heavy-tailed noise: B_k replaces the decaying term of
    exp((alpha-1) * divergence) with its upper bound 1/2, so

        B_k = (alpha/(2alpha-1)) e^{sqrt2 (alpha-1) k / sigma} + 1/2.

    Dominates exp((alpha-1) D_alpha) for every k >= 0.
    """
    _check_alpha_sigma(alpha, sigma)
    k = np.asarray(k, dtype=np.float64)
    out = np.logaddexp(
        np.log(alpha / (2.0 * alpha - 1.0)) + _SQRT2 * (alpha - 1.0) * k / sigma,
        np.log(0.5),
    )
    return float(out) if out.ndim == 0 else out


def bk_sml(k, alpha: float, sigma: float):
    """B_k itself; prefer log_bk_sml when k/sigma is large."""
    out = np.exp(log_bk_sml(k, alpha, sigma))
    return float(out) if np.ndim(out) == 0 else out


def log_bk_gaussian(k, alpha: float, sigma: float):
    """ln of the exact Gaussian Renyi term exp(alpha(alpha-1) k^2 / (2 sigma^2))."""
    _check_alpha_sigma(alpha, sigma)
    k = np.asarray(k, dtype=np.float64)
    out = alpha * (alpha - 1.0) * k * k / (2.0 * sigma**2)
    return float(out) if out.ndim == 0 else out


def expected_log_bk(
    pmf: RhoPmf, alpha: float, sigma: float, noise_kind: str = NOISE_SML
) -> float:
    """ln E_{k~rho}[B_k] by explicit log-sum-exp over the PMF support."""
    if noise_kind == NOISE_SML:
        lb = log_bk_sml(pmf.support, alpha, sigma)
    elif noise_kind == NOISE_GAUSSIAN:
        lb = log_bk_gaussian(pmf.support, alpha, sigma)
    else:
        raise ConfigError(f"unknown noise kind {noise_kind!r}")
    terms = pmf.log_probs + lb
    m = np.max(terms)
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.sum(np.exp(terms - m))))


# -- closed-form fast path over out-degrees (heavy-tailed noise only) ------


def _ln_expected_bk_closed_sml(d_outs, q_b, M, alpha, sigma, enforce):
    """Vectorized ln E_{k~rho(D)}[B_k] over an out-degree array, using the
    binomial moment generating function:

        sum_k Bi(k; D, p) e^{c k} = (1 - p + p e^c)^D.

    Algebraically identical to the explicit per-k log-sum-exp (tested)."""
    d = np.asarray(d_outs, dtype=np.float64)
    with np.errstate(divide="ignore"):
        p = q_b * np.minimum(1.0, np.divide(M, np.maximum(d, 1.0)))
        p = np.where(d > 0, p, 0.0)
        c = _SQRT2 * (alpha - 1.0) / sigma
        ln_a = np.log(alpha / (2.0 * alpha - 1.0))
        ln_half = np.log(0.5)
        # ln (1 - p + p e^c) per degree, exact at p = 0 and p = 1
        ln_mgf = d * np.logaddexp(np.log1p(-np.minimum(p, 1.0 - 1e-300)), np.log(p) + c)
        ln_mgf = np.where(p >= 1.0, d * c, ln_mgf)
        ln_sum_bk = np.logaddexp(ln_a + ln_mgf, ln_half)  # sum_k Bi * B_k
        ln_q = np.log(q_b)
        ln_1mq = np.log1p(-q_b) if q_b < 1.0 else -np.inf
        ln_b_half = np.logaddexp(ln_a + 0.5 * c, ln_half)
        if enforce:
            out = np.logaddexp(ln_q + ln_b_half, ln_1mq + ln_sum_bk)
        else:
            ln_sum_bk_shift = np.logaddexp(ln_a + 0.5 * c + ln_mgf, ln_half)
            out = np.logaddexp(ln_1mq + ln_sum_bk, ln_q + ln_sum_bk_shift)
    return out


# -- the order-alpha guarantee --------------------------------------------


def rdp_gamma(cfg: AccountantConfig, sigma: float, alpha: float):
    """Composed order-alpha Renyi guarantee

        gamma = max_{D_out in [0, cfg.max_dout]}
                (iterations / (alpha - 1)) * ln E_{k ~ rho(D_out)}[B_k]

    evaluated by the explicit per-k log-sum-exp scan. Returns (gamma,
    argmax out-degree). Raises on non-finite results.
    """
    _check_alpha_sigma(alpha, sigma)
    ln_e, arg = _kernels.ln_bound_scan(
        cfg.max_dout,
        cfg.q_b,
        cfg.M,
        alpha,
        sigma,
        cfg.enforce_no_overlap,
        cfg.noise_kind == NOISE_GAUSSIAN,
    )
    gamma = cfg.iterations / (alpha - 1.0) * ln_e
    if not np.isfinite(gamma):
        raise AccountantOverflowError(
            f"gamma is not finite (alpha={alpha}, sigma={sigma}, ln_e={ln_e})"
        )
    return float(gamma), int(arg)


def _gamma_grid(cfg: AccountantConfig, sigma: float):
    """(gammas, argmax_douts) over cfg.alpha_grid.

    Heavy-tailed noise uses the closed-form degree scan (fast, exact);
    Gaussian noise has no closed form and runs the explicit kernel per order.
    """
    alphas = cfg.alpha_grid
    if cfg.noise_kind == NOISE_SML:
        d = np.arange(cfg.max_dout + 1)
        gammas = np.empty(len(alphas))
        args = np.empty(len(alphas), dtype=np.int64)
        for i, a in enumerate(alphas):
            ln_e = _ln_expected_bk_closed_sml(
                d, cfg.q_b, cfg.M, a, sigma, cfg.enforce_no_overlap
            )
            j = int(np.argmax(ln_e))
            args[i] = j
            gammas[i] = cfg.iterations / (a - 1.0) * ln_e[j]
    else:
        gammas = np.empty(len(alphas))
        args = np.empty(len(alphas), dtype=np.int64)
        for i, a in enumerate(alphas):
            ln_e, j = _kernels.ln_bound_scan(
                cfg.max_dout, cfg.q_b, cfg.M, a, sigma, cfg.enforce_no_overlap, True
            )
            gammas[i] = cfg.iterations / (a - 1.0) * ln_e
            args[i] = j
    return gammas, args


def rdp_to_dp(gamma_composed: float, alpha: float, delta: float) -> float:
    """Convert a composed order-alpha Renyi guarantee into epsilon at delta:

        eps = gamma + ln((alpha-1)/alpha) - (ln delta + ln alpha)/(alpha-1).

    ``gamma_composed`` must already include the iteration count.
    """
    if not (alpha > 1.0):
        raise ConfigError(f"alpha={alpha} must be > 1")
    if not (0.0 < delta < 1.0):
        raise ConfigError(f"delta={delta} outside (0, 1)")
    return float(
        gamma_composed
        + np.log((alpha - 1.0) / alpha)
        - (np.log(delta) + np.log(alpha)) / (alpha - 1.0)
    )


@dataclass(frozen=True)
class AccountedEpsilon:
    epsilon: float
    alpha: float
    gamma: float
    argmax_dout: int


def accounted_epsilon(cfg: AccountantConfig, sigma: float) -> AccountedEpsilon:
    """Best epsilon over the order grid for a given noise scale."""
    if not (sigma > 0.0):
        raise ConfigError(f"sigma={sigma} must be > 0")
    gammas, args = _gamma_grid(cfg, sigma)
    eps = np.array(
        [rdp_to_dp(g, a, cfg.delta) for g, a in zip(gammas, cfg.alpha_grid)]
    )
    i = int(np.argmin(eps))
    if not np.isfinite(eps[i]):
        raise AccountantOverflowError(f"epsilon not finite at sigma={sigma}")
    return AccountedEpsilon(
        float(eps[i]), float(cfg.alpha_grid[i]), float(gammas[i]), int(args[i])
    )


@dataclass(frozen=True)
class CalibrationResult:
    sigma: float
    alpha: float
    epsilon: float
    gamma: float
    argmax_dout: int


def calibrate_sigma(eps_target: float, cfg: AccountantConfig) -> CalibrationResult:
    """Smallest sigma (relative tolerance 1e-3) whose accounted epsilon is
    <= eps_target, by exponential bracketing then bisection over
    [1e-3, 1e6]. Raises CalibrationError when the target is unreachable."""
    if not np.isfinite(eps_target) or eps_target <= 0.0:
        raise CalibrationError(f"eps_target={eps_target} must be positive and finite")

    def eps_at(sig: float) -> float:
        try:
            return accounted_epsilon(cfg, sig).epsilon
        except AccountantOverflowError:
            return np.inf

    # grow hi until it satisfies the target (epsilon decreases with sigma)
    hi = 1.0
    while eps_at(hi) > eps_target:
        hi *= 4.0
        if hi > SIGMA_MAX:
            if eps_at(SIGMA_MAX) > eps_target:
                raise CalibrationError(
                    f"eps_target={eps_target} unreachable: accounted epsilon at "
                    f"sigma={SIGMA_MAX:g} is {eps_at(SIGMA_MAX):.6g}"
                )
            hi = SIGMA_MAX
            break
    # shrink hi while smaller scales still satisfy
    while hi > SIGMA_MIN and eps_at(max(hi / 4.0, SIGMA_MIN)) <= eps_target:
        hi = max(hi / 4.0, SIGMA_MIN)
    if hi > SIGMA_MIN:
        lo = max(hi / 4.0, SIGMA_MIN)  # violates the target by loop exit
        while hi / lo > 1.0 + 1e-3:
            mid = float(np.sqrt(hi * lo))
            if eps_at(mid) <= eps_target:
                hi = mid
            else:
                lo = mid
    acc = accounted_epsilon(cfg, hi)
    return CalibrationResult(float(hi), acc.alpha, acc.epsilon, acc.gamma, acc.argmax_dout)


# -- comparisons and limits ------------------------------------------------


def gaussian_sigma_to_match_ak(k: float, alpha: float, sigma_sml: float) -> float:
    """Gaussian scale equating the dominant exponents

        alpha (alpha-1) k^2 / (2 sigma_G^2) = sqrt2 (alpha-1) k / sigma_sml,

    i.e. sigma_G = sqrt(alpha k sigma_sml / (2 sqrt2)); grows as Theta(sqrt k)
    while the heavy-tailed scale stays flat.
    """
    if k <= 0.0:
        raise ConfigError(f"k={k} must be > 0")
    _check_alpha_sigma(alpha, sigma_sml)
    return float(np.sqrt(alpha * k * sigma_sml / (2.0 * _SQRT2)))


def precision_upper_bound(eps: float, delta: float, num_classes: int) -> float:
    """Ceiling on any class's attainable precision when embeddings are
    released under (eps, delta) node-level privacy with balanced classes:

        (e^eps + delta (C - 1)) / (C - 1 + e^eps).

    Tends to 1/C as eps, delta -> 0 and to 1 as eps -> infinity.
    """
    if num_classes < 2:
        raise ConfigError(f"num_classes={num_classes} must be >= 2")
    if eps < 0.0:
        raise ConfigError(f"eps={eps} negative")
    if not (0.0 <= delta <= 1.0):
        raise ConfigError(f"delta={delta} outside [0, 1]")
    if eps > 700.0:
        return 1.0
    e = np.exp(eps)
    c1 = num_classes - 1.0
    return float((e + delta * c1) / (c1 + e))


def config_with(cfg: AccountantConfig, **kw) -> AccountantConfig:
    return replace(cfg, **kw)
