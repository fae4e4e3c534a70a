"""White-box privacy audit with Dirac gradient canaries.

Each audited iteration runs the normal private step — sample a batch, clip
per-sub-graph gradients, sum — then draws a canary direction g_c = [k, 0,
..., 0] with k sampled from the accountant's sensitivity mixture at the
audited out-degree, inserts g_c into the gradient sum with probability q_b
(the same probability with which a real node's sub-graph would enter), adds
the noise, and logs two projections of the released update g_t:

    o_prime = <g_t, g_c>           (score under "canary present")
    o_star  = <g_t - g_c, g_c>     (score under "canary absent")

Both streams are recorded every iteration and the model update continues
from g_t, so the audit observes exactly the mechanism the accountant
analyzes. A threshold attack on the two score populations yields an attack
accuracy, and exact binomial (Clopper-Pearson) upper bounds on its error
rates yield a statistically sound empirical lower estimate of the privacy
parameter; soundness means that estimate never exceeds the accounted
epsilon of the audited configuration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import beta

from . import gnn
from .accountant import rho_pmf, rho_pmf_no_enforce
from .errors import ConfigError
from .graph import Graph, NodeSplit
from .noise import KIND_SML, NoiseSpec, sample_noise
from .sampler import SamplerConfig, heter_poisson
from .seeding import named_streams
from .trainer import TrainConfig, resolve_sigma


@dataclass
class AuditObservations:
    o_star: np.ndarray
    o_prime: np.ndarray
    canary_norms: np.ndarray
    trials: int
    sigma: float
    theoretical_epsilon: float

    def __post_init__(self):
        if not (len(self.o_star) == len(self.o_prime) == len(self.canary_norms) == self.trials):
            raise ConfigError("observation streams must have equal length")
        if self.trials and not (
            np.all(np.isfinite(self.o_star)) and np.all(np.isfinite(self.o_prime))
        ):
            raise ConfigError("non-finite audit scores")

    def to_csv(self) -> str:
        lines = ["trial,score_star,score_prime,k"]
        for i in range(self.trials):
            lines.append(
                f"{i},{float(self.o_star[i])!r},"
                f"{float(self.o_prime[i])!r},{float(self.canary_norms[i])!r}"
            )
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class AuditResult:
    best_attack_accuracy: float
    empirical_eps: float
    threshold: float
    confidence: float

    def to_json(self) -> dict:
        return {
            "best_attack_accuracy": self.best_attack_accuracy,
            "empirical_eps": self.empirical_eps,
            "threshold": self.threshold,
            "confidence": self.confidence,
        }


def run_audit(
    g: Graph,
    split: NodeSplit,
    cfg: TrainConfig,
    trials: int,
    audited_dout: int | None = None,
    canary_index: int = 0,
) -> AuditObservations:
    """Collect one (o_star, o_prime) pair per iteration over ``trials``
    iterations of a continuing training run.

    The reported theoretical epsilon is the accounted guarantee of ``cfg``
    itself (its own iteration count); each audited trial observes a single
    iteration of the same per-iteration mechanism, whose leakage the
    composed guarantee upper-bounds.
    """
    if cfg.noise_kind != KIND_SML:
        raise ConfigError("audit requires the heavy-tailed (sml) noise kind")
    if trials < 1:
        raise ConfigError(f"trials={trials} must be >= 1")
    if cfg.q_b <= 0.0:
        raise ConfigError("audit requires q_b > 0")
    streams = named_streams(cfg.seed)
    sigma, epsilon, _ = resolve_sigma(cfg, g)

    params = gnn.init_params(
        cfg.arch, g.num_features, cfg.d_hid, g.num_classes, streams["init"],
        gin_lambda=cfg.gin_lambda_init,
    )
    w = params.to_vector()
    P = len(w)
    if not (0 <= canary_index < P):
        raise ConfigError(
            f"canary index {canary_index} outside the {P}-parameter vector"
        )
    d_audit = int(audited_dout) if audited_dout is not None else int(np.max(g.out_degrees))
    pmf = (
        rho_pmf(d_audit, cfg.q_b, cfg.M)
        if cfg.enforce_no_overlap
        else rho_pmf_no_enforce(d_audit, cfg.q_b, cfg.M)
    )
    support, probs = pmf.support, pmf.probs()

    sampler_cfg = SamplerConfig(
        q_b=cfg.q_b, M=cfg.M, enforce_no_overlap=cfg.enforce_no_overlap
    )
    noise_spec = NoiseSpec(KIND_SML, sigma, P) if sigma > 0.0 else None
    train_ids = np.asarray(split.train_ids, dtype=np.int64)
    audit_rng = streams["audit"]

    o_star = np.empty(trials)
    o_prime = np.empty(trials)
    ks = audit_rng.choice(support, size=trials, p=probs)
    insert = audit_rng.random(trials) < cfg.q_b
    for t in range(trials):
        batch = heter_poisson(g, train_ids, sampler_cfg, streams["sampler"])
        _, clipped_sum, _ = gnn.batch_losses_and_clipped_sum(params, batch)
        g_t = clipped_sum.flat
        k = float(ks[t])
        if insert[t]:
            g_t = g_t.copy()
            g_t[canary_index] += k
        if noise_spec is not None:
            g_t = g_t + sample_noise(noise_spec, streams["noise"])
        # scores: <g_t, g_c> and <g_t - g_c, g_c> with g_c = k * e_canary
        o_prime[t] = k * g_t[canary_index]
        o_star[t] = k * (g_t[canary_index] - k)
        w = w - cfg.eta * g_t
        params = params.replace_vector(w)
    return AuditObservations(
        o_star=o_star,
        o_prime=o_prime,
        canary_norms=ks.astype(np.float64),
        trials=trials,
        sigma=sigma,
        theoretical_epsilon=epsilon,
    )


def _threshold_grid(pooled: np.ndarray) -> np.ndarray:
    vals = np.unique(pooled)
    if len(vals) == 1:
        return vals
    mids = 0.5 * (vals[1:] + vals[:-1])
    return np.unique(np.concatenate([vals, mids]))


def attack_accuracy(obs: AuditObservations) -> tuple[float, float]:
    """Best balanced accuracy (TPR+TNR)/2 of the threshold test
    "declare canary-present when score > threshold", over a sweep of the
    pooled score range."""
    if obs.trials == 0:
        raise ConfigError("empty observations")
    thresholds = _threshold_grid(np.concatenate([obs.o_prime, obs.o_star]))
    # P(o_prime > theta) and P(o_star > theta) for all thetas at once
    sp = np.sort(obs.o_prime)
    ss = np.sort(obs.o_star)
    tpr = 1.0 - np.searchsorted(sp, thresholds, side="right") / obs.trials
    fpr = 1.0 - np.searchsorted(ss, thresholds, side="right") / obs.trials
    acc = 0.5 * (tpr + (1.0 - fpr))
    i = int(np.argmax(acc))
    return float(acc[i]), float(thresholds[i])


def _clopper_pearson_upper(x: int, n: int, confidence: float) -> float:
    """One-sided exact upper confidence bound for a binomial proportion."""
    if x >= n:
        return 1.0
    return float(beta.ppf(confidence, x + 1, n - x))


def empirical_epsilon(
    obs: AuditObservations, delta: float, confidence: float = 0.95
) -> tuple[float, float]:
    """Sound empirical lower estimate of the privacy parameter from the
    attack's error rates at the best threshold:

        eps = max( ln((1 - delta - FPR_hi) / FNR_hi),
                   ln((1 - delta - FNR_hi) / FPR_hi) ),  floored at 0,

    with FPR_hi/FNR_hi one-sided Clopper-Pearson upper bounds. Returns
    (eps, threshold).
    """
    if not (0.0 < confidence < 1.0):
        raise ConfigError(f"confidence={confidence} outside (0, 1)")
    if not (0.0 <= delta < 1.0):
        raise ConfigError(f"delta={delta} outside [0, 1)")
    if obs.trials == 0:
        raise ConfigError("empty observations")
    _, threshold = attack_accuracy(obs)
    n = obs.trials
    fp = int(np.sum(obs.o_star > threshold))
    fn = int(np.sum(obs.o_prime <= threshold))
    fpr_hi = _clopper_pearson_upper(fp, n, confidence)
    fnr_hi = _clopper_pearson_upper(fn, n, confidence)
    with np.errstate(divide="ignore", invalid="ignore"):
        cands = []
        for a_hi, b_hi in ((fpr_hi, fnr_hi), (fnr_hi, fpr_hi)):
            num = 1.0 - delta - a_hi
            cands.append(np.log(num / b_hi) if num > 0.0 and b_hi > 0.0 else -np.inf)
    return max(0.0, float(max(cands))), float(threshold)


def audit_result(
    obs: AuditObservations, delta: float, confidence: float = 0.95
) -> AuditResult:
    acc, _ = attack_accuracy(obs)
    eps, threshold = empirical_epsilon(obs, delta, confidence)
    return AuditResult(
        best_attack_accuracy=acc,
        empirical_eps=eps,
        threshold=threshold,
        confidence=confidence,
    )
