"""Private training loop, evaluation, and the added-node impact experiment.

Each iteration samples one sub-graph batch, sums the per-sub-graph
gradients after clipping each to norm 0.5, adds noise to the SUM (not the
mean — the learning rate must absorb batch scale), and takes one SGD step.
The model update consumes only the noised sum, so everything after the
noise injection is post-processing.

Evaluation never lets a test node aggregate a training node: transductive
inference samples up to N_test neighbors uniformly from the test set only;
inductive inference uses all neighbors of a disjoint test graph.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import accountant as acct
from . import gnn
from .errors import ConfigError, TrainingDivergedError
from .graph import Graph, NodeSplit, add_node_with_out_edges, gen_erdos_renyi
from .noise import KIND_GAUSSIAN, KIND_SML, NoiseSpec, sample_noise
from .sampler import SamplerConfig, batch_from_members, heter_poisson
from .seeding import named_streams

MODE_TRANSDUCTIVE = "transductive"
MODE_INDUCTIVE = "inductive"


@dataclass(frozen=True)
class TrainConfig:
    arch: str = gnn.ARCH_GCN
    iterations: int = 60
    eta: float = 2e-3
    q_b: float = 0.25
    M: float = 1.0
    sigma: float | None = None  # explicit noise scale; 0 disables noise
    eps_target: float | None = None  # calibrate sigma before iteration 1
    delta: float = 1e-5
    noise_kind: str = KIND_SML
    enforce_no_overlap: bool = True
    d_hid: int = 128
    n_test: int = 5
    seed: int = 0
    gin_lambda_init: float = 0.0
    gin_lambda_trainable: bool = True
    max_dout: int | None = None  # accountant degree cap; default num_nodes - 1

    def __post_init__(self):
        if self.arch not in gnn.ARCHS:
            raise ConfigError(f"unknown architecture {self.arch!r}")
        if self.iterations < 1:
            raise ConfigError(f"iterations={self.iterations} must be >= 1")
        if not (self.eta > 0.0):
            raise ConfigError(f"eta={self.eta} must be > 0")
        if not (0.0 <= self.q_b <= 1.0):
            raise ConfigError(f"q_b={self.q_b} outside [0, 1]")
        if self.M < 0.0:
            raise ConfigError(f"M={self.M} negative")
        if self.n_test < 0:
            raise ConfigError(f"n_test={self.n_test} negative")
        if (self.sigma is None) == (self.eps_target is None):
            raise ConfigError("exactly one of sigma and eps_target must be set")
        if self.sigma is not None and self.sigma < 0.0:
            raise ConfigError(f"sigma={self.sigma} negative")
        if self.eps_target is not None:
            if self.eps_target <= 0.0:
                raise ConfigError(f"eps_target={self.eps_target} must be > 0")
            if self.q_b == 0.0:
                raise ConfigError("cannot calibrate a target epsilon with q_b=0")
        if self.noise_kind not in (KIND_SML, KIND_GAUSSIAN):
            raise ConfigError(f"unknown noise kind {self.noise_kind!r}")
        if not (0.0 < self.delta < 1.0):
            raise ConfigError(f"delta={self.delta} outside (0, 1)")


@dataclass
class EvalReport:
    accuracy: float
    precisions: np.ndarray
    mean_precision: float
    mode: str

    def to_json(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precisions": [float(p) for p in self.precisions],
            "mean_precision": self.mean_precision,
            "mode": self.mode,
        }


@dataclass
class RunReport:
    losses: list  # per-iteration mean batch loss; None for empty batches
    accuracy: float
    precisions: np.ndarray
    mean_precision: float
    epsilon: float  # accounted; inf for sigma=0, 0 for q_b=0
    delta: float
    sigma: float
    best_alpha: float | None
    zero_coverage: bool
    wall_clock: float
    config: TrainConfig = field(repr=False, default=None)

    def canonical_dict(self) -> dict:
        """Everything except wall-clock time; bit-stable under a fixed
        (graph, split, config, seed)."""
        return {
            "losses": [None if l is None else float(l) for l in self.losses],
            "accuracy": float(self.accuracy),
            "precisions": [float(p) for p in self.precisions],
            "mean_precision": float(self.mean_precision),
            "epsilon": repr(float(self.epsilon)),
            "delta": float(self.delta),
            "sigma": float(self.sigma),
            "best_alpha": None if self.best_alpha is None else float(self.best_alpha),
            "zero_coverage": bool(self.zero_coverage),
        }

    def to_json(self) -> dict:
        out = self.canonical_dict()
        out["epsilon"] = float(self.epsilon) if np.isfinite(self.epsilon) else "inf"
        out["wall_clock_s"] = float(self.wall_clock)
        return out

    def loss_csv(self) -> str:
        lines = ["iter,loss"]
        for i, l in enumerate(self.losses, start=1):
            lines.append(f"{i},{'' if l is None else repr(float(l))}")
        return "\n".join(lines) + "\n"


def _accountant_config(cfg: TrainConfig, g: Graph) -> acct.AccountantConfig:
    max_dout = cfg.max_dout if cfg.max_dout is not None else g.num_nodes - 1
    return acct.AccountantConfig(
        q_b=cfg.q_b,
        M=cfg.M,
        iterations=cfg.iterations,
        delta=cfg.delta,
        max_dout=max_dout,
        enforce_no_overlap=cfg.enforce_no_overlap,
        noise_kind=cfg.noise_kind,
    )


def resolve_sigma(cfg: TrainConfig, g: Graph):
    """(sigma, epsilon, best_alpha) before iteration 1. Explicit sigma is
    accounted; an eps target is calibrated."""
    if cfg.q_b == 0.0:
        return float(cfg.sigma), 0.0, None
    if cfg.eps_target is not None:
        res = acct.calibrate_sigma(cfg.eps_target, _accountant_config(cfg, g))
        return res.sigma, res.epsilon, res.alpha
    if cfg.sigma == 0.0:
        return 0.0, np.inf, None
    acc = acct.accounted_epsilon(_accountant_config(cfg, g), cfg.sigma)
    return float(cfg.sigma), acc.epsilon, acc.alpha


def train(g: Graph, split: NodeSplit, cfg: TrainConfig):
    """Run the private loop; returns (params, RunReport)."""
    t0 = time.perf_counter()
    streams = named_streams(cfg.seed)
    sigma, epsilon, best_alpha = resolve_sigma(cfg, g)

    params = gnn.init_params(
        cfg.arch, g.num_features, cfg.d_hid, g.num_classes, streams["init"],
        gin_lambda=cfg.gin_lambda_init,
    )
    w = params.to_vector()
    noise_spec = None
    if sigma > 0.0:
        noise_spec = NoiseSpec(kind=cfg.noise_kind, sigma=sigma, dim=len(w))
    sampler_cfg = None
    if cfg.q_b > 0.0:
        sampler_cfg = SamplerConfig(
            q_b=cfg.q_b, M=cfg.M, enforce_no_overlap=cfg.enforce_no_overlap
        )
    train_ids = np.asarray(split.train_ids, dtype=np.int64)

    losses: list = []
    nonempty = 0
    for it in range(1, cfg.iterations + 1):
        if sampler_cfg is not None:
            batch = heter_poisson(g, train_ids, sampler_cfg, streams["sampler"])
            batch_losses, clipped_sum, _ = gnn.batch_losses_and_clipped_sum(
                params, batch
            )
            g_t = clipped_sum.flat
            if len(batch_losses):
                nonempty += 1
                mean_loss = float(np.mean(batch_losses))
                if not np.isfinite(mean_loss):
                    raise TrainingDivergedError(
                        it, f"non-finite loss {mean_loss} at iteration {it}"
                    )
                losses.append(mean_loss)
            else:
                losses.append(None)
        else:
            g_t = np.zeros(len(w))
            losses.append(None)
        if noise_spec is not None:
            g_t = g_t + sample_noise(noise_spec, streams["noise"])
        if not np.all(np.isfinite(g_t)):
            raise TrainingDivergedError(it, f"non-finite update at iteration {it}")
        if cfg.arch == gnn.ARCH_GIN and not cfg.gin_lambda_trainable:
            g_t = g_t.copy()
            g_t[-1] = 0.0
        w = w - cfg.eta * g_t
        params = params.replace_vector(w)

    ev = evaluate(params, g, split, cfg, rng=streams["eval"])
    report = RunReport(
        losses=losses,
        accuracy=ev.accuracy,
        precisions=ev.precisions,
        mean_precision=ev.mean_precision,
        epsilon=epsilon,
        delta=cfg.delta,
        sigma=sigma,
        best_alpha=best_alpha,
        zero_coverage=(nonempty == 0),
        wall_clock=time.perf_counter() - t0,
        config=cfg,
    )
    return params, report


# -- evaluation ------------------------------------------------------------


def _precision_per_class(pred: np.ndarray, truth: np.ndarray, C: int) -> np.ndarray:
    """Per-class precision; classes never predicted contribute 0."""
    prec = np.zeros(C)
    for c in range(C):
        hit = pred == c
        if hit.any():
            prec[c] = float(np.mean(truth[hit] == c))
    return prec


def evaluate(
    params: gnn.ModelParams,
    g: Graph,
    split: NodeSplit,
    cfg: TrainConfig,
    mode: str = MODE_TRANSDUCTIVE,
    test_graph: Graph | None = None,
    rng: np.random.Generator | None = None,
) -> EvalReport:
    """Accuracy and class-averaged precision on the test side.

    Transductive: each test node aggregates at most n_test neighbors drawn
    uniformly without replacement from its test-set in-neighbors — training
    nodes are never touched. Inductive: every node of the disjoint
    ``test_graph`` aggregates all its neighbors there.
    """
    if rng is None:
        rng = named_streams(cfg.seed)["eval"]
    if mode == MODE_TRANSDUCTIVE:
        test_ids = np.asarray(split.test_ids, dtype=np.int64)
        if len(test_ids) == 0:
            raise ConfigError("empty test split")
        sorted_test = np.sort(test_ids)
        centrals = sorted_test
        member_lists = []
        for i in centrals:
            nb = g.in_neighbors(int(i))
            if len(nb):
                pos = np.searchsorted(sorted_test, nb)
                pos = np.minimum(pos, len(sorted_test) - 1)
                nb = nb[sorted_test[pos] == nb]
            take = min(cfg.n_test, len(nb))
            chosen = rng.choice(nb, size=take, replace=False) if take else nb[:0]
            member_lists.append(np.sort(chosen))
        batch = batch_from_members(g, centrals, member_lists)
        truth = g.labels[centrals]
    elif mode == MODE_INDUCTIVE:
        if test_graph is None:
            raise ConfigError("inductive evaluation requires test_graph")
        all_ids = np.arange(test_graph.num_nodes)
        member_lists = [test_graph.in_neighbors(int(i)) for i in all_ids]
        batch = batch_from_members(test_graph, all_ids, member_lists)
        truth = test_graph.labels
    else:
        raise ConfigError(f"unknown evaluation mode {mode!r}")

    logits = gnn.batch_forward(params, batch)
    pred = np.argmax(logits, axis=1)
    C = logits.shape[1]
    accuracy = float(np.mean(pred == truth))
    prec = _precision_per_class(pred, truth, C)
    return EvalReport(accuracy, prec, float(prec.mean()), mode)


# -- added-node gradient impact (non-private, whole-graph loss) ------------


@dataclass(frozen=True)
class ImpactRow:
    chi: float
    mean_delta: float
    std_delta: float


def impact_experiment(
    n: int,
    p: float,
    d: int,
    num_classes: int,
    chi_grid,
    repeats: int,
    seed: int,
    arch: str = gnn.ARCH_GCN,
    d_hid: int = 16,
) -> list[ImpactRow]:
    """Measure how far adding one node with round(chi*n) out-edges moves
    the whole-graph mean-loss gradient. Paired design: within a repeat the
    same base graph and parameters serve every chi.
    """
    chis = [float(c) for c in chi_grid]
    if any(not (0.0 <= c <= 1.0) for c in chis):
        raise ConfigError("chi values must lie in [0, 1]")
    streams = named_streams(seed)
    rng = streams["data"]
    deltas = {c: [] for c in chis}
    for _ in range(repeats):
        base = gen_erdos_renyi(n, p, d, num_classes, rng)
        params = gnn.init_params(arch, d, d_hid, num_classes, streams["init"])
        _, g_star = gnn.full_graph_loss_and_grad(params, base)
        feature = rng.normal(size=d)
        label = int(rng.integers(num_classes))
        order = rng.permutation(n)
        for c in chis:
            m = int(round(c * n))
            targets = np.sort(order[:m])
            g_prime = add_node_with_out_edges(base, feature, label, targets)
            _, g_pr = gnn.full_graph_loss_and_grad(params, g_prime)
            deltas[c].append(float(np.linalg.norm(g_pr.flat - g_star.flat)))
    return [
        ImpactRow(c, float(np.mean(deltas[c])), float(np.std(deltas[c])))
        for c in chis
    ]
