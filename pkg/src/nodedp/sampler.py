"""Sub-graph sampling with per-node participation bounds.

Each input node independently becomes the central node of its own sub-graph
with probability q_b; a central's candidate neighbors are its in-neighbors,
and each candidate z joins independently with probability min(1, M / D_out(z))
where D_out(z) is z's out-degree in the whole graph. The degree-inverse clamp
caps the expected number of sub-graphs any single node lands in at q_b * M
regardless of how connected it is, which is what makes per-node sensitivity
accounting possible.

After a batch is formed, any sampled neighbor that is itself a central
elsewhere has its feature rows zeroed in the sub-graphs where it appears as
a peripheral (edges and degree contributions are kept); its own sub-graph
keeps its true features. This confines each node's unprotected influence to
at most one sub-graph.

Coupled sampling runs the same seed over a graph and the same graph plus one
extra node z, with coins keyed by node id, so the two runs differ only in
coins involving z; the realized number of differing sub-graphs is the
sensitivity index the accountant's mixture law describes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigError
from .graph import Graph, add_node_with_out_edges
from .seeding import KeyedCoins, StreamCoins, keyed_uniform

MODE_TRAIN = "train"
MODE_INFERENCE = "inference"


@dataclass(frozen=True)
class SamplerConfig:
    q_b: float
    M: float
    enforce_no_overlap: bool = True
    mode: str = MODE_TRAIN
    test_ids: np.ndarray | None = None

    def __post_init__(self):
        if not (0.0 < self.q_b <= 1.0):
            raise ConfigError(f"q_b={self.q_b} outside (0, 1]")
        if not (self.M >= 0.0):
            raise ConfigError(f"M={self.M} must be >= 0")
        if self.mode not in (MODE_TRAIN, MODE_INFERENCE):
            raise ConfigError(f"unknown sampler mode {self.mode!r}")
        if self.mode == MODE_INFERENCE:
            if self.test_ids is None:
                raise ConfigError("inference mode requires test_ids")
            ids = np.unique(np.asarray(self.test_ids, dtype=np.int64))
            object.__setattr__(self, "test_ids", ids)


@dataclass(frozen=True)
class SubGraph:
    """One induced sub-graph: a central node, its sampled neighbors, their
    feature rows (possibly zeroed), and the edges among the members."""

    central: int
    peripherals: np.ndarray  # sorted node ids, excludes the central
    members: np.ndarray  # sorted node ids, includes the central
    central_pos: int  # index of the central within members
    features: np.ndarray  # (len(members), d); nulled rows are all-zero
    local_edges: np.ndarray  # (ne, 2) indices into members
    label: int
    nulled: np.ndarray  # bool per member


@dataclass
class SubGraphBatch:
    """A batch of sub-graphs in packed (structure-of-arrays) form.

    ``members`` concatenates each sub-graph's sorted member ids;
    ``offsets[b]:offsets[b+1]`` is sub-graph b's slice. Edge endpoints are
    row indices into the packed arrays (not node ids). ``subgraphs``
    materializes the per-sub-graph view lazily.
    """

    central_ids: np.ndarray  # (B,)
    labels: np.ndarray  # (B,)
    members: np.ndarray  # (total_members,) node ids
    offsets: np.ndarray  # (B+1,)
    central_pos: np.ndarray  # (B,) local index within the slice
    features: np.ndarray  # (total_members, d), nulling applied
    edge_src: np.ndarray  # (total_edges,) packed row indices
    edge_dst: np.ndarray  # (total_edges,)
    edge_offsets: np.ndarray  # (B+1,)
    central_set: np.ndarray  # sorted unique central ids
    nulled: np.ndarray  # (total_members,) bool
    stats: "SamplerStats"
    _subgraphs: list | None = field(default=None, repr=False)

    @property
    def num_subgraphs(self) -> int:
        return len(self.central_ids)

    @property
    def subgraphs(self) -> list[SubGraph]:
        if self._subgraphs is None:
            out = []
            for b in range(self.num_subgraphs):
                lo, hi = self.offsets[b], self.offsets[b + 1]
                elo, ehi = self.edge_offsets[b], self.edge_offsets[b + 1]
                mem = self.members[lo:hi]
                cp = int(self.central_pos[b])
                out.append(
                    SubGraph(
                        central=int(self.central_ids[b]),
                        peripherals=np.delete(mem, cp),
                        members=mem,
                        central_pos=cp,
                        features=self.features[lo:hi],
                        local_edges=np.stack(
                            [self.edge_src[elo:ehi] - lo, self.edge_dst[elo:ehi] - lo],
                            axis=1,
                        ),
                        label=int(self.labels[b]),
                        nulled=self.nulled[lo:hi],
                    )
                )
            self._subgraphs = out
        return self._subgraphs

    def to_json(self) -> dict:
        return {
            "num_subgraphs": int(self.num_subgraphs),
            "subgraphs": [
                {
                    "central": int(s.central),
                    "label": int(s.label),
                    "peripherals": s.peripherals.tolist(),
                    "nulled": np.asarray(s.members)[s.nulled].tolist(),
                    "local_edges": s.local_edges.tolist(),
                }
                for s in self.subgraphs
            ],
            "central_set": self.central_set.tolist(),
            "stats": self.stats.to_json(),
        }


@dataclass(frozen=True)
class SamplerStats:
    num_centrals: int
    num_peripheral_slots: int  # sampled peripheral occurrences (overlap-pass work)
    num_nulled: int
    num_edges: int
    num_candidates: int  # neighbor coins flipped

    def to_json(self) -> dict:
        return {
            "num_centrals": self.num_centrals,
            "num_peripheral_slots": self.num_peripheral_slots,
            "num_nulled": self.num_nulled,
            "num_edges": self.num_edges,
            "num_candidates": self.num_candidates,
        }


def _inclusion_probs(out_degrees: np.ndarray, M: float) -> np.ndarray:
    """min(1, M / D_out) with the zero-degree convention: a node with no
    out-edges cannot appear as anyone's candidate through the graph, but if
    passed explicitly it is kept whenever M > 0."""
    p = np.ones(len(out_degrees))
    pos = out_degrees > 0
    p[pos] = np.minimum(1.0, M / out_degrees[pos])
    if M == 0.0:
        p[:] = 0.0
    return p


def neighbor_sampling(
    g: Graph, candidates, M: float, rng: np.random.Generator
) -> np.ndarray:
    """Independently keep each candidate with probability min(1, M/D_out),
    D_out taken from the whole graph. Returns the kept ids, sorted."""
    if M < 0.0:
        raise ConfigError(f"M={M} must be >= 0")
    cand = np.unique(np.asarray(candidates, dtype=np.int64))
    if len(cand) and (cand[0] < 0 or cand[-1] >= g.num_nodes):
        raise ConfigError("candidate id outside the graph")
    p = _inclusion_probs(g.out_degrees[cand], M)
    return cand[rng.random(len(cand)) < p]


def _as_coins(rng):
    if isinstance(rng, (KeyedCoins, StreamCoins)):
        return rng
    if isinstance(rng, np.random.Generator):
        return StreamCoins(rng)
    raise ConfigError(f"rng must be a Generator, KeyedCoins or StreamCoins; got {type(rng)!r}")


def _in_sorted(sorted_ids: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Membership mask of values in a sorted id array."""
    if len(sorted_ids) == 0 or len(values) == 0:
        return np.zeros(len(values), dtype=bool)
    pos = np.searchsorted(sorted_ids, values)
    pos = np.minimum(pos, len(sorted_ids) - 1)
    return sorted_ids[pos] == values


def heter_poisson(
    g: Graph, input_ids, cfg: SamplerConfig, rng, present_ids=None
) -> SubGraphBatch:
    """Form one batch of sub-graphs.

    ``g`` is the fixed whole graph: all degree-dependent probabilities are
    taken from it. Each id in ``input_ids`` becomes a central independently
    with probability q_b. A central's candidates are its in-neighbors
    (train mode) or its in-neighbors restricted to the configured test ids
    (inference mode); candidates join with probability min(1, M/D_out).
    With overlap enforcement on, peripherals that are centrals anywhere in
    the batch get their feature rows zeroed (edges kept).

    ``present_ids`` optionally names the nodes that exist in the current
    input graph (default: all of g). Nodes outside it are never sampled in
    any role, but their edges still count toward the whole-graph degrees —
    this is what keeps sampling probabilities identical across a pair of
    inputs that differ in one node's participation.
    """
    ids = np.unique(np.asarray(input_ids, dtype=np.int64))
    if len(ids) and (ids[0] < 0 or ids[-1] >= g.num_nodes):
        raise ConfigError("input id outside the graph")
    if cfg.mode == MODE_INFERENCE and len(np.setdiff1d(ids, cfg.test_ids)):
        raise ConfigError("inference mode input_ids must be a subset of test_ids")
    present = None
    if present_ids is not None:
        present = np.unique(np.asarray(present_ids, dtype=np.int64))
        if len(np.setdiff1d(ids, present)):
            raise ConfigError("input_ids must be a subset of present_ids")
    coins = _as_coins(rng)

    u = coins.central(ids)
    centrals = ids[u < cfg.q_b]
    B = len(centrals)
    out_deg = g.out_degrees

    # gather candidate in-neighbors per central
    starts = g.in_ptr[centrals]
    stops = g.in_ptr[centrals + 1]
    counts = stops - starts
    cand_off = np.zeros(B + 1, dtype=np.int64)
    np.cumsum(counts, out=cand_off[1:])
    flat = np.repeat(starts - cand_off[:-1], counts) + np.arange(cand_off[-1])
    cand = g.in_idx[flat] if cand_off[-1] else np.empty(0, dtype=np.int64)
    owner = np.repeat(np.arange(B), counts)

    if present is not None and len(cand):
        keep_elig = _in_sorted(present, cand)
        cand, owner = cand[keep_elig], owner[keep_elig]
    if cfg.mode == MODE_INFERENCE and len(cand):
        keep_elig = _in_sorted(cfg.test_ids, cand)
        cand, owner = cand[keep_elig], owner[keep_elig]

    num_candidates = len(cand)
    if num_candidates:
        p = _inclusion_probs(out_deg[cand], cfg.M)
        u_n = np.empty(num_candidates)
        bounds = np.searchsorted(owner, np.arange(B + 1))
        for b in range(B):
            lo, hi = bounds[b], bounds[b + 1]
            if hi > lo:
                u_n[lo:hi] = coins.neighbor(int(centrals[b]), cand[lo:hi])
        keep = u_n < p
        cand, owner = cand[keep], owner[keep]
    per_count = np.bincount(owner, minlength=B).astype(np.int64)

    # assemble sorted member lists (candidate rows are sorted; insert central)
    offsets = np.zeros(B + 1, dtype=np.int64)
    np.cumsum(per_count + 1, out=offsets[1:])
    total = int(offsets[-1])
    members = np.empty(total, dtype=np.int64)
    central_pos = np.empty(B, dtype=np.int64)
    plo = np.zeros(B + 1, dtype=np.int64)
    np.cumsum(per_count, out=plo[1:])
    for b in range(B):
        row = cand[plo[b] : plo[b + 1]]
        c = centrals[b]
        pos = int(np.searchsorted(row, c))
        lo = offsets[b]
        members[lo : lo + pos] = row[:pos]
        members[lo + pos] = c
        members[lo + pos + 1 : offsets[b + 1]] = row[pos:]
        central_pos[b] = pos

    # induced edges among members, packed row indices
    cap = int(np.sum(out_deg[members])) if total else 0
    e_src = np.empty(cap, dtype=np.int64)
    e_dst = np.empty(cap, dtype=np.int64)
    e_sub = np.empty(cap, dtype=np.int64)
    ne = _kernels.induce_edges(g.out_ptr, g.out_idx, members, offsets, e_src, e_dst, e_sub)
    e_src, e_dst, e_sub = e_src[:ne], e_dst[:ne], e_sub[:ne]
    edge_offsets = np.zeros(B + 1, dtype=np.int64)
    np.cumsum(np.bincount(e_sub, minlength=B).astype(np.int64), out=edge_offsets[1:])

    # overlap nulling: peripherals that are centrals anywhere lose features
    central_set = np.sort(centrals)
    nulled = np.zeros(total, dtype=bool)
    if cfg.enforce_no_overlap and total:
        is_central_here = np.zeros(total, dtype=bool)
        is_central_here[offsets[:-1] + central_pos] = True
        pos = np.searchsorted(central_set, members)
        pos = np.minimum(pos, max(len(central_set) - 1, 0))
        in_central_set = (
            central_set[pos] == members if len(central_set) else np.zeros(total, bool)
        )
        nulled = in_central_set & ~is_central_here

    features = g.features[members].copy() if total else np.empty((0, g.num_features))
    features[nulled] = 0.0

    stats = SamplerStats(
        num_centrals=B,
        num_peripheral_slots=int(len(cand)),
        num_nulled=int(nulled.sum()),
        num_edges=int(ne),
        num_candidates=int(num_candidates),
    )
    return SubGraphBatch(
        central_ids=centrals,
        labels=g.labels[centrals] if B else np.empty(0, dtype=np.int64),
        members=members,
        offsets=offsets,
        central_pos=central_pos,
        features=features,
        edge_src=e_src,
        edge_dst=e_dst,
        edge_offsets=edge_offsets,
        central_set=central_set,
        nulled=nulled,
        stats=stats,
    )


def batch_from_members(g: Graph, centrals, peripheral_lists) -> SubGraphBatch:
    """Pack explicitly chosen sub-graphs (one per central, peripherals given
    per central, no nulling). Used by evaluation and tests."""
    centrals = np.asarray(centrals, dtype=np.int64)
    B = len(centrals)
    if B != len(peripheral_lists):
        raise ConfigError("one peripheral list per central required")
    per_count = np.array([len(p) for p in peripheral_lists], dtype=np.int64)
    offsets = np.zeros(B + 1, dtype=np.int64)
    np.cumsum(per_count + 1, out=offsets[1:])
    total = int(offsets[-1])
    members = np.empty(total, dtype=np.int64)
    central_pos = np.empty(B, dtype=np.int64)
    for b in range(B):
        row = np.unique(np.asarray(peripheral_lists[b], dtype=np.int64))
        if len(row) != per_count[b]:
            raise ConfigError("peripheral list contains duplicates")
        c = int(centrals[b])
        if len(row) and np.any(row == c):
            raise ConfigError("central listed among its peripherals")
        pos = int(np.searchsorted(row, c))
        lo = offsets[b]
        members[lo : lo + pos] = row[:pos]
        members[lo + pos] = c
        members[lo + pos + 1 : offsets[b + 1]] = row[pos:]
        central_pos[b] = pos
    if total and (members.min() < 0 or members.max() >= g.num_nodes):
        raise ConfigError("member id outside the graph")

    cap = int(np.sum(g.out_degrees[members])) if total else 0
    e_src = np.empty(cap, dtype=np.int64)
    e_dst = np.empty(cap, dtype=np.int64)
    e_sub = np.empty(cap, dtype=np.int64)
    ne = _kernels.induce_edges(g.out_ptr, g.out_idx, members, offsets, e_src, e_dst, e_sub)
    edge_offsets = np.zeros(B + 1, dtype=np.int64)
    np.cumsum(np.bincount(e_sub[:ne], minlength=B).astype(np.int64), out=edge_offsets[1:])
    stats = SamplerStats(B, int(per_count.sum()), 0, int(ne), int(per_count.sum()))
    return SubGraphBatch(
        central_ids=centrals,
        labels=g.labels[centrals] if B else np.empty(0, dtype=np.int64),
        members=members,
        offsets=offsets,
        central_pos=central_pos,
        features=g.features[members].copy() if total else np.empty((0, g.num_features)),
        edge_src=e_src[:ne],
        edge_dst=e_dst[:ne],
        edge_offsets=edge_offsets,
        central_set=np.sort(np.unique(centrals)),
        nulled=np.zeros(total, dtype=bool),
        stats=stats,
    )


def single_subgraph_batch(g: Graph, central: int, peripherals) -> SubGraphBatch:
    """Hand-built batch with one sub-graph and no nulling; for tests and
    the audit harness."""
    per = np.unique(np.asarray(peripherals, dtype=np.int64))
    if central in per:
        raise ConfigError("central listed among peripherals")
    members = np.sort(np.append(per, central))
    cp = int(np.searchsorted(members, central))
    offsets = np.array([0, len(members)], dtype=np.int64)
    cap = int(np.sum(g.out_degrees[members]))
    e_src = np.empty(cap, dtype=np.int64)
    e_dst = np.empty(cap, dtype=np.int64)
    e_sub = np.empty(cap, dtype=np.int64)
    ne = _kernels.induce_edges(g.out_ptr, g.out_idx, members, offsets, e_src, e_dst, e_sub)
    stats = SamplerStats(1, len(per), 0, int(ne), len(per))
    return SubGraphBatch(
        central_ids=np.array([central], dtype=np.int64),
        labels=np.array([g.labels[central]], dtype=np.int64),
        members=members,
        offsets=offsets,
        central_pos=np.array([cp], dtype=np.int64),
        features=g.features[members].copy(),
        edge_src=e_src[:ne],
        edge_dst=e_dst[:ne],
        edge_offsets=np.array([0, ne], dtype=np.int64),
        central_set=np.array([central], dtype=np.int64),
        nulled=np.zeros(len(members), dtype=bool),
        stats=stats,
    )


# -- coupled adjacent runs -------------------------------------------------


@dataclass(frozen=True)
class ZSpec:
    """The extra node of the adjacent pair: its feature row, label, the
    nodes it points to, and the nodes that point to it."""

    feature: np.ndarray
    label: int
    out_targets: np.ndarray
    in_sources: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __post_init__(self):
        object.__setattr__(
            self, "out_targets", np.unique(np.asarray(self.out_targets, dtype=np.int64))
        )
        object.__setattr__(
            self, "in_sources", np.unique(np.asarray(self.in_sources, dtype=np.int64))
        )


def coupled_adjacent_sample(
    g_star: Graph, z_spec: ZSpec, cfg: SamplerConfig, seed: int, trial: int = 0
):
    """Sample one batch from the input without z and one from the input
    with z, under coins keyed by node id so all shared nodes flip
    identically. Both runs are driven by the same whole graph (the one
    containing z), so every shared node keeps the same degree-dependent
    probabilities; the runs differ only in z's participation.

    Returns (batch_without_z, batch_with_z, realized sensitivity index k):
    k = 0.5 when z is central (one extra sub-graph; its other appearances
    are nulled), otherwise the number of sub-graphs that sampled z as a
    peripheral. Without overlap enforcement the central case adds the
    peripheral count on top of the 0.5 marker.
    """
    g_prime = add_node_with_out_edges(
        g_star, z_spec.feature, z_spec.label, z_spec.out_targets, z_spec.in_sources
    )
    z = g_star.num_nodes
    coins = KeyedCoins(seed, trial)
    without_z = np.arange(g_star.num_nodes)
    all_prime = np.arange(g_prime.num_nodes)
    batch_a = heter_poisson(g_prime, without_z, cfg, coins, present_ids=without_z)
    batch_b = heter_poisson(g_prime, all_prime, cfg, coins)

    z_central = bool(np.any(batch_b.central_ids == z))
    count = 0
    for b in range(batch_b.num_subgraphs):
        if batch_b.central_ids[b] == z:
            continue
        lo, hi = batch_b.offsets[b], batch_b.offsets[b + 1]
        row = batch_b.members[lo:hi]
        j = np.searchsorted(row, z)
        if j < len(row) and row[j] == z:
            count += 1
    if z_central:
        k = 0.5 if cfg.enforce_no_overlap else 0.5 + count
    else:
        k = float(count)
    return batch_a, batch_b, k


def coupled_realized_k(
    g_star: Graph, z_spec: ZSpec, cfg: SamplerConfig, seed: int, trials: int
) -> np.ndarray:
    """Realized sensitivity indices for many coupled trials without
    building the batches, using exactly the coins coupled_adjacent_sample
    would flip for z: z's own central coin, the central coins of z's
    out-targets, and the targets' neighbor coins on z. Vectorized over
    trials; bit-equal to the full construction (tested against it)."""
    z = g_star.num_nodes
    targets = z_spec.out_targets
    d_out_z = len(targets)
    t = np.arange(trials)
    u_z = keyed_uniform(seed, t, KeyedCoins.ROLE_CENTRAL, z)
    z_central = u_z < cfg.q_b
    if d_out_z:
        u_tc = keyed_uniform(
            seed, t[:, None], KeyedCoins.ROLE_CENTRAL, targets[None, :]
        )
        target_central = u_tc < cfg.q_b
        p_z = 1.0 if cfg.M >= d_out_z else cfg.M / d_out_z
        if cfg.M == 0.0:
            p_z = 0.0
        u_tn = keyed_uniform(
            seed, t[:, None], KeyedCoins.ROLE_NEIGHBOR, targets[None, :], z
        )
        sampled = target_central & (u_tn < p_z)
        counts = sampled.sum(axis=1).astype(np.float64)
    else:
        counts = np.zeros(trials)
    if cfg.enforce_no_overlap:
        return np.where(z_central, 0.5, counts)
    return np.where(z_central, 0.5 + counts, counts)
