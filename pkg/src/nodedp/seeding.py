"""Deterministic RNG streams.

All randomness in a run flows from one integer seed. ``named_streams`` derives
independent ``numpy.random.Generator`` objects for each component (sampler,
noise, init, audit, ...) via ``SeedSequence`` spawning, so adding a consumer
never perturbs the draws of existing ones.

``KeyedCoins`` provides counter-based uniforms keyed by node ids for the
coupled adjacent-run sampler: the paired runs share every coin whose key they
have in common, regardless of evaluation order. Coins come from a
splitmix64-style finalizer over the packed key words.
"""

from __future__ import annotations

import numpy as np

_STREAM_ORDER = ("sampler", "noise", "init", "audit", "eval", "data")

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64 = np.uint64


def named_streams(seed: int) -> dict[str, np.random.Generator]:
    """Spawn one Generator per component name from a root seed."""
    root = np.random.SeedSequence(int(seed))
    children = root.spawn(len(_STREAM_ORDER))
    return {
        name: np.random.default_rng(child)
        for name, child in zip(_STREAM_ORDER, children)
    }


def _mix64(x: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; uint64 arithmetic wraps modulo 2^64.
    with np.errstate(over="ignore"):
        x = (x ^ (x >> _U64(30))) * _MIX1
        x = (x ^ (x >> _U64(27))) * _MIX2
        return x ^ (x >> _U64(31))


def keyed_uniform(seed, trial, role, a, b=0):
    """Uniform[0,1) determined solely by the 5-word key.

    Broadcasts over numpy inputs. ``role`` is a small integer namespace
    (central coin, neighbor coin, ...), ``a``/``b`` node ids.
    """
    with np.errstate(over="ignore"):
        h = _mix64(_U64(seed) + _GOLDEN)
        for w in (trial, role, a, b):
            h = _mix64(h ^ (np.asarray(w).astype(np.uint64) + _GOLDEN) * _MIX2)
    return (h >> _U64(11)).astype(np.float64) * 2.0**-53


class KeyedCoins:
    """Node-id-keyed coin source for coupled sub-graph sampling runs."""

    ROLE_CENTRAL = 1
    ROLE_NEIGHBOR = 2

    def __init__(self, seed: int, trial: int = 0):
        self.seed = int(seed)
        self.trial = int(trial)

    def central(self, node_ids) -> np.ndarray:
        return keyed_uniform(self.seed, self.trial, self.ROLE_CENTRAL, node_ids)

    def neighbor(self, central_id, candidate_ids) -> np.ndarray:
        return keyed_uniform(
            self.seed, self.trial, self.ROLE_NEIGHBOR, central_id, candidate_ids
        )


class StreamCoins:
    """Coin source drawing sequentially from a Generator (plain sampling)."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def central(self, node_ids) -> np.ndarray:
        return self.rng.random(len(node_ids))

    def neighbor(self, central_id, candidate_ids) -> np.ndarray:
        return self.rng.random(len(candidate_ids))
