"""Deterministic stream derivation and keyed counter-based coins."""

import numpy as np

from nodedp.seeding import KeyedCoins, StreamCoins, keyed_uniform, named_streams


class TestNamedStreams:
    def test_same_seed_same_draws(self):
        a = named_streams(42)
        b = named_streams(42)
        for name in a:
            assert np.array_equal(a[name].random(8), b[name].random(8))

    def test_streams_mutually_distinct(self):
        s = named_streams(0)
        draws = {name: tuple(rng.random(4)) for name, rng in s.items()}
        assert len(set(draws.values())) == len(draws)

    def test_expected_stream_names(self):
        assert set(named_streams(0)) == {
            "sampler", "noise", "init", "audit", "eval", "data",
        }

    def test_seed_changes_draws(self):
        a = named_streams(0)["noise"].random(4)
        b = named_streams(1)["noise"].random(4)
        assert not np.array_equal(a, b)


class TestKeyedUniform:
    def test_range_and_determinism(self):
        u = keyed_uniform(7, 3, 1, np.arange(1000))
        assert u.shape == (1000,)
        assert (u >= 0).all() and (u < 1).all()
        assert np.array_equal(u, keyed_uniform(7, 3, 1, np.arange(1000)))

    def test_order_independent(self):
        ids = np.array([5, 2, 9])
        u = keyed_uniform(1, 0, 1, ids)
        for j, i in enumerate(ids):
            assert u[j] == keyed_uniform(1, 0, 1, i)

    def test_each_key_word_matters(self):
        base = keyed_uniform(1, 2, 3, 4, 5)
        assert base != keyed_uniform(9, 2, 3, 4, 5)
        assert base != keyed_uniform(1, 9, 3, 4, 5)
        assert base != keyed_uniform(1, 2, 9, 4, 5)
        assert base != keyed_uniform(1, 2, 3, 9, 5)
        assert base != keyed_uniform(1, 2, 3, 4, 9)

    def test_approximately_uniform(self):
        u = keyed_uniform(0, 0, 2, np.arange(20000))
        # 10-bin chi-square; statistic ~ chi2(9), 99.9th pct ~ 27.9
        counts, _ = np.histogram(u, bins=10, range=(0, 1))
        chi2 = ((counts - 2000.0) ** 2 / 2000.0).sum()
        assert chi2 < 27.9
        assert abs(u.mean() - 0.5) < 0.01

    def test_broadcasts(self):
        grid = keyed_uniform(0, np.arange(3)[:, None], 1, np.arange(4)[None, :])
        assert grid.shape == (3, 4)
        assert grid[1, 2] == keyed_uniform(0, 1, 1, 2)


class TestCoinSources:
    def test_keyed_coins_shared_across_instances(self):
        a = KeyedCoins(3, trial=5)
        b = KeyedCoins(3, trial=5)
        ids = np.array([0, 4, 7])
        assert np.array_equal(a.central(ids), b.central(ids))
        assert np.array_equal(a.neighbor(4, ids), b.neighbor(4, ids))

    def test_keyed_roles_disjoint(self):
        c = KeyedCoins(3)
        ids = np.array([1, 2])
        assert not np.array_equal(c.central(ids), c.neighbor(1, ids)[: len(ids)])

    def test_stream_coins_sequential(self):
        sc = StreamCoins(np.random.default_rng(0))
        u1 = sc.central(np.arange(3))
        u2 = sc.central(np.arange(3))
        assert not np.array_equal(u1, u2)
