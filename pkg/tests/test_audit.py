"""Audit harness: threshold attack, exact binomial error bounds, and the
canary-injected training loop."""

import numpy as np
import pytest
from scipy import stats

from nodedp.audit import (
    AuditObservations,
    attack_accuracy,
    audit_result,
    empirical_epsilon,
    run_audit,
)
from nodedp.errors import ConfigError
from nodedp.graph import gen_planted_classes, split_train_test
from nodedp.trainer import TrainConfig


def _obs(o_star, o_prime, sigma=1.0, eps=np.inf):
    o_star = np.asarray(o_star, dtype=np.float64)
    o_prime = np.asarray(o_prime, dtype=np.float64)
    return AuditObservations(
        o_star=o_star,
        o_prime=o_prime,
        canary_norms=np.ones(len(o_star)),
        trials=len(o_star),
        sigma=sigma,
        theoretical_epsilon=eps,
    )


class TestObservations:
    def test_rejects_length_mismatch(self):
        with pytest.raises(ConfigError):
            AuditObservations(
                o_star=np.zeros(3), o_prime=np.zeros(2), canary_norms=np.zeros(3),
                trials=3, sigma=1.0, theoretical_epsilon=1.0,
            )

    def test_rejects_non_finite(self):
        with pytest.raises(ConfigError):
            _obs([0.0, np.nan], [1.0, 2.0])

    def test_csv(self):
        csv = _obs([0.5], [1.5]).to_csv()
        lines = csv.strip().split("\n")
        assert lines[0] == "trial,score_star,score_prime,k"
        assert lines[1] == "0,0.5,1.5,1.0"


class TestThresholdAttack:
    def test_perfect_separation(self):
        acc, theta = attack_accuracy(_obs([0.0, 1.0], [2.0, 3.0]))
        assert acc == 1.0
        assert 1.0 <= theta < 2.0

    def test_interleaved(self):
        # theta in (2, 3) classifies 3 of 4 points correctly
        acc, _ = attack_accuracy(_obs([0.0, 2.0], [1.0, 3.0]))
        assert acc == 0.75

    def test_identical_populations(self):
        acc, _ = attack_accuracy(_obs([0.0, 1.0, 2.0], [0.0, 1.0, 2.0]))
        assert acc == pytest.approx(0.5)

    def test_one_sided_convention(self):
        # the attack declares "present" on large scores; reversed
        # populations give it nothing better than chance
        acc, _ = attack_accuracy(_obs([5.0, 6.0], [0.0, 1.0]))
        assert acc == pytest.approx(0.5)

    def test_gaussian_shift_oracle(self):
        # N(0,1) vs N(1,1): best balanced accuracy is Phi(1/2) ~ 0.6915
        rng = np.random.default_rng(0)
        n = 20000
        acc, theta = attack_accuracy(
            _obs(rng.normal(0.0, 1.0, n), rng.normal(1.0, 1.0, n))
        )
        assert acc == pytest.approx(stats.norm.cdf(0.5), abs=0.015)
        assert theta == pytest.approx(0.5, abs=0.1)

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            attack_accuracy(_obs([], []))


class TestEmpiricalEpsilon:
    def test_disjoint_support_closed_form(self):
        # zero observed errors: both one-sided binomial upper bounds equal
        # u = 1 - (1-conf)^(1/n), so eps = ln((1 - delta - u)/u)
        n, conf, delta = 1000, 0.95, 0.0
        obs = _obs(np.linspace(-2, -1, n), np.linspace(1, 2, n))
        eps, _ = empirical_epsilon(obs, delta, conf)
        u = 1.0 - (1.0 - conf) ** (1.0 / n)
        assert eps == pytest.approx(np.log((1.0 - delta - u) / u), rel=1e-9)

    def test_grows_logarithmically_with_n(self):
        epss = []
        for n in (100, 1000, 10000):
            obs = _obs(np.full(n, -1.0), np.full(n, 1.0))
            epss.append(empirical_epsilon(obs, 0.0, 0.95)[0])
        assert epss[0] < epss[1] < epss[2]
        # doubling ln n adds ~ ln 10 per decade for exact separation
        assert epss[1] - epss[0] == pytest.approx(np.log(10.0), abs=0.1)
        assert epss[2] - epss[1] == pytest.approx(np.log(10.0), abs=0.1)

    def test_identical_populations_floor_zero(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=500)
        eps, _ = empirical_epsilon(_obs(x, x.copy()), 1e-5, 0.95)
        assert eps == 0.0

    def test_delta_reduces_estimate(self):
        n = 500
        obs = _obs(np.full(n, -1.0), np.full(n, 1.0))
        e0 = empirical_epsilon(obs, 0.0, 0.95)[0]
        e1 = empirical_epsilon(obs, 0.2, 0.95)[0]
        assert e1 < e0

    def test_higher_confidence_is_more_conservative(self):
        n = 500
        obs = _obs(np.full(n, -1.0), np.full(n, 1.0))
        e95 = empirical_epsilon(obs, 0.0, 0.95)[0]
        e999 = empirical_epsilon(obs, 0.0, 0.999)[0]
        assert e999 < e95

    def test_validation(self):
        obs = _obs([0.0], [1.0])
        with pytest.raises(ConfigError):
            empirical_epsilon(obs, -0.1, 0.95)
        with pytest.raises(ConfigError):
            empirical_epsilon(obs, 0.0, 1.0)

    def test_result_bundle(self):
        obs = _obs(np.full(100, -1.0), np.full(100, 1.0))
        res = audit_result(obs, 1e-5, 0.95)
        assert res.best_attack_accuracy == 1.0
        assert res.empirical_eps > 0
        j = res.to_json()
        assert set(j) == {
            "best_attack_accuracy", "empirical_eps", "threshold", "confidence",
        }


@pytest.fixture(scope="module")
def audit_setup():
    rng = np.random.default_rng(5)
    g = gen_planted_classes(60, 4, 8, 5.0, 0.1, 0.02, rng)
    split = split_train_test(g, 0.8, np.random.default_rng(2))
    return g, split


def _audit_cfg(**kw):
    base = dict(
        arch="gcn", iterations=40, eta=1e-3, q_b=0.25, M=1.0,
        sigma=None, eps_target=2.0, d_hid=8, seed=0,
    )
    base.update(kw)
    return TrainConfig(**base)


class TestRunAudit:
    def test_shapes_and_score_identity(self, audit_setup):
        g, split = audit_setup
        obs = run_audit(g, split, _audit_cfg(), trials=50)
        assert obs.trials == 50
        assert len(obs.o_star) == len(obs.o_prime) == 50
        # <g_t, g_c> - <g_t - g_c, g_c> = ||g_c||^2 = k^2 exactly
        np.testing.assert_allclose(
            obs.o_prime - obs.o_star, obs.canary_norms**2, atol=1e-12
        )
        assert obs.theoretical_epsilon <= 2.0 + 1e-9
        assert obs.sigma > 0

    def test_canary_magnitudes_on_support(self, audit_setup):
        g, split = audit_setup
        obs = run_audit(g, split, _audit_cfg(), trials=40, audited_dout=3)
        from nodedp.accountant import rho_pmf

        support = set(rho_pmf(3, 0.25, 1.0).support)
        assert set(np.unique(obs.canary_norms)) <= support

    def test_deterministic(self, audit_setup):
        g, split = audit_setup
        a = run_audit(g, split, _audit_cfg(), trials=30)
        b = run_audit(g, split, _audit_cfg(), trials=30)
        assert np.array_equal(a.o_star, b.o_star)
        assert np.array_equal(a.o_prime, b.o_prime)

    def test_soundness_at_small_scale(self, audit_setup):
        g, split = audit_setup
        obs = run_audit(g, split, _audit_cfg(), trials=400)
        res = audit_result(obs, 1e-5, 0.95)
        assert res.empirical_eps <= obs.theoretical_epsilon + 1e-9
        assert 0.4 <= res.best_attack_accuracy <= 0.7

    def test_low_noise_leaks_more(self, audit_setup):
        # q_b = 1 puts the canary in every batch, so with nearly no noise
        # the two score populations separate sharply; heavy noise drowns them
        g, split = audit_setup
        tight = run_audit(
            g, split, _audit_cfg(q_b=1.0, sigma=0.05, eps_target=None), trials=200
        )
        loose = run_audit(
            g, split, _audit_cfg(q_b=1.0, sigma=30.0, eps_target=None), trials=200
        )
        acc_tight = attack_accuracy(tight)[0]
        acc_loose = attack_accuracy(loose)[0]
        assert acc_tight > 0.9
        assert acc_loose < 0.7

    def test_requires_sml(self, audit_setup):
        g, split = audit_setup
        with pytest.raises(ConfigError):
            run_audit(g, split, _audit_cfg(noise_kind="gaussian"), trials=5)

    def test_rejects_zero_trials(self, audit_setup):
        g, split = audit_setup
        with pytest.raises(ConfigError):
            run_audit(g, split, _audit_cfg(), trials=0)

    def test_rejects_zero_q(self, audit_setup):
        g, split = audit_setup
        cfg = _audit_cfg(q_b=0.0, sigma=1.0, eps_target=None)
        with pytest.raises(ConfigError):
            run_audit(g, split, cfg, trials=5)

    def test_rejects_bad_canary_index(self, audit_setup):
        g, split = audit_setup
        with pytest.raises(ConfigError):
            run_audit(g, split, _audit_cfg(), trials=5, canary_index=10**9)
