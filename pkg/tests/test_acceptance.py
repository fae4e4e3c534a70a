"""Acceptance suite: twelve desk-scale checks covering the sampler,
accountant, noise, gradients, end-to-end learning, audit, and the added-node
impact experiment. Each test prints one PASS/FAIL line (run with ``pytest -s``
to see them); every check also asserts, so the suite fails loudly.

The heavy training grid (criteria 9 and 10) runs once in a module fixture and
is shared; its wall-clock cost is attributed to the criteria that consume it.
"""

import time

import numpy as np
import pytest
from scipy import stats

from nodedp.accountant import (
    AccountantConfig,
    bk_sml,
    gaussian_sigma_to_match_ak,
    laplace_renyi_divergence,
    precision_upper_bound,
    rdp_gamma,
    rho_pmf,
    rho_pmf_no_enforce,
)
from nodedp.audit import attack_accuracy, audit_result, run_audit
from nodedp.gnn import (
    ARCH_GIN,
    ARCHS,
    batch_losses_and_clipped_sum,
    init_params,
    loss_and_grad,
)
from nodedp.graph import gen_erdos_renyi, gen_planted_classes, split_train_test
from nodedp.noise import NoiseSpec, sample_noise
from nodedp.sampler import (
    SamplerConfig,
    ZSpec,
    coupled_adjacent_sample,
    coupled_realized_k,
    single_subgraph_batch,
)
from nodedp.trainer import TrainConfig, impact_experiment, train


def _report(num, name, ok, detail=""):
    line = f"criterion {num:02d} ({name}): {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f" — {detail}"
    print(line)
    assert ok, line


def _chi2_ok(ks, pmf, level=0.01):
    """One-sample chi-square of realized values against an exact pmf."""
    support = pmf.support
    probs = pmf.probs()
    counts = np.array([(ks == s).sum() for s in support])
    if counts.sum() != len(ks):  # off-support realization: automatic fail
        return False
    expect = probs * len(ks)
    keep = expect > 5
    chi2 = (((counts - expect) ** 2) / expect)[keep].sum()
    dof = max(int(keep.sum()) - 1, 1)
    return chi2 < stats.chi2.ppf(1.0 - level, dof)


def test_c01_pmf_normalization():
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    ok = True
    for _ in range(200):
        d = int(rng.integers(0, 501))
        q_b = float(rng.uniform(0.01, 1.0))
        M = float(rng.uniform(0.05, 8.0))
        for fn in (rho_pmf, rho_pmf_no_enforce):
            p = fn(d, q_b, M).probs()
            ok = ok and np.all(np.isfinite(p)) and np.all(p >= 0.0)
            ok = ok and abs(p.sum() - 1.0) <= 1e-12
    elapsed = time.perf_counter() - t0
    _report(1, "participation pmf normalization", ok and elapsed < 1.0,
            f"200 triples x 2 variants in {elapsed:.2f}s")


def test_c02_sampler_matches_pmf():
    g = gen_erdos_renyi(50, 0.08, 3, 2, np.random.default_rng(1))
    cfg = SamplerConfig(0.4, 2.0)
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    ok = True
    for d_out in (0, 1, 3, 8):
        zs = ZSpec(
            feature=np.ones(3), label=1,
            out_targets=rng.choice(50, size=d_out, replace=False),
        )
        ks = coupled_realized_k(g, zs, cfg, seed=13, trials=100_000)
        # the vectorized draw flips exactly the coins of the full coupled
        # construction; re-prove that identity on a subsample here
        for trial in range(300):
            _, _, k = coupled_adjacent_sample(g, zs, cfg, seed=13, trial=trial)
            ok = ok and k == ks[trial]
        ok = ok and _chi2_ok(ks, rho_pmf(d_out, cfg.q_b, cfg.M))
    elapsed = time.perf_counter() - t0
    _report(2, "coupled sampler follows the analytic pmf",
            ok and elapsed < 30.0, f"4 degrees x 1e5 trials in {elapsed:.1f}s")


def test_c03_divergence_closed_forms():
    t0 = time.perf_counter()
    ok = all(
        laplace_renyi_divergence(0.0, a, s) == 0.0
        for a, s in ((1.5, 0.3), (2.0, 1.0), (7.0, 12.0))
    )
    for alpha, sigma in ((1.5, 0.7), (2.5, 1.7), (6.0, 3.0)):
        k = np.linspace(0.0, 60.0, 1000)
        lower = np.exp((alpha - 1.0) * laplace_renyi_divergence(k, alpha, sigma))
        ok = ok and np.all(bk_sml(k, alpha, sigma) >= lower * (1.0 - 1e-12))
    cfg = AccountantConfig(
        q_b=0.5, M=1.0, iterations=1, delta=1e-5, max_dout=0
    )
    gamma, argmax = rdp_gamma(cfg, sigma=1.0, alpha=2.0)
    ok = ok and abs(gamma - np.log(1.50937)) < 1e-4 and argmax == 0
    elapsed = time.perf_counter() - t0
    _report(3, "divergence and moment-bound closed forms",
            ok and elapsed < 1.0, f"gamma={gamma:.7f} in {elapsed:.2f}s")


def test_c04_gaussian_scale_comparison():
    best = min(
        _timed(gaussian_sigma_to_match_ak, 1e4, 2.0, 1.0)[1] for _ in range(5)
    )
    val = gaussian_sigma_to_match_ak(1e4, 2.0, 1.0)
    ok = 82.0 <= val <= 86.0 and best < 1e-3
    _report(4, "gaussian needs sigma near 84 to match the k=1e4 factor",
            ok, f"sigma={val:.4f}, {best * 1e6:.0f}us")


def test_c05_precision_ceiling():
    best = min(
        _timed(precision_upper_bound, 2.0, 1e-5, 10)[1] for _ in range(5)
    )
    a = precision_upper_bound(2.0, 1e-5, 10)
    b = precision_upper_bound(2.0, 0.0, 4)
    ok = 0.450 <= a <= 0.452 and round(b, 3) == 0.711 and best < 1e-3
    _report(5, "private-embedding precision ceiling",
            ok, f"{a:.7f} and {b:.7f}, {best * 1e6:.0f}us")


def _timed(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t0


def test_c06_noise_moments():
    sigma = 1.5
    rng = np.random.default_rng(1234)
    t0 = time.perf_counter()
    x = sample_noise(NoiseSpec("sml", sigma, 1), rng, size=1_000_000).ravel()
    ok = abs(x.std() / sigma - 1.0) < 0.01
    kurt = stats.kurtosis(x, fisher=False)
    ok = ok and abs(kurt - 6.0) < 0.2

    # chi-square of the marginal against the exact univariate laplace
    scale = sigma / np.sqrt(2.0)
    edges = stats.laplace.ppf(np.linspace(0.0, 1.0, 41), scale=scale)
    counts, _ = np.histogram(x, bins=edges)
    expect = np.full(40, len(x) / 40.0)
    chi2 = (((counts - expect) ** 2) / expect).sum()
    ok = ok and chi2 < stats.chi2.ppf(0.99, 39)

    # spherical symmetry: every projection of the vector draw is that same
    # laplace marginal
    y = sample_noise(NoiseSpec("sml", sigma, 6), rng, size=100_000)
    dir_rng = np.random.default_rng(7)
    for _ in range(2):
        u = dir_rng.normal(size=6)
        u /= np.linalg.norm(u)
        p = stats.kstest(y @ u, "laplace", args=(0.0, scale)).pvalue
        ok = ok and p > 0.01
    elapsed = time.perf_counter() - t0
    _report(6, "noise moments and spherical symmetry",
            ok and elapsed < 10.0,
            f"std={x.std():.4f} kurtosis={kurt:.3f} in {elapsed:.1f}s")


def test_c07_gradient_finite_differences():
    t0 = time.perf_counter()
    worst = 0.0
    rng = np.random.default_rng(3)
    for arch in ARCHS:
        for rep in range(50):
            n = int(rng.integers(3, 9))
            g = gen_erdos_renyi(n, 0.35, 3, 2, rng)
            central = int(rng.integers(0, n))
            nbrs = g.in_neighbors(central)
            take = rng.random(len(nbrs)) < 0.7
            batch = single_subgraph_batch(g, central, nbrs[take])
            sub = batch.subgraphs[0]
            p = init_params(arch, 3, 4, 2, np.random.default_rng(rep))
            _, grad = loss_and_grad(p, sub)
            v = p.to_vector()
            h = 1e-6
            num = np.empty_like(v)
            for i in range(len(v)):
                vp, vm = v.copy(), v.copy()
                vp[i] += h
                vm[i] -= h
                num[i] = (
                    loss_and_grad(p.replace_vector(vp), sub)[0]
                    - loss_and_grad(p.replace_vector(vm), sub)[0]
                ) / (2.0 * h)
            denom = max(np.linalg.norm(num), 1e-12)
            worst = max(worst, np.linalg.norm(grad.flat - num) / denom)
    elapsed = time.perf_counter() - t0
    _report(7, "backward pass matches finite differences",
            worst < 1e-4 and elapsed < 10.0,
            f"worst relative error {worst:.2e} over 3x50 sub-graphs "
            f"in {elapsed:.1f}s")


def test_c08_coupled_sensitivity():
    g = gen_erdos_renyi(50, 0.08, 3, 2, np.random.default_rng(1))
    rng = np.random.default_rng(9)
    zs = ZSpec(
        feature=rng.normal(size=3), label=1,
        out_targets=rng.choice(50, size=8, replace=False),
        in_sources=rng.choice(50, size=4, replace=False),
    )
    cfg = SamplerConfig(0.35, 2.0)
    params = {a: init_params(a, 3, 4, 2, np.random.default_rng(5)) for a in ARCHS}
    t0 = time.perf_counter()
    ok = True
    n_central = 0
    for trial in range(1000):
        ba, bb, k = coupled_adjacent_sample(g, zs, cfg, seed=21, trial=trial)
        z_central = bool(np.any(bb.central_ids == 50))
        if z_central:
            # the differing node's own sub-graph is the only change: its
            # other appearances are nulled and contribute nothing under the
            # structure-free aggregation
            n_central += 1
            ok = ok and k == 0.5
            p = params[ARCH_GIN]
            _, ga, _ = batch_losses_and_clipped_sum(p, ba)
            _, gb, _ = batch_losses_and_clipped_sum(p, bb)
            ok = ok and np.linalg.norm(gb.flat - ga.flat) <= 0.5 + 1e-9
        else:
            # each sub-graph that sampled the node moves by at most twice
            # the clipping threshold, for every architecture
            for p in params.values():
                _, ga, _ = batch_losses_and_clipped_sum(p, ba)
                _, gb, _ = batch_losses_and_clipped_sum(p, bb)
                ok = ok and (
                    np.linalg.norm(gb.flat - ga.flat) <= k * 1.0 + 1e-9
                )
    elapsed = time.perf_counter() - t0
    ok = ok and 0 < n_central < 1000
    _report(8, "adjacent-run gradient sums stay inside the sensitivity bound",
            ok and elapsed < 60.0,
            f"1000 batches ({n_central} central-case) in {elapsed:.1f}s")


# -- shared training grid for criteria 9 and 10 ----------------------------

SEEDS = range(5)


def _grid_cfg(seed, sigma=None, eps=None, kind="sml", enforce=True):
    return TrainConfig(
        arch="gin", iterations=50, eta=2e-3, q_b=0.2, M=2.0,
        sigma=sigma, eps_target=eps, delta=1e-5, noise_kind=kind,
        enforce_no_overlap=enforce, d_hid=16, n_test=10, seed=seed,
        max_dout=1999,
    )


@pytest.fixture(scope="module")
def training_grid():
    rng = np.random.default_rng(42)
    g = gen_planted_classes(2000, 4, 8, 5.0, 0.02, 0.004, rng)
    split = split_train_test(g, 0.8, np.random.default_rng(7))

    def arm(**kw):
        accs = []
        for seed in SEEDS:
            _, rep = train(g, split, _grid_cfg(seed, **kw))
            accs.append(rep.accuracy)
        return accs

    out = {}
    t0 = time.perf_counter()
    out["inf"] = arm(sigma=0.0)
    out["eps8"] = arm(eps=8.0)
    out["eps2"] = arm(eps=2.0)
    out["t_core"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    out["eps2_gauss"] = arm(eps=2.0, kind="gaussian")
    out["eps2_relaxed"] = arm(eps=2.0, enforce=False)
    out["t_ablation"] = time.perf_counter() - t0
    return out


def test_c09_end_to_end_learning(training_grid):
    gr = training_grid
    means = [np.mean(gr[k]) for k in ("eps2", "eps8", "inf")]
    ok = gr["inf"][0] >= 0.85
    ok = ok and sum(a >= 0.4 for a in gr["eps8"]) >= 4
    ok = ok and means[0] <= means[1] <= means[2]
    ok = ok and gr["t_core"] < 600.0
    _report(9, "private training learns, accuracy nondecreasing in budget",
            ok,
            f"acc(inf)={means[2]:.3f} acc(eps8)={means[1]:.3f} "
            f"acc(eps2)={means[0]:.3f} in {gr['t_core']:.0f}s")


def test_c10_noise_and_overlap_ablations(training_grid):
    gr = training_grid
    sml = np.mean(gr["eps2"])
    gauss = np.mean(gr["eps2_gauss"])
    relaxed = np.mean(gr["eps2_relaxed"])
    ok = sml >= gauss and sml >= relaxed
    ok = ok and gr["t_core"] + gr["t_ablation"] < 900.0
    _report(10, "heavy-tailed noise and overlap nulling both help at eps=2",
            ok,
            f"sml={sml:.3f} gaussian={gauss:.3f} relaxed={relaxed:.3f} "
            f"in {gr['t_ablation']:.0f}s")


def test_c11_audit_soundness():
    g = gen_planted_classes(60, 4, 8, 5.0, 0.1, 0.02, np.random.default_rng(5))
    split = split_train_test(g, 0.8, np.random.default_rng(2))

    def audit(eps):
        cfg = TrainConfig(
            arch="gcn", iterations=40, eta=1e-3, q_b=0.25, M=1.0,
            sigma=None, eps_target=eps, d_hid=8, seed=0,
        )
        obs = run_audit(g, split, cfg, trials=10_000)
        res = audit_result(obs, cfg.delta, 0.95)
        return obs, res

    t0 = time.perf_counter()
    ok = True
    for eps in (2.0, 8.0):
        obs, res = audit(eps)
        ok = ok and res.empirical_eps <= obs.theoretical_epsilon + 1e-9
    acc2 = attack_accuracy(audit(2.0)[0])[0]
    acc16 = attack_accuracy(audit(16.0)[0])[0]
    ok = ok and acc2 <= acc16
    elapsed = time.perf_counter() - t0
    _report(11, "empirical privacy never exceeds the accounted guarantee",
            ok and elapsed < 1200.0,
            f"attack acc {acc2:.3f} (eps=2) vs {acc16:.3f} (eps=16) "
            f"in {elapsed:.0f}s")


def test_c12_impact_monotone():
    t0 = time.perf_counter()
    rows = impact_experiment(100, 0.1, 16, 10, [0.1, 0.3, 0.5, 0.7, 0.9], 100, 0)
    elapsed = time.perf_counter() - t0
    deltas = [r.mean_delta for r in rows]
    inversions = sum(b < a for a, b in zip(deltas, deltas[1:]))
    _report(12, "added-node gradient impact grows with participation",
            inversions <= 1 and elapsed < 300.0,
            f"means {[f'{d:.3f}' for d in deltas]}, "
            f"{inversions} inversions in {elapsed:.0f}s")
