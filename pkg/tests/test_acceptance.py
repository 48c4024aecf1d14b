"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` (the lines appear in the
terminal summary) or directly with ``python tests/test_acceptance.py``.
"""

import sys
import time

import numpy as np
import pytest

import conftest
from oracles import feature_map, rkhs_gradient_features, unroll_symbolic
from ssmgd_lab import bounds as bd
from ssmgd_lab.chains import (
    build_chain,
    build_cycle_walk,
    build_iid,
    build_renewal_tail,
    build_two_state,
    random_stochastic,
    sample_stationary_path,
)
from ssmgd_lab.lab import ExperimentConfig, coverage, monte_carlo, rate_fit, run_experiment, theoretical_bounds, verify_lemmas
from ssmgd_lab.mixing import ExponentialEnvelope, fit_exponential_envelope, mixing_profile
from ssmgd_lab.oracle import build_kernel_family, build_random_quadratic, certify, minimizer
from ssmgd_lab.ssmgd import Schedule, run_decomposed

QUAD = {"kind": "random_quadratic", "params": {"d": 5, "kappa_target": 0.5, "eta_target": 2.0, "noise_scale": 1.0, "seed": 0}}
TWO_STATE = {"kind": "two_state", "params": {"p": 0.25, "q": 0.25}}
COVERAGE_POINTS = (10, 100, 1000, 10_000)


def record(n, ok, detail, elapsed=None):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}"
    if elapsed is not None:
        line += f" [{elapsed:.1f}s]"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def test_criterion_01_mixing_sandwich():
    start = time.perf_counter()
    chains = [random_stochastic(int(n), seed) for seed, n in enumerate(np.random.default_rng(0).integers(2, 9, 20))]
    chains += [
        build_two_state(0.25, 0.25),
        build_two_state(0.9, 0.05),
        build_cycle_walk(8, 0.3),
        build_renewal_tail(2, 20),
        build_iid([0.2, 0.3, 0.5]),
    ]
    worst = 0.0
    for chain in chains:
        prof = mixing_profile(chain, 50)
        gaps = np.concatenate([-prof.beta, prof.beta - prof.phi, prof.phi - 1.0])
        worst = max(worst, float(gaps.max()))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 5
    record(1, ok, f"{len(chains)} chains, max sandwich excess {worst:.2e}", elapsed)
    assert worst <= 1e-12
    assert elapsed < 5


def test_criterion_02_two_state_closed_form():
    start = time.perf_counter()
    chain = build_two_state(0.25, 0.25)
    prof = mixing_profile(chain, 40)
    P, rho = chain.transition, chain.stationary
    # oracle: explicit matrix powers and the total-variation definition
    powers = [np.linalg.matrix_power(P, t) for t in range(1, 41)]
    tv = np.array([[0.5 * np.abs(Pt[z] - rho).sum() for z in range(2)] for Pt in powers])
    expected = 0.5 ** (np.arange(1, 41) + 1.0)
    err = max(
        np.max(np.abs(prof.phi / expected - 1)),
        np.max(np.abs(prof.beta / expected - 1)),
        np.max(np.abs(tv.max(1) / expected - 1)),
    )
    elapsed = time.perf_counter() - start
    ok = err <= 1e-10 and elapsed < 1
    record(2, ok, f"max relative error {err:.2e}", elapsed)
    assert err <= 1e-10
    assert elapsed < 1


def test_criterion_03_lemma_audit():
    start = time.perf_counter()
    audit = verify_lemmas()
    elapsed = time.perf_counter() - start
    counts = {(s.lemma, s.variant): s.violations for s in audit.summaries}
    hit = [
        r
        for r in audit.rows
        if (r["lemma"], r["variant"], r["alpha"], r["theta"], r["i"], r["t"]) == ("smale1", "paper", 0.1, 0.75, 1, 2)
    ]
    counterexample = len(hit) == 1 and not hit[0]["holds"]
    ok = audit.asserted_ok and counterexample and counts[("smale1", "paper")] > 0 and elapsed < 30
    record(
        3,
        ok,
        f"asserted violations {sum(s.violations for s in audit.summaries if s.asserted)}, "
        f"paper product violations {counts[('smale1', 'paper')]} (reported), counterexample present={counterexample}",
        elapsed,
    )
    assert audit.asserted_ok
    assert counterexample
    assert elapsed < 30


@pytest.fixture(scope="module")
def hundred_runs():
    cp = np.unique(np.geomspace(1, 10_000, 40).astype(int))
    cfg = ExperimentConfig(chain=TWO_STATE, family=QUAD, theta=0.75, horizon=10_000, trials=100, seed=4, checkpoints=tuple(cp))
    start = time.perf_counter()
    mc = monte_carlo(cfg)
    return mc, time.perf_counter() - start


def test_criterion_04_decomposition(hundred_runs):
    mc, elapsed = hundred_runs
    r1 = np.linalg.norm(mc.w1 - mc.w_star)
    ratio = float(mc.per_trial["residual"].max() / (1e-8 * max(1.0, r1)))
    ok = ratio <= 1 and elapsed < 30
    record(4, ok, f"max residual / tolerance {ratio:.2e} over 100 runs", elapsed)
    assert ratio <= 1
    assert elapsed < 30


def test_criterion_05_init_bound(hundred_runs):
    mc, _ = hundred_runs
    r1 = np.linalg.norm(mc.w1 - mc.w_star)
    bound = bd.init_bound(mc.checkpoints.astype(float), 0.75, mc.certificate.alpha, r1, "conservative")
    excess = float((mc.per_trial["init_err"] - bound[None, :]).max())
    ok = excess <= 1e-9
    record(5, ok, f"max init_err - bound {excess:.2e}")
    assert excess <= 1e-9


def _coverage_run(theta, formula):
    cfg = ExperimentConfig(
        chain=TWO_STATE, family=QUAD, theta=theta, horizon=10_000, trials=1000, delta=0.1, seed=0, checkpoints=COVERAGE_POINTS
    )
    start = time.perf_counter()
    res = run_experiment(cfg, formula=formula)
    return res, time.perf_counter() - start


def test_criterion_06_coverage():
    res, elapsed = _coverage_run(0.75, "thm1-phi")
    frac = res.coverage.fraction
    ok = bool(np.all(frac >= 0.9)) and elapsed < 300
    record(6, ok, f"coverage {np.round(frac, 3).tolist()} at t={list(COVERAGE_POINTS)}", elapsed)
    assert np.all(frac >= 0.9)
    assert elapsed < 300


def test_criterion_07_theta_one_coverage():
    res, elapsed = _coverage_run(1.0, "prop-theta1")
    alpha = res.monte_carlo.certificate.alpha
    frac = res.coverage.fraction
    ok = bool(np.all(frac >= 0.9)) and abs(alpha - 0.25) < 1e-9
    record(7, ok, f"alpha {alpha:.6f}, coverage {np.round(frac, 3).tolist()}", elapsed)
    assert alpha == pytest.approx(0.25, abs=1e-9)
    assert np.all(frac >= 0.9)


@pytest.mark.slow
def test_criterion_08_rate_recovery():
    cp = tuple(np.unique(np.geomspace(1, 1e5, 60).astype(int)))
    cfg = ExperimentConfig(chain=TWO_STATE, family=QUAD, theta=0.75, horizon=100_000, trials=500, seed=0, checkpoints=cp)
    start = time.perf_counter()
    mc = monte_carlo(cfg)
    elapsed = time.perf_counter() - start
    fit = rate_fit(mc.curve.median["total_err"], mc.checkpoints, (1e3, 1e5))
    ok = abs(fit.slope + 0.375) <= 0.15 and elapsed < 600
    record(8, ok, f"median slope {fit.slope:.4f} (target -0.375 +/- 0.15, r2 {fit.r_squared:.3f})", elapsed)
    assert fit.slope == pytest.approx(-0.375, abs=0.15)
    assert elapsed < 600


def test_criterion_09_iid():
    chain = build_iid([0.1, 0.2, 0.3, 0.4])
    prof = mixing_profile(chain, 50)
    env = fit_exponential_envelope(prof.phi)
    params = bd.BoundParams(0.75, 0.25, 3.0, 2.0, 0.1, env)
    t = np.array([1.0, 10.0, 1e3, 1e5])
    got = bd.samp_bound_exp_phi(t, params)
    closed = 3.0 * bd.c_theta(0.75) / (0.1 * 2.0**2) * (1 / 0.25) ** 3 * t**-0.75
    ok = prof.phi.max() <= 1e-12 and env.D == 0.0 and np.array_equal(got, closed)
    record(9, ok, f"max phi {prof.phi.max():.1e}, D={env.D}, bound equals closed form {np.array_equal(got, closed)}")
    assert prof.phi.max() <= 1e-12
    assert env.all_zero and env.D == 0.0
    np.testing.assert_array_equal(got, closed)


@pytest.mark.slow
def test_criterion_10_polynomial_regime():
    table = {
        (0.75, 0.5): ((1 - 0.5 - 0.75) / 2, False),
        (0.6, 0.2): ((1 - 0.2 - 0.6) / 2, False),
        (0.75, 1.0): (-0.375, True),
        (0.75, 2.0): (-0.375, False),
        (0.9, 3.5): (-0.45, False),
    }
    table_ok = all(bd.poly_rate_exponent(th, k) == v for (th, k), v in table.items())
    cfg = ExperimentConfig.from_json("configs/renewal_k2.json")
    start = time.perf_counter()
    res = run_experiment(cfg)
    elapsed = time.perf_counter() - start
    q = res.monte_carlo.curve.quantile["samp_err2"]
    bound = res.bounds.samp_bound_sq
    majorizes = bool(np.all(q <= bound))
    # the bound curve evaluated densely, with the same exact partial sums
    chain, _ = cfg.build()
    S = np.cumsum(mixing_profile(chain, 100_000).phi)
    t = np.unique(np.geomspace(1e3, 1e5, 50).astype(int))
    cert = res.monte_carlo.certificate
    curve = bd.samp_bound_generic(t.astype(float), cfg.theta, cert.alpha, cert.sigma2, cert.eta, cfg.delta, S[t - 1])
    slope = rate_fit(curve, t, (1e3, 1e5)).slope
    ok = table_ok and majorizes and abs(slope + cfg.theta) <= 0.02 and elapsed < 600
    record(
        10,
        ok,
        f"table {'ok' if table_ok else 'mismatch'}, min bound/quantile {np.min(bound / q):.2f}, bound slope {slope:.4f}",
        elapsed,
    )
    assert table_ok
    assert majorizes
    assert slope == pytest.approx(-cfg.theta, abs=0.02)
    assert elapsed < 600


def test_criterion_11_oracle_equivalence():
    # symbolic unroll, T = 5, d = 2
    fam = build_random_quadratic(2, 3, 0.4, 1.5, 1.0, seed=11)
    chain = build_cycle_walk(3, 0.3)
    path = sample_stationary_path(chain, 6, 5)
    sched = Schedule(0.75, 1.5)
    w1 = np.array([1.5, -0.5])
    w_star = minimizer(fam, chain)
    traj = run_decomposed(fam, path, sched, w1, np.arange(1, 7), w_star)
    ws, us, vs = unroll_symbolic(fam.A, fam.B, path.states[:5], sched.steps(5), w1, w_star)
    unroll_err = max(
        np.abs(traj.w - ws[5]).max(),
        np.abs(traj.u - us[5]).max(),
        np.abs(traj.v - vs[5]).max(),
        np.abs(traj.samp_err - [np.linalg.norm(v) for v in vs]).max(),
    )
    # brute-force feature-space gradient
    rng = np.random.default_rng(0)
    rkhs_err = 0.0
    for m in (3, 10, 20):
        kern = build_kernel_family(m, 0.25, 0.1, seed=m)
        c = rng.standard_normal(m)
        for z in range(m):
            g_feat, Phi = rkhs_gradient_features(kern.gram, kern.labels, kern.lam, z, c)
            rkhs_err = max(rkhs_err, float(np.abs(Phi.T @ kern.gradient(z, c) - g_feat).max()))
    # central finite differences of the per-sample losses
    fd_err = 0.0
    eps = 1e-5
    for f in (build_random_quadratic(4, 3, 0.3, 3.0, 1.0, seed=5), build_kernel_family(8, 0.3, 0.1)):
        for _ in range(20):
            z = int(rng.integers(f.n_states))
            w, h = rng.standard_normal((2, f.dimension))
            fd = (f.value(z, w + eps * h) - f.value(z, w - eps * h)) / (2 * eps)
            fd_err = max(fd_err, abs(fd - f.inner(f.gradient(z, w), h)))
    ok = unroll_err <= 1e-12 and rkhs_err <= 1e-10 and fd_err <= 1e-6
    record(11, ok, f"unroll {unroll_err:.1e}, rkhs {rkhs_err:.1e}, finite differences {fd_err:.1e}")
    assert unroll_err <= 1e-12
    assert rkhs_err <= 1e-10
    assert fd_err <= 1e-6


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
