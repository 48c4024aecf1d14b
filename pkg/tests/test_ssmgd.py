import numpy as np
import pytest

from ssmgd_lab.bounds import product_exact
from ssmgd_lab.chains import build_cycle_walk, build_two_state, sample_stationary_path, trial_seed
from ssmgd_lab.exceptions import DimensionMismatch, DomainError, NonFinite
from ssmgd_lab.oracle import QuadraticFamily, build_kernel_family, build_random_quadratic, certify, minimizer
from ssmgd_lab.ssmgd import (
    Schedule,
    check_checkpoints,
    default_checkpoints,
    run,
    run_batch,
    run_decomposed,
    step_size,
)

from oracles import feature_map, unroll_symbolic


class ZeroSchedule:
    """Test hook: every step size is exactly zero."""

    def steps(self, T):
        return np.zeros(T)


def noiseless(fam, seed=0):
    w_c = np.random.default_rng(seed).standard_normal(fam.dimension)
    return QuadraticFamily(fam.A, -np.einsum("zij,j->zi", fam.A, w_c)), w_c


class TestSchedule:
    def test_examples(self):
        assert step_size(0.75, 2, 16) == 0.0625
        assert step_size(1, 1, 10) == pytest.approx(0.1)
        assert step_size(0.75, 1, 1) == 1.0

    @pytest.mark.parametrize("args", [(0.5, 1, 1), (1.1, 1, 1), (0.75, 0, 1), (0.75, 1, 0)])
    def test_rejects(self, args):
        with pytest.raises(DomainError):
            step_size(*args)

    def test_steps_bounded(self):
        g = Schedule(0.6, 3.0).steps(1000)
        assert np.all((g > 0) & (g <= 1 / 3.0))
        assert np.all(np.diff(g) < 0)

    def test_checkpoints(self):
        np.testing.assert_array_equal(default_checkpoints(10), [1, 2, 4, 8, 10])
        np.testing.assert_array_equal(default_checkpoints(1), [1])
        with pytest.raises(DomainError):
            check_checkpoints([1, 1, 2], 5)
        with pytest.raises(DomainError):
            check_checkpoints([0, 2], 5)
        with pytest.raises(DomainError):
            check_checkpoints([2, 6], 5)


class TestRun:
    def test_first_checkpoint_convention(self, quad_family, two_state):
        path = sample_stationary_path(two_state, 50, 1)
        traj = run(quad_family, path, Schedule(0.75, 2.0), np.ones(5))
        w_star = minimizer(quad_family, two_state)
        assert traj.checkpoints[0] == 1
        assert traj.samp_err[0] == 0.0
        assert traj.total_err[0] == pytest.approx(np.linalg.norm(np.ones(5) - w_star), rel=1e-15)
        assert traj.init_err[0] == traj.total_err[0]

    def test_fixed_point(self, quad_family, two_state):
        fam, w_c = noiseless(quad_family)
        path = sample_stationary_path(two_state, 2000, 3)
        w_star = minimizer(fam, two_state)
        assert np.abs(w_star - w_c).max() <= 1e-14
        traj = run(fam, path, Schedule(0.75, 2.0), w_star)
        # the optimum is itself only known to rounding
        assert traj.total_err[0] == 0.0
        assert np.all(traj.total_err <= 1e-13)

    def test_noiseless_samp_zero(self, quad_family, two_state):
        fam, w_c = noiseless(quad_family)
        path = sample_stationary_path(two_state, 2000, 3)
        traj = run_decomposed(fam, path, Schedule(0.75, 2.0), np.zeros(5))
        assert np.all(traj.samp_err == 0.0)
        np.testing.assert_allclose(traj.total_err, traj.init_err, rtol=1e-12, atol=1e-13)

    def test_start_at_optimum_init_zero(self, quad_family, two_state):
        path = sample_stationary_path(two_state, 500, 3)
        w_star = minimizer(quad_family, two_state)
        traj = run_decomposed(quad_family, path, Schedule(0.75, 2.0), w_star)
        assert np.all(traj.init_err == 0.0)

    def test_zero_steps(self, quad_family, two_state):
        path = sample_stationary_path(two_state, 300, 3)
        w1 = np.arange(5.0)
        traj = run(quad_family, path, ZeroSchedule(), w1)
        np.testing.assert_array_equal(traj.w, w1)
        assert np.all(traj.total_err == traj.total_err[0])

    @pytest.mark.parametrize("theta", [0.75, 1.0])
    def test_symbolic_unroll(self, theta):
        fam = build_random_quadratic(2, 3, 0.4, 1.5, 1.0, seed=7)
        chain = build_cycle_walk(3, 0.3)
        path = sample_stationary_path(chain, 6, 2)
        sched = Schedule(theta, 1.5)
        w1 = np.array([0.7, -1.3])
        w_star = minimizer(fam, chain)
        cp = np.arange(1, 7)
        traj = run_decomposed(fam, path, sched, w1, cp, w_star)
        # iterates w_1..w_6 use the first five states
        ws, us, vs = unroll_symbolic(fam.A, fam.B, path.states[:5], sched.steps(5), w1, w_star)
        for j in range(6):
            assert traj.init_err[j] == pytest.approx(np.linalg.norm(us[j]), abs=1e-12)
            assert traj.samp_err[j] == pytest.approx(np.linalg.norm(vs[j]), abs=1e-12)
            assert traj.total_err[j] == pytest.approx(np.linalg.norm(ws[j] - w_star), abs=1e-12)
        np.testing.assert_allclose(traj.w, ws[5], atol=1e-12)
        np.testing.assert_allclose(traj.u, us[5], atol=1e-12)
        np.testing.assert_allclose(traj.v, vs[5], atol=1e-12)

    def test_plain_loop(self, quad_family, two_state):
        path = sample_stationary_path(two_state, 1000, 4)
        sched = Schedule(0.75, 2.0)
        w = np.ones(5)
        for t, z in enumerate(path.states[:-1], start=1):
            w = w - sched.step_size(t) * (quad_family.A[z] @ w + quad_family.B[z])
        traj = run(quad_family, path, sched, np.ones(5))
        np.testing.assert_allclose(traj.w, w, atol=1e-12)

    def test_kernel_feature_space(self):
        fam = build_kernel_family(10, 0.25, 0.1, seed=3)
        chain = build_cycle_walk(10, 0.2)
        path = sample_stationary_path(chain, 400, 5)
        cert = certify(fam, chain)
        sched = Schedule(0.75, cert.eta)
        c1 = np.zeros(10)
        c1[0] = 1.0
        traj = run_decomposed(fam, path, sched, c1)
        Phi = feature_map(fam.gram)
        theta = Phi.T @ c1
        for t, z in enumerate(path.states[:-1], start=1):
            g = Phi[z] * (Phi[z] @ theta - fam.labels[z]) + fam.lam * theta
            theta = theta - sched.step_size(t) * g
        theta_star = Phi.T @ traj.w_star
        assert traj.total_err[-1] == pytest.approx(np.linalg.norm(theta - theta_star), abs=1e-10)

    def test_decomposition_and_contraction(self, quad_family, two_state):
        cert = certify(quad_family, two_state)
        sched = Schedule(0.75, cert.eta)
        w1 = np.full(5, 3.0)
        for s in range(5):
            path = sample_stationary_path(two_state, 3000, trial_seed(1, s))
            traj = run_decomposed(quad_family, path, sched, w1)
            r1 = traj.total_err[0]
            assert np.all(traj.residual <= 1e-8 * max(1, r1))
            assert np.all(traj.total_err <= traj.init_err + traj.samp_err + 1e-9)
            bound = np.array([product_exact(0, t - 1, cert.alpha, 0.75) for t in traj.checkpoints]) * r1
            assert np.all(traj.init_err <= bound + 1e-10)
            assert np.all(np.diff(traj.init_err) <= 1e-15)

    def test_run_batch_matches_single(self, quad_family, two_state):
        seeds = [trial_seed(3, i) for i in range(4)]
        sched = Schedule(0.75, 2.0)
        cp = default_checkpoints(700)
        w_star = minimizer(quad_family, two_state)
        batch = run_batch(quad_family, two_state, 700, seeds, sched, np.zeros(5), cp)
        for i, s in enumerate(seeds):
            traj = run_decomposed(quad_family, sample_stationary_path(two_state, 700, s), sched, np.zeros(5), cp, w_star)
            np.testing.assert_allclose(batch["samp_err"][i], traj.samp_err, rtol=1e-12, atol=1e-15)
            np.testing.assert_allclose(batch["total_err"][i], traj.total_err, rtol=1e-12, atol=1e-15)

    def test_nonfinite(self, quad_family, two_state):
        path = sample_stationary_path(two_state, 3000, 1)
        with pytest.raises(NonFinite) as info:
            run(quad_family, path, Schedule(0.75, 1e-3), np.ones(5))
        assert info.value.t is not None

    def test_bad_path(self, quad_family):
        with pytest.raises(DimensionMismatch):
            run(quad_family, np.array([0, 1, 2]), Schedule(0.75, 2.0), np.zeros(5), w_star=np.zeros(5))

    def test_bad_w1(self, quad_family, two_state):
        path = sample_stationary_path(two_state, 10, 1)
        with pytest.raises(DimensionMismatch):
            run(quad_family, path, Schedule(0.75, 2.0), np.zeros(4))

    def test_bare_array_needs_w_star(self, quad_family):
        with pytest.raises(DomainError):
            run(quad_family, np.array([0, 1]), Schedule(0.75, 2.0), np.zeros(5))

    def test_mismatched_chain(self, quad_family):
        with pytest.raises(DimensionMismatch):
            run_batch(quad_family, build_cycle_walk(3, 0.5), 10, [1], Schedule(0.75, 2.0), np.zeros(5), [1, 10], np.zeros(5))
