"""Moment-closure tests.

Independent oracles: scipy.stats.nbinom / poisson for the pmf branches,
exact hand-evaluated values for the small closed-form examples, a
from-scratch factorial-weight implementation for the truncated-sum
identity, and self-convergence for the integrator.  The compiled kernel
route is pinned against the pure-Python reference on frozen grids
(tolerance covers lgamma ulp differences between libm builds, amplified
by the large-size cancellation in the log pmf).
"""

import math

import numpy as np
import pytest
import scipy.stats

from stageq import (
    ClosureDomainError,
    Constant,
    IntegrationFailureError,
    IntegratorSettings,
    InvalidParameterError,
    ModelConfig,
    MomentState,
    NBParams,
    PerStageThresholds,
    PiecewiseConstant,
    Sinusoid,
    UniformThresholds,
    closure_rhs,
    deficit_sum,
    integrate,
    integrate_mean_field,
    mean_field_rhs,
    nb_aux_Q,
    nb_pmf,
    project_D,
    weighted_deficit_sum,
    write_trajectory_csv,
)
from stageq import _closure_kernels as ck

INTERIOR_GRID = [(0.5, 1.0), (1.0, 2.0), (2.0, 2.5), (3.0, 8.0), (5.0, 5.2),
                 (8.0, 40.0), (0.3, 0.9), (6.0, 9.0), (0.05, 0.3)]


class TestNBPmf:
    def test_zero_ray(self):
        assert nb_pmf(0, 0.0, 3.0) == 1.0
        assert nb_pmf(2, 0.0, 3.0) == 0.0
        assert nb_pmf(0, 0.0, 0.0) == 1.0

    def test_poisson_ray(self):
        # e^-1 for n = 0 and 1 at rho = eta = 1
        expect = math.exp(-1.0)
        assert nb_pmf(0, 1.0, 1.0) == pytest.approx(expect, rel=1e-14)
        assert nb_pmf(1, 1.0, 1.0) == pytest.approx(expect, rel=1e-14)

    def test_poisson_ray_matches_scipy(self):
        for rho in (0.2, 1.0, 3.7, 12.0):
            for n in range(0, 30):
                assert nb_pmf(n, rho, rho) == pytest.approx(
                    scipy.stats.poisson.pmf(n, rho), rel=1e-11, abs=1e-300)

    def test_interior_simple_point(self):
        # (rho, eta) = (1, 2): p = 0.5, r = 1, P_0 = p^r = 0.5
        assert nb_pmf(0, 1.0, 2.0) == pytest.approx(0.5, rel=1e-14)
        assert math.exp(-1.0) <= nb_pmf(0, 1.0, 2.0) <= math.exp(-0.5)

    @pytest.mark.parametrize("rho,eta", INTERIOR_GRID)
    def test_interior_matches_scipy(self, rho, eta):
        p = rho / eta
        r = rho * rho / (eta - rho)
        for n in range(0, 60):
            ref = scipy.stats.nbinom.pmf(n, r, p)
            if ref < 1e-280:
                continue
            assert nb_pmf(n, rho, eta) == pytest.approx(ref, rel=1e-10)

    @pytest.mark.parametrize("rho,eta", INTERIOR_GRID + [(0.0, 1.0), (2.0, 2.0)])
    def test_sums_to_one(self, rho, eta):
        total = sum(nb_pmf(n, rho, eta) for n in range(0, 3000))
        assert total == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("rho,eta", INTERIOR_GRID)
    def test_moment_consistency(self, rho, eta):
        mean = sum(n * nb_pmf(n, rho, eta) for n in range(0, 3000))
        var = sum((n - rho) ** 2 * nb_pmf(n, rho, eta) for n in range(0, 3000))
        assert mean == pytest.approx(rho, abs=1e-8)
        assert var == pytest.approx(eta, abs=1e-8)

    def test_p0_bounds(self):
        # e^{-rho} <= P_0 <= e^{-rho^2/eta} across the domain
        for rho, eta in INTERIOR_GRID + [(1.0, 1.0), (4.0, 4.0)]:
            if rho <= 0:
                continue
            p0 = nb_pmf(0, rho, eta)
            assert math.exp(-rho) - 1e-15 <= p0 <= math.exp(-rho * rho / eta) + 1e-15

    def test_continuity_at_rays(self):
        delta = 1e-6
        for rho in (0.5, 2.0, 7.0):
            for n in range(0, 12):
                near = nb_pmf(n, rho, rho * (1.0 + delta))
                limit = scipy.stats.poisson.pmf(n, rho)
                assert near == pytest.approx(limit, abs=1e-4, rel=1e-4)
        for eta in (1.0, 5.0):
            assert nb_pmf(0, delta, eta) == pytest.approx(1.0, abs=1e-4)
            assert nb_pmf(1, delta, eta) == pytest.approx(0.0, abs=1e-4)

    def test_output_range(self):
        rng = np.random.default_rng(3)
        for _ in range(300):
            rho = rng.uniform(0.0, 12.0)
            eta = rho * rng.uniform(1.0, 4.0)
            v = nb_pmf(int(rng.integers(0, 40)), rho, eta)
            assert 0.0 <= v <= 1.0

    def test_domain_and_argument_errors(self):
        with pytest.raises(ClosureDomainError):
            nb_pmf(0, -0.5, 1.0)
        with pytest.raises(ClosureDomainError):
            nb_pmf(0, 2.0, 1.0)
        with pytest.raises(ClosureDomainError):
            nb_pmf(0, math.nan, 1.0)
        with pytest.raises(InvalidParameterError):
            nb_pmf(-1, 1.0, 2.0)
        with pytest.raises(InvalidParameterError):
            nb_pmf(1.5, 1.0, 2.0)


class TestNBParams:
    def test_from_moments_simple(self):
        params = NBParams.from_moments(1.0, 2.0)
        assert params.p == 0.5
        assert params.r == 1.0

    def test_moment_round_trip(self):
        for rho, eta in INTERIOR_GRID:
            params = NBParams.from_moments(rho, eta)
            assert params.mean == pytest.approx(rho, rel=1e-12)
            assert params.variance == pytest.approx(eta, rel=1e-12)

    def test_rejects_rays_and_invalid(self):
        with pytest.raises(ClosureDomainError):
            NBParams.from_moments(0.0, 1.0)
        with pytest.raises(ClosureDomainError):
            NBParams.from_moments(2.0, 2.0)
        with pytest.raises(ClosureDomainError):
            NBParams.from_moments(3.0, 1.0)
        with pytest.raises(InvalidParameterError):
            NBParams(p=0.0, r=1.0)
        with pytest.raises(InvalidParameterError):
            NBParams(p=1.5, r=1.0)
        with pytest.raises(InvalidParameterError):
            NBParams(p=0.5, r=-1.0)


class TestAuxiliaryProduct:
    def test_single_factor(self):
        # Q_1 = rho^2 / eta
        assert nb_aux_Q(1, 1.0, 2.0) == pytest.approx(0.5, rel=1e-14)

    def test_local_upper_bound(self):
        # Q_n <= (rho + n)^n / n! at (2, 5)
        for n in range(1, 7):
            bound = (2.0 + n) ** n / math.factorial(n)
            assert nb_aux_Q(n, 2.0, 5.0) <= bound

    def test_ratio_identity(self):
        # P_n / P_0 = Q_n on the interior
        rho, eta = 1.5, 4.0
        p0 = nb_pmf(0, rho, eta)
        for n in range(1, 9):
            assert nb_pmf(n, rho, eta) / p0 == pytest.approx(
                nb_aux_Q(n, rho, eta), rel=1e-12)

    def test_boundary_rejected(self):
        with pytest.raises(ClosureDomainError):
            nb_aux_Q(1, 0.0, 1.0)
        with pytest.raises(ClosureDomainError):
            nb_aux_Q(1, 2.0, 2.0)
        with pytest.raises(InvalidParameterError):
            nb_aux_Q(0, 1.0, 2.0)


class TestDeficitSums:
    def test_empty_state(self):
        for eta in (0.0, 1.0, 4.0):
            assert deficit_sum(0.0, eta, 3) == 3.0

    def test_saturation(self):
        assert deficit_sum(1000.0, 1000.0, 3) < 1e-100

    def test_single_term(self):
        assert deficit_sum(1.0, 2.0, 1) == pytest.approx(0.5, rel=1e-14)

    def test_range(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            rho = rng.uniform(0.0, 10.0)
            eta = rho * rng.uniform(1.0, 3.0)
            sigma = int(rng.integers(1, 8))
            val = deficit_sum(rho, eta, sigma)
            assert 0.0 <= val <= sigma

    def test_weighted_trivial_points(self):
        for sigma in (1, 2, 5):
            assert weighted_deficit_sum(0.0, 0.0, sigma) == float(sigma)
        assert weighted_deficit_sum(1.0, 2.0, 1) == pytest.approx(1.5, rel=1e-14)

    def test_factorial_weight_identity(self):
        # sum_{i<s}(rho - i + 1)(s - i) rho^i/i! = s * sum_{i<=s} rho^i/i!
        rng = np.random.default_rng(11)
        for _ in range(100):
            rho = float(rng.uniform(0.0, 20.0))
            s = int(rng.integers(1, 11))
            lhs = sum((rho - i + 1.0) * (s - i) * rho ** i / math.factorial(i)
                      for i in range(s))
            rhs = s * sum(rho ** i / math.factorial(i) for i in range(s + 1))
            assert lhs == pytest.approx(rhs, rel=1e-12)
        # spot value: rho = 2, sigma = 2 gives 10 on both sides
        lhs = sum((2.0 - i + 1.0) * (2 - i) * 2.0 ** i / math.factorial(i)
                  for i in range(2))
        assert lhs == 10.0

    def test_weighted_plus_plain_on_ray(self):
        # W + F = 2 sigma * P[Poisson(rho) <= sigma] via the identity above
        for rho in (0.5, 2.0, 6.0):
            for sigma in (1, 2, 4):
                combined = (weighted_deficit_sum(rho, rho, sigma)
                            + deficit_sum(rho, rho, sigma))
                expect = 2.0 * sigma * scipy.stats.poisson.cdf(sigma, rho)
                assert combined == pytest.approx(expect, rel=1e-10)


class TestClosureRhs:
    def make_config(self, n=3, c0=6.0, sigma=3):
        return ModelConfig(num_stages=n, max_rate=10.0, input=Constant(c0),
                           thresholds=UniformThresholds(sigma))

    def test_all_zero_state(self):
        config = self.make_config()
        d = closure_rhs(MomentState.zero(3), config, 0.0)
        assert d.rho[0] == pytest.approx(6.0, rel=1e-14)
        assert d.eta[0] == pytest.approx(6.0, rel=1e-14)
        for k in (1, 2):
            assert d.rho[k] == pytest.approx(0.0, abs=1e-13)
            assert d.eta[k] == pytest.approx(0.0, abs=1e-13)

    def test_saturated_stage(self):
        config = self.make_config()
        state = MomentState(rho=(50.0, 50.0, 50.0), eta=(50.0, 50.0, 50.0))
        d = closure_rhs(state, config, 0.0)
        assert d.rho[0] == pytest.approx(6.0 - 10.0, abs=1e-12)

    def test_diagonal_spread_is_positive(self):
        # on rho = eta > 0: d(eta) - d(rho) = 2c (1 - P[Poisson(rho) <= sigma])
        config = ModelConfig(num_stages=1, max_rate=10.0, input=Constant(6.0),
                             thresholds=UniformThresholds(2))
        for rho in (0.5, 2.0, 4.0):
            st = MomentState(rho=(rho,), eta=(rho,))
            d = closure_rhs(st, config, 0.0)
            spread = d.eta[0] - d.rho[0]
            expect = 2.0 * 10.0 * (1.0 - scipy.stats.poisson.cdf(2, rho))
            assert spread == pytest.approx(expect, rel=1e-9)
            assert spread > 0.0

    def test_zero_ray_input_flux(self):
        # at rho_1 = 0 the mean inflow is exactly the input rate
        config = self.make_config(c0=4.5)
        for eta1 in (0.0, 1.0, 3.0):
            st = MomentState(rho=(0.0, 1.0, 1.0), eta=(eta1, 2.0, 2.0))
            d = closure_rhs(st, config, 0.0)
            assert d.rho[0] == pytest.approx(4.5, rel=1e-12)

    def test_matches_deficit_building_blocks(self):
        config = ModelConfig(num_stages=2, max_rate=10.0, input=Constant(6.0),
                             thresholds=PerStageThresholds((2, 4)))
        st = MomentState(rho=(1.0, 2.5), eta=(2.0, 4.0))
        d = closure_rhs(st, config, 0.0)
        f1 = deficit_sum(1.0, 2.0, 2)
        w1 = weighted_deficit_sum(1.0, 2.0, 2)
        f2 = deficit_sum(2.5, 4.0, 4)
        w2 = weighted_deficit_sum(2.5, 4.0, 4)
        assert d.rho[0] == 6.0 - 10.0 + (10.0 / 2) * f1
        assert d.eta[0] == 6.0 + 10.0 - (10.0 / 2) * w1
        assert d.rho[1] == (10.0 / 4) * f2 - (10.0 / 2) * f1
        assert d.eta[1] == 2.0 * 10.0 - (10.0 / 2) * f1 - (10.0 / 4) * w2

    def test_time_varying_input(self):
        config = ModelConfig(num_stages=1, max_rate=10.0,
                             input=Sinusoid(offset=6.0, amplitude=3.0, omega=0.5),
                             thresholds=UniformThresholds(3))
        st = MomentState.zero(1)
        for t in (0.0, 1.0, 4.0):
            d = closure_rhs(st, config, t)
            assert d.rho[0] == pytest.approx(
                max(0.0, 6.0 + 3.0 * math.sin(0.5 * t)), rel=1e-12)

    def test_rejects_out_of_domain(self):
        config = self.make_config(n=1)
        with pytest.raises(ClosureDomainError):
            closure_rhs(MomentState(rho=(-0.1,), eta=(1.0,)), config, 0.0)
        with pytest.raises(ClosureDomainError):
            closure_rhs(MomentState(rho=(2.0,), eta=(1.0,)), config, 0.0)
        with pytest.raises(InvalidParameterError):
            closure_rhs(MomentState.zero(2), config, 0.0)

    def test_jacobian_smoothness(self):
        # 2nd-order central differences against a 4th-order stencil:
        # agreement certifies the log-space pmf is smooth in (rho, eta)
        config = ModelConfig(num_stages=2, max_rate=10.0, input=Constant(6.0),
                             thresholds=PerStageThresholds((3, 2)))

        def f(vec):
            st = MomentState(rho=(vec[0], vec[1]), eta=(vec[2], vec[3]))
            d = closure_rhs(st, config, 0.0)
            return np.array(d.rho + d.eta)

        x0 = np.array([1.2, 2.3, 2.8, 4.1])
        h2, h4 = 1e-6, 1e-3
        for j in range(4):
            e = np.zeros(4)
            e[j] = 1.0
            col2 = (f(x0 + h2 * e) - f(x0 - h2 * e)) / (2 * h2)
            col4 = (-f(x0 + 2 * h4 * e) + 8 * f(x0 + h4 * e)
                    - 8 * f(x0 - h4 * e) + f(x0 - 2 * h4 * e)) / (12 * h4)
            assert np.max(np.abs(col2 - col4)) < 1e-5 * (1.0 + np.max(np.abs(col4)))


class TestKernelParity:
    def test_pmf_parity(self):
        rng = np.random.default_rng(2)
        for _ in range(500):
            rho = float(rng.uniform(0.0, 10.0))
            eta = rho + float(rng.uniform(0.0, 8.0))
            n = int(rng.integers(0, 30))
            a = nb_pmf(n, rho, eta)
            b = ck.nb_pmf_k(n, rho, eta)
            # libm lgamma differs by ulps between the two routes; the
            # large-r cancellation amplifies that (measured max ~1e-11)
            assert abs(a - b) <= 1e-9 * (1.0 + abs(a))

    def test_rhs_parity(self):
        rng = np.random.default_rng(1)
        config = ModelConfig(num_stages=5, max_rate=10.0, input=Constant(6.0),
                             thresholds=PerStageThresholds((1, 2, 3, 5, 4)))
        sig = config.thresholds_array()
        worst = 0.0
        for _ in range(200):
            rho = rng.uniform(0, 8, 5)
            eta = rho + rng.uniform(0, 6, 5)
            st = MomentState(rho=tuple(rho), eta=tuple(eta))
            d = closure_rhs(st, config, 0.0)
            drho = np.empty(5)
            deta = np.empty(5)
            ck.closure_rhs_k(rho, eta, sig, 10.0, 6.0, drho, deta)
            gap = np.max(np.abs(np.array(d.rho + d.eta)
                                - np.concatenate([drho, deta])))
            worst = max(worst, gap)
        assert worst <= 1e-8  # measured 8.4e-11 on this frozen grid

    def test_mean_field_parity(self):
        config = ModelConfig(num_stages=4, max_rate=10.0, input=Constant(6.0),
                             thresholds=PerStageThresholds((1, 3, 2, 5)))
        sig = config.thresholds_array()
        rng = np.random.default_rng(9)
        for _ in range(100):
            rho = rng.uniform(-1, 8, 4)
            a = mean_field_rhs(rho, config, 0.0)
            b = np.empty(4)
            ck.mean_field_rhs_k(rho, sig, 10.0, 6.0, b)
            np.testing.assert_array_equal(a, b)


class TestProjection:
    def test_examples(self):
        st = MomentState(rho=(1.0,), eta=(2.0,))
        assert project_D(st).rho == (1.0,) and project_D(st).eta == (2.0,)
        st = MomentState(rho=(-1.0,), eta=(2.0,))
        out = project_D(st)
        assert out.rho == (0.0,) and out.eta == (2.0,)
        st = MomentState(rho=(3.0,), eta=(1.0,))
        out = project_D(st)
        assert out.rho == (2.0,) and out.eta == (2.0,)

    def test_idempotent_and_in_domain(self):
        rng = np.random.default_rng(17)
        for _ in range(300):
            st = MomentState(rho=tuple(rng.uniform(-5, 8, 3)),
                             eta=tuple(rng.uniform(-5, 8, 3)))
            once = project_D(st)
            assert once.in_domain
            twice = project_D(once)
            assert twice.rho == once.rho and twice.eta == once.eta

    def test_non_expansive(self):
        rng = np.random.default_rng(23)
        for _ in range(200):
            a = rng.uniform(-5, 8, 2)
            b = rng.uniform(-5, 8, 2)
            pa = project_D(MomentState(rho=(a[0],), eta=(a[1],)))
            pb = project_D(MomentState(rho=(b[0],), eta=(b[1],)))
            before = math.hypot(a[0] - b[0], a[1] - b[1])
            after = math.hypot(pa.rho[0] - pb.rho[0], pa.eta[0] - pb.eta[0])
            assert after <= before + 1e-12

    def test_preserves_time(self):
        st = MomentState(rho=(-1.0,), eta=(0.5,), time=3.5)
        assert project_D(st).time == 3.5


class TestIntegrate:
    def make_config(self, **kw):
        base = dict(num_stages=3, max_rate=10.0, input=Constant(6.0),
                    thresholds=UniformThresholds(3))
        base.update(kw)
        return ModelConfig(**base)

    def test_zero_input_zero_state(self):
        config = self.make_config(input=Constant(0.0))
        traj = integrate(MomentState.zero(3), config, horizon=10.0,
                         sample_times=[0.0, 1.0, 10.0])
        for st in traj:
            assert st.rho == (0.0, 0.0, 0.0)
            assert st.eta == (0.0, 0.0, 0.0)

    def test_time_zero_sample_is_initial(self):
        config = self.make_config()
        start = MomentState(rho=(1.0, 0.5, 0.0), eta=(2.0, 1.0, 0.0))
        traj = integrate(start, config, horizon=1.0, sample_times=[0.0, 1.0])
        assert traj[0].rho == start.rho
        assert traj[0].eta == start.eta
        assert traj[0].time == 0.0

    def _halving_gap(self, times, atol, rtol):
        config = self.make_config()
        a = integrate(MomentState.zero(3), config, times[-1], times,
                      IntegratorSettings(atol=atol, rtol=rtol))
        b = integrate(MomentState.zero(3), config, times[-1], times,
                      IntegratorSettings(atol=atol / 2, rtol=rtol / 2))
        va = np.array([st.rho + st.eta for st in a])
        vb = np.array([st.rho + st.eta for st in b])
        return va, vb

    def test_self_convergence_on_tolerance_halving(self):
        # past the transient, halving tolerances moves emitted states by
        # less than the coarser tolerance (measured worst ratio 0.042)
        atol, rtol = 1e-6, 1e-5
        va, vb = self._halving_gap([15.0, 20.0, 30.0], atol, rtol)
        assert np.all(np.abs(va - vb) <= atol + rtol * np.abs(vb))

    def test_self_convergence_rate_through_transient(self):
        # accumulated transient error of the order-1 stepper shrinks like
        # sqrt(tol): each 100x tolerance cut reduced the gap ~10x
        times = [2.0, 8.0, 20.0]
        gaps = []
        for atol, rtol in [(1e-4, 1e-3), (1e-6, 1e-5), (1e-8, 1e-7)]:
            va, vb = self._halving_gap(times, atol, rtol)
            gaps.append(float(np.max(np.abs(va - vb))))
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[2] < 2e-4  # measured 8.0e-5

    def test_domain_invariant_along_trajectories(self):
        config = ModelConfig(num_stages=4, max_rate=10.0,
                             input=Sinusoid(offset=5.0, amplitude=7.0, omega=0.9),
                             thresholds=PerStageThresholds((1, 3, 2, 5)))
        times = np.linspace(0.25, 40.0, 160)
        traj = integrate(MomentState.zero(4), config, 40.0, times)
        for st in traj:
            assert st.in_domain

    def test_near_critical_input_stays_in_domain(self):
        config = self.make_config(input=Constant(9.9))
        traj = integrate(MomentState.zero(3), config, 60.0,
                         np.linspace(0.5, 60.0, 120))
        assert all(st.in_domain for st in traj)

    def test_piecewise_matches_constant_before_switch(self):
        sched = PiecewiseConstant(points=((0.0, 6.0), (30.0, 0.0)))
        pw = self.make_config(input=sched)
        const = self.make_config(input=Constant(6.0))
        a = integrate(MomentState.zero(3), pw, 30.0, [10.0, 30.0])
        b = integrate(MomentState.zero(3), const, 30.0, [10.0, 30.0])
        for sa, sb in zip(a, b):
            for x, y in zip(sa.rho + sa.eta, sb.rho + sb.eta):
                assert x == pytest.approx(y, abs=2e-6, rel=1e-5)

    def test_piecewise_drains_after_shutoff(self):
        sched = PiecewiseConstant(points=((0.0, 6.0), (30.0, 0.0)))
        config = self.make_config(input=sched)
        traj = integrate(MomentState.zero(3), config, 90.0, [30.0, 90.0])
        assert traj[0].rho[0] > 2.0
        assert traj[1].rho[0] < 1e-8
        assert traj[1].eta[2] < 1e-8

    def test_equilibrium_is_stationary_point(self):
        # long-time state must nearly zero the rhs
        config = self.make_config(num_stages=2)
        traj = integrate(MomentState.zero(2), config, 400.0, [400.0])
        d = closure_rhs(traj[0], config, 400.0)
        assert np.max(np.abs(np.array(d.rho + d.eta))) < 1e-4

    def test_step_underflow_raises(self):
        config = self.make_config()
        settings = IntegratorSettings(atol=1e-13, rtol=1e-13,
                                      initial_step=0.5, min_step=0.4,
                                      max_step=0.5)
        with pytest.raises(IntegrationFailureError, match="min_step"):
            integrate(MomentState.zero(3), config, 10.0, [10.0], settings)

    def test_argument_validation(self):
        config = self.make_config()
        with pytest.raises(ClosureDomainError):
            integrate(MomentState(rho=(3.0, 0.0, 0.0), eta=(1.0, 0.0, 0.0)),
                      config, 10.0, [1.0])
        with pytest.raises(InvalidParameterError):
            integrate(MomentState.zero(2), config, 10.0, [1.0])
        with pytest.raises(InvalidParameterError):
            integrate(MomentState.zero(3), config, 5.0, [1.0, 10.0])
        with pytest.raises(InvalidParameterError):
            integrate(MomentState.zero(3), config, 10.0, [])
        with pytest.raises(InvalidParameterError):
            integrate(MomentState.zero(3), config, 10.0, [2.0, 1.0])
        with pytest.raises(InvalidParameterError):
            IntegratorSettings(atol=0.0)
        with pytest.raises(InvalidParameterError):
            IntegratorSettings(min_step=0.5, max_step=0.1)
        with pytest.raises(InvalidParameterError):
            IntegratorSettings(min_factor=1.5)


class TestMeanField:
    def test_rhs_examples(self):
        config = ModelConfig(num_stages=2, max_rate=10.0, input=Constant(6.0),
                             thresholds=UniformThresholds(3))
        d = mean_field_rhs([0.0, 0.0], config, 0.0)
        assert d[0] == 6.0 and d[1] == 0.0
        d = mean_field_rhs([5.0, 7.0], config, 0.0)  # both saturated
        assert d[0] == pytest.approx(6.0 - 10.0)
        assert d[1] == pytest.approx(0.0, abs=1e-13)
        d = mean_field_rhs([1.5, 0.0], config, 0.0)  # linear band
        assert d[0] == pytest.approx(6.0 - 10.0 * 0.5, rel=1e-14)
        assert d[1] == pytest.approx(10.0 * 0.5, rel=1e-14)

    def test_equilibrium_mean(self):
        # fixed point: c v(rho) = c0, so rho = sigma c0 / c = 1.8
        config = ModelConfig(num_stages=2, max_rate=10.0, input=Constant(6.0),
                             thresholds=UniformThresholds(3))
        out = integrate_mean_field([0.0, 0.0], config, 200.0, [200.0])
        assert out[0, 0] == pytest.approx(1.8, abs=1e-6)
        assert out[0, 1] == pytest.approx(1.8, abs=1e-6)

    def test_stays_nonnegative(self):
        sched = PiecewiseConstant(points=((0.0, 6.0), (5.0, 0.0)))
        config = ModelConfig(num_stages=3, max_rate=10.0, input=sched,
                             thresholds=UniformThresholds(3))
        out = integrate_mean_field([0.0] * 3, config, 50.0,
                                   np.linspace(1.0, 50.0, 50))
        assert np.all(out >= 0.0)

    def test_validation(self):
        config = ModelConfig(num_stages=2, max_rate=10.0, input=Constant(6.0),
                             thresholds=UniformThresholds(3))
        with pytest.raises(ClosureDomainError):
            integrate_mean_field([-1.0, 0.0], config, 10.0, [1.0])
        with pytest.raises(InvalidParameterError):
            integrate_mean_field([0.0], config, 10.0, [1.0])
        with pytest.raises(InvalidParameterError):
            mean_field_rhs([0.0, 0.0, 0.0], config, 0.0)


class TestTrajectoryCsv:
    def test_schema_and_empty_columns(self, tmp_path):
        path = tmp_path / "traj.csv"
        times = [1.0, 2.0]
        means = np.array([[0.5, 1.5], [0.75, 2.5]])
        variances = np.array([[1.0, 2.0], [1.25, 3.0]])
        write_trajectory_csv(path, times, means, variances, "ode-nb")
        lines = path.read_text().splitlines()
        assert lines[0] == "time,stage,mean,variance,stderr,trials,source"
        assert lines[1] == "1.0,1,0.5,1.0,,,ode-nb"
        assert lines[2] == "1.0,2,1.5,2.0,,,ode-nb"
        assert lines[4] == "2.0,2,2.5,3.0,,,ode-nb"
        assert len(lines) == 5

    def test_means_only_source(self, tmp_path):
        path = tmp_path / "mf.csv"
        write_trajectory_csv(path, [1.0], np.array([[2.0]]), None, "ode-mf")
        lines = path.read_text().splitlines()
        assert lines[1] == "1.0,1,2.0,,,,ode-mf"

    def test_byte_stable(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        means = np.array([[1 / 3, 2 / 7]])
        var = np.array([[0.1, 0.2]])
        write_trajectory_csv(a, [0.5], means, var, "ode-nb")
        write_trajectory_csv(b, [0.5], means, var, "ode-nb")
        assert a.read_bytes() == b.read_bytes()
