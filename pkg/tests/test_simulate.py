"""Simulation: integrator fidelity, hitting CDFs, decrease probabilities."""

import math

import numpy as np
import pytest
from scipy.stats import norm

from sdereach import rng as rngmod
from sdereach import simulate as sim
from sdereach.polyalg import Polynomial
from sdereach.sdemodel import SdeSystem, SemialgebraicSet

SIGMA = math.sqrt(0.4)


def doublewell(noise=SIGMA):
    x = Polynomial.variable(1, 0)
    return SdeSystem([(-4.0) * x * x * x + 4.0 * x], [[Polynomial.constant(1, noise)]])


def brownian(n, sigma=1.0):
    f = [Polynomial.zero(n) for _ in range(n)]
    g = [
        [Polynomial.constant(n, sigma if i == j else 0.0) for j in range(n)]
        for i in range(n)
    ]
    return SdeSystem(f, g)


def unit_ball_target(n):
    ball = Polynomial.zero(n)
    for i in range(n):
        ball = ball + Polynomial.variable(n, i) * Polynomial.variable(n, i)
    return SemialgebraicSet([ball - 1.0])


class TestRngStreams:
    def test_streams_are_reproducible_and_independent(self):
        a1 = rngmod.normals(rngmod.stream(9, 0, 3), 100)
        a2 = rngmod.normals(rngmod.stream(9, 0, 3), 100)
        b = rngmod.normals(rngmod.stream(9, 0, 4), 100)
        assert np.array_equal(a1, a2)
        assert not np.array_equal(a1, b)

    def test_uniforms_are_open_interval(self):
        u = rngmod.uniforms(rngmod.stream(1, 0, 0), 10_000)
        assert np.all((u > 0.0) & (u < 1.0))


class TestEulerMaruyama:
    def test_deterministic_linear_map_exact(self):
        # f = -x, dt = 1/4: iterates are exactly 0.75^k (dyadic arithmetic)
        x = Polynomial.variable(1, 0)
        sys1 = SdeSystem([(-1.0) * x], [[Polynomial.zero(1)]])
        cfg = sim.SimConfig(dt=0.25, t_max=5.0, n_traj=1, seed=0)
        traj = sim.euler_maruyama(sys1, [1.0], cfg)
        assert np.array_equal(traj.states[:, 0], 0.75 ** np.arange(21))
        assert not traj.diverged

    def test_deterministic_linear_map_dt_point_one(self):
        x = Polynomial.variable(1, 0)
        sys1 = SdeSystem([(-1.0) * x], [[Polynomial.zero(1)]])
        cfg = sim.SimConfig(dt=0.1, t_max=2.0, n_traj=1, seed=0)
        traj = sim.euler_maruyama(sys1, [1.0], cfg)
        assert np.allclose(traj.states[:, 0], 0.9 ** np.arange(21), rtol=1e-12)

    def test_increment_variance_chi_square_oracle(self):
        # f = 0, g = 1: increments are N(0, dt); the sample variance of 1e5
        # increments lies within 3 SEs, SE = dt sqrt(2/(N-1))
        cfg = sim.SimConfig(dt=0.01, t_max=1000.0, n_traj=1, seed=5)
        traj = sim.euler_maruyama(brownian(1), [0.0], cfg)
        inc = np.diff(traj.states[:, 0])
        n = len(inc)
        assert n == 100_000
        se = cfg.dt * math.sqrt(2.0 / (n - 1))
        assert abs(np.var(inc, ddof=1) - cfg.dt) <= 3.0 * se

    def test_divergence_marker_and_doubling(self):
        dt = 0.01
        threshold = math.sqrt(1.0 + 3.0 / (4.0 * dt))
        x0 = 2.0 * threshold
        cfg = sim.SimConfig(dt=dt, t_max=1.0, n_traj=1, seed=1)
        traj = sim.euler_maruyama(doublewell(noise=0.0), [x0], cfg)
        assert traj.diverged
        mags = np.abs(traj.states[:, 0])
        assert np.all(mags >= x0 * 2.0 ** np.arange(len(mags)) - 1e-9)

    def test_nan_dynamics_raises(self):
        bad = SdeSystem(
            [Polynomial.constant(1, float("nan"))], [[Polynomial.constant(1, 1.0)]]
        )
        cfg = sim.SimConfig(dt=0.1, t_max=1.0, n_traj=1, seed=0)
        with pytest.raises(sim.DynamicsError):
            sim.euler_maruyama(bad, [0.0], cfg)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            sim.SimConfig(dt=0.0, t_max=1.0, n_traj=1, seed=0)
        with pytest.raises(ValueError):
            sim.SimConfig(dt=0.1, t_max=1.0, n_traj=0, seed=0)
        with pytest.raises(ValueError):
            sim.SimConfig(dt=2.0, t_max=1.0, n_traj=1, seed=0)


class TestHittingCdf:
    def test_reflection_principle_oracle(self):
        # 1-d Brownian motion from 2 into {|x|<1}: P(tau<=t) = 2(1-Phi(1/sqrt(t)))
        cfg = sim.SimConfig(dt=1e-3, t_max=16.0, n_traj=600, seed=17)
        cdf = sim.hitting_cdf(brownian(1), [2.0], unit_ball_target(1), cfg, [1.0, 4.0, 16.0])
        for (h, p, lo, hi) in cdf.rows():
            oracle = 2.0 * (1.0 - norm.cdf(1.0 / math.sqrt(h)))
            assert abs(p - oracle) <= 0.05
            assert lo <= p <= hi

    def test_initial_state_inside_target(self):
        cfg = sim.SimConfig(dt=0.01, t_max=1.0, n_traj=10, seed=3)
        cdf = sim.hitting_cdf(brownian(2), [0.0, 0.0], unit_ball_target(2), cfg, [0.5, 1.0])
        assert np.all(cdf.p_mean == 1.0)
        assert np.all(cdf.p10 == 1.0) and np.all(cdf.p90 == 1.0)

    def test_monotone_in_horizon(self):
        cfg = sim.SimConfig(dt=0.01, t_max=20.0, n_traj=300, seed=4)
        cdf = sim.hitting_cdf(
            brownian(1), [1.5], unit_ball_target(1), cfg, [1.0, 2.0, 5.0, 10.0, 20.0]
        )
        assert np.all(np.diff(cdf.p_mean) >= 0)
        assert np.all(np.diff(cdf.p10) >= -1e-12)
        assert np.all(np.diff(cdf.p90) >= -1e-12)
        assert np.all(cdf.p10 <= cdf.p_mean) and np.all(cdf.p_mean <= cdf.p90)

    def test_bit_identical_reruns(self):
        cfg = sim.SimConfig(dt=0.01, t_max=4.0, n_traj=200, seed=11)
        a = sim.hitting_cdf(brownian(1), [1.5], unit_ball_target(1), cfg, [1.0, 4.0])
        b = sim.hitting_cdf(brownian(1), [1.5], unit_ball_target(1), cfg, [1.0, 4.0])
        assert np.array_equal(a.p_mean, b.p_mean)
        assert np.array_equal(a.p10, b.p10)
        assert np.array_equal(a.p90, b.p90)

    def test_trajectory_prefix_stable_under_traj_count(self):
        target = unit_ball_target(1)
        cfg_small = sim.SimConfig(dt=0.01, t_max=4.0, n_traj=100, seed=11)
        cfg_large = sim.SimConfig(dt=0.01, t_max=4.0, n_traj=200, seed=11)
        hit_small, _ = sim._hit_steps_batch(brownian(1), np.array([1.5]), target, cfg_small)
        hit_large, _ = sim._hit_steps_batch(brownian(1), np.array([1.5]), target, cfg_large)
        assert np.array_equal(hit_small, hit_large[:100])

    def test_horizon_validation(self):
        cfg = sim.SimConfig(dt=0.01, t_max=1.0, n_traj=10, seed=0)
        with pytest.raises(ValueError):
            sim.hitting_cdf(brownian(1), [2.0], unit_ball_target(1), cfg, [2.0])
        with pytest.raises(ValueError):
            sim.hitting_cdf(brownian(1), [2.0], unit_ball_target(1), cfg, [0.5, 0.2])


class TestDecreaseProbability:
    def test_impossible_event(self):
        x = Polynomial.variable(1, 0)
        zeta = (x - 1.0) * (x - 1.0) - 0.04
        est = sim.decrease_probability(
            doublewell(), zeta, 16.0, [0.5], tau=0.01, delta=1e9,
            n_samples=500, seed=2,
        )
        assert est.probability == 0.0
        assert est.stderr > 0.0  # Wilson half-width stays positive at p=0

    def test_requires_positive_tau_delta(self):
        x = Polynomial.variable(1, 0)
        zeta = x * x - 1.0
        with pytest.raises(ValueError):
            sim.decrease_probability(doublewell(), zeta, 1.0, [0.0], -0.01, 0.001, 10, 0)
        with pytest.raises(ValueError):
            sim.decrease_probability(doublewell(), zeta, 1.0, [0.0], 0.01, -1.0, 10, 0)

    def test_reproducible(self):
        x = Polynomial.variable(1, 0)
        zeta = (x - 1.0) * (x - 1.0) - 0.04
        kw = dict(tau=0.01, delta=0.001, n_samples=400, seed=8)
        a = sim.decrease_probability(doublewell(), zeta, 16.0, [0.7], **kw)
        b = sim.decrease_probability(doublewell(), zeta, 16.0, [0.7], **kw)
        assert a.probability == b.probability


class TestGridSweep:
    def test_symmetric_field_within_errors(self):
        # f = -x, g = 1, zeta = x^2 - 1: the dynamics and zeta are even in x,
        # so mirrored grid points estimate the same probability
        x = Polynomial.variable(1, 0)
        sys1 = SdeSystem([(-1.0) * x], [[Polynomial.constant(1, 1.0)]])
        zeta = x * x - 1.0
        field = sim.grid_sweep_decrease(
            sys1, zeta, 2.0, [(-2.0, 2.0)], 9, 0.01, 0.001, 2000, seed=21
        )
        pts = field.points[:, 0]
        for i, p in enumerate(pts):
            j = np.argmin(np.abs(pts + p))
            if abs(pts[j] + p) < 1e-9:
                diff = abs(field.estimates[i] - field.estimates[j])
                joint = 3.0 * (field.stderrs[i] + field.stderrs[j])
                assert diff <= joint

    def test_region_without_positive_zeta_errors(self):
        x = Polynomial.variable(1, 0)
        zeta = x * x - 100.0
        with pytest.raises(ValueError, match="zeta > 0"):
            sim.grid_sweep_decrease(
                doublewell(), zeta, 1.0, [(-1.0, 1.0)], 5, 0.01, 0.001, 10, 0
            )

    def test_minimum_location_reported(self):
        x = Polynomial.variable(1, 0)
        zeta = (x - 1.0) * (x - 1.0) - 0.04
        field = sim.grid_sweep_decrease(
            doublewell(), zeta, 16.0, [(0.0, 2.0)], 11, 0.01, 0.001, 300, seed=5
        )
        k = field.minimum_index
        assert field.minimum_estimate == field.estimates[k]
        assert field.estimates.min() == field.estimates[k]


class TestWeakOrderSanity:
    def test_ou_second_moment(self):
        # dx = -x dt + dW in 2-d: E|x(t)|^2 = e^{-2t} |x0|^2 + (1 - e^{-2t})
        n, t_end = 2, 5.0
        x1, x2 = Polynomial.variable(2, 0), Polynomial.variable(2, 1)
        sys2 = SdeSystem(
            [(-1.0) * x1, (-1.0) * x2],
            [
                [Polynomial.constant(2, 1.0), Polynomial.constant(2, 0.0)],
                [Polynomial.constant(2, 0.0), Polynomial.constant(2, 1.0)],
            ],
        )
        x0 = np.array([1.0, -1.0])
        n_traj = 400
        finals = np.empty(n_traj)
        cfg = sim.SimConfig(dt=1e-3, t_max=t_end, n_traj=n_traj, seed=33)
        for j in range(n_traj):
            traj = sim.euler_maruyama(sys2, x0, cfg, traj_index=j)
            finals[j] = np.sum(traj.states[-1] ** 2)
        closed_form = math.exp(-2 * t_end) * 2.0 + n * (1 - math.exp(-2 * t_end)) / 2.0
        se = finals.std(ddof=1) / math.sqrt(n_traj)
        assert abs(finals.mean() - closed_form) <= 5.0 * se


class TestDivergenceDemo:
    def test_threshold_values(self):
        assert sim.doublewell_divergence_demo(0.01, 3).threshold == pytest.approx(
            math.sqrt(76.0), abs=1e-12
        )
        assert sim.doublewell_divergence_demo(0.75, 3).threshold == pytest.approx(
            math.sqrt(2.0), abs=1e-12
        )

    def test_twenty_consecutive_doublings(self):
        demo = sim.doublewell_divergence_demo(0.01, 20)
        assert len(demo.ratios) == 20
        assert demo.all_ratios_at_least_two

    def test_below_threshold_stays_bounded(self):
        demo = sim.doublewell_divergence_demo(0.01, 200, x0=1.0)
        assert max(demo.magnitudes_log10) < math.log10(10.0)
        assert not demo.all_ratios_at_least_two
