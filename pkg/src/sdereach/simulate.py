"""Euler-Maruyama simulation, hitting-time CDFs, and decrease probabilities.

The integrator is the plain forward scheme

    x_{k+1} = x_k + f(x_k) dt + g(x_k) sqrt(dt) w_k,   w_k ~ N(0, I_m),

with per-trajectory noise streams keyed by (seed, trajectory index), so
results are bit-reproducible and unaffected by batching or by changing
the trajectory count. Hitting times are detected at grid times only; the
O(sqrt(dt)) one-sided bias this introduces is kept small by the default
dt = 1e-3 (no Brownian-bridge correction is applied).

State magnitudes beyond 1e12 mark a trajectory as diverged and freeze it,
which lets the explicit scheme's instability be observed without
floating-point overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .polyalg import Polynomial
from .sdemodel import SdeSystem, SemialgebraicSet, variant_value, variant_value_batch

DIVERGENCE_GUARD = 1e12
_STEP_BLOCK = 1024
_CHUNK = 512


class DynamicsError(RuntimeError):
    """Drift or diffusion evaluation produced a NaN."""


@dataclass(frozen=True)
class SimConfig:
    dt: float
    t_max: float
    n_traj: int
    seed: int

    def __post_init__(self):
        if self.dt <= 0 or self.t_max <= 0:
            raise ValueError("dt and t_max must be positive")
        if self.dt > self.t_max:
            raise ValueError("dt must not exceed t_max")
        if self.n_traj < 1:
            raise ValueError("n_traj must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.t_max / self.dt + 1e-9))


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (steps+1, n)
    diverged: bool


@dataclass
class HittingCdf:
    horizons: tuple[float, ...]
    p_mean: np.ndarray
    p10: np.ndarray
    p90: np.ndarray

    def rows(self):
        for h, m, lo, hi in zip(self.horizons, self.p_mean, self.p10, self.p90):
            yield (h, m, lo, hi)


@dataclass
class DecreaseEstimate:
    probability: float
    stderr: float
    n_samples: int


@dataclass
class DecreaseField:
    points: np.ndarray      # (k, n) admissible grid points
    estimates: np.ndarray   # (k,)
    stderrs: np.ndarray     # (k,)
    minimum_index: int

    @property
    def minimum_point(self) -> np.ndarray:
        return self.points[self.minimum_index]

    @property
    def minimum_estimate(self) -> float:
        return float(self.estimates[self.minimum_index])


def _drift_batch(sys: SdeSystem, pts: np.ndarray) -> np.ndarray:
    out = np.empty_like(pts)
    for i, f_i in enumerate(sys.f):
        out[:, i] = f_i.eval_batch(pts)
    return out


def _noise_batch(sys: SdeSystem, pts: np.ndarray, w: np.ndarray,
                 const_g: np.ndarray | None) -> np.ndarray:
    if const_g is not None:
        return w @ const_g.T
    out = np.zeros_like(pts)
    for i in range(sys.n):
        for j in range(sys.m):
            entry = sys.g[i][j]
            if not entry.is_zero():
                out[:, i] += entry.eval_batch(pts) * w[:, j]
    return out


def euler_maruyama(
    sys: SdeSystem, x0, cfg: SimConfig, traj_index: int = 0
) -> Trajectory:
    """Integrate a single trajectory, storing the state at every step."""
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    if x0.shape != (sys.n,):
        raise ValueError(f"x0 must have length {sys.n}")
    n_steps = cfg.n_steps
    const_g = sys.constant_diffusion_matrix()
    noisy = sys.has_noise
    gen = rng.stream(cfg.seed, rng.LANE_TRAJECTORY, traj_index)
    sqrt_dt = math.sqrt(cfg.dt)

    states = np.empty((n_steps + 1, sys.n))
    states[0] = x0
    x = x0[None, :].copy()
    diverged = False
    step = 0
    while step < n_steps and not diverged:
        nb = min(_STEP_BLOCK, n_steps - step)
        w = rng.normals(gen, (nb, sys.m)) if noisy else None
        for t in range(nb):
            drift = _drift_batch(sys, x)
            if not np.all(np.isfinite(drift)):
                raise DynamicsError(f"drift evaluation produced NaN at step {step + t}")
            new = x + drift * cfg.dt
            if noisy:
                noise = _noise_batch(sys, x, w[t][None, :], const_g)
                if not np.all(np.isfinite(noise)):
                    raise DynamicsError(
                        f"diffusion evaluation produced NaN at step {step + t}"
                    )
                new = new + noise * sqrt_dt
            x = new
            states[step + t + 1] = x[0]
            if np.max(np.abs(x)) > DIVERGENCE_GUARD:
                diverged = True
                states = states[: step + t + 2]
                break
        step += nb
    times = np.arange(states.shape[0]) * cfg.dt
    return Trajectory(times=times, states=states, diverged=diverged)


def _hit_steps_batch(
    sys: SdeSystem,
    x0: np.ndarray,
    target: SemialgebraicSet,
    cfg: SimConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """First hitting step per trajectory (-1 if none); also a diverged mask."""
    n_steps = cfg.n_steps
    const_g = sys.constant_diffusion_matrix()
    noisy = sys.has_noise
    sqrt_dt = math.sqrt(cfg.dt)
    hit = np.full(cfg.n_traj, -1, dtype=np.int64)
    diverged = np.zeros(cfg.n_traj, dtype=bool)

    for chunk_start in range(0, cfg.n_traj, _CHUNK):
        idx = np.arange(chunk_start, min(chunk_start + _CHUNK, cfg.n_traj))
        gens = [rng.stream(cfg.seed, rng.LANE_TRAJECTORY, int(j)) for j in idx]
        x = np.tile(x0, (len(idx), 1))
        alive = np.arange(len(idx))
        step = 0
        while step < n_steps and alive.size:
            nb = min(_STEP_BLOCK, n_steps - step)
            w = (
                np.stack([rng.normals(gens[a], (nb, sys.m)) for a in alive])
                if noisy
                else None
            )
            for t in range(nb):
                drift = _drift_batch(sys, x)
                if not np.all(np.isfinite(drift)):
                    raise DynamicsError(f"drift evaluation produced NaN at step {step + t}")
                x_new = x + drift * cfg.dt
                if noisy:
                    x_new = x_new + _noise_batch(sys, x, w[:, t, :], const_g) * sqrt_dt
                x = x_new
                blown = np.max(np.abs(x), axis=1) > DIVERGENCE_GUARD
                inside = target.contains_batch(x) & ~blown
                if np.any(inside):
                    hit[idx[alive[inside]]] = step + t + 1
                if np.any(blown):
                    diverged[idx[alive[blown]]] = True
                done = inside | blown
                if np.any(done):
                    keep = ~done
                    x = x[keep]
                    alive = alive[keep]
                    if w is not None:
                        w = w[keep]
                    if not alive.size:
                        break
            step += nb
    return hit, diverged


def hitting_cdf(
    sys: SdeSystem,
    x0,
    target: SemialgebraicSet,
    cfg: SimConfig,
    horizons,
    n_bootstrap: int = 200,
) -> HittingCdf:
    """Empirical P(tau_target <= t) with bootstrap percentile bands.

    The 10/90 bands come from `n_bootstrap` resamples of the trajectory set
    (percentile method). An initial state inside the target yields the
    constant CDF 1.
    """
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    if x0.shape != (sys.n,):
        raise ValueError(f"x0 must have length {sys.n}")
    horizons = tuple(float(h) for h in horizons)
    if not horizons or any(h <= 0 for h in horizons):
        raise ValueError("horizons must be positive")
    if sorted(horizons) != list(horizons):
        raise ValueError("horizons must be increasing")
    if horizons[-1] > cfg.t_max + 1e-9:
        raise ValueError("horizons must not exceed t_max")

    k = len(horizons)
    if target.contains(x0):
        ones = np.ones(k)
        return HittingCdf(horizons, ones.copy(), ones.copy(), ones.copy())

    hit, _ = _hit_steps_batch(sys, x0, target, cfg)
    horizon_steps = np.array(
        [int(math.floor(h / cfg.dt + 1e-9)) for h in horizons], dtype=np.int64
    )
    hit_valid = hit >= 0
    # indicator matrix: trajectory x horizon
    ind = hit_valid[:, None] & (hit[:, None] <= horizon_steps[None, :])
    p_mean = ind.mean(axis=0)

    boot_gen = rng.stream(cfg.seed, rng.LANE_BOOTSTRAP, 0)
    samples = boot_gen.integers(0, cfg.n_traj, size=(n_bootstrap, cfg.n_traj))
    boot = ind[samples].mean(axis=1)  # (n_bootstrap, k)
    p10 = np.percentile(boot, 10, axis=0)
    p90 = np.percentile(boot, 90, axis=0)
    p10 = np.minimum(p10, p_mean)
    p90 = np.maximum(p90, p_mean)
    return HittingCdf(horizons, p_mean, p10, p90)


def _wilson_halfwidth(successes: int, n: int, z: float = 1.0) -> float:
    p = successes / n
    denom = 1.0 + z * z / n
    return z * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom


def decrease_probability(
    sys: SdeSystem,
    zeta: Polynomial,
    lam: float,
    x,
    tau: float,
    delta: float,
    n_samples: int,
    seed: int,
    lane: int = rng.LANE_GRID_BASE,
    n_substeps: int = 100,
) -> DecreaseEstimate:
    """Monte Carlo estimate of P(U(x(tau)) - U(x) <= -delta) from state x.

    U is the exponential variant built from (zeta, lam); integration uses
    dt = tau / n_substeps. The reported stderr is the Wilson-interval
    half-width at one standard normal unit, which stays positive even at
    empirical fractions of exactly 0 or 1.
    """
    if tau <= 0 or delta <= 0:
        raise ValueError("tau and delta must be positive")
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape != (sys.n,):
        raise ValueError(f"x must have length {sys.n}")
    dt = tau / n_substeps
    sqrt_dt = math.sqrt(dt)
    const_g = sys.constant_diffusion_matrix()
    noisy = sys.has_noise

    pts = np.tile(x, (n_samples, 1))
    gens = [rng.stream(seed, lane, j) for j in range(n_samples)]
    w_all = (
        np.stack([rng.normals(g, (n_substeps, sys.m)) for g in gens])
        if noisy
        else None
    )
    for t in range(n_substeps):
        drift = _drift_batch(sys, pts)
        if not np.all(np.isfinite(drift)):
            raise DynamicsError(f"drift evaluation produced NaN at substep {t}")
        new = pts + drift * dt
        if noisy:
            new = new + _noise_batch(sys, pts, w_all[:, t, :], const_g) * sqrt_dt
        pts = new

    u0 = variant_value(zeta, lam, x)
    u_tau = variant_value_batch(zeta, lam, pts)
    successes = int(np.sum(u_tau - u0 <= -delta))
    return DecreaseEstimate(
        probability=successes / n_samples,
        stderr=_wilson_halfwidth(successes, n_samples),
        n_samples=n_samples,
    )


def grid_sweep_decrease(
    sys: SdeSystem,
    zeta: Polynomial,
    lam: float,
    box: list[tuple[float, float]],
    resolution: int,
    tau: float,
    delta: float,
    n_samples: int,
    seed: int,
) -> DecreaseField:
    """Decrease-probability field over the grid points of `box` with zeta > 0.

    Each admissible point gets its own noise lane derived from its position
    in the full grid, so refining other parts of the grid or changing the
    admissible set never alters a point's estimate. Reports the field and
    the location of the minimum estimate (first in row-major order on ties).
    """
    if len(box) != sys.n:
        raise ValueError(f"box must have {sys.n} intervals")
    axes = [np.linspace(lo, hi, resolution) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    grid = np.stack([m.ravel() for m in mesh], axis=1)
    admissible = zeta.eval_batch(grid) > 0.0
    if not np.any(admissible):
        raise ValueError("no grid point satisfies zeta > 0; enlarge the region")

    points = []
    estimates = []
    stderrs = []
    for flat_idx in np.flatnonzero(admissible):
        est = decrease_probability(
            sys,
            zeta,
            lam,
            grid[flat_idx],
            tau,
            delta,
            n_samples,
            seed,
            lane=rng.LANE_GRID_BASE + int(flat_idx),
        )
        points.append(grid[flat_idx])
        estimates.append(est.probability)
        stderrs.append(est.stderr)
    estimates = np.array(estimates)
    return DecreaseField(
        points=np.array(points),
        estimates=estimates,
        stderrs=np.array(stderrs),
        minimum_index=int(np.argmin(estimates)),
    )


@dataclass
class DivergenceDemo:
    dt: float
    threshold: float
    x0: float
    magnitudes_log10: list[float]
    ratios: list[float]  # |x_{k+1}| / |x_k|, capped at inf for display
    all_ratios_at_least_two: bool
    steps: int


def doublewell_divergence_demo(dt: float, steps: int, x0: float | None = None) -> DivergenceDemo:
    """Iterate the noiseless double-well Euler map from above its stability threshold.

    The map x -> x + 4x(1 - x^2) dt contracts nothing once |x| exceeds
    sqrt(1 + 3/(4 dt)): there |1 + 4 dt (1 - x^2)| >= 2, so magnitudes at
    least double every step. The iteration is cubically explosive (the
    magnitude's log grows threefold per step), far beyond float range
    within a handful of steps, so it runs in arbitrary precision.
    """
    import mpmath

    if dt <= 0:
        raise ValueError("dt must be positive")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    threshold = math.sqrt(1.0 + 3.0 / (4.0 * dt))
    if x0 is None:
        x0 = 2.0 * threshold
    x = mpmath.mpf(x0)
    dt_mp = mpmath.mpf(dt)
    mags = [abs(x)]
    ratios_mp = []
    for _ in range(steps):
        x = x * (1 + 4 * dt_mp * (1 - x * x))
        mags.append(abs(x))
        ratios_mp.append(mags[-1] / mags[-2])
    return DivergenceDemo(
        dt=dt,
        threshold=threshold,
        x0=float(x0),
        magnitudes_log10=[float(mpmath.log10(m)) if m > 0 else -math.inf for m in mags],
        ratios=[float(r) for r in ratios_mp],
        all_ratios_at_least_two=all(r >= 2 for r in ratios_mp),
        steps=steps,
    )
