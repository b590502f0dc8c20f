"""Independent validation of drift and variant certificates.

Certificates from the SOS pipeline are double-checked two ways: the Gram
identity residuals are re-expanded through polynomial arithmetic (never
trusting the solver), and the implied pointwise inequalities are sampled
over a box on a grid plus random points. Both must pass for a certificate
to be reported valid.

The mean-decrease check evaluates the polynomial beta rather than the
exponential variant itself (the generator of U factors as
exp(-lam*zeta) * beta), so no check here can overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng, simulate
from .polyalg import Polynomial
from .sdemodel import (
    SdeSystem,
    SemialgebraicSet,
    beta_poly,
    generator_apply,
    variant_value_batch,
)
from .sosbuild import DriftCertificate, MonomialBasis, VariantCertificate, expand_gram

POINTWISE_TOL = 1e-6
_VERIFY_LANE = 2**20  # sampling lane, clear of grid-sweep lanes


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst_point: list[float] | None
    margin: float
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "worst_point": self.worst_point,
            "margin": self.margin,
            "note": self.note,
        }


@dataclass
class VerificationReport:
    checks: list[CheckResult]
    box: list[tuple[float, float]]
    grid_resolution: int
    n_random: int
    seed: int

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
            "sampling": {
                "box": [list(b) for b in self.box],
                "grid_resolution": self.grid_resolution,
                "n_random": self.n_random,
                "seed": self.seed,
            },
        }


def _sample_points(
    box: list[tuple[float, float]], grid_resolution: int, n_random: int, seed: int
) -> np.ndarray:
    """Deterministic grid plus seeded uniform samples over the box."""
    n = len(box)
    axes = [np.linspace(lo, hi, grid_resolution) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    grid = np.stack([m.ravel() for m in mesh], axis=1)
    if n_random > 0:
        gen = rng.stream(seed, rng.LANE_GRID_BASE + _VERIFY_LANE, 0)
        u = rng.uniforms(gen, (n_random, n))
        lows = np.array([lo for lo, _ in box])
        highs = np.array([hi for _, hi in box])
        rand = lows + u * (highs - lows)
        return np.vstack([grid, rand])
    return grid


def _worst(points: np.ndarray, violation: np.ndarray) -> tuple[list[float] | None, float]:
    """Largest violation (positive = failing) and where it occurs."""
    idx = int(np.argmax(violation))
    return [float(v) for v in points[idx]], float(violation[idx])


def _default_grid_resolution(n: int) -> int:
    # about 4k grid points regardless of dimension
    return max(3, int(round(4096 ** (1.0 / n))))


def verify_drift(
    sys: SdeSystem,
    cert: DriftCertificate,
    box: list[tuple[float, float]],
    n_samples: int,
    seed: int = 0,
    grid_resolution: int | None = None,
) -> VerificationReport:
    """Sampled checks of the drift certificate's pointwise consequences.

    (a) V(x) >= gamma0 |x|^2 - lambda0 - tol      (norm-likeness)
    (b) A V(x) <= lambda1 - gamma1 |x|^2 + tol    (uniform generator bound)
    (c) A V(x) <= tol  where |x|^2 > lambda1/gamma1 (non-positivity outside C)

    The generator is composed symbolically once; the box should contain
    the compact set C.
    """
    if grid_resolution is None:
        grid_resolution = _default_grid_resolution(sys.n)
    pts = _sample_points(box, grid_resolution, n_samples, seed)
    norm2 = np.sum(pts * pts, axis=1)
    v_vals = cert.V.eval_batch(pts)
    av = generator_apply(sys, cert.V)
    av_vals = av.eval_batch(pts)

    checks = []
    viol_a = (cert.gamma0 * norm2 - cert.lambda0) - v_vals - POINTWISE_TOL
    pt, margin = _worst(pts, viol_a)
    checks.append(CheckResult("norm_like_lower_bound", bool(np.all(viol_a <= 0)), pt, margin))

    viol_b = av_vals - (cert.lambda1 - cert.gamma1 * norm2) - POINTWISE_TOL
    pt, margin = _worst(pts, viol_b)
    checks.append(CheckResult("generator_upper_bound", bool(np.all(viol_b <= 0)), pt, margin))

    outside = norm2 > cert.lambda1 / cert.gamma1
    if np.any(outside):
        viol_c = av_vals[outside] - POINTWISE_TOL
        pt, margin = _worst(pts[outside], viol_c)
        checks.append(
            CheckResult("generator_nonpositive_outside", bool(np.all(viol_c <= 0)), pt, margin)
        )
    else:
        checks.append(
            CheckResult(
                "generator_nonpositive_outside", True, None, 0.0,
                note="vacuous: no sampled point outside the compact set",
            )
        )
    return VerificationReport(checks, list(box), grid_resolution, n_samples, seed)


def verify_variant(
    sys: SdeSystem,
    cert: VariantCertificate,
    target: SemialgebraicSet,
    box: list[tuple[float, float]],
    n_samples: int,
    seed: int = 0,
    grid_resolution: int | None = None,
) -> VerificationReport:
    """Sampled checks of the variant certificate's pointwise consequences.

    (a) zeta(x) <= 0 implies g_i(x) <= -alpha_i + tol for every i
    (b) beta(x) <= -mu + tol on {zeta(x) >= 0}

    beta is composed symbolically through the diffusion Gram matrix; the
    box should intersect both {zeta > 0} and {zeta <= 0}.
    """
    if grid_resolution is None:
        grid_resolution = _default_grid_resolution(sys.n)
    pts = _sample_points(box, grid_resolution, n_samples, seed)
    zeta_vals = cert.zeta.eval_batch(pts)

    checks = []
    inside = zeta_vals <= 0.0
    if np.any(inside):
        worst_pt, worst_margin, ok = None, -math.inf, True
        for i, g_i in enumerate(target.constraints):
            g_vals = g_i.eval_batch(pts[inside])
            viol = g_vals - (-cert.alpha[i]) - POINTWISE_TOL
            pt, margin = _worst(pts[inside], viol)
            if margin > worst_margin:
                worst_pt, worst_margin = pt, margin
            ok &= bool(np.all(viol <= 0))
        checks.append(CheckResult("containment", ok, worst_pt, worst_margin))
    else:
        checks.append(
            CheckResult("containment", True, None, 0.0, note="vacuous: no sampled zeta <= 0")
        )

    progress = zeta_vals >= 0.0
    if np.any(progress):
        beta = beta_poly(sys, cert.zeta, cert.lam)
        beta_vals = beta.eval_batch(pts[progress])
        viol = beta_vals - (-cert.mu) - POINTWISE_TOL
        pt, margin = _worst(pts[progress], viol)
        checks.append(CheckResult("mean_decrease", bool(np.all(viol <= 0)), pt, margin))
    else:
        checks.append(
            CheckResult("mean_decrease", True, None, 0.0, note="vacuous: no sampled zeta >= 0")
        )
    return VerificationReport(checks, list(box), grid_resolution, n_samples, seed)


def cantelli_epsilon(mu: float, tau: float, gamma: float) -> float:
    """One-sided decrease-probability bound mu^2 tau^2 / (mu^2 tau^2 + 16 Gamma)."""
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if gamma < 0:
        raise ValueError(f"variance bound must be non-negative, got {gamma}")
    m2t2 = mu * mu * tau * tau
    return m2t2 / (m2t2 + 16.0 * gamma)


def doublewell_lambda_threshold(rho: float) -> float:
    """Steepness above which the closed-form double-well variant certifies."""
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    return 2.5 + 1.0 / (2.0 * rho * rho)


def estimate_variance_bound(
    sys: SdeSystem,
    zeta: Polynomial,
    lam: float,
    box: list[tuple[float, float]],
    tau: float,
    n_samples: int,
    seed: int,
    grid_resolution: int = 9,
    n_substeps: int = 100,
) -> float:
    """Monte Carlo estimate of an upper bound on Var(U(x(tau)) - U(x)).

    The variance is estimated at each grid point of the box and the
    maximum is inflated by three standard errors of a variance estimate.
    This is a statistical estimate, not a certified bound.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    if not sys.has_noise:
        return 0.0
    axes = [np.linspace(lo, hi, grid_resolution) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    grid = np.stack([m.ravel() for m in mesh], axis=1)
    dt = tau / n_substeps
    sqrt_dt = math.sqrt(dt)
    const_g = sys.constant_diffusion_matrix()

    worst = 0.0
    for p_idx in range(grid.shape[0]):
        x = grid[p_idx]
        pts = np.tile(x, (n_samples, 1))
        gens = [
            rng.stream(seed, rng.LANE_GRID_BASE + _VERIFY_LANE + 1 + p_idx, j)
            for j in range(n_samples)
        ]
        w_all = np.stack([rng.normals(g, (n_substeps, sys.m)) for g in gens])
        for t in range(n_substeps):
            drift = simulate._drift_batch(sys, pts)
            pts = pts + drift * dt + simulate._noise_batch(sys, pts, w_all[:, t, :], const_g) * sqrt_dt
        u_tau = variant_value_batch(zeta, lam, pts)
        var = float(np.var(u_tau, ddof=1))
        worst = max(worst, var)
    inflation = 1.0 + 3.0 * math.sqrt(2.0 / max(n_samples - 1, 1))
    return worst * inflation


def gram_residual(p: Polynomial, basis: MonomialBasis, Q: np.ndarray) -> float:
    """Max-abs coefficient of p - z'Qz after re-expansion through polyalg."""
    Q = np.asarray(Q, dtype=np.float64)
    if Q.shape != (len(basis), len(basis)):
        raise ValueError(f"Gram matrix must be {len(basis)}x{len(basis)}, got {Q.shape}")
    if not np.allclose(Q, Q.T, atol=1e-12):
        raise ValueError("Gram matrix must be symmetric")
    return p.sub(expand_gram(basis, Q)).max_abs_coeff()


@dataclass
class VariantSupportSummary:
    """Derived quantities turning a variant certificate into V2's data.

    H(r) bounds U on the sublevel set {V <= r} (grid estimate), the
    decrease is delta = mu*tau/4 over the window h = tau, and the success
    probability uses the one-sided concentration bound.
    """

    r: float
    tau: float
    h_of_r: float
    delta_of_r: float
    zeta_max: float
    h_bound: float
    gamma_estimate: float
    epsilon: float

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "tau": self.tau,
            "h": self.h_of_r,
            "delta": self.delta_of_r,
            "zeta_max_on_sublevel": self.zeta_max,
            "variant_upper_bound_H": self.h_bound,
            "variance_bound_estimate": self.gamma_estimate,
            "epsilon_cantelli": self.epsilon,
        }


def variant_support_summary(
    sys: SdeSystem,
    drift_cert: DriftCertificate,
    variant_cert: VariantCertificate,
    r: float,
    box: list[tuple[float, float]],
    tau: float,
    n_samples: int,
    seed: int,
    grid_resolution: int = 33,
) -> VariantSupportSummary:
    """Estimate the supporting functions of the variant condition at level r."""
    axes = [np.linspace(lo, hi, grid_resolution) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    grid = np.stack([m.ravel() for m in mesh], axis=1)
    sub = drift_cert.V.eval_batch(grid) <= r
    if not np.any(sub):
        raise ValueError("no sampled point lies in the sublevel set {V <= r}")
    zeta_max = float(np.max(variant_cert.zeta.eval_batch(grid[sub])))
    lam = variant_cert.lam
    h_bound = (1.0 - math.exp(-lam * min(zeta_max, 700.0 / lam))) / lam
    gamma = estimate_variance_bound(
        sys, variant_cert.zeta, lam, box, tau, n_samples, seed
    )
    eps = cantelli_epsilon(variant_cert.mu, tau, gamma) if gamma >= 0 else 1.0
    return VariantSupportSummary(
        r=r,
        tau=tau,
        h_of_r=tau,
        delta_of_r=variant_cert.mu * tau / 4.0,
        zeta_max=zeta_max,
        h_bound=h_bound,
        gamma_estimate=gamma,
        epsilon=eps,
    )
