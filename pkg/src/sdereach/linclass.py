"""Spectral decision procedure for linear SDEs with additive noise.

For dx = A x dt + B dW with B full row rank, almost-sure reachability of a
bounded open target around the origin is decided by the spectrum of A:

  * A Hurwitz                          -> reachable (quadratic certificates)
  * alpha(A) > 0, or a defective
    eigenvalue on the imaginary axis   -> not reachable
  * axis semisimple, dim E_A <= 2      -> reachable
  * axis semisimple, dim E_A >= 3      -> not reachable

E_A is the real invariant subspace of the imaginary-axis eigenvalues.
Floating point needs an explicit neutrality band: an eigenvalue counts as
on-axis iff |Re| <= tol * max(1, ||A||_F); real parts that land just
outside the band (within a factor of 10) raise AmbiguousSpectrumError
instead of guessing.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import sdemodel, sosbuild
from .polyalg import Polynomial

AMBIGUITY_FACTOR = 10.0


class AmbiguousSpectrumError(ValueError):
    """Eigenvalue real parts too close to the neutrality band to classify."""


class NotHurwitzError(ValueError):
    """Operation requires a Hurwitz matrix."""


class Verdict(enum.Enum):
    ALMOST_SURELY_REACHABLE = "AlmostSurelyReachable"
    NOT_ALMOST_SURELY_REACHABLE = "NotAlmostSurelyReachable"


class Rationale(enum.Enum):
    HURWITZ = "Hurwitz"
    UNSTABLE_SPECTRUM = "UnstableSpectrum"
    DEFECTIVE_NEUTRAL_BLOCK = "DefectiveNeutralBlock"
    NEUTRAL_DIM_AT_MOST_2 = "NeutralDimAtMost2"
    NEUTRAL_DIM_AT_LEAST_3 = "NeutralDimAtLeast3"


@dataclass(frozen=True)
class LinearSde:
    """dx = A x dt + B dW with constant matrices."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        B = np.asarray(self.B, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got shape {A.shape}")
        if B.ndim != 2 or B.shape[0] != A.shape[0]:
            raise ValueError(f"B must have {A.shape[0]} rows, got shape {B.shape}")
        if not np.any(B):
            raise ValueError("B must be nonzero")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def has_full_row_rank(self, tol: float = 1e-9) -> bool:
        sv = np.linalg.svd(self.B, compute_uv=False)
        return len(sv) >= self.n and sv[self.n - 1] > tol * max(1.0, sv[0])

    def to_polynomial_system(self) -> sdemodel.SdeSystem:
        n, m = self.A.shape[0], self.B.shape[1]
        f = []
        for i in range(n):
            row = Polynomial.zero(n)
            for j in range(n):
                if self.A[i, j] != 0.0:
                    row = row + self.A[i, j] * Polynomial.variable(n, j)
            f.append(row)
        g = [
            [Polynomial.constant(n, self.B[i, j]) for j in range(m)]
            for i in range(n)
        ]
        return sdemodel.SdeSystem(f, g)


@dataclass(frozen=True)
class SpectralSummary:
    eigenvalues: tuple[complex, ...]
    spectral_abscissa: float
    neutral_dim: int
    has_defective_neutral_block: bool
    neutral_band: float

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [[ev.real, ev.imag] for ev in self.eigenvalues],
            "spectral_abscissa": self.spectral_abscissa,
            "neutral_dim": self.neutral_dim,
            "has_defective_neutral_block": self.has_defective_neutral_block,
            "neutral_band": self.neutral_band,
        }


@dataclass(frozen=True)
class ReachabilityVerdict:
    verdict: Verdict
    rationale: Rationale
    summary: SpectralSummary

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "rationale": self.rationale.value,
            "summary": self.summary.to_dict(),
        }


def spectral_summary(A: np.ndarray, tol: float = 1e-9) -> SpectralSummary:
    """Eigenvalues, spectral abscissa, and neutral-subspace structure of A."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got shape {A.shape}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = A.shape[0]
    try:
        eigs = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"eigensolver failed on {n}x{n} matrix: {exc}") from exc
    order = np.lexsort((eigs.imag, eigs.real))
    eigs = eigs[order]
    scale = max(1.0, float(np.linalg.norm(A, "fro")))
    band = tol * scale
    alpha = float(np.max(eigs.real))

    neutral = [ev for ev in eigs if abs(ev.real) <= band]
    neutral_dim = len(neutral)

    # Cluster the neutral eigenvalues and test geometric multiplicity of each
    # cluster representative; defectiveness is all Theorem-level analysis needs.
    defective = False
    rank_tol = tol * scale
    visited = [False] * len(neutral)
    for i, ev in enumerate(neutral):
        if visited[i]:
            continue
        cluster = [j for j in range(len(neutral)) if abs(neutral[j] - ev) <= 1e3 * band]
        for j in cluster:
            visited[j] = True
        alg_mult = len(cluster)
        if alg_mult > 1:
            shifted = A - ev * np.eye(n)
            sv = np.linalg.svd(shifted, compute_uv=False)
            rank = int(np.sum(sv > rank_tol))
            geo_mult = n - rank
            if geo_mult < alg_mult:
                defective = True
    return SpectralSummary(
        eigenvalues=tuple(complex(ev) for ev in eigs),
        spectral_abscissa=alpha,
        neutral_dim=neutral_dim,
        has_defective_neutral_block=defective,
        neutral_band=band,
    )


def classify(sys: LinearSde, tol: float = 1e-9) -> ReachabilityVerdict:
    """Decide almost-sure reachability of a bounded open target at the origin."""
    if not sys.has_full_row_rank(tol):
        raise ValueError(
            "B must have full row rank; rank-deficient noise is outside the "
            "decision procedure's hypothesis"
        )
    summary = spectral_summary(sys.A, tol)
    band = summary.neutral_band
    near = [
        ev.real
        for ev in summary.eigenvalues
        if band < abs(ev.real) <= AMBIGUITY_FACTOR * band
    ]
    if near and abs(summary.spectral_abscissa) <= AMBIGUITY_FACTOR * band:
        raise AmbiguousSpectrumError(
            f"eigenvalue real parts {near} fall within the ambiguity band "
            f"({band:.3e}, {AMBIGUITY_FACTOR * band:.3e}]; tighten tol or "
            "perturb the model instead of guessing"
        )

    if summary.spectral_abscissa < -band:
        return ReachabilityVerdict(Verdict.ALMOST_SURELY_REACHABLE, Rationale.HURWITZ, summary)
    if summary.spectral_abscissa > band:
        return ReachabilityVerdict(
            Verdict.NOT_ALMOST_SURELY_REACHABLE, Rationale.UNSTABLE_SPECTRUM, summary
        )
    if summary.has_defective_neutral_block:
        return ReachabilityVerdict(
            Verdict.NOT_ALMOST_SURELY_REACHABLE, Rationale.DEFECTIVE_NEUTRAL_BLOCK, summary
        )
    if summary.neutral_dim <= 2:
        return ReachabilityVerdict(
            Verdict.ALMOST_SURELY_REACHABLE, Rationale.NEUTRAL_DIM_AT_MOST_2, summary
        )
    return ReachabilityVerdict(
        Verdict.NOT_ALMOST_SURELY_REACHABLE, Rationale.NEUTRAL_DIM_AT_LEAST_3, summary
    )


def lyapunov_solve(A: np.ndarray, Q: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Solve A'P + PA = -Q for symmetric P via the Kronecker linear system.

    A must be Hurwitz and Q symmetric PSD. Sized for desk scale (n <= 30);
    the dense Kronecker route is simpler than Bartels-Stewart there.
    """
    A = np.asarray(A, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    n = A.shape[0]
    if Q.shape != (n, n):
        raise ValueError(f"Q must be {n}x{n}, got {Q.shape}")
    if not np.allclose(Q, Q.T, atol=1e-12):
        raise ValueError("Q must be symmetric")
    if np.any(np.linalg.eigvalsh(0.5 * (Q + Q.T)) < -1e-12 * max(1.0, np.linalg.norm(Q))):
        raise ValueError("Q must be positive semidefinite")
    summary = spectral_summary(A, tol)
    if summary.spectral_abscissa >= -summary.neutral_band:
        raise NotHurwitzError(
            f"A is not Hurwitz (spectral abscissa {summary.spectral_abscissa:.3e})"
        )
    eye = np.eye(n)
    # vec(A'P) = (I (x) A') vec(P); vec(PA) = (A' (x) I) vec(P), column-major vec
    kron = np.kron(eye, A.T) + np.kron(A.T, eye)
    vec_p = np.linalg.solve(kron, -Q.reshape(-1, order="F"))
    P = vec_p.reshape(n, n, order="F")
    P = 0.5 * (P + P.T)
    residual = np.linalg.norm(A.T @ P + P @ A + Q, "fro")
    if residual > 1e-8 * max(1.0, np.linalg.norm(Q, "fro")):
        raise RuntimeError(f"Lyapunov residual {residual:.3e} exceeds tolerance")
    return P


def drift_from_lyapunov(
    sys: LinearSde, Q: np.ndarray, tol: float = 1e-9
) -> "sosbuild.DriftCertificate":
    """Quadratic drift certificate V = x'Px from the Lyapunov equation.

    Requires Q positive definite so the generator bound has a strictly
    negative quadratic part. The returned certificate carries Gram blocks
    over the basis (1, x1..xn) witnessing both certificate inequalities.
    """
    Q = np.asarray(Q, dtype=np.float64)
    n = sys.n
    q_eigs = np.linalg.eigvalsh(0.5 * (Q + Q.T))
    if q_eigs[0] <= 0:
        raise ValueError("Q must be positive definite for certificate construction")
    P = lyapunov_solve(sys.A, Q, tol)

    poly_sys = sys.to_polynomial_system()
    V = _quadratic_form_poly(P)
    AV = sdemodel.generator_apply(poly_sys, V)
    trace_term = float(np.trace(P @ sys.B @ sys.B.T))
    expected = _quadratic_form_poly(-Q) + trace_term
    if not AV.equals_within(expected, 1e-9 * max(1.0, abs(trace_term))):
        raise RuntimeError("generator of x'Px disagrees with -x'Qx + tr(PBB')")

    gamma0 = float(np.linalg.eigvalsh(P)[0])
    gamma1 = float(q_eigs[0])
    lambda0 = 0.0
    lambda1 = trace_term
    basis = sosbuild.build_basis(n, 1)
    # map each degree-1 basis monomial to its variable (graded-lex order is
    # not the natural x1..xn order)
    var_of = {
        k: mono.exponents.index(1)
        for k, mono in enumerate(basis.monomials)
        if mono.degree == 1
    }
    def embed(M: np.ndarray) -> np.ndarray:
        out = np.zeros((n + 1, n + 1))
        for k1, i in var_of.items():
            for k2, j in var_of.items():
                out[k1, k2] = M[i, j]
        return out

    gram_radial = embed(P - gamma0 * np.eye(n))
    gram_generator = embed(Q - gamma1 * np.eye(n))
    return sosbuild.DriftCertificate(
        V=V,
        gamma0=gamma0,
        lambda0=lambda0,
        gamma1=gamma1,
        lambda1=lambda1,
        gram_blocks={
            "radial": sosbuild.GramBlock(basis=basis, matrix=gram_radial),
            "generator": sosbuild.GramBlock(basis=basis, matrix=gram_generator),
        },
    )


def _quadratic_form_poly(M: np.ndarray) -> Polynomial:
    n = M.shape[0]
    terms = []
    for i in range(n):
        for j in range(n):
            if M[i, j] != 0.0:
                exps = [0] * n
                exps[i] += 1
                exps[j] += 1
                terms.append((float(M[i, j]), tuple(exps)))
    return Polynomial.from_terms(n, terms) if terms else Polynomial.zero(n)
