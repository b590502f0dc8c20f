"""Spectral classification of linear SDEs and the Lyapunov construction."""

import numpy as np
import pytest

from sdereach import verify
from sdereach.linclass import (
    AmbiguousSpectrumError,
    LinearSde,
    NotHurwitzError,
    Rationale,
    Verdict,
    classify,
    drift_from_lyapunov,
    lyapunov_solve,
    spectral_summary,
)


class TestSpectralSummary:
    def test_zero_matrix(self):
        s = spectral_summary(np.zeros((3, 3)))
        assert s.spectral_abscissa == 0.0
        assert s.neutral_dim == 3
        assert not s.has_defective_neutral_block

    def test_nilpotent_jordan_block(self):
        # rank(A - 0 I) = 1, so geometric multiplicity 1 < algebraic 2
        s = spectral_summary(np.array([[0.0, 1.0], [0.0, 0.0]]))
        assert s.spectral_abscissa == 0.0
        assert s.neutral_dim == 2
        assert s.has_defective_neutral_block

    def test_stable_diagonal(self):
        s = spectral_summary(np.diag([-1.0, -2.0]))
        assert s.spectral_abscissa == pytest.approx(-1.0)
        assert s.neutral_dim == 0
        assert not s.has_defective_neutral_block

    def test_rotation_block_is_semisimple(self):
        s = spectral_summary(np.array([[0.0, 1.0], [-1.0, 0.0]]))
        assert s.neutral_dim == 2
        assert not s.has_defective_neutral_block

    def test_rejects_nonsquare(self):
        with pytest.raises(ValueError):
            spectral_summary(np.zeros((2, 3)))


CASE_TABLE = [
    (np.zeros((1, 1)), Verdict.ALMOST_SURELY_REACHABLE, Rationale.NEUTRAL_DIM_AT_MOST_2),
    (np.zeros((2, 2)), Verdict.ALMOST_SURELY_REACHABLE, Rationale.NEUTRAL_DIM_AT_MOST_2),
    (np.zeros((3, 3)), Verdict.NOT_ALMOST_SURELY_REACHABLE, Rationale.NEUTRAL_DIM_AT_LEAST_3),
    (np.zeros((4, 4)), Verdict.NOT_ALMOST_SURELY_REACHABLE, Rationale.NEUTRAL_DIM_AT_LEAST_3),
    (np.diag([-1.0, -2.0]), Verdict.ALMOST_SURELY_REACHABLE, Rationale.HURWITZ),
    (
        np.array([[0.0, 1.0], [0.0, 0.0]]),
        Verdict.NOT_ALMOST_SURELY_REACHABLE,
        Rationale.DEFECTIVE_NEUTRAL_BLOCK,
    ),
    (np.diag([1.0, -1.0]), Verdict.NOT_ALMOST_SURELY_REACHABLE, Rationale.UNSTABLE_SPECTRUM),
]


class TestClassify:
    @pytest.mark.parametrize("A,verdict,rationale", CASE_TABLE)
    def test_case_table(self, A, verdict, rationale):
        sde = LinearSde(A, np.eye(A.shape[0]))
        result = classify(sde)
        assert result.verdict == verdict
        assert result.rationale == rationale

    def test_similarity_invariance(self):
        rng = np.random.default_rng(0)
        for A, verdict, rationale in CASE_TABLE:
            n = A.shape[0]
            for _ in range(3):
                T = np.eye(n) + 0.3 * rng.standard_normal((n, n))
                if np.linalg.cond(T) > 50:
                    continue
                sde = LinearSde(T @ A @ np.linalg.inv(T), T)
                result = classify(sde, tol=1e-7)
                assert result.verdict == verdict
                assert result.rationale == rationale

    def test_noise_scale_invariance(self):
        for A, verdict, rationale in CASE_TABLE:
            n = A.shape[0]
            for c in (1e-3, 1.0, 1e3):
                result = classify(LinearSde(A, c * np.eye(n)))
                assert result.verdict == verdict
                assert result.rationale == rationale

    def test_rank_deficient_noise_rejected(self):
        sde = LinearSde(np.zeros((2, 2)), np.array([[1.0], [0.0]]))
        with pytest.raises(ValueError, match="full row rank"):
            classify(sde)

    def test_ambiguous_spectrum_is_an_error_not_a_guess(self):
        A = np.diag([5e-9, -1.0])
        with pytest.raises(AmbiguousSpectrumError):
            classify(LinearSde(A, np.eye(2)), tol=1e-9)

    def test_verdict_serialization(self):
        doc = classify(LinearSde(np.zeros((2, 2)), np.eye(2))).to_dict()
        assert doc["verdict"] == "AlmostSurelyReachable"
        assert doc["rationale"] == "NeutralDimAtMost2"


class TestLyapunovSolve:
    def test_scalar_multiple_identity(self):
        P = lyapunov_solve(-np.eye(2), 2.0 * np.eye(2))
        assert np.allclose(P, np.eye(2), atol=1e-12)

    def test_diagonal_case(self):
        # A = diag(-1,-2), Q = I: 2 p_11 = 1, 4 p_22 = 1 by direct substitution
        P = lyapunov_solve(np.diag([-1.0, -2.0]), np.eye(2))
        assert np.allclose(P, np.diag([0.5, 0.25]), atol=1e-12)

    def test_upper_triangular_case(self):
        # A = [[-1,1],[0,-1]], Q = I: the three scalar equations give
        # p = 1/2, q = 1/4, r = 3/4 (solved by hand)
        A = np.array([[-1.0, 1.0], [0.0, -1.0]])
        P = lyapunov_solve(A, np.eye(2))
        assert np.allclose(P, [[0.5, 0.25], [0.25, 0.75]], atol=1e-12)

    def test_residual_and_symmetry_contract(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            n = int(rng.integers(2, 6))
            A = rng.standard_normal((n, n)) - (n + 1) * np.eye(n)
            M = rng.standard_normal((n, n))
            Q = M @ M.T + 0.1 * np.eye(n)
            P = lyapunov_solve(A, Q)
            assert np.allclose(P, P.T, atol=1e-12)
            residual = np.linalg.norm(A.T @ P + P @ A + Q, "fro")
            assert residual <= 1e-8 * np.linalg.norm(Q, "fro")
            assert np.all(np.linalg.eigvalsh(P) > 0)

    def test_refuses_non_hurwitz(self):
        with pytest.raises(NotHurwitzError):
            lyapunov_solve(np.zeros((2, 2)), np.eye(2))


class TestDriftFromLyapunov:
    def test_identity_example(self):
        # A = -I, B = I, Q = 2I: V = x1^2 + x2^2, AV = -2x'x + 2, C = unit ball
        sde = LinearSde(-np.eye(2), np.eye(2))
        cert = drift_from_lyapunov(sde, 2.0 * np.eye(2))
        assert cert.V.coefficient((2, 0)) == pytest.approx(1.0, abs=1e-12)
        assert cert.V.coefficient((0, 2)) == pytest.approx(1.0, abs=1e-12)
        assert cert.lambda1 == pytest.approx(2.0, abs=1e-12)
        assert cert.gamma1 == pytest.approx(2.0, abs=1e-12)
        assert cert.compact_radius == pytest.approx(1.0, abs=1e-9)

    def test_partial_noise_trace_term(self):
        # A = diag(-1,-2), B = [1;0]: tr(P B B') = p_11 = 1/2
        sde = LinearSde(np.diag([-1.0, -2.0]), np.array([[1.0], [0.0]]))
        cert = drift_from_lyapunov(sde, np.eye(2))
        assert cert.lambda1 == pytest.approx(0.5, abs=1e-12)

    def test_degenerate_q_rejected(self):
        sde = LinearSde(-np.eye(2), np.eye(2))
        with pytest.raises(ValueError):
            drift_from_lyapunov(sde, np.zeros((2, 2)))

    def test_gram_blocks_witness_the_inequalities(self):
        sde = LinearSde(np.array([[-1.0, 0.5], [0.0, -2.0]]), np.eye(2))
        cert = drift_from_lyapunov(sde, np.eye(2))
        for block in cert.gram_blocks.values():
            assert block.min_eigenvalue() >= -1e-8
        cert.validate(sde.to_polynomial_system())
        assert all(r <= 1e-6 for r in cert.residuals.values())

    def test_passes_sampled_drift_verification_on_large_ball(self):
        sde = LinearSde(-np.eye(2), np.eye(2))
        cert = drift_from_lyapunov(sde, 2.0 * np.eye(2))
        report = verify.verify_drift(
            sde.to_polynomial_system(), cert, [(-10.0, 10.0)] * 2, 2000, seed=3
        )
        assert report.passed, [c.to_dict() for c in report.failures()]
