"""The embedded conic solver: correctness, certificates, determinism."""

import warnings

import numpy as np
import pytest

from sdereach import sdpsolve as sp


def scalar_block(value=1.0):
    return np.array([[value]])


class TestSvec:
    def test_roundtrip(self):
        rng = np.random.default_rng(0)
        for d in (1, 2, 5, 8):
            M = rng.standard_normal((d, d))
            M = 0.5 * (M + M.T)
            assert np.allclose(sp.smat(sp.svec(M), d), M, atol=1e-14)

    def test_inner_product_preserved(self):
        rng = np.random.default_rng(1)
        for d in (2, 4, 7):
            A = rng.standard_normal((d, d)); A = 0.5 * (A + A.T)
            B = rng.standard_normal((d, d)); B = 0.5 * (B + B.T)
            assert sp.svec(A) @ sp.svec(B) == pytest.approx(np.trace(A @ B), rel=1e-12)


class TestBuilder:
    def test_rejects_asymmetric_coefficients(self):
        bld = sp.SdpProblemBuilder()
        q = bld.add_psd_block(2)
        with pytest.raises(ValueError, match="symmetric"):
            bld.add_row({q: np.array([[0.0, 1.0], [0.0, 0.0]])}, None, 0.0)

    def test_needs_a_variable(self):
        with pytest.raises(ValueError):
            sp.SdpProblem([], 0, np.zeros((1, 0)), [0.0], [])


class TestSolveBasics:
    def test_scalar_bound(self):
        bld = sp.SdpProblemBuilder()
        q = bld.add_psd_block(1)
        t = bld.add_free_var("t")
        bld.add_row({q: scalar_block()}, {t: 1.0}, 1.0)  # q = 1 - t >= 0
        bld.set_objective(free_coeffs={t: 1.0})
        sol = sp.solve(bld.build())
        assert sol.status == sp.SolveStatus.OPTIMAL
        assert sol.objective == pytest.approx(1.0, abs=1e-6)

    def test_unique_gram_of_perfect_square(self):
        # coefficients of (x-1)^2 over z = (1, x) force Q = [[1,-1],[-1,1]]
        bld = sp.SdpProblemBuilder()
        q = bld.add_psd_block(2)
        bld.add_row({q: np.array([[1.0, 0.0], [0.0, 0.0]])}, None, 1.0)
        bld.add_row({q: np.array([[0.0, 1.0], [1.0, 0.0]])}, None, -2.0)
        bld.add_row({q: np.array([[0.0, 0.0], [0.0, 1.0]])}, None, 1.0)
        bld.set_objective()
        sol = sp.solve(bld.build())
        assert sol.status == sp.SolveStatus.OPTIMAL
        Q = sol.psd_block(0)
        assert np.allclose(Q, [[1.0, -1.0], [-1.0, 1.0]], atol=1e-6)
        assert np.linalg.eigvalsh(Q)[0] >= -1e-8

    def test_infeasible_scalar_pair(self):
        # x >= 1 and x <= 0 encoded through two 1x1 slack blocks
        bld = sp.SdpProblemBuilder()
        q1 = bld.add_psd_block(1)
        q2 = bld.add_psd_block(1)
        xv = bld.add_free_var("x")
        bld.add_row({q1: scalar_block()}, {xv: -1.0}, -1.0)  # q1 = x - 1
        bld.add_row({q2: scalar_block()}, {xv: 1.0}, 0.0)    # q2 = -x
        bld.set_objective()
        prob = bld.build()
        sol = sp.solve(prob)
        assert sol.status == sp.SolveStatus.PRIMAL_INFEASIBLE
        assert sp.certify_infeasibility(prob, sol)

    def test_certify_refuses_feasible_solution(self):
        bld = sp.SdpProblemBuilder()
        q = bld.add_psd_block(1)
        bld.add_row({q: scalar_block()}, None, 1.0)
        bld.set_objective()
        prob = bld.build()
        sol = sp.solve(prob)
        with pytest.raises(ValueError):
            sp.certify_infeasibility(prob, sol)

    def test_unbounded_objective_reports_dual_infeasible(self):
        bld = sp.SdpProblemBuilder()
        q = bld.add_psd_block(1)
        t = bld.add_free_var("t")
        bld.add_row({q: scalar_block()}, {t: -1.0}, 0.0)  # q = t >= 0
        bld.set_objective(free_coeffs={t: 1.0})           # maximize t
        sol = sp.solve(bld.build())
        assert sol.status == sp.SolveStatus.DUAL_INFEASIBLE
        assert sol.ray_x is not None


def planted_problem(rng):
    """Feasible SDP with a known optimum via a complementary primal-dual pair."""
    sizes = [int(rng.integers(1, 5)) for _ in range(int(rng.integers(1, 3)))]
    nf = int(rng.integers(0, 3))
    m = int(rng.integers(2, 6))
    n_psd = sum(sp.svec_dim(d) for d in sizes)
    N = n_psd + nf
    A = rng.standard_normal((m, N))
    xstar = np.zeros(N)
    sstar = np.zeros(N)
    off = 0
    for d in sizes:
        basis = np.linalg.qr(rng.standard_normal((d, d)))[0]
        k = int(rng.integers(0, d + 1))
        dp = np.zeros(d)
        dp[:k] = rng.uniform(0.5, 2.0, size=k)
        ds = np.zeros(d)
        ds[k:] = rng.uniform(0.5, 2.0, size=d - k)
        xstar[off : off + sp.svec_dim(d)] = sp.svec(basis @ np.diag(dp) @ basis.T)
        sstar[off : off + sp.svec_dim(d)] = sp.svec(basis @ np.diag(ds) @ basis.T)
        off += sp.svec_dim(d)
    xstar[n_psd:] = rng.standard_normal(nf)
    ystar = rng.standard_normal(m)
    b = A @ xstar
    c_min = A.T @ ystar + sstar
    problem = sp.SdpProblem(sizes, nf, A, b, -c_min)
    return problem, -float(c_min @ xstar)


class TestRandomizedSuite:
    def test_recovers_planted_optima(self):
        rng = np.random.default_rng(42)
        solved = 0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            while solved < 50:
                problem, ref = planted_problem(rng)
                sol = sp.solve(problem)
                assert sol.status == sp.SolveStatus.OPTIMAL
                assert sol.objective == pytest.approx(ref, rel=1e-6, abs=1e-6)
                # residual contract at default options
                assert sol.residuals["primal"] <= 1e-8 * (1 + np.linalg.norm(problem.b))
                assert sol.residuals["dual"] <= 1e-8 * (1 + np.linalg.norm(problem.c))
                assert sol.residuals["relative_gap"] <= 1e-7
                # complementarity per block
                for k in range(len(problem.block_sizes)):
                    X, S = sol.psd_block(k), sol.dual_block(k)
                    assert abs(np.trace(X @ S)) <= 1e-6 * (1 + abs(sol.objective))
                solved += 1

    def test_determinism_bit_identical(self):
        rng = np.random.default_rng(7)
        problem, _ = planted_problem(rng)
        s1 = sp.solve(problem)
        s2 = sp.solve(problem)
        assert s1.iterations == s2.iterations
        assert s1.objective == s2.objective
        assert np.array_equal(s1.x, s2.x)


class TestPresolve:
    def test_consistent_dependent_rows_dropped_with_warning(self):
        bld = sp.SdpProblemBuilder()
        q = bld.add_psd_block(1)
        t = bld.add_free_var("t")
        bld.add_row({q: scalar_block()}, {t: 1.0}, 1.0)
        bld.add_row({q: scalar_block(2.0)}, {t: 2.0}, 2.0)  # duplicate times two
        bld.set_objective(free_coeffs={t: 1.0})
        with pytest.warns(RuntimeWarning, match="dependent"):
            sol = sp.solve(bld.build())
        assert sol.status == sp.SolveStatus.OPTIMAL

    def test_inconsistent_dependent_rows_error(self):
        bld = sp.SdpProblemBuilder()
        q = bld.add_psd_block(1)
        t = bld.add_free_var("t")
        bld.add_row({q: scalar_block()}, {t: 1.0}, 1.0)
        bld.add_row({q: scalar_block(2.0)}, {t: 2.0}, 5.0)  # contradicts the first
        bld.set_objective()
        with pytest.raises(sp.InconsistentConstraintsError):
            sp.solve(bld.build())


class TestDump:
    def test_triplet_dump_roundtrip_content(self, tmp_path):
        bld = sp.SdpProblemBuilder()
        q = bld.add_psd_block(2)
        t = bld.add_free_var("t")
        bld.add_row({q: np.array([[1.0, 0.5], [0.5, 0.0]])}, {t: -2.0}, 3.0)
        bld.set_objective(free_coeffs={t: 1.0})
        problem = bld.build()
        path = tmp_path / "problem.txt"
        sp.dump_problem(problem, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "blocks 1"
        assert lines[1] == "blocksizes 2"
        assert lines[2] == "free 1"
        assert lines[3] == "rows 1"
        assert "obj free 0 1.0" in lines
        assert any(line.startswith("row 0 psd 0 0 1 0.5") for line in lines)
        assert "rhs 0 3.0" in lines
