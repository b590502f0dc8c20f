"""Dense semidefinite programming at desk scale.

Problems are stated in a standard conic form over a variable vector
v = (svec(X_1), ..., svec(X_B), u) with PSD matrix blocks X_k and free
scalars u:

    maximize    c . v
    subject to  A v = b,   X_k >= 0.

Symmetric vectorization uses sqrt(2) off-diagonal scaling so Euclidean
inner products of svec vectors equal trace inner products of the matrices.

The solver is a primal-dual predictor-corrector interior-point iteration
with Nesterov-Todd scaling on the homogeneous self-dual embedding, which
yields trustworthy infeasibility certificates (Farkas-type dual rays) in
addition to optimal solutions. Everything is dense and deterministic:
identical inputs and options produce bit-identical iterates.

The problem encoding is solver-agnostic; `dump_problem` writes a plain
text triplet file for cross-validation against an external conic solver.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

_SQRT2 = math.sqrt(2.0)


class SolveStatus(enum.Enum):
    OPTIMAL = "Optimal"
    PRIMAL_INFEASIBLE = "PrimalInfeasible"
    DUAL_INFEASIBLE = "DualInfeasible"
    ITER_LIMIT = "IterLimit"
    NUMERICAL_FAILURE = "NumericalFailure"


class InconsistentConstraintsError(ValueError):
    """Dependent equality rows with contradictory right-hand sides."""


# -- symmetric vectorization -------------------------------------------------


def svec_dim(d: int) -> int:
    return d * (d + 1) // 2


def svec(M: np.ndarray) -> np.ndarray:
    """Stack the upper triangle row-wise, off-diagonal entries times sqrt(2)."""
    d = M.shape[0]
    out = np.empty(svec_dim(d))
    k = 0
    for i in range(d):
        out[k] = M[i, i]
        k += 1
        for j in range(i + 1, d):
            out[k] = _SQRT2 * M[i, j]
            k += 1
    return out


def smat(v: np.ndarray, d: int) -> np.ndarray:
    M = np.empty((d, d))
    k = 0
    for i in range(d):
        M[i, i] = v[k]
        k += 1
        for j in range(i + 1, d):
            M[i, j] = M[j, i] = v[k] / _SQRT2
            k += 1
    return M


# -- problem containers -------------------------------------------------------


@dataclass
class SdpProblem:
    """Standard-form problem; `A` columns follow the svec block layout."""

    block_sizes: list[int]
    n_free: int
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        self.b = np.asarray(self.b, dtype=np.float64).ravel()
        self.c = np.asarray(self.c, dtype=np.float64).ravel()
        if self.n_free < 0 or any(d < 1 for d in self.block_sizes):
            raise ValueError("block sizes must be >= 1 and n_free >= 0")
        if self.n_vars == 0:
            raise ValueError("problem must have at least one variable")
        if self.A.shape != (len(self.b), self.n_vars):
            raise ValueError(
                f"A must be {len(self.b)}x{self.n_vars}, got {self.A.shape}"
            )
        if self.c.shape != (self.n_vars,):
            raise ValueError("objective length mismatch")

    @property
    def n_psd(self) -> int:
        return sum(svec_dim(d) for d in self.block_sizes)

    @property
    def n_vars(self) -> int:
        return self.n_psd + self.n_free

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def block_slice(self, k: int) -> slice:
        start = sum(svec_dim(d) for d in self.block_sizes[:k])
        return slice(start, start + svec_dim(self.block_sizes[k]))

    @property
    def free_slice(self) -> slice:
        return slice(self.n_psd, self.n_vars)


class SdpProblemBuilder:
    """Assemble an SdpProblem row by row from symmetric block coefficients."""

    def __init__(self):
        self.block_sizes: list[int] = []
        self._free_names: list[str] = []
        self._rows: list[tuple[dict, dict, float]] = []
        self._obj_psd: dict[int, np.ndarray] = {}
        self._obj_free: dict[int, float] = {}

    def add_psd_block(self, size: int) -> int:
        if size < 1:
            raise ValueError("block size must be >= 1")
        self.block_sizes.append(size)
        return len(self.block_sizes) - 1

    def add_free_var(self, name: str = "") -> int:
        self._free_names.append(name or f"u{len(self._free_names)}")
        return len(self._free_names) - 1

    @property
    def n_free(self) -> int:
        return len(self._free_names)

    def add_row(
        self,
        psd_coeffs: dict[int, np.ndarray] | None,
        free_coeffs: dict[int, float] | None,
        rhs: float,
    ):
        """Add the equality  sum_k <C_k, X_k> + sum_j a_j u_j = rhs.

        The C_k must be symmetric; they act on symmetric matrices only.
        """
        psd = {}
        for bid, C in (psd_coeffs or {}).items():
            C = np.asarray(C, dtype=np.float64)
            d = self.block_sizes[bid]
            if C.shape != (d, d):
                raise ValueError(f"block {bid} coefficient must be {d}x{d}")
            if not np.allclose(C, C.T, atol=1e-12):
                raise ValueError("constraint coefficient matrices must be symmetric")
            psd[bid] = 0.5 * (C + C.T)
        self._rows.append((psd, dict(free_coeffs or {}), float(rhs)))

    def set_objective(
        self,
        psd_coeffs: dict[int, np.ndarray] | None = None,
        free_coeffs: dict[int, float] | None = None,
    ):
        """Objective to MAXIMIZE: sum_k <C_k, X_k> + sum_j a_j u_j."""
        self._obj_psd = {
            bid: 0.5 * (np.asarray(C, float) + np.asarray(C, float).T)
            for bid, C in (psd_coeffs or {}).items()
        }
        self._obj_free = dict(free_coeffs or {})

    def build(self) -> SdpProblem:
        n_psd = sum(svec_dim(d) for d in self.block_sizes)
        n_vars = n_psd + self.n_free
        m = len(self._rows)
        A = np.zeros((m, n_vars))
        b = np.zeros(m)
        offsets = np.cumsum([0] + [svec_dim(d) for d in self.block_sizes])
        for r, (psd, free, rhs) in enumerate(self._rows):
            for bid, C in psd.items():
                sl = slice(offsets[bid], offsets[bid + 1])
                A[r, sl] = svec(C)
            for fid, coeff in free.items():
                A[r, n_psd + fid] = coeff
            b[r] = rhs
        c = np.zeros(n_vars)
        for bid, C in self._obj_psd.items():
            sl = slice(offsets[bid], offsets[bid + 1])
            c[sl] = svec(C)
        for fid, coeff in self._obj_free.items():
            c[n_psd + fid] = coeff
        return SdpProblem(list(self.block_sizes), self.n_free, A, b, c)


@dataclass
class SolveOptions:
    max_iters: int = 200
    tol_primal: float = 1e-8
    tol_dual: float = 1e-8
    tol_gap: float = 1e-7
    tol_infeasible: float = 1e-9
    step_fraction: float = 0.99
    verbose: bool = False


@dataclass
class SdpSolution:
    status: SolveStatus
    problem: SdpProblem
    x: np.ndarray | None = None
    y: np.ndarray | None = None
    s: np.ndarray | None = None
    objective: float | None = None
    iterations: int = 0
    residuals: dict = field(default_factory=dict)
    ray_y: np.ndarray | None = None
    ray_x: np.ndarray | None = None

    def psd_block(self, k: int) -> np.ndarray:
        if self.x is None:
            raise ValueError("no primal point available")
        return smat(self.x[self.problem.block_slice(k)], self.problem.block_sizes[k])

    def dual_block(self, k: int) -> np.ndarray:
        if self.s is None:
            raise ValueError("no dual point available")
        return smat(self.s[self.problem.block_slice(k)], self.problem.block_sizes[k])

    def free_values(self) -> np.ndarray:
        if self.x is None:
            raise ValueError("no primal point available")
        return self.x[self.problem.free_slice]


# -- presolve -----------------------------------------------------------------


def _drop_dependent_rows(A: np.ndarray, b: np.ndarray):
    """Remove linearly dependent rows; error if a dropped row is inconsistent."""
    m = A.shape[0]
    if m == 0:
        return A, b, np.arange(0)
    scale = max(1.0, float(np.max(np.abs(A))))
    q, r, piv = scipy.linalg.qr(A.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(A.shape) * np.finfo(float).eps * (diag[0] if diag.size else scale)
    rank = int(np.sum(diag > tol)) if diag.size else 0
    if rank == m:
        return A, b, np.arange(m)
    keep = np.sort(piv[:rank])
    drop = np.sort(piv[rank:])
    A_keep, b_keep = A[keep], b[keep]
    for r_idx in drop:
        w, *_ = np.linalg.lstsq(A_keep.T, A[r_idx], rcond=None)
        if abs(b[r_idx] - w @ b_keep) > 1e-8 * (1.0 + abs(b[r_idx])):
            raise InconsistentConstraintsError(
                f"constraint row {r_idx} is linearly dependent with an "
                "inconsistent right-hand side"
            )
    warnings.warn(
        f"dropped {len(drop)} dependent but consistent constraint rows",
        RuntimeWarning,
        stacklevel=3,
    )
    return A_keep, b_keep, keep


# -- Nesterov-Todd scaling ----------------------------------------------------


class _BlockScaling:
    """Per-block NT scaling data at the current primal-dual point."""

    def __init__(self, X: np.ndarray, S: np.ndarray):
        lx = np.linalg.cholesky(X)
        ls = np.linalg.cholesky(S)
        u, sig, vt = np.linalg.svd(ls.T @ lx)
        self.lam = sig  # scaled point is Diag(lam)
        self.R = lx @ vt.T @ np.diag(1.0 / np.sqrt(sig))
        self.Rinv = np.diag(np.sqrt(sig)) @ vt @ np.linalg.inv(lx)
        self.T = self.R @ self.R.T  # NT point: H^{-1} u = T mat(u) T

    def scale_x(self, v: np.ndarray, d: int) -> np.ndarray:
        """W^{-T} v = svec(Rinv mat(v) Rinv')."""
        return svec(self.Rinv @ smat(v, d) @ self.Rinv.T)

    def scale_s(self, v: np.ndarray, d: int) -> np.ndarray:
        """W v = svec(R' mat(v) R)."""
        return svec(self.R.T @ smat(v, d) @ self.R)

    def unscale_x(self, v: np.ndarray, d: int) -> np.ndarray:
        """W^T v = svec(R mat(v) R')."""
        return svec(self.R @ smat(v, d) @ self.R.T)

    def unscale_s(self, v: np.ndarray, d: int) -> np.ndarray:
        """W^{-1} v = svec(Rinv' mat(v) Rinv)."""
        return svec(self.Rinv.T @ smat(v, d) @ self.Rinv)

    def hinv(self, v: np.ndarray, d: int) -> np.ndarray:
        return svec(self.T @ smat(v, d) @ self.T)


def _jordan(u: np.ndarray, w: np.ndarray, d: int) -> np.ndarray:
    U, W = smat(u, d), smat(w, d)
    return svec(0.5 * (U @ W + W @ U))


def _jordan_solve(lam: np.ndarray, r: np.ndarray, d: int) -> np.ndarray:
    R = smat(r, d)
    denom = 0.5 * (lam[:, None] + lam[None, :])
    return svec(R / denom)


def _max_step(lam: np.ndarray, dv: np.ndarray, d: int) -> float:
    """Largest alpha with Diag(lam) + alpha*mat(dv) psd."""
    scale = 1.0 / np.sqrt(lam)
    M = smat(dv, d) * scale[:, None] * scale[None, :]
    emin = float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])
    if emin >= 0.0:
        return np.inf
    return 1.0 / (-emin)


# -- main solver ---------------------------------------------------------------


def solve(problem: SdpProblem, opts: SolveOptions | None = None) -> SdpSolution:
    """Solve the conic problem; see module docstring for the exact form."""
    opts = opts or SolveOptions()
    A_full, b_full = problem.A, problem.b
    A, b, kept_rows = _drop_dependent_rows(A_full, b_full)
    # row equilibration: unit-infinity-norm rows condition the Newton systems;
    # duals are mapped back to original row coordinates on extraction
    row_scale = np.maximum(np.max(np.abs(A), axis=1), 1e-12)
    A = A / row_scale[:, None]
    b = b / row_scale
    c_max = problem.c
    c = -c_max  # internal convention: minimize

    sizes = problem.block_sizes
    dims = [svec_dim(d) for d in sizes]
    n_psd = sum(dims)
    n_free = problem.n_free
    n_vars = n_psd + n_free
    m = A.shape[0]
    nu = sum(sizes) + 1

    offs = np.cumsum([0] + dims)
    blocks = list(zip(sizes, [slice(offs[k], offs[k + 1]) for k in range(len(sizes))]))
    free_sl = slice(n_psd, n_vars)

    x = np.zeros(n_vars)
    s = np.zeros(n_vars)
    for d, sl in blocks:
        x[sl] = svec(np.eye(d))
        s[sl] = svec(np.eye(d))
    y = np.zeros(m)
    tau, kappa = 1.0, 1.0

    norm_b = float(np.linalg.norm(problem.b))
    norm_c = float(np.linalg.norm(c))
    mu0 = (x @ s + tau * kappa) / nu

    def full_y(y_red: np.ndarray) -> np.ndarray:
        out = np.zeros(A_full.shape[0])
        out[kept_rows] = y_red / row_scale
        return out

    status = SolveStatus.ITER_LIMIT
    it = 0
    progress_metric = np.inf
    stagnant = 0
    prev_tau = tau
    for it in range(1, opts.max_iters + 1):
        mu = (x @ s + tau * kappa) / nu

        rp = A @ x - b * tau
        rd = -(A.T @ y) - s + c * tau
        rg = -(b @ y) + c @ x + kappa

        # -- optimality test on the de-homogenized point, against the full
        # original system (dropped dependent rows included)
        xt, yt, st = x / tau, y / tau, s / tau
        pres = np.linalg.norm(A_full @ xt - b_full)
        dres = np.linalg.norm(A.T @ yt + st - c)
        gap = abs(x @ s) / (tau * tau)
        obj_p = float(c @ xt)
        relgap = gap / (1.0 + abs(obj_p))
        metric = max(
            pres / (opts.tol_primal * (1.0 + norm_b)),
            dres / (opts.tol_dual * (1.0 + norm_c)),
            relgap / opts.tol_gap,
        )
        if metric <= 1.0:
            status = SolveStatus.OPTIMAL
            break

        # stagnation guard: no progress on the residual metric AND tau is not
        # marching toward an infeasibility ray -> the Newton directions have
        # hit the double-precision floor
        if metric > 0.3 * progress_metric and tau > 0.8 * prev_tau:
            stagnant += 1
            if stagnant >= 12 or (stagnant >= 8 and mu <= 1e-9 * mu0):
                status = SolveStatus.NUMERICAL_FAILURE
                break
        else:
            stagnant = 0
        progress_metric = min(progress_metric, metric)
        prev_tau = tau

        # -- infeasibility test via the homogeneous ray
        if tau <= 1e-10 * max(1.0, kappa) or (mu <= 1e-12 * mu0 and tau <= 1e-6 * kappa):
            by = float(b @ y)
            cx = float(c @ x)
            ray_d = np.linalg.norm(A.T @ y + s)
            ray_p = np.linalg.norm(A @ x)
            if by > opts.tol_infeasible and ray_d <= 1e-7 * max(1.0, by) * (1.0 + norm_c):
                status = SolveStatus.PRIMAL_INFEASIBLE
                break
            if -cx > opts.tol_infeasible and ray_p <= 1e-7 * max(1.0, -cx) * (1.0 + norm_b):
                status = SolveStatus.DUAL_INFEASIBLE
                break
            status = SolveStatus.NUMERICAL_FAILURE
            break

        # -- NT scalings
        try:
            scalings = [
                _BlockScaling(smat(x[sl], d), smat(s[sl], d)) for d, sl in blocks
            ]
        except np.linalg.LinAlgError:
            status = SolveStatus.NUMERICAL_FAILURE
            break

        # Hinv applied to constraint gradients and to c (psd part)
        HAt = np.zeros((n_psd, m))
        hc = np.zeros(n_psd)
        for (d, sl), sc in zip(blocks, scalings):
            T = sc.T
            for r_i in range(m):
                col = A[r_i, sl]
                if np.any(col):
                    HAt[sl, r_i] = svec(T @ smat(col, d) @ T)
            hc[sl] = svec(T @ smat(c[sl], d) @ T)

        A_psd = A[:, :n_psd]
        A_f = A[:, free_sl]
        c_psd = c[:n_psd]
        c_f = c[free_sl]
        AHA = A_psd @ HAt
        Ahc = A_psd @ hc

        dim_sys = m + n_free + 1
        M = np.zeros((dim_sys, dim_sys))
        M[:m, :m] = AHA
        M[:m, m : m + n_free] = A_f
        M[:m, -1] = -(b + Ahc)
        M[m : m + n_free, :m] = -A_f.T
        M[m : m + n_free, -1] = c_f
        M[-1, :m] = -b + Ahc
        M[-1, m : m + n_free] = c_f
        M[-1, -1] = -(c_psd @ hc) - kappa / tau

        lam_all = [sc.lam for sc in scalings]

        def solve_direction(eta: float, r_c_blocks, r_ct, lu_piv):
            gd = -eta * rd
            gp = -eta * rp
            gg = -eta * rg
            u_c = np.zeros(n_psd)
            for (d, sl), sc, r_c in zip(blocks, scalings, r_c_blocks):
                q_c = _jordan_solve(sc.lam, r_c, d)
                u_c[sl] = sc.unscale_s(q_c, d)
            w = gd[:n_psd] + u_c
            hw = np.zeros(n_psd)
            for (d, sl), sc in zip(blocks, scalings):
                hw[sl] = sc.hinv(w[sl], d)
            rhs = np.empty(dim_sys)
            rhs[:m] = gp - A_psd @ hw
            rhs[m : m + n_free] = gd[free_sl]
            rhs[-1] = gg - r_ct / tau - c_psd @ hw
            if not np.all(np.isfinite(rhs)):
                return None
            sol = None
            if lu_piv is not None:
                cand = scipy.linalg.lu_solve(lu_piv, rhs, check_finite=False)
                if np.all(np.isfinite(cand)):
                    sol = cand
                    # one round of iterative refinement keeps the endgame productive
                    resid = rhs - M @ sol
                    if np.all(np.isfinite(resid)):
                        corr = scipy.linalg.lu_solve(lu_piv, resid, check_finite=False)
                        if np.all(np.isfinite(corr)):
                            sol = sol + corr
            if sol is None:
                # singular KKT system: fall back to the minimum-norm solution
                sol, *_ = np.linalg.lstsq(M, rhs, rcond=None)
                if not np.all(np.isfinite(sol)):
                    return None
            dy = sol[:m]
            dx_f = sol[m : m + n_free]
            dtau = sol[-1]
            dx_psd = hw + HAt @ dy - hc * dtau
            dx = np.concatenate([dx_psd, dx_f])
            ds = np.zeros(n_vars)
            ds[:n_psd] = -(A_psd.T @ dy) + c_psd * dtau - gd[:n_psd]
            dkappa = (r_ct - kappa * dtau) / tau
            return dx, dy, ds, dtau, dkappa

        if not np.all(np.isfinite(M)):
            status = SolveStatus.NUMERICAL_FAILURE
            break
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # singular-matrix warnings; handled below
            try:
                lu_piv = scipy.linalg.lu_factor(M, check_finite=False)
            except (scipy.linalg.LinAlgError, ValueError):
                lu_piv = None

        # predictor (affine scaling) direction
        r_c_aff = []
        for (d, sl), lam in zip(blocks, lam_all):
            r_c_aff.append(svec(np.diag(-lam * lam)))
        aff = solve_direction(1.0, r_c_aff, -tau * kappa, lu_piv)
        if aff is None:
            status = SolveStatus.NUMERICAL_FAILURE
            break
        dx_a, dy_a, ds_a, dtau_a, dkap_a = aff

        # scaled directions for step computation
        def scaled_steps(dx, ds):
            out = []
            for (d, sl), sc in zip(blocks, scalings):
                out.append((sc.scale_x(dx[sl], d), sc.scale_s(ds[sl], d)))
            return out

        sc_aff = scaled_steps(dx_a, ds_a)
        alpha_aff = 1.0
        for (d, sl), lam, (dxt, dst) in zip(blocks, lam_all, sc_aff):
            alpha_aff = min(alpha_aff, _max_step(lam, dxt, d), _max_step(lam, dst, d))
        if dtau_a < 0:
            alpha_aff = min(alpha_aff, -tau / dtau_a)
        if dkap_a < 0:
            alpha_aff = min(alpha_aff, -kappa / dkap_a)

        gap_aff = 0.0
        for lam, (dxt, dst) in zip(lam_all, sc_aff):
            gap_aff += (lam + alpha_aff * _diag_of(dxt, len(lam))) @ (
                lam + alpha_aff * _diag_of(dst, len(lam))
            ) + alpha_aff * alpha_aff * _offdiag_dot(dxt, dst, len(lam))
        gap_aff += (tau + alpha_aff * dtau_a) * (kappa + alpha_aff * dkap_a)
        mu_aff = gap_aff / nu
        sigma = min(max((mu_aff / mu) ** 3, 1e-10), 1.0 - 1e-10)

        # corrector
        r_c = []
        for (d, sl), lam, (dxt, dst) in zip(blocks, lam_all, sc_aff):
            target = svec(sigma * mu * np.eye(d) - np.diag(lam * lam))
            r_c.append(target - _jordan(dxt, dst, d))
        r_ct = sigma * mu - tau * kappa - dtau_a * dkap_a
        combined = solve_direction(1.0 - sigma, r_c, r_ct, lu_piv)
        if combined is None:
            status = SolveStatus.NUMERICAL_FAILURE
            break
        dx, dy, ds, dtau, dkappa = combined

        def step_length(dx_c, ds_c, dtau_c, dkappa_c) -> float:
            a = 1.0 / opts.step_fraction
            for (d, sl), lam, (dxt, dst) in zip(
                blocks, lam_all, scaled_steps(dx_c, ds_c)
            ):
                a = min(a, _max_step(lam, dxt, d), _max_step(lam, dst, d))
            if dtau_c < 0:
                a = min(a, -tau / dtau_c)
            if dkappa_c < 0:
                a = min(a, -kappa / dkappa_c)
            return min(a * opts.step_fraction, 1.0)

        alpha = step_length(dx, ds, dtau, dkappa)
        if alpha < 0.05:
            # short combined step: fall back to a centering direction
            sigma_c = 0.8
            r_c_center = [
                svec(sigma_c * mu * np.eye(d) - np.diag(lam * lam))
                for (d, sl), lam in zip(blocks, lam_all)
            ]
            center = solve_direction(
                1.0 - sigma_c, r_c_center, sigma_c * mu - tau * kappa, lu_piv
            )
            if center is not None:
                alpha_c = step_length(center[0], center[2], center[3], center[4])
                if alpha_c > alpha:
                    dx, dy, ds, dtau, dkappa = center
                    alpha = alpha_c
        if not np.isfinite(alpha) or alpha <= 1e-14:
            status = SolveStatus.NUMERICAL_FAILURE
            break

        # never accept a step that inflates complementarity: inaccurate
        # directions near convergence would otherwise throw the iterate away
        def mu_after(a: float) -> float:
            g = ((x + a * dx) @ (s + a * ds)) + (tau + a * dtau) * (kappa + a * dkappa)
            return g / nu

        while mu_after(alpha) > max(3.0 * mu, 1e-14) and alpha > 1e-13:
            alpha *= 0.5

        x = x + alpha * dx
        y = y + alpha * dy
        s = s + alpha * ds
        tau += alpha * dtau
        kappa += alpha * dkappa

        if opts.verbose:
            print(
                f"iter {it:3d}  mu={mu:9.2e}  pres={pres:9.2e}  "
                f"dres={dres:9.2e}  gap={relgap:9.2e}  tau={tau:8.2e}"
            )

    sol = SdpSolution(status=status, problem=problem, iterations=it)
    if status == SolveStatus.OPTIMAL:
        sol.x = x / tau
        sol.y = full_y(y / tau)
        sol.s = s / tau
        sol.objective = float(c_max @ sol.x)
        sol.residuals = {
            "primal": float(np.linalg.norm(problem.A @ sol.x - problem.b)),
            "dual": float(np.linalg.norm(problem.A.T @ sol.y + sol.s - c)),
            "gap": float(abs(sol.x @ sol.s)),
            "relative_gap": float(abs(sol.x @ sol.s) / (1.0 + abs(sol.objective))),
        }
    elif status == SolveStatus.PRIMAL_INFEASIBLE:
        y_true = full_y(y)
        by = float(problem.b @ y_true)
        sol.ray_y = y_true / by
        sol.residuals = {
            "ray_dual": float(np.linalg.norm(problem.A.T @ sol.ray_y + s / by))
        }
    elif status == SolveStatus.DUAL_INFEASIBLE:
        scale = float(-(c @ x))
        sol.ray_x = x / scale
        sol.residuals = {"ray_primal": float(np.linalg.norm(problem.A @ sol.ray_x))}
    return sol


def _diag_of(v: np.ndarray, d: int) -> np.ndarray:
    """Diagonal of mat(v) without forming the matrix."""
    out = np.empty(d)
    k = 0
    for i in range(d):
        out[i] = v[k]
        k += d - i
    return out


def _offdiag_dot(u: np.ndarray, w: np.ndarray, d: int) -> float:
    """<mat(u), mat(w)> minus the diagonal contribution."""
    total = float(u @ w)
    k = 0
    for i in range(d):
        total -= u[k] * w[k]
        k += d - i
    return total


def certify_infeasibility(
    problem: SdpProblem, solution: SdpSolution, tol: float = 1e-6
) -> bool:
    """Validate the Farkas-type ray behind a PrimalInfeasible verdict.

    The ray y must satisfy b'y > 0 while the induced dual slack -A'y is
    PSD on every block and (near) zero on the free components.
    """
    if solution.status != SolveStatus.PRIMAL_INFEASIBLE:
        raise ValueError("certificate validation requires a PrimalInfeasible solution")
    y = solution.ray_y
    if y is None:
        return False
    by = float(problem.b @ y)
    if not by > 0:
        return False
    slack = -(problem.A.T @ y)
    scale = max(1.0, float(np.linalg.norm(y)))
    for k, d in enumerate(problem.block_sizes):
        Sk = smat(slack[problem.block_slice(k)], d)
        if float(np.linalg.eigvalsh(Sk)[0]) < -tol * scale:
            return False
    free_part = slack[problem.free_slice]
    if free_part.size and float(np.max(np.abs(free_part))) > tol * scale:
        return False
    return True


def dump_problem(problem: SdpProblem, path) -> None:
    """Write the problem in a plain-text sparse triplet format.

    Header lines carry counts and block sizes; each following line is one
    nonzero: `obj`/`row` entries reference a PSD block (`psd <bid> <i> <j>`)
    or a free scalar (`free <k>`), and `rhs <r> <value>` lines carry the
    right-hand side. Indices are 0-based; matrices are upper-triangle only.
    """
    lines = [
        f"blocks {len(problem.block_sizes)}",
        "blocksizes " + " ".join(str(d) for d in problem.block_sizes),
        f"free {problem.n_free}",
        f"rows {problem.n_rows}",
        "maximize",
    ]

    def emit(prefix: str, vec: np.ndarray):
        for k, d in enumerate(problem.block_sizes):
            Mk = smat(vec[problem.block_slice(k)], d)
            for i in range(d):
                for j in range(i, d):
                    if Mk[i, j] != 0.0:
                        lines.append(f"{prefix} psd {k} {i} {j} {float(Mk[i, j])!r}")
        for k, val in enumerate(vec[problem.free_slice]):
            if val != 0.0:
                lines.append(f"{prefix} free {k} {float(val)!r}")

    emit("obj", problem.c)
    for r in range(problem.n_rows):
        emit(f"row {r}", problem.A[r])
        lines.append(f"rhs {r} {float(problem.b[r])!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
