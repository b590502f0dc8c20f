"""Sum-of-squares certificate synthesis lowered to semidefinite programs.

A polynomial p of degree 2k is SOS iff p = z'Qz for the monomial basis z
of degree <= k and some Q >= 0; matching coefficients of p against the
Gram form gives the equality rows of an SDP. This module provides

  * monomial bases and the coefficient-matching machinery (`SosProgram`),
  * an SOS membership check with validated infeasibility certificates,
  * drift-certificate synthesis: find V with
        V - gamma0 x'x + lambda0          SOS   (radial unboundedness)
        -(A V) - gamma1 x'x + lambda1     SOS   (generator bound)
    minimizing lambda1, so V1 holds with d = lambda1 and
    C = {x : x'x <= lambda1/gamma1},
  * variant-certificate synthesis for U = (1 - exp(-lam*zeta))/lam via the
    containment and mean-decrease SOS conditions, solved by an alternating
    scheme (multiplier step / template step) that maximizes a shared
    positivity margin eps, with lam swept over a geometric grid because it
    multiplies zeta bilinearly.

The template step linearizes the gradient-quadratic term of beta around
the previous zeta. Since G = g g' is pointwise PSD the linearization
majorizes beta, so the linearized constraint is sound, tight at the
previous iterate, and keeps the eps trace non-decreasing.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import sdemodel, sdpsolve
from .polyalg import Monomial, Polynomial
from .sdemodel import SdeSystem, SemialgebraicSet

DEFAULT_BASIS_CAP = 500
SOS_RESIDUAL_TOL = 1e-6
GRAM_EIG_TOL = 1e-8


class BasisCapError(ValueError):
    """Requested monomial basis exceeds the configured size cap."""


class SosStructureError(ValueError):
    """A target coefficient can never be matched by the Gram form."""


class DriftInfeasibleError(RuntimeError):
    """Drift synthesis SDP is infeasible at the requested degree."""

    def __init__(self, degree: int, certified: bool, detail: str = ""):
        self.degree = degree
        self.certified = certified
        super().__init__(
            f"drift synthesis infeasible at degree {degree} "
            f"(dual ray {'validated' if certified else 'not validated'}); "
            f"try a higher template degree. {detail}"
        )


class VariantInitialInfeasibleError(RuntimeError):
    """The iteration-0 multiplier step is infeasible for every lambda."""


class VariantStalledError(RuntimeError):
    """Alternation stopped without reaching a positive margin."""

    def __init__(self, trace: list, best_eps: float):
        self.trace = trace
        self.best_eps = best_eps
        super().__init__(
            f"variant alternation stalled with best eps {best_eps:.3e}; trace has "
            f"{len(trace)} entries"
        )


# -- monomial bases ------------------------------------------------------------


@dataclass(frozen=True)
class MonomialBasis:
    """All monomials of degree <= half_degree, in ascending graded-lex order."""

    dimension: int
    half_degree: int
    monomials: tuple[Monomial, ...]

    def __len__(self) -> int:
        return len(self.monomials)

    def exponent_rows(self) -> list[tuple[int, ...]]:
        return [m.exponents for m in self.monomials]


def build_basis(n: int, kappa: int, cap: int = DEFAULT_BASIS_CAP) -> MonomialBasis:
    """Enumerate the monomial basis of degree <= kappa in n variables."""
    if n < 1 or kappa < 0:
        raise ValueError("need n >= 1 and kappa >= 0")
    size = math.comb(n + kappa, kappa)
    if size > cap:
        raise BasisCapError(
            f"basis size C({n + kappa},{kappa}) = {size} exceeds cap {cap}"
        )
    monos = []
    for degree in range(kappa + 1):
        level = []
        for combo in itertools.combinations_with_replacement(range(n), degree):
            exps = [0] * n
            for idx in combo:
                exps[idx] += 1
            level.append(Monomial(tuple(exps)))
        level.sort(key=lambda m: m.grlex_key())
        monos.extend(level)
    assert len(monos) == size
    return MonomialBasis(n, kappa, tuple(monos))


@dataclass(frozen=True)
class GramBlock:
    """A Gram matrix over a monomial basis witnessing one SOS identity."""

    basis: MonomialBasis
    matrix: np.ndarray

    def min_eigenvalue(self) -> float:
        M = 0.5 * (self.matrix + self.matrix.T)
        return float(np.linalg.eigvalsh(M)[0])

    def expand(self) -> Polynomial:
        return expand_gram(self.basis, self.matrix)


def _reduce_basis(basis: MonomialBasis, support: set[Monomial]) -> MonomialBasis:
    """Iteratively drop basis monomials by the diagonal-consistency rule."""
    monos = list(basis.monomials)
    live = list(range(len(monos)))
    changed = True
    while changed:
        changed = False
        counts: dict[Monomial, int] = {}
        for a_pos, a in enumerate(live):
            for b in live[a_pos:]:
                prod = monos[a].mul(monos[b])
                counts[prod] = counts.get(prod, 0) + 1
        keep = []
        for idx in live:
            sq = monos[idx].mul(monos[idx])
            if sq not in support and counts.get(sq, 0) == 1:
                changed = True
            else:
                keep.append(idx)
        live = keep
    if not live:
        live = [0]  # keep one monomial so the Gram block stays well-formed
    if len(live) == len(monos):
        return basis
    return MonomialBasis(
        basis.dimension, basis.half_degree, tuple(monos[i] for i in live)
    )


def expand_gram(basis: MonomialBasis, Q: np.ndarray) -> Polynomial:
    """Re-expand z'Qz through polynomial arithmetic (independent of the solver)."""
    n = basis.dimension
    acc: dict[Monomial, float] = {}
    monos = basis.monomials
    for i in range(len(monos)):
        for j in range(i, len(monos)):
            coeff = Q[i, j] if i == j else Q[i, j] + Q[j, i]
            if coeff == 0.0:
                continue
            prod = monos[i].mul(monos[j])
            acc[prod] = acc.get(prod, 0.0) + float(coeff)
    return Polynomial(n, acc)


# -- affine polynomial expressions ----------------------------------------------


class AffinePoly:
    """A polynomial depending affinely on SDP decision variables.

    Decision atoms are free scalars (by id) and entries of PSD blocks (by
    block id and upper-triangle position). Coefficients of each atom are
    plain polynomials, so products with fixed polynomials stay affine.
    """

    __slots__ = ("dimension", "const", "free_lin", "psd_lin")

    def __init__(self, dimension: int, const: Polynomial | None = None):
        self.dimension = dimension
        self.const = const if const is not None else Polynomial.zero(dimension)
        self.free_lin: dict[int, Polynomial] = {}
        self.psd_lin: dict[int, dict[tuple[int, int], Polynomial]] = {}

    def copy(self) -> "AffinePoly":
        out = AffinePoly(self.dimension, self.const)
        out.free_lin = dict(self.free_lin)
        out.psd_lin = {b: dict(entries) for b, entries in self.psd_lin.items()}
        return out

    def _accum_free(self, fid: int, poly: Polynomial):
        cur = self.free_lin.get(fid)
        new = poly if cur is None else cur.add(poly)
        if new.is_zero():
            self.free_lin.pop(fid, None)
        else:
            self.free_lin[fid] = new

    def _accum_psd(self, bid: int, key: tuple[int, int], poly: Polynomial):
        entries = self.psd_lin.setdefault(bid, {})
        cur = entries.get(key)
        new = poly if cur is None else cur.add(poly)
        if new.is_zero():
            entries.pop(key, None)
            if not entries:
                self.psd_lin.pop(bid, None)
        else:
            entries[key] = new

    def add(self, other) -> "AffinePoly":
        out = self.copy()
        if isinstance(other, Polynomial):
            out.const = out.const.add(other)
            return out
        if isinstance(other, (int, float)):
            out.const = out.const.add(Polynomial.constant(self.dimension, other))
            return out
        out.const = out.const.add(other.const)
        for fid, poly in other.free_lin.items():
            out._accum_free(fid, poly)
        for bid, entries in other.psd_lin.items():
            for key, poly in entries.items():
                out._accum_psd(bid, key, poly)
        return out

    def sub(self, other) -> "AffinePoly":
        if isinstance(other, (int, float)):
            return self.add(-other)
        return self.add(other.scale(-1.0) if isinstance(other, AffinePoly) else other.neg())

    def scale(self, factor: float) -> "AffinePoly":
        out = AffinePoly(self.dimension, self.const.scale(factor))
        out.free_lin = {f: p.scale(factor) for f, p in self.free_lin.items()}
        out.psd_lin = {
            b: {k: p.scale(factor) for k, p in entries.items()}
            for b, entries in self.psd_lin.items()
        }
        return out

    def mul_poly(self, q: Polynomial) -> "AffinePoly":
        out = AffinePoly(self.dimension, self.const.mul(q))
        out.free_lin = {f: p.mul(q) for f, p in self.free_lin.items()}
        out.psd_lin = {
            b: {k: p.mul(q) for k, p in entries.items()}
            for b, entries in self.psd_lin.items()
        }
        return out

    def differentiate(self, var_index: int) -> "AffinePoly":
        out = AffinePoly(self.dimension, self.const.differentiate(var_index))
        for fid, poly in self.free_lin.items():
            d = poly.differentiate(var_index)
            if not d.is_zero():
                out.free_lin[fid] = d
        for bid, entries in self.psd_lin.items():
            for key, poly in entries.items():
                d = poly.differentiate(var_index)
                if not d.is_zero():
                    out._accum_psd(bid, key, d)
        return out

    def monomial_support(self) -> set[Monomial]:
        support = set(self.const.terms)
        for poly in self.free_lin.values():
            support |= set(poly.terms)
        for entries in self.psd_lin.values():
            for poly in entries.values():
                support |= set(poly.terms)
        return support


# -- SOS program wrapper --------------------------------------------------------


@dataclass
class SosConstraint:
    """One registered SOS membership: target == z'Qz over `basis`."""

    label: str
    target: AffinePoly
    basis: MonomialBasis
    gram_block_id: int


class _Row:
    """One equality: sum of gram-entry terms plus free terms equals rhs.

    Gram terms are keyed (block, i, j) with i <= j; the stored weight is
    the total coefficient of the matrix entry Q_ij in the equality.
    """

    __slots__ = ("gram", "free", "rhs")

    def __init__(self, gram, free, rhs):
        self.gram: dict[tuple[int, int, int], float] = gram
        self.free: dict[int, float] = free
        self.rhs: float = rhs


class SosProgram:
    """Collects SOS memberships and scalar inequalities into one SDP.

    Rows are kept symbolic until solve time so that a sound presolve can
    run first: Gram diagonals forced to zero drop their basis monomial,
    single-variable linear rows pin that variable, and two opposing
    diagonal facts on one variable squeeze it to zero. Each rule is a
    necessary implication, so the reduced SDP is equivalent; without the
    presolve, degenerate infeasible programs are only weakly infeasible
    and admit no Farkas ray.
    """

    def __init__(self, dimension: int, basis_cap: int = DEFAULT_BASIS_CAP):
        self.dimension = dimension
        self.basis_cap = basis_cap
        self.constraints: list[SosConstraint] = []
        self._rows: list[_Row] = []
        self._blocks: list[dict] = []  # kind: gram|template|slack, size, basis
        self._scalar_names: list[str] = []

    # scalar decision variables -----------------------------------------

    def free_scalar(self, name: str) -> int:
        self._scalar_names.append(name)
        return len(self._scalar_names) - 1

    def scalar_expr(self, fid: int, coeff: float = 1.0) -> AffinePoly:
        out = AffinePoly(self.dimension)
        out.free_lin[fid] = Polynomial.constant(self.dimension, coeff)
        return out

    def _add_block(self, kind: str, size: int, basis: MonomialBasis | None) -> int:
        self._blocks.append({"kind": kind, "size": size, "basis": basis})
        return len(self._blocks) - 1

    def block_basis(self, bid: int) -> MonomialBasis:
        basis = self._blocks[bid]["basis"]
        if basis is None:
            raise ValueError(f"block {bid} has no monomial basis")
        return basis

    def add_scalar_lower_bound(self, coeffs: dict[int, float], const: float = 0.0):
        """Require sum(coeffs[f] * t_f) + const >= 0 via a 1x1 slack block."""
        slack = self._add_block("slack", 1, None)
        self._rows.append(
            _Row({(slack, 0, 0): 1.0}, {fid: -c for fid, c in coeffs.items()}, const)
        )

    # polynomial templates ------------------------------------------------

    def poly_template(self, name: str, monomials) -> tuple[AffinePoly, dict[Monomial, int]]:
        """Fresh free coefficient per monomial; returns the expression and var map."""
        expr = AffinePoly(self.dimension)
        var_map: dict[Monomial, int] = {}
        for mono in monomials:
            fid = self.free_scalar(f"{name}[{mono}]")
            var_map[mono] = fid
            expr.free_lin[fid] = Polynomial(self.dimension, {mono: 1.0})
        return expr, var_map

    def sos_template(self, basis: MonomialBasis) -> tuple[AffinePoly, int]:
        """An SOS-by-construction template z'Qz with Q a fresh PSD block."""
        bid = self._add_block("template", len(basis), basis)
        expr = AffinePoly(self.dimension)
        monos = basis.monomials
        for i in range(len(monos)):
            for j in range(i, len(monos)):
                mult = 1.0 if i == j else 2.0
                prod = monos[i].mul(monos[j])
                expr._accum_psd(bid, (i, j), Polynomial(self.dimension, {prod: mult}))
        return expr, bid

    # SOS membership -------------------------------------------------------

    def basis_for(self, target: AffinePoly | Polynomial) -> MonomialBasis:
        """Smallest full basis whose products cover the target's support."""
        if isinstance(target, Polynomial):
            support = set(target.terms)
        else:
            support = target.monomial_support()
        max_deg = max((m.degree for m in support), default=0)
        return build_basis(self.dimension, (max_deg + 1) // 2, self.basis_cap)

    def add_sos(
        self,
        target: AffinePoly | Polynomial,
        basis: MonomialBasis | None = None,
        label: str = "sos",
    ) -> int:
        """Add rows forcing target == z'Qz for a fresh Gram block Q >= 0."""
        if basis is None:
            basis = self.basis_for(target)
        if isinstance(target, Polynomial):
            expr = AffinePoly(self.dimension, target)
        else:
            expr = target

        basis = _reduce_basis(basis, expr.monomial_support())
        gram_bid = self._add_block("gram", len(basis), basis)
        monos = basis.monomials
        k = len(monos)

        products: dict[Monomial, list[tuple[int, int]]] = {}
        for i in range(k):
            for j in range(i, k):
                products.setdefault(monos[i].mul(monos[j]), []).append((i, j))

        support = set(products) | expr.monomial_support()

        for mono in sorted(support, key=lambda m: m.grlex_key()):
            gram: dict[tuple[int, int, int], float] = {}
            # [z'Qz]_mono = sum Q_ii + 2 sum_{i<j} Q_ij over matching products
            for (i, j) in products.get(mono, []):
                gram[(gram_bid, i, j)] = 1.0 if i == j else 2.0
            for bid, entries in expr.psd_lin.items():
                for (i, j), poly in entries.items():
                    coeff = poly.coefficient(mono.exponents)
                    if coeff != 0.0:
                        key = (bid, i, j)
                        gram[key] = gram.get(key, 0.0) - coeff
            free_coeffs = {}
            for fid, poly in expr.free_lin.items():
                coeff = poly.coefficient(mono.exponents)
                if coeff != 0.0:
                    free_coeffs[fid] = -coeff
            rhs = expr.const.coefficient(mono.exponents)
            if not gram and not free_coeffs:
                if rhs != 0.0:
                    raise SosStructureError(
                        f"coefficient of {mono} in '{label}' cannot be matched "
                        "by any Gram form over the admissible basis"
                    )
                continue
            self._rows.append(_Row(gram, free_coeffs, rhs))

        constraint = SosConstraint(label, expr, basis, gram_bid)
        self.constraints.append(constraint)
        return gram_bid

    # presolve reduction ------------------------------------------------------

    def _reduce_rows(self):
        """Fixpoint of the three elimination rules; see class docstring.

        Returns (live indices per block, pinned free values, infeasible reason).
        """
        live = {
            bid: set(range(blk["size"]))
            for bid, blk in enumerate(self._blocks)
        }
        reducible = {
            bid
            for bid, blk in enumerate(self._blocks)
            if blk["kind"] in ("gram", "slack")
        }
        pinned: dict[int, float] = {}
        rows = self._rows

        def drop_gram_index(bid, idx):
            live[bid].discard(idx)
            for row in rows:
                for key in [k for k in row.gram if k[0] == bid and idx in (k[1], k[2])]:
                    del row.gram[key]

        def pin(fid, value):
            pinned[fid] = value
            for row in rows:
                if fid in row.free:
                    row.rhs -= row.free.pop(fid) * value

        changed = True
        while changed:
            changed = False
            alive_rows = []
            for row in rows:
                if not row.gram and not row.free:
                    if abs(row.rhs) > 1e-12:
                        return live, pinned, "an equality reduced to 0 == nonzero"
                    changed = True
                    continue
                alive_rows.append(row)
            rows = alive_rows

            squeeze: dict[int, set[float]] = {}
            for row in rows:
                diag_key = None
                if len(row.gram) == 1:
                    (bid, i, j), w = next(iter(row.gram.items()))
                    if i == j and bid in reducible and w != 0.0:
                        diag_key = (bid, i, w)
                if diag_key is None:
                    continue
                bid, i, w = diag_key
                if not row.free:
                    if row.rhs == 0.0:
                        drop_gram_index(bid, i)  # Q_ii = 0 kills its row and column
                        changed = True
                elif len(row.free) == 1 and row.rhs == 0.0:
                    fid, a = next(iter(row.free.items()))
                    squeeze.setdefault(fid, set()).add(math.copysign(1.0, -a / w))
            for fid, signs in squeeze.items():
                if len(signs) == 2:  # t >= 0 and t <= 0 from opposing diagonals
                    pin(fid, 0.0)
                    changed = True
            if changed:
                continue

            for row in rows:
                if not row.gram and len(row.free) == 1:
                    fid, a = next(iter(row.free.items()))
                    pin(fid, row.rhs / a)
                    changed = True
                    break

        self._rows = rows
        return live, pinned, None

    # solving ---------------------------------------------------------------

    def solve(
        self,
        objective: dict[int, float] | None = None,
        opts: sdpsolve.SolveOptions | None = None,
    ) -> "SosSolveResult":
        if getattr(self, "_solved", False):
            raise RuntimeError("SosProgram.solve is single-use; build a fresh program")
        self._solved = True
        live, pinned, reason = self._reduce_rows()
        if reason is not None:
            return SosSolveResult(
                self, None, None, structural_reason=reason, pinned=pinned
            )

        builder = sdpsolve.SdpProblemBuilder()
        block_map: dict[int, tuple[int, list[int]]] = {}
        for bid, blk in enumerate(self._blocks):
            indices = sorted(live[bid])
            if not indices:
                continue
            new_bid = builder.add_psd_block(len(indices))
            block_map[bid] = (new_bid, indices)
        for name in self._scalar_names:
            builder.add_free_var(name)

        for row in self._rows:
            psd_coeffs: dict[int, np.ndarray] = {}
            for (bid, i, j), w in row.gram.items():
                new_bid, indices = block_map[bid]
                pos = {orig: p for p, orig in enumerate(indices)}
                C = psd_coeffs.setdefault(new_bid, np.zeros((len(indices), len(indices))))
                pi, pj = pos[i], pos[j]
                if pi == pj:
                    C[pi, pi] += w
                else:
                    C[pi, pj] += 0.5 * w
                    C[pj, pi] += 0.5 * w
            builder.add_row(psd_coeffs, dict(row.free), row.rhs)
        for fid, value in pinned.items():
            builder.add_row(None, {fid: 1.0}, value)

        builder.set_objective(free_coeffs=objective or {})
        problem = builder.build()
        solution = sdpsolve.solve(problem, opts)
        return SosSolveResult(self, problem, solution, block_map=block_map, pinned=pinned)


@dataclass
class SosSolveResult:
    program: SosProgram
    problem: sdpsolve.SdpProblem | None
    solution: sdpsolve.SdpSolution | None
    block_map: dict[int, tuple[int, list[int]]] = field(default_factory=dict)
    pinned: dict[int, float] = field(default_factory=dict)
    structural_reason: str | None = None

    @property
    def status(self) -> sdpsolve.SolveStatus:
        if self.structural_reason is not None:
            return sdpsolve.SolveStatus.PRIMAL_INFEASIBLE
        return self.solution.status

    @property
    def structurally_infeasible(self) -> bool:
        return self.structural_reason is not None

    def scalar_value(self, fid: int) -> float:
        return float(self.solution.free_values()[fid])

    def poly_value(self, var_map: dict[Monomial, int]) -> Polynomial:
        free = self.solution.free_values()
        terms = {mono: float(free[fid]) for mono, fid in var_map.items()}
        return Polynomial(self.program.dimension, terms)

    def gram(self, block_id: int) -> np.ndarray:
        """Solved block in its original indexing; eliminated rows/cols are zero."""
        size = self.program._blocks[block_id]["size"]
        out = np.zeros((size, size))
        mapped = self.block_map.get(block_id)
        if mapped is None:
            return out
        new_bid, indices = mapped
        M = self.solution.psd_block(new_bid)
        M = 0.5 * (M + M.T)
        out[np.ix_(indices, indices)] = M
        return out

    def evaluate_affine(self, expr: AffinePoly) -> Polynomial:
        """Substitute solved decision values into an affine expression."""
        out = expr.const
        free = self.solution.free_values()
        for fid, poly in expr.free_lin.items():
            out = out.add(poly.scale(float(free[fid])))
        for bid, entries in expr.psd_lin.items():
            Q = self.gram(bid)
            for (i, j), poly in entries.items():
                out = out.add(poly.scale(float(Q[i, j])))
        return out


# -- SOS membership check --------------------------------------------------------


@dataclass(frozen=True)
class GramDecomposition:
    basis: MonomialBasis
    gram: np.ndarray
    residual: float
    min_eigenvalue: float


@dataclass
class SosCheckResult:
    is_sos: bool
    reason: str | None = None
    decomposition: GramDecomposition | None = None
    infeasibility_certified: bool | None = None
    solution: sdpsolve.SdpSolution | None = None

    def __bool__(self) -> bool:
        return self.is_sos


def check_sos(
    p: Polynomial,
    basis_cap: int = DEFAULT_BASIS_CAP,
    opts: sdpsolve.SolveOptions | None = None,
) -> SosCheckResult:
    """Decide SOS membership of p by Gram-matrix feasibility.

    On success the decomposition carries the Gram matrix, its minimum
    eigenvalue, and the coefficient residual of the re-expanded identity.
    On infeasibility the result carries the solver's Farkas ray, validated
    independently.
    """
    if p.is_zero():
        raise ValueError("the zero polynomial is excluded; check for it directly")
    if p.degree % 2 == 1:
        return SosCheckResult(is_sos=False, reason="OddDegree")
    prog = SosProgram(p.dimension, basis_cap)
    basis = build_basis(p.dimension, p.degree // 2, basis_cap)
    bid = prog.add_sos(p, basis, "membership")
    result = prog.solve(opts=opts)
    if result.status == sdpsolve.SolveStatus.OPTIMAL:
        Q = result.gram(bid)
        residual = p.sub(expand_gram(basis, Q)).max_abs_coeff()
        min_eig = float(np.linalg.eigvalsh(Q)[0])
        return SosCheckResult(
            is_sos=True,
            decomposition=GramDecomposition(basis, Q, residual, min_eig),
            solution=result.solution,
        )
    if result.status == sdpsolve.SolveStatus.PRIMAL_INFEASIBLE:
        if result.structurally_infeasible:
            certified = True  # exact-arithmetic presolve implication
        else:
            certified = sdpsolve.certify_infeasibility(result.problem, result.solution)
        return SosCheckResult(
            is_sos=False,
            reason="Infeasible",
            infeasibility_certified=certified,
            solution=result.solution,
        )
    raise RuntimeError(f"SOS membership solve ended with status {result.status.value}")


# -- certificates -----------------------------------------------------------------


@dataclass
class DriftCertificate:
    """V1 witness: V - gamma0 x'x + lambda0 and -(A V) - gamma1 x'x + lambda1 SOS."""

    V: Polynomial
    gamma0: float
    lambda0: float
    gamma1: float
    lambda1: float
    gram_blocks: dict[str, GramBlock]
    residuals: dict[str, float] = field(default_factory=dict)

    @property
    def d(self) -> float:
        return self.lambda1

    @property
    def compact_radius(self) -> float:
        return math.sqrt(max(self.lambda1, 0.0) / self.gamma1)

    def validate(self, sys: SdeSystem):
        """Recompute SOS residuals and Gram eigenvalue floors against `sys`."""
        if self.gamma0 <= 0 or self.gamma1 <= 0:
            raise ValueError("gamma0 and gamma1 must be positive")
        xx = _sum_of_squares_poly(self.V.dimension)
        targets = {
            "radial": self.V.sub(xx.scale(self.gamma0)).add(
                Polynomial.constant(self.V.dimension, self.lambda0)
            ),
            "generator": sdemodel.generator_apply(sys, self.V)
            .neg()
            .sub(xx.scale(self.gamma1))
            .add(Polynomial.constant(self.V.dimension, self.lambda1)),
        }
        self.residuals = {}
        for name, target in targets.items():
            block = self.gram_blocks[name]
            residual = target.sub(block.expand()).max_abs_coeff()
            self.residuals[name] = residual
            if residual > SOS_RESIDUAL_TOL:
                raise RuntimeError(
                    f"drift certificate residual '{name}' = {residual:.3e} > {SOS_RESIDUAL_TOL}"
                )
            if block.min_eigenvalue() < -GRAM_EIG_TOL:
                raise RuntimeError(
                    f"drift certificate Gram '{name}' has eigenvalue "
                    f"{block.min_eigenvalue():.3e} < -{GRAM_EIG_TOL}"
                )


@dataclass
class VariantCertificate:
    """V2 witness for U = (1 - exp(-lam*zeta))/lam with SOS-certified margins."""

    zeta: Polynomial
    lam: float
    mu: float
    alpha: list[float]
    s_multipliers: list[Polynomial]
    lambda_multiplier: Polynomial
    epsilon: float
    gram_blocks: dict[str, GramBlock]
    residuals: dict[str, float] = field(default_factory=dict)

    def validate(self, sys: SdeSystem, target: SemialgebraicSet,
                 literal_eq15_sign: bool = False):
        if self.epsilon <= 0:
            raise ValueError("certificate margin eps must be positive")
        for name, value in (("lambda", self.lam), ("mu", self.mu)):
            if value < self.epsilon - 1e-12:
                raise ValueError(f"{name} = {value} violates the eps margin")
        if any(a < self.epsilon - 1e-12 for a in self.alpha):
            raise ValueError("some alpha_i violates the eps margin")
        n = self.zeta.dimension
        beta = sdemodel.beta_poly(sys, self.zeta, self.lam)
        targets = {
            "decrease": beta.neg()
            .sub(Polynomial.constant(n, self.mu))
            .sub(self.lambda_multiplier.mul(self.zeta))
        }
        g_sign = 1.0 if literal_eq15_sign else -1.0
        for i, (g_i, s_i, a_i) in enumerate(
            zip(target.constraints, self.s_multipliers, self.alpha)
        ):
            targets[f"containment[{i}]"] = (
                g_i.scale(g_sign).add(s_i.mul(self.zeta)).sub(Polynomial.constant(n, a_i))
            )
        self.residuals = {}
        for name, tgt in targets.items():
            block = self.gram_blocks[name]
            residual = tgt.sub(block.expand()).max_abs_coeff()
            self.residuals[name] = residual
            if residual > SOS_RESIDUAL_TOL:
                raise RuntimeError(
                    f"variant certificate residual '{name}' = {residual:.3e}"
                )
            if block.min_eigenvalue() < -GRAM_EIG_TOL:
                raise RuntimeError(f"variant Gram '{name}' not PSD within tolerance")
        for name, block in self.gram_blocks.items():
            if block.min_eigenvalue() < -GRAM_EIG_TOL:
                raise RuntimeError(f"variant Gram '{name}' not PSD within tolerance")


def _sum_of_squares_poly(n: int) -> Polynomial:
    """x'x as a polynomial."""
    terms = []
    for i in range(n):
        exps = [0] * n
        exps[i] = 2
        terms.append((1.0, tuple(exps)))
    return Polynomial.from_terms(n, terms)


# -- drift synthesis ---------------------------------------------------------------


@dataclass
class DriftSynthesisParams:
    gamma_min: float = 1e-3
    basis_cap: int = DEFAULT_BASIS_CAP
    solver: sdpsolve.SolveOptions = field(default_factory=sdpsolve.SolveOptions)


def synthesize_drift(
    sys: SdeSystem, deg_v: int, params: DriftSynthesisParams | None = None
) -> DriftCertificate:
    """Solve the joint SDP for a degree-deg_v drift certificate, minimizing lambda1."""
    params = params or DriftSynthesisParams()
    if deg_v < 2 or deg_v % 2 != 0:
        raise ValueError("deg_v must be an even integer >= 2")
    if not sys.has_noise:
        raise ValueError("certificate synthesis requires a nonzero diffusion")
    n = sys.n
    prog = SosProgram(n, params.basis_cap)

    v_monos = [
        m
        for m in build_basis(n, deg_v, params.basis_cap).monomials
        if 1 <= m.degree <= deg_v
    ]
    v_expr, v_vars = prog.poly_template("v", v_monos)
    gamma0 = prog.free_scalar("gamma0")
    lambda0 = prog.free_scalar("lambda0")
    gamma1 = prog.free_scalar("gamma1")
    lambda1 = prog.free_scalar("lambda1")

    xx = _sum_of_squares_poly(n)

    radial = v_expr.copy()
    radial = radial.add(prog.scalar_expr(gamma0, -1.0).mul_poly(xx))
    radial = radial.add(prog.scalar_expr(lambda0))
    basis_radial = build_basis(n, deg_v // 2, params.basis_cap)
    bid_radial = prog.add_sos(radial, basis_radial, "radial")

    neg_gen = AffinePoly(n)
    max_deg = 2
    for mono, fid in v_vars.items():
        applied = sdemodel.generator_apply(sys, Polynomial(n, {mono: 1.0}))
        if not applied.is_zero():
            neg_gen._accum_free(fid, applied.neg())
            max_deg = max(max_deg, applied.degree)
    neg_gen = neg_gen.add(prog.scalar_expr(gamma1, -1.0).mul_poly(xx))
    neg_gen = neg_gen.add(prog.scalar_expr(lambda1))
    basis_gen = build_basis(n, (max_deg + 1) // 2, params.basis_cap)
    bid_gen = prog.add_sos(neg_gen, basis_gen, "generator")

    prog.add_scalar_lower_bound({gamma0: 1.0}, -params.gamma_min)
    prog.add_scalar_lower_bound({gamma1: 1.0}, -params.gamma_min)
    prog.add_scalar_lower_bound({lambda1: 1.0}, 0.0)

    result = prog.solve(objective={lambda1: -1.0}, opts=params.solver)
    if result.status == sdpsolve.SolveStatus.PRIMAL_INFEASIBLE:
        if result.structurally_infeasible:
            certified = True
            detail = f"presolve: {result.structural_reason}"
        else:
            certified = sdpsolve.certify_infeasibility(result.problem, result.solution)
            detail = ""
        raise DriftInfeasibleError(deg_v, certified, detail)
    if result.status != sdpsolve.SolveStatus.OPTIMAL:
        raise RuntimeError(f"drift synthesis ended with status {result.status.value}")

    cert = DriftCertificate(
        V=result.poly_value(v_vars),
        gamma0=result.scalar_value(gamma0),
        lambda0=result.scalar_value(lambda0),
        gamma1=result.scalar_value(gamma1),
        lambda1=result.scalar_value(lambda1),
        gram_blocks={
            "radial": GramBlock(basis_radial, result.gram(bid_radial)),
            "generator": GramBlock(basis_gen, result.gram(bid_gen)),
        },
    )
    cert.validate(sys)
    return cert


# -- variant constraint builders -----------------------------------------------


def containment_constraints(
    prog: SosProgram,
    zeta: Polynomial,
    target: SemialgebraicSet,
    s_degree: int,
    eps: int,
    literal_eq15_sign: bool = False,
) -> tuple[list[SosConstraint], list[int], list[int]]:
    """Register {zeta <= 0} => inside-target constraints for fixed zeta.

    For each target constraint g_i adds (-g_i + S_i*zeta - alpha_i) SOS with
    a fresh SOS multiplier template S_i and margin alpha_i >= eps. Returns
    the constraints plus the alpha variable ids and S_i block ids. With
    `literal_eq15_sign` the g_i enters with flipped sign (the alternative
    listing of the synthesis program; containment then loses its proof).
    """
    if s_degree % 2 != 0:
        raise ValueError("multiplier degree must be even")
    n = prog.dimension
    g_sign = 1.0 if literal_eq15_sign else -1.0
    constraints = []
    alpha_ids = []
    s_block_ids = []
    s_basis = build_basis(n, s_degree // 2, prog.basis_cap)
    for i, g_i in enumerate(target.constraints):
        s_expr, s_bid = prog.sos_template(s_basis)
        alpha = prog.free_scalar(f"alpha{i}")
        main = s_expr.mul_poly(zeta)
        main = main.add(g_i.scale(g_sign))
        main = main.add(prog.scalar_expr(alpha, -1.0))
        prog.add_sos(main, None, f"containment[{i}]")
        constraints.append(prog.constraints[-1])
        prog.add_scalar_lower_bound({alpha: 1.0, eps: -1.0})
        alpha_ids.append(alpha)
        s_block_ids.append(s_bid)
    return constraints, alpha_ids, s_block_ids


def mean_decrease_constraint(
    prog: SosProgram,
    beta: Polynomial,
    mu: int,
    zeta: Polynomial,
    lambda_degree: int,
    eps: int,
) -> tuple[SosConstraint, int]:
    """Register the uniform mean-decrease condition for fixed zeta.

    Adds (-beta - mu - Lambda*zeta) SOS with a fresh SOS template Lambda,
    which forces beta <= -mu on {zeta >= 0}; mu >= eps is enforced by the
    caller-supplied margin variable.
    """
    if lambda_degree % 2 != 0:
        raise ValueError("multiplier degree must be even")
    n = prog.dimension
    l_basis = build_basis(n, lambda_degree // 2, prog.basis_cap)
    l_expr, l_bid = prog.sos_template(l_basis)
    main = l_expr.mul_poly(zeta.neg())
    main = main.add(beta.neg())
    main = main.add(prog.scalar_expr(mu, -1.0))
    prog.add_sos(main, None, "decrease")
    constraint = prog.constraints[-1]
    prog.add_scalar_lower_bound({mu: 1.0, eps: -1.0})
    return constraint, l_bid


# -- alternating variant synthesis ------------------------------------------------


@dataclass
class VariantTemplates:
    zeta0: Polynomial | None = None
    zeta_degree: int | None = None
    s_degree: int = 2
    lambda_degree: int = 2


def _synthesis_solver_profile() -> sdpsolve.SolveOptions:
    """Slightly relaxed stopping tolerances for the alternation's inner SDPs.

    Each accepted certificate is re-validated afterwards against the strict
    coefficient-residual and eigenvalue contracts, so the relaxation only
    affects how hard the inner solves push on badly conditioned iterates.
    """
    return sdpsolve.SolveOptions(tol_primal=1e-7, tol_dual=1e-7, tol_gap=1e-6)


@dataclass
class VariantParams:
    lambda_grid: tuple[float, ...] = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)
    eps_target: float = 1e-4
    max_iters: int = 20
    stall_tol: float = 1e-9
    stall_window: int = 3
    literal_eq15_sign: bool = False
    center_box_halfwidth: float = 5.0
    basis_cap: int = DEFAULT_BASIS_CAP
    solver: sdpsolve.SolveOptions = field(default_factory=_synthesis_solver_profile)
    threads: int = 1


@dataclass
class TraceEntry:
    lam: float
    iteration: int
    step: str  # "multiplier" or "template"
    eps: float


@dataclass
class VariantSynthesisResult:
    certificate: VariantCertificate
    trace: list[TraceEntry]
    lam: float
    converged: bool

    def eps_trace(self, lam: float | None = None) -> list[float]:
        lam = self.lam if lam is None else lam
        return [t.eps for t in self.trace if t.lam == lam and t.step == "multiplier"]


def default_initial_zeta(
    target: SemialgebraicSet, box_halfwidth: float = 5.0, grid: int = 41
) -> Polynomial:
    """Target-derived starting template with strict containment slack.

    Starting from the raw constraint (or constraint sum) would make the
    iteration-0 containment tight (alpha = 0), putting the first SDP right
    on the boundary of strict feasibility. Instead the template is shifted
    inward by three quarters of its depth at a grid-searched interior
    center, so {zeta0 <= 0} sits strictly inside the target and iteration 0
    starts with a working margin.
    """
    n = target.dimension
    axes = [np.linspace(-box_halfwidth, box_halfwidth, grid)] * n
    mesh = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    worst = np.full(mesh.shape[0], -np.inf)
    for g_i in target.constraints:
        worst = np.maximum(worst, g_i.eval_batch(mesh))
    center = mesh[int(np.argmin(worst))]
    if len(target.constraints) == 1:
        total = target.constraints[0]
    else:
        total = target.constraints[0]
        for g_i in target.constraints[1:]:
            total = total.add(g_i)
    value = total.evaluate(center)
    if value >= 0.0:
        return total.add(Polynomial.constant(n, -(value + 0.1 * (1.0 + abs(value)))))
    return total.add(Polynomial.constant(n, -0.75 * value))


def _multiplier_step(sys, target, zeta, lam, templates, params):
    """Fix zeta; optimize multipliers and margins, maximizing eps."""
    n = sys.n
    prog = SosProgram(n, params.basis_cap)
    eps = prog.free_scalar("eps")
    mu = prog.free_scalar("mu")
    beta = sdemodel.beta_poly(sys, zeta, lam)
    decrease_con, l_bid = mean_decrease_constraint(
        prog, beta, mu, zeta, templates.lambda_degree, eps
    )
    contain_cons, alpha_ids, s_bids = containment_constraints(
        prog, zeta, target, templates.s_degree, eps, params.literal_eq15_sign
    )
    prog.add_scalar_lower_bound({eps: -1.0}, lam)  # eps <= lam
    result = prog.solve(objective={eps: 1.0}, opts=params.solver)
    if result.status == sdpsolve.SolveStatus.PRIMAL_INFEASIBLE:
        return "infeasible"
    if result.status != sdpsolve.SolveStatus.OPTIMAL:
        return "failed"

    lambda_mult = expand_gram(prog.block_basis(l_bid), result.gram(l_bid))
    s_mults = [expand_gram(prog.block_basis(bid), result.gram(bid)) for bid in s_bids]
    grams = {"decrease": GramBlock(decrease_con.basis, result.gram(decrease_con.gram_block_id))}
    grams["decrease_multiplier"] = GramBlock(prog.block_basis(l_bid), result.gram(l_bid))
    for i, con in enumerate(contain_cons):
        grams[f"containment[{i}]"] = GramBlock(con.basis, result.gram(con.gram_block_id))
        grams[f"containment_multiplier[{i}]"] = GramBlock(
            prog.block_basis(s_bids[i]), result.gram(s_bids[i])
        )
    return {
        "eps": result.scalar_value(eps),
        "mu": result.scalar_value(mu),
        "alpha": [result.scalar_value(a) for a in alpha_ids],
        "lambda_multiplier": lambda_mult,
        "s_multipliers": s_mults,
        "grams": grams,
    }


def _beta_linearized(sys, zeta_expr: AffinePoly, zeta_prev: Polynomial, lam: float) -> AffinePoly:
    """Majorizing linearization of beta around zeta_prev (exact at zeta_prev).

    The gradient-quadratic term -lam/2 * grad' G grad is replaced by its
    tangent at zeta_prev; since G is pointwise PSD the substitute dominates
    beta, so constraints using it remain sound.
    """
    n = sys.n
    gram = sys.diffusion_gram().entries
    grad_expr = [zeta_expr.differentiate(i) for i in range(n)]
    grad_prev = zeta_prev.gradient()

    out = AffinePoly(n)
    for i in range(n):
        out = out.add(grad_expr[i].mul_poly(sys.f[i]))
    for i in range(n):
        for j in range(n):
            hess_ij = grad_expr[i].differentiate(j)
            out = out.add(hess_ij.mul_poly(gram[i][j]).scale(0.5))
            cross = grad_expr[j].mul_poly(grad_prev[i].mul(gram[i][j]))
            out = out.add(cross.scale(-lam))
            corr = grad_prev[i].mul(gram[i][j]).mul(grad_prev[j])
            out = out.add(corr.scale(0.5 * lam))
    return out


def _template_step(sys, target, zeta_prev, lam, mult_data, templates, params, zeta_monos):
    """Fix multipliers; update zeta and margins, maximizing eps."""
    n = sys.n
    prog = SosProgram(n, params.basis_cap)
    eps = prog.free_scalar("eps")
    mu = prog.free_scalar("mu")
    zeta_expr, zeta_vars = prog.poly_template("zeta", zeta_monos)

    beta_hat = _beta_linearized(sys, zeta_expr, zeta_prev, lam)
    lam_mult = mult_data["lambda_multiplier"]
    main = beta_hat.scale(-1.0)
    main = main.add(prog.scalar_expr(mu, -1.0))
    main = main.add(zeta_expr.mul_poly(lam_mult).scale(-1.0))
    prog.add_sos(main, None, "decrease")
    prog.add_scalar_lower_bound({mu: 1.0, eps: -1.0})

    g_sign = 1.0 if params.literal_eq15_sign else -1.0
    alpha_ids = []
    for i, (g_i, s_i) in enumerate(zip(target.constraints, mult_data["s_multipliers"])):
        alpha = prog.free_scalar(f"alpha{i}")
        expr = zeta_expr.mul_poly(s_i)
        expr = expr.add(g_i.scale(g_sign))
        expr = expr.add(prog.scalar_expr(alpha, -1.0))
        prog.add_sos(expr, None, f"containment[{i}]")
        prog.add_scalar_lower_bound({alpha: 1.0, eps: -1.0})
        alpha_ids.append(alpha)
    prog.add_scalar_lower_bound({eps: -1.0}, lam)

    result = prog.solve(objective={eps: 1.0}, opts=params.solver)
    if result.status != sdpsolve.SolveStatus.OPTIMAL:
        return None
    return {
        "eps": result.scalar_value(eps),
        "zeta": result.poly_value(zeta_vars),
    }


def synthesize_variant_alternating(
    sys: SdeSystem,
    target: SemialgebraicSet,
    drift: DriftCertificate | None,
    templates: VariantTemplates | None = None,
    params: VariantParams | None = None,
) -> VariantSynthesisResult:
    """Alternating multiplier/template scheme over a lambda grid.

    lambda multiplies zeta inside beta, so it is swept over `lambda_grid`
    rather than optimized; each grid point runs the alternation and the
    best margin wins (ties broken toward the smallest lambda). Iteration 0
    is a multiplier step at zeta0; the alternation then interleaves
    template and multiplier steps, so a returned certificate is always
    backed by a multiplier step against the true beta.

    Returns a certificate whenever the best margin is positive (converged
    marks whether eps_target was reached). All grid points infeasible at
    iteration 0 raises VariantInitialInfeasibleError; feasible but
    non-positive margins raise VariantStalledError with the trace.
    """
    templates = templates or VariantTemplates()
    params = params or VariantParams()
    if not sys.has_noise:
        raise ValueError("variant synthesis requires a nonzero diffusion")
    zeta0 = templates.zeta0
    if zeta0 is None:
        zeta0 = default_initial_zeta(target, params.center_box_halfwidth)
    zeta_deg = templates.zeta_degree or max(zeta0.degree, 2)
    zeta_monos = list(build_basis(sys.n, zeta_deg, params.basis_cap).monomials)

    trace: list[TraceEntry] = []
    best = None  # (eps, lam, payload dict with zeta)
    any_initial_infeasible = False

    for lam in params.lambda_grid:
        zeta = zeta0
        eps_history: list[float] = []
        for iteration in range(params.max_iters + 1):
            mult = _multiplier_step(sys, target, zeta, lam, templates, params)
            if isinstance(mult, str):
                if iteration == 0:
                    trace.append(TraceEntry(lam, 0, "multiplier", float("nan")))
                    any_initial_infeasible |= mult == "infeasible"
                break
            eps_val = mult["eps"]
            trace.append(TraceEntry(lam, iteration, "multiplier", eps_val))
            eps_history.append(eps_val)
            if best is None or eps_val > best[0] + 1e-15 or (
                abs(eps_val - best[0]) <= 1e-15 and lam < best[1]
            ):
                best = (eps_val, lam, {"zeta": zeta, "mult": mult})
            if eps_val >= params.eps_target:
                break
            if (
                len(eps_history) > params.stall_window
                and eps_history[-1] - eps_history[-1 - params.stall_window]
                < params.stall_tol
            ):
                break
            if iteration == params.max_iters:
                break
            upd = _template_step(
                sys, target, zeta, lam, mult, templates, params, zeta_monos
            )
            if upd is None:
                break
            trace.append(TraceEntry(lam, iteration, "template", upd["eps"]))
            zeta = upd["zeta"]

    if best is None or not math.isfinite(best[0]):
        if any_initial_infeasible:
            raise VariantInitialInfeasibleError(
                "the iteration-0 multiplier step is infeasible on the lambda grid; "
                "the initial template cannot satisfy target containment"
            )
        raise VariantStalledError(trace, float("-inf"))
    eps_best, lam_best, payload = best
    if eps_best <= 0.0:
        raise VariantStalledError(trace, eps_best)

    mult = payload["mult"]
    cert = VariantCertificate(
        zeta=payload["zeta"],
        lam=lam_best,
        mu=mult["mu"],
        alpha=mult["alpha"],
        s_multipliers=mult["s_multipliers"],
        lambda_multiplier=mult["lambda_multiplier"],
        epsilon=eps_best,
        gram_blocks=mult["grams"],
    )
    cert.validate(sys, target, params.literal_eq15_sign)
    return VariantSynthesisResult(
        certificate=cert,
        trace=trace,
        lam=lam_best,
        converged=eps_best >= params.eps_target,
    )
