"""Polynomial SDE models, target sets, and symbolic generator computations.

An SdeSystem is dx = f(x) dt + g(x) dW with polynomial drift vector f and
polynomial diffusion matrix g. The infinitesimal generator acting on a
smooth test function B is

    A B = f' grad(B) + 1/2 tr(g' hess(B) g),

computed here as an exact symbolic composition, and the variant auxiliary
polynomial for U = (1 - exp(-lam * zeta)) / lam is

    beta = f' grad(zeta) + 1/2 tr(G hess(zeta)) - lam/2 grad(zeta)' G grad(zeta),

with G = g g' cached per system. All objects are immutable after
construction and all operations are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .polyalg import DimensionMismatchError, Polynomial, poly_vector_dot

# exp() argument clamp; beyond this the variant saturates
_EXP_CLAMP = 700.0


@dataclass(frozen=True)
class DiffusionGram:
    """The matrix G = g g' of diffusion products, symmetric by construction."""

    entries: tuple[tuple[Polynomial, ...], ...]

    @property
    def dimension(self) -> int:
        return len(self.entries)


class SdeSystem:
    """dx = f(x) dt + g(x) dW with polynomial f (n) and g (n x m)."""

    __slots__ = ("n", "m", "f", "g", "_gram")

    def __init__(self, f: list[Polynomial], g: list[list[Polynomial]]):
        n = len(f)
        if n == 0:
            raise ValueError("drift vector must be non-empty")
        if len(g) != n:
            raise ValueError(f"diffusion must have {n} rows, got {len(g)}")
        m = len(g[0])
        if m == 0 or any(len(row) != m for row in g):
            raise ValueError("diffusion rows must be non-empty and of equal length")
        for p in f:
            if p.dimension != n:
                raise DimensionMismatchError("drift entry dimension != state dimension")
        for row in g:
            for p in row:
                if p.dimension != n:
                    raise DimensionMismatchError("diffusion entry dimension != state dimension")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "f", tuple(f))
        object.__setattr__(self, "g", tuple(tuple(row) for row in g))
        object.__setattr__(self, "_gram", None)

    def __setattr__(self, name, value):
        raise AttributeError("SdeSystem is immutable")

    @property
    def has_noise(self) -> bool:
        return any(not entry.is_zero() for row in self.g for entry in row)

    def diffusion_gram(self) -> DiffusionGram:
        """G = g g', computed once and cached."""
        if self._gram is None:
            n, m = self.n, self.m
            rows = []
            for i in range(n):
                row = []
                for j in range(n):
                    if j < i:
                        row.append(rows[j][i])
                        continue
                    acc = Polynomial.zero(n)
                    for k in range(m):
                        acc = acc.add(self.g[i][k].mul(self.g[j][k]))
                    row.append(acc)
                rows.append(row)
            object.__setattr__(self, "_gram", DiffusionGram(tuple(tuple(r) for r in rows)))
        return self._gram

    def constant_diffusion_matrix(self) -> np.ndarray | None:
        """Return g as a dense float matrix when all entries are constant, else None."""
        mat = np.zeros((self.n, self.m))
        for i in range(self.n):
            for j in range(self.m):
                entry = self.g[i][j]
                if entry.degree > 0:
                    return None
                mat[i, j] = entry.coefficient((0,) * self.n)
        return mat


@dataclass(frozen=True)
class SemialgebraicSet:
    """Target set {x : g_i(x) < 0 for all i} given by polynomial constraints."""

    constraints: tuple[Polynomial, ...]

    def __init__(self, constraints):
        cs = tuple(constraints)
        if not cs:
            raise ValueError("constraint list must be non-empty")
        dim = cs[0].dimension
        if any(c.dimension != dim for c in cs):
            raise DimensionMismatchError("all constraints must share one dimension")
        object.__setattr__(self, "constraints", cs)

    @property
    def dimension(self) -> int:
        return self.constraints[0].dimension

    def contains(self, point) -> bool:
        return all(c.evaluate(point) < 0.0 for c in self.constraints)

    def contains_batch(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        inside = np.ones(pts.shape[0], dtype=bool)
        for c in self.constraints:
            inside &= c.eval_batch(pts) < 0.0
        return inside


def generator_apply(sys: SdeSystem, B: Polynomial) -> Polynomial:
    """Apply the infinitesimal generator to a polynomial test function."""
    if B.dimension != sys.n:
        raise DimensionMismatchError(
            f"test function dimension {B.dimension} != state dimension {sys.n}"
        )
    grad = B.gradient()
    drift_part = poly_vector_dot(list(sys.f), grad)
    hess = B.hessian()
    gram = sys.diffusion_gram().entries
    trace_part = Polynomial.zero(sys.n)
    for i in range(sys.n):
        for j in range(sys.n):
            term = gram[i][j].mul(hess[i][j])
            trace_part = trace_part.add(term)
    return drift_part.add(trace_part.scale(0.5))


def beta_poly(sys: SdeSystem, zeta: Polynomial, lam: float) -> Polynomial:
    """Auxiliary polynomial with A U = exp(-lam*zeta) * beta for the variant U."""
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if zeta.dimension != sys.n:
        raise DimensionMismatchError("zeta dimension != state dimension")
    grad = zeta.gradient()
    gram = sys.diffusion_gram().entries
    drift_part = poly_vector_dot(list(sys.f), grad)
    hess = zeta.hessian()
    trace_part = Polynomial.zero(sys.n)
    quad_part = Polynomial.zero(sys.n)
    for i in range(sys.n):
        for j in range(sys.n):
            trace_part = trace_part.add(gram[i][j].mul(hess[i][j]))
            quad_part = quad_part.add(grad[i].mul(gram[i][j]).mul(grad[j]))
    return drift_part.add(trace_part.scale(0.5)).sub(quad_part.scale(0.5 * lam))


def variant_value(zeta: Polynomial, lam: float, point) -> float:
    """U(x) = (1 - exp(-lam * zeta(x))) / lam, with clamped exponent."""
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    z = zeta.evaluate(point)
    arg = min(max(-lam * z, -_EXP_CLAMP), _EXP_CLAMP)
    return (1.0 - math.exp(arg)) / lam


def variant_value_batch(zeta: Polynomial, lam: float, points: np.ndarray) -> np.ndarray:
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    z = zeta.eval_batch(points)
    arg = np.clip(-lam * z, -_EXP_CLAMP, _EXP_CLAMP)
    return (1.0 - np.exp(arg)) / lam
