"""Sparse multivariate polynomial arithmetic, calculus, and evaluation.

Polynomials live in a fixed ambient dimension n with variables x1..xn.
Terms are kept in canonical form: a map from exponent vectors to nonzero
coefficients, ordered graded-lexicographically wherever an order matters
(printing, deterministic evaluation, constraint assembly). Instances are
immutable; every operation returns a new object, so values are safe to
share between concurrent workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Near-zero coefficients produced by arithmetic are dropped at this
# threshold; exact zeros are always dropped.
COEFF_CLEAN_TOL = 1e-12


class DimensionMismatchError(ValueError):
    """Operands live in different ambient dimensions."""


@dataclass(frozen=True)
class Monomial:
    """A power product x1^e1 * ... * xn^en, stored as the exponent tuple."""

    exponents: tuple[int, ...]

    def __post_init__(self):
        if any(e < 0 for e in self.exponents):
            raise ValueError(f"negative exponent in {self.exponents}")

    @property
    def dimension(self) -> int:
        return len(self.exponents)

    @property
    def degree(self) -> int:
        return sum(self.exponents)

    def grlex_key(self) -> tuple:
        """Sort key for graded-lexicographic order (total degree first)."""
        return (self.degree, self.exponents)

    def mul(self, other: "Monomial") -> "Monomial":
        if len(self.exponents) != len(other.exponents):
            raise DimensionMismatchError("monomial dimensions differ")
        return Monomial(tuple(a + b for a, b in zip(self.exponents, other.exponents)))

    def __str__(self) -> str:
        if self.degree == 0:
            return "1"
        parts = []
        for i, e in enumerate(self.exponents):
            if e == 1:
                parts.append(f"x{i + 1}")
            elif e > 1:
                parts.append(f"x{i + 1}^{e}")
        return "*".join(parts)


class Polynomial:
    """A sparse real polynomial in a fixed number of variables.

    The term map never stores exactly-zero coefficients, and equality is
    equality of the canonical term maps. The ambient dimension is fixed at
    construction; mixing dimensions raises DimensionMismatchError rather
    than broadcasting.
    """

    __slots__ = ("dimension", "_terms", "_batch_cache")

    def __init__(self, dimension: int, terms: dict[Monomial, float] | None = None):
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        object.__setattr__(self, "dimension", dimension)
        clean: dict[Monomial, float] = {}
        for mono, coeff in (terms or {}).items():
            if mono.dimension != dimension:
                raise DimensionMismatchError(
                    f"monomial dimension {mono.dimension} != polynomial dimension {dimension}"
                )
            c = float(coeff)
            if c != 0.0:
                clean[mono] = clean.get(mono, 0.0) + c
                if clean[mono] == 0.0:
                    del clean[mono]
        object.__setattr__(self, "_terms", clean)
        object.__setattr__(self, "_batch_cache", None)

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, dimension: int) -> "Polynomial":
        return cls(dimension)

    @classmethod
    def constant(cls, dimension: int, value: float) -> "Polynomial":
        return cls(dimension, {Monomial((0,) * dimension): float(value)})

    @classmethod
    def variable(cls, dimension: int, index: int) -> "Polynomial":
        if not 0 <= index < dimension:
            raise IndexError(f"variable index {index} out of range for dimension {dimension}")
        exps = [0] * dimension
        exps[index] = 1
        return cls(dimension, {Monomial(tuple(exps)): 1.0})

    @classmethod
    def from_terms(cls, dimension: int, terms: list[tuple[float, tuple[int, ...]]]) -> "Polynomial":
        """Build from (coefficient, exponent-tuple) pairs; repeats are summed."""
        acc: dict[Monomial, float] = {}
        for coeff, exps in terms:
            mono = Monomial(tuple(int(e) for e in exps))
            acc[mono] = acc.get(mono, 0.0) + float(coeff)
        return cls(dimension, acc)

    # -- inspection --------------------------------------------------------

    @property
    def terms(self) -> dict[Monomial, float]:
        return dict(self._terms)

    def sorted_terms(self) -> list[tuple[Monomial, float]]:
        """Terms in ascending graded-lex order (deterministic)."""
        return sorted(self._terms.items(), key=lambda kv: kv[0].grlex_key())

    @property
    def degree(self) -> int:
        """Total degree; the zero polynomial reports 0."""
        if not self._terms:
            return 0
        return max(m.degree for m in self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def coefficient(self, exps: tuple[int, ...]) -> float:
        return self._terms.get(Monomial(tuple(exps)), 0.0)

    def max_abs_coeff(self) -> float:
        if not self._terms:
            return 0.0
        return max(abs(c) for c in self._terms.values())

    # -- arithmetic --------------------------------------------------------

    def _require_same_dim(self, other: "Polynomial"):
        if self.dimension != other.dimension:
            raise DimensionMismatchError(
                f"dimension mismatch: {self.dimension} vs {other.dimension}"
            )

    @staticmethod
    def _cleaned(dimension: int, acc: dict[Monomial, float]) -> "Polynomial":
        return Polynomial(
            dimension, {m: c for m, c in acc.items() if abs(c) > COEFF_CLEAN_TOL}
        )

    def add(self, other: "Polynomial") -> "Polynomial":
        self._require_same_dim(other)
        acc = dict(self._terms)
        for mono, coeff in other._terms.items():
            acc[mono] = acc.get(mono, 0.0) + coeff
        return self._cleaned(self.dimension, acc)

    def sub(self, other: "Polynomial") -> "Polynomial":
        return self.add(other.scale(-1.0))

    def scale(self, factor: float) -> "Polynomial":
        f = float(factor)
        acc = {m: c * f for m, c in self._terms.items()}
        return self._cleaned(self.dimension, acc)

    def neg(self) -> "Polynomial":
        return self.scale(-1.0)

    def mul(self, other: "Polynomial") -> "Polynomial":
        self._require_same_dim(other)
        acc: dict[Monomial, float] = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                prod = m1.mul(m2)
                acc[prod] = acc.get(prod, 0.0) + c1 * c2
        return self._cleaned(self.dimension, acc)

    def __add__(self, other):
        if isinstance(other, Polynomial):
            return self.add(other)
        if isinstance(other, (int, float)):
            return self.add(Polynomial.constant(self.dimension, other))
        return NotImplemented

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Polynomial):
            return self.sub(other)
        if isinstance(other, (int, float)):
            return self.add(Polynomial.constant(self.dimension, -other))
        return NotImplemented

    def __rsub__(self, other):
        if isinstance(other, (int, float)):
            return self.neg().add(Polynomial.constant(self.dimension, other))
        return NotImplemented

    def __mul__(self, other):
        if isinstance(other, Polynomial):
            return self.mul(other)
        if isinstance(other, (int, float)):
            return self.scale(other)
        return NotImplemented

    __rmul__ = __mul__

    def __neg__(self):
        return self.neg()

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.dimension == other.dimension and self._terms == other._terms

    __hash__ = None

    def equals_within(self, other: "Polynomial", tol: float) -> bool:
        """Coefficient-wise comparison with absolute tolerance."""
        self._require_same_dim(other)
        keys = set(self._terms) | set(other._terms)
        return all(
            abs(self._terms.get(k, 0.0) - other._terms.get(k, 0.0)) <= tol for k in keys
        )

    # -- calculus ----------------------------------------------------------

    def differentiate(self, var_index: int) -> "Polynomial":
        """Formal partial derivative with respect to x_{var_index+1}."""
        if not 0 <= var_index < self.dimension:
            raise IndexError(
                f"variable index {var_index} out of range for dimension {self.dimension}"
            )
        acc: dict[Monomial, float] = {}
        for mono, coeff in self._terms.items():
            e = mono.exponents[var_index]
            if e == 0:
                continue
            exps = list(mono.exponents)
            exps[var_index] = e - 1
            new = Monomial(tuple(exps))
            acc[new] = acc.get(new, 0.0) + coeff * e
        return self._cleaned(self.dimension, acc)

    def gradient(self) -> list["Polynomial"]:
        return [self.differentiate(i) for i in range(self.dimension)]

    def hessian(self) -> list[list["Polynomial"]]:
        """Matrix of second partials; symmetric entry-wise by construction."""
        n = self.dimension
        grad = self.gradient()
        hess = [[None] * n for _ in range(n)]
        for i in range(n):
            for j in range(i, n):
                entry = grad[i].differentiate(j)
                hess[i][j] = entry
                hess[j][i] = entry
        return hess

    # -- evaluation --------------------------------------------------------

    def evaluate(self, point) -> float:
        """Value at a point; terms are summed in graded-lex order."""
        pt = [float(v) for v in point]
        if len(pt) != self.dimension:
            raise DimensionMismatchError(
                f"point length {len(pt)} != dimension {self.dimension}"
            )
        total = 0.0
        for mono, coeff in self.sorted_terms():
            val = coeff
            for x, e in zip(pt, mono.exponents):
                if e:
                    val *= x**e
            total += val
        return total

    def _batch_arrays(self):
        cache = self._batch_cache
        if cache is None:
            ordered = self.sorted_terms()
            exps = np.array(
                [m.exponents for m, _ in ordered], dtype=np.int64
            ).reshape(len(ordered), self.dimension)
            coeffs = np.array([c for _, c in ordered], dtype=np.float64)
            cache = (exps, coeffs)
            object.__setattr__(self, "_batch_cache", cache)
        return cache

    def eval_batch(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at many points at once; points has shape (k, n)."""
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != self.dimension:
            raise DimensionMismatchError(
                f"points must have shape (k, {self.dimension}), got {pts.shape}"
            )
        exps, coeffs = self._batch_arrays()
        if len(coeffs) == 0:
            return np.zeros(pts.shape[0])
        if len(coeffs) == 1 and exps[0].sum() == 0:
            return np.full(pts.shape[0], coeffs[0])
        powers = pts[:, None, :] ** exps[None, :, :]
        return powers.prod(axis=2) @ coeffs

    # -- rendering ---------------------------------------------------------

    def __str__(self) -> str:
        """Canonical rendering: descending graded-lex, explicit coefficients."""
        if not self._terms:
            return "0"
        parts = []
        for mono, coeff in reversed(self.sorted_terms()):
            mag = abs(coeff)
            mono_str = str(mono)
            if mono.degree == 0:
                body = f"{mag:.12g}"
            elif mag == 1.0:
                body = mono_str
            else:
                body = f"{mag:.12g}*{mono_str}"
            if not parts:
                parts.append(body if coeff > 0 else f"-{body}")
            else:
                parts.append(f"+ {body}" if coeff > 0 else f"- {body}")
        return " ".join(parts)

    def __repr__(self) -> str:
        return f"Polynomial({self.dimension}, {self})"


def poly_vector_dot(fs: list[Polynomial], gs: list[Polynomial]) -> Polynomial:
    """Dot product of two equal-length polynomial vectors."""
    if len(fs) != len(gs) or not fs:
        raise ValueError("vectors must be non-empty and of equal length")
    total = Polynomial.zero(fs[0].dimension)
    for f, g in zip(fs, gs):
        total = total.add(f.mul(g))
    return total
