"""Truncated multivariate Taylor arithmetic.

A `Jet` of order k in d variables stores the Taylor coefficients
∂^α f / α! for every multi-index |α| ≤ k. Multi-indices are kept in graded
lexicographic order: by total degree, then lexicographically with the
exponent of the first variable largest first, e.g. for d=2, k=2:

    (0,0), (1,0), (0,1), (2,0), (1,1), (0,2)

Since the ordering is graded, the coefficients of a lower-order truncation are
a prefix of the coefficient vector.
"""

import functools
import logging
import math
import numbers
import typing as T
from fractions import Fraction

import numpy as np

from library.errors import DomainError, JetOrderError

logger = logging.getLogger(__name__)

MAX_ORDER = 4

Scalar = T.Union[float, int, np.floating]


# ============== multi-index bookkeeping ==============


def _compositions(degree: int, dim: int) -> list[tuple[int, ...]]:
    if dim == 0:
        return [()] if degree == 0 else []
    if dim == 1:
        return [(degree,)]
    out = []
    for first in range(degree, -1, -1):
        for rest in _compositions(degree - first, dim - 1):
            out.append((first,) + rest)
    return out


@functools.lru_cache(maxsize=None)
def multi_indices(dim: int, order: int) -> tuple[tuple[int, ...], ...]:
    """All multi-indices of degree <= order in graded lexicographic order."""
    indices: list[tuple[int, ...]] = []
    for degree in range(order + 1):
        indices.extend(_compositions(degree, dim))
    return tuple(indices)


@functools.lru_cache(maxsize=None)
def _index_map(dim: int, order: int) -> dict[tuple[int, ...], int]:
    return {alpha: i for i, alpha in enumerate(multi_indices(dim, order))}


def n_coefficients(dim: int, order: int) -> int:
    return math.comb(dim + order, order)


@functools.lru_cache(maxsize=None)
def _product_table(dim: int, order: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    indices = multi_indices(dim, order)
    lookup = _index_map(dim, order)
    degrees = [sum(alpha) for alpha in indices]
    left, right, target = [], [], []
    for i, a in enumerate(indices):
        for j, b in enumerate(indices):
            if degrees[i] + degrees[j] > order:
                continue
            left.append(i)
            right.append(j)
            target.append(lookup[tuple(x + y for x, y in zip(a, b))])
    return np.array(left), np.array(right), np.array(target)


@functools.lru_cache(maxsize=None)
def _partial_table(dim: int, order: int, var: int) -> tuple[np.ndarray, np.ndarray]:
    lookup = _index_map(dim, order)
    source, factor = [], []
    for beta in multi_indices(dim, order - 1):
        shifted = list(beta)
        shifted[var] += 1
        source.append(lookup[tuple(shifted)])
        factor.append(beta[var] + 1)
    return np.array(source, dtype=int), np.array(factor, dtype=float)


@functools.lru_cache(maxsize=None)
def _restrict_table(dim: int, order: int, keep: tuple[int, ...]) -> np.ndarray:
    lookup = _index_map(dim, order)
    source = []
    for gamma in multi_indices(len(keep), order):
        alpha = [0] * dim
        for j, var in enumerate(keep):
            alpha[var] = gamma[j]
        source.append(lookup[tuple(alpha)])
    return np.array(source, dtype=int)


def check_order(order: int) -> None:
    if not isinstance(order, numbers.Integral) or not 0 <= order <= MAX_ORDER:
        msg = f"Jet order must be an integer in 0..{MAX_ORDER}, got {order!r}"
        raise JetOrderError(msg)


# ============== univariate Taylor series of elementary functions ==============


def _exp_series(c: float, order: int) -> list[float]:
    value = math.exp(c)
    return [value / math.factorial(k) for k in range(order + 1)]


def _log_series(c: float, order: int) -> list[float]:
    if c <= 0.0:
        raise DomainError(f"log of non-positive value {c}")
    return [math.log(c)] + [(-1) ** (k + 1) / (k * c**k) for k in range(1, order + 1)]


def _sin_series(c: float, order: int) -> list[float]:
    cycle = (math.sin(c), math.cos(c), -math.sin(c), -math.cos(c))
    return [cycle[k % 4] / math.factorial(k) for k in range(order + 1)]


def _cos_series(c: float, order: int) -> list[float]:
    cycle = (math.cos(c), -math.sin(c), -math.cos(c), math.sin(c))
    return [cycle[k % 4] / math.factorial(k) for k in range(order + 1)]


def _power_series(c: float, exponent: Fraction, order: int) -> list[float]:
    p = float(exponent)
    coeffs = []
    binomial = 1.0
    for k in range(order + 1):
        coeffs.append(binomial * c ** (p - k))
        binomial *= (p - k) / (k + 1)
    return coeffs


def _atan_series(c: float, order: int) -> list[float]:
    # integrate the series of 1/(1+x^2)
    if order == 0:
        return [math.atan(c)]
    u = Jet.variable(1, order - 1, 0, c)
    derivative = (1.0 + u * u).reciprocal()
    return [math.atan(c)] + [
        float(d) / (j + 1) for j, d in enumerate(derivative.coeffs)
    ]


# ============== the jet ==============


class Jet:
    """Truncated Taylor expansion of a scalar at a point."""

    __slots__ = ("dim", "order", "coeffs")

    def __init__(self, dim: int, order: int, coeffs: T.Sequence[float] | np.ndarray):
        check_order(order)
        array = np.array(coeffs, dtype=float)
        expected = n_coefficients(dim, order)
        if array.shape != (expected,):
            msg = f"Jet with dim={dim}, order={order} needs {expected} coefficients, got shape {array.shape}"
            raise ValueError(msg)
        array.flags.writeable = False
        self.dim = dim
        self.order = order
        self.coeffs = array

    @classmethod
    def constant(cls, dim: int, order: int, value: float) -> "Jet":
        coeffs = np.zeros(n_coefficients(dim, order))
        coeffs[0] = value
        return cls(dim, order, coeffs)

    @classmethod
    def variable(cls, dim: int, order: int, index: int, value: float) -> "Jet":
        coeffs = np.zeros(n_coefficients(dim, order))
        coeffs[0] = value
        if order >= 1:
            coeffs[1 + index] = 1.0
        return cls(dim, order, coeffs)

    @property
    def value(self) -> float:
        return float(self.coeffs[0])

    def __repr__(self) -> str:
        return f"Jet(dim={self.dim}, order={self.order}, coeffs={self.coeffs.tolist()})"

    # ---- coercion ----

    def _same_shape(self, other: "Jet") -> None:
        if other.dim != self.dim or other.order != self.order:
            msg = f"Incompatible jets: (dim={self.dim}, order={self.order}) vs (dim={other.dim}, order={other.order})"
            raise ValueError(msg)

    def _with(self, coeffs: np.ndarray) -> "Jet":
        return Jet(self.dim, self.order, coeffs)

    # ---- arithmetic ----

    def __add__(self, other: "Jet | Scalar") -> "Jet":
        if isinstance(other, Jet):
            self._same_shape(other)
            return self._with(self.coeffs + other.coeffs)
        if isinstance(other, numbers.Real):
            coeffs = self.coeffs.copy()
            coeffs[0] += float(other)
            return self._with(coeffs)
        return NotImplemented

    __radd__ = __add__

    def __neg__(self) -> "Jet":
        return self._with(-self.coeffs)

    def __sub__(self, other: "Jet | Scalar") -> "Jet":
        if isinstance(other, (Jet, numbers.Real)):
            return self + (-other)
        return NotImplemented

    def __rsub__(self, other: Scalar) -> "Jet":
        if isinstance(other, numbers.Real):
            return (-self) + other
        return NotImplemented

    def __mul__(self, other: "Jet | Scalar") -> "Jet":
        if isinstance(other, Jet):
            self._same_shape(other)
            left, right, target = _product_table(self.dim, self.order)
            coeffs = np.bincount(
                target,
                weights=self.coeffs[left] * other.coeffs[right],
                minlength=len(self.coeffs),
            )
            return self._with(coeffs)
        if isinstance(other, numbers.Real):
            return self._with(self.coeffs * float(other))
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other: "Jet | Scalar") -> "Jet":
        if isinstance(other, Jet):
            return self * other.reciprocal()
        if isinstance(other, numbers.Real):
            if other == 0:
                raise DomainError("division by zero")
            return self._with(self.coeffs / float(other))
        return NotImplemented

    def __rtruediv__(self, other: Scalar) -> "Jet":
        if isinstance(other, numbers.Real):
            return self.reciprocal() * float(other)
        return NotImplemented

    def __pow__(self, exponent: int | Fraction) -> "Jet":
        if isinstance(exponent, (numbers.Integral, Fraction)):
            return self.power(Fraction(exponent))
        return NotImplemented

    # ---- composition with univariate functions ----

    def compose_univariate(self, taylor: T.Sequence[float]) -> "Jet":
        """Evaluate sum_k taylor[k] * (self - self.value)^k by Horner's rule."""
        if len(taylor) < self.order + 1:
            raise ValueError("Not enough Taylor coefficients for the jet order")
        delta_coeffs = self.coeffs.copy()
        delta_coeffs[0] = 0.0
        delta = self._with(delta_coeffs)
        result = Jet.constant(self.dim, self.order, taylor[self.order])
        for k in range(self.order - 1, -1, -1):
            result = result * delta + taylor[k]
        return result

    def reciprocal(self) -> "Jet":
        c = self.value
        if c == 0.0:
            raise DomainError("division by zero")
        return self.compose_univariate(
            [(-1) ** k / c ** (k + 1) for k in range(self.order + 1)]
        )

    def power(self, exponent: Fraction) -> "Jet":
        if exponent.denominator == 1:
            n = exponent.numerator
            if n == 0:
                return Jet.constant(self.dim, self.order, 1.0)
            base = self if n > 0 else self.reciprocal()
            result = base
            for _ in range(abs(n) - 1):
                result = result * base
            return result
        c = self.value
        if c < 0.0:
            raise DomainError(f"non-integer power {exponent} of negative value {c}")
        if c == 0.0:
            if self.order == 0 and exponent > 0:
                return Jet.constant(self.dim, self.order, 0.0)
            raise DomainError(f"power {exponent} is not differentiable at 0")
        return self.compose_univariate(_power_series(c, exponent, self.order))

    def sqrt(self) -> "Jet":
        return self.power(Fraction(1, 2))

    def exp(self) -> "Jet":
        return self.compose_univariate(_exp_series(self.value, self.order))

    def log(self) -> "Jet":
        return self.compose_univariate(_log_series(self.value, self.order))

    def sin(self) -> "Jet":
        return self.compose_univariate(_sin_series(self.value, self.order))

    def cos(self) -> "Jet":
        return self.compose_univariate(_cos_series(self.value, self.order))

    def tan(self) -> "Jet":
        return self.sin() / self.cos()

    def atan(self) -> "Jet":
        return self.compose_univariate(_atan_series(self.value, self.order))

    # ---- differentiation and reshaping ----

    def partial(self, var: int) -> "Jet":
        """Jet of ∂f/∂x_var, one order lower."""
        if self.order == 0:
            raise JetOrderError("Cannot differentiate an order-0 jet")
        source, factor = _partial_table(self.dim, self.order, var)
        return Jet(self.dim, self.order - 1, self.coeffs[source] * factor)

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise JetOrderError(f"Cannot raise jet order from {self.order} to {order}")
        return Jet(self.dim, order, self.coeffs[: n_coefficients(self.dim, order)])

    def restrict(self, keep: T.Sequence[int]) -> "Jet":
        """Jet of the restriction to the variables `keep` (others held fixed)."""
        source = _restrict_table(self.dim, self.order, tuple(keep))
        return Jet(len(keep), self.order, self.coeffs[source])

    def compose(self, inner: T.Sequence["Jet"]) -> "Jet":
        """Jet of f(u_1(y), ..., u_m(y)) where self is the jet of f at u(y0).

        The constant terms of `inner` are assumed to be the expansion point of
        self; only their non-constant parts enter.
        """
        if len(inner) != self.dim:
            raise ValueError(f"Expected {self.dim} inner jets, got {len(inner)}")
        dim, order = inner[0].dim, inner[0].order
        if order > self.order:
            raise JetOrderError("Outer jet order too low for composition")
        powers = []
        for u in inner:
            delta_coeffs = u.coeffs.copy()
            delta_coeffs[0] = 0.0
            delta = Jet(dim, order, delta_coeffs)
            row = [Jet.constant(dim, order, 1.0)]
            for _ in range(order):
                row.append(row[-1] * delta)
            powers.append(row)
        result = Jet.constant(dim, order, 0.0)
        for idx, beta in enumerate(multi_indices(self.dim, order)):
            c = self.coeffs[idx]
            if c == 0.0:
                continue
            term = Jet.constant(dim, order, c)
            for var, exponent in enumerate(beta):
                if exponent:
                    term = term * powers[var][exponent]
            result = result + term
        return result

    # ---- read-out ----

    def derivative(self, alpha: T.Sequence[int]) -> float:
        """∂^α f at the expansion point."""
        alpha = tuple(alpha)
        coeff = self.coeffs[_index_map(self.dim, self.order)[alpha]]
        return float(coeff * math.prod(math.factorial(a) for a in alpha))

    def gradient(self) -> np.ndarray:
        if self.order < 1:
            raise JetOrderError("Gradient needs an order >= 1 jet")
        return np.array(self.coeffs[1 : self.dim + 1])

    def hessian(self) -> np.ndarray:
        if self.order < 2:
            raise JetOrderError("Hessian needs an order >= 2 jet")
        lookup = _index_map(self.dim, self.order)
        out = np.empty((self.dim, self.dim))
        for i in range(self.dim):
            for j in range(i, self.dim):
                alpha = [0] * self.dim
                alpha[i] += 1
                alpha[j] += 1
                c = self.coeffs[lookup[tuple(alpha)]]
                out[i, j] = out[j, i] = 2.0 * c if i == j else c
        return out


JetLike = T.Union[Jet, float]


def lift(value: JetLike, dim: int, order: int) -> Jet:
    if isinstance(value, Jet):
        return value
    return Jet.constant(dim, order, float(value))


def jet_solve(matrix: T.Sequence[T.Sequence[Jet]], rhs: T.Sequence[Jet]) -> list[Jet]:
    """Solve A x = b for jet-valued A and b by Gaussian elimination.

    Pivoting uses the magnitude of the constant terms, so the solve fails only
    if A is singular at the expansion point.
    """
    n = len(rhs)
    a = [list(row) for row in matrix]
    b = list(rhs)
    for col in range(n):
        pivot = max(range(col, n), key=lambda r: abs(a[r][col].value))
        if a[pivot][col].value == 0.0:
            raise DomainError("singular jet matrix")
        a[col], a[pivot] = a[pivot], a[col]
        b[col], b[pivot] = b[pivot], b[col]
        inv = a[col][col].reciprocal()
        for row in range(col + 1, n):
            factor = a[row][col] * inv
            for k in range(col, n):
                a[row][k] = a[row][k] - factor * a[col][k]
            b[row] = b[row] - factor * b[col]
    x: list[Jet] = [b[0]] * n
    for row in range(n - 1, -1, -1):
        acc = b[row]
        for k in range(row + 1, n):
            acc = acc - a[row][k] * x[k]
        x[row] = acc / a[row][row]
    return x
