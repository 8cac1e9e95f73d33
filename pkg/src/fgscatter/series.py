"""Truncated power series in x with an optional single log x block.

A :class:`PowerLogSeries` represents

    sum_j c_j x^(alpha + j) + sum_j d_j x^(alpha + j) log x,   j = 0..N,

known modulo O(x^(alpha + N + 1)).  Coefficients live in a pluggable
:class:`Algebra` (complex scalars, spectral scalars, grid fields, grid
symmetric 2-tensors stored as pointwise matrices).
"""
from __future__ import annotations

import cmath
import numbers
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

ZERO_TOL = 1e-11
_ALIGN_TOL = 1e-12


class SeriesError(ValueError):
    """Raised for structurally invalid series operations."""


# --------------------------------------------------------------------------
# coefficient algebras
# --------------------------------------------------------------------------

class Algebra:
    """Coefficient ring contract used by the series operations."""

    name = "abstract"

    def add(self, a, b):
        return a + b

    def sub(self, a, b):
        return a - b

    def scale(self, c, a):
        return c * a

    def mul(self, a, b):
        raise NotImplementedError

    def inv(self, a):
        raise NotImplementedError

    def zero_like(self, a):
        return 0 * a

    def one_like(self, a):
        raise NotImplementedError

    def norm(self, a) -> float:
        raise NotImplementedError

    def exp(self, a):
        raise SeriesError(f"exp is not defined in the {self.name} algebra")

    def is_exact_zero(self, a) -> bool:
        if isinstance(a, np.ndarray):
            return not a.any()
        return a == 0

    def __repr__(self):
        return f"<{self.name} algebra>"


class ScalarAlgebra(Algebra):
    name = "scalar"

    def mul(self, a, b):
        return a * b

    def inv(self, a):
        if a == 0:
            raise SeriesError("leading coefficient is not invertible")
        return 1.0 / a

    def zero_like(self, a):
        return 0.0 * a

    def one_like(self, a):
        return 1.0 + 0.0 * a

    def norm(self, a):
        return float(abs(a))

    def exp(self, a):
        return cmath.exp(a) if isinstance(a, complex) else float(np.exp(a))


class FieldAlgebra(Algebra):
    """Pointwise products of grid fields (numpy arrays of the grid shape)."""

    name = "field"

    def mul(self, a, b):
        return a * b

    def inv(self, a):
        if np.min(np.abs(a)) == 0.0:
            raise SeriesError("leading field vanishes somewhere on the grid")
        return 1.0 / a

    def zero_like(self, a):
        return np.zeros_like(a)

    def one_like(self, a):
        return np.ones_like(a)

    def norm(self, a):
        return float(np.max(np.abs(a))) if np.size(a) else 0.0

    def exp(self, a):
        return np.exp(a)


class TensorAlgebra(Algebra):
    """Pointwise matrix algebra; arrays of shape ``grid + (m, m)``."""

    name = "tensor"

    def mul(self, a, b):
        return a @ b

    def inv(self, a):
        try:
            b = np.linalg.inv(a)
        except np.linalg.LinAlgError:
            raise SeriesError("leading tensor coefficient is singular") from None
        # Frobenius condition estimate (bounds the 2-norm one from above)
        cond = np.linalg.norm(a, axis=(-2, -1)) * np.linalg.norm(b, axis=(-2, -1))
        if not np.all(np.isfinite(cond)) or np.max(cond) > 1e12:
            raise SeriesError("leading tensor coefficient is singular")
        return b

    def zero_like(self, a):
        return np.zeros_like(a)

    def one_like(self, a):
        m = a.shape[-1]
        return np.broadcast_to(np.eye(m, dtype=a.dtype), a.shape).copy()

    def norm(self, a):
        return float(np.max(np.abs(a))) if np.size(a) else 0.0


class SpectralAlgebra(Algebra):
    """Polynomials in an eigenvalue mu (see :class:`SpectralScalar`)."""

    name = "spectral"

    def mul(self, a, b):
        return _as_spectral(a) * _as_spectral(b)

    def inv(self, a):
        a = _as_spectral(a)
        if a.degree > 0 or a.coeffs[0] == 0:
            raise SeriesError("only nonzero constant spectral scalars are invertible")
        return SpectralScalar([1.0 / a.coeffs[0]])

    def zero_like(self, a):
        return SpectralScalar([0.0])

    def one_like(self, a):
        return SpectralScalar([1.0])

    def norm(self, a):
        return float(np.max(np.abs(_as_spectral(a).coeffs)))


class SpectralScalar:
    """Polynomial in the Laplace eigenvalue mu of an Einstein model.

    Acting on an eigenfunction phi with ``Delta phi = mu phi`` every natural
    operator becomes multiplication by such a polynomial.
    """

    max_degree = 16
    __array_priority__ = 1000

    def __init__(self, coeffs):
        c = np.atleast_1d(np.asarray(coeffs, dtype=complex))
        # trim exact trailing zeros, keep at least one coefficient
        last = len(c)
        while last > 1 and c[last - 1] == 0:
            last -= 1
        c = c[:last]
        if len(c) - 1 > self.max_degree:
            raise SeriesError(f"spectral degree {len(c) - 1} exceeds {self.max_degree}")
        self.coeffs = c

    @classmethod
    def mu(cls):
        return cls([0.0, 1.0])

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def __call__(self, mu):
        return np.polynomial.polynomial.polyval(mu, self.coeffs)

    def _binary(self, other, sign):
        o = _as_spectral(other)
        m = max(len(self.coeffs), len(o.coeffs))
        a = np.zeros(m, complex)
        b = np.zeros(m, complex)
        a[: len(self.coeffs)] = self.coeffs
        b[: len(o.coeffs)] = o.coeffs
        return SpectralScalar(a + sign * b)

    def __add__(self, other):
        return self._binary(other, 1)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, -1)

    def __rsub__(self, other):
        return _as_spectral(other) - self

    def __neg__(self):
        return SpectralScalar(-self.coeffs)

    def __mul__(self, other):
        if isinstance(other, SpectralScalar):
            return SpectralScalar(np.convolve(self.coeffs, other.coeffs))
        if isinstance(other, numbers.Number):
            return SpectralScalar(self.coeffs * other)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, numbers.Number):
            return SpectralScalar(self.coeffs / other)
        return NotImplemented

    def __eq__(self, other):
        o = _as_spectral(other)
        return len(o.coeffs) == len(self.coeffs) and bool(np.all(o.coeffs == self.coeffs))

    def __repr__(self):
        terms = " + ".join(f"({c:.6g})mu^{i}" for i, c in enumerate(self.coeffs))
        return f"SpectralScalar({terms})"


def _as_spectral(a):
    if isinstance(a, SpectralScalar):
        return a
    if isinstance(a, numbers.Number):
        return SpectralScalar([a])
    raise SeriesError(f"cannot use {type(a).__name__} as a spectral scalar")


SCALAR = ScalarAlgebra()
FIELD = FieldAlgebra()
TENSOR = TensorAlgebra()
SPECTRAL = SpectralAlgebra()


# --------------------------------------------------------------------------
# the series type
# --------------------------------------------------------------------------

def _integer_offset(delta) -> int:
    k = round(complex(delta).real)
    if abs(complex(delta) - k) > _ALIGN_TOL:
        raise SeriesError(f"base exponents differ by a non-integer amount {delta}")
    return int(k)


def _clean_alpha(alpha):
    alpha = complex(alpha)
    if alpha.imag == 0.0:
        r = alpha.real
        return int(r) if float(r).is_integer() else r
    return alpha


@dataclass(frozen=True, eq=False)
class PowerLogSeries:
    algebra: Algebra
    alpha: Any
    plain: tuple
    log: tuple | None = None

    def __post_init__(self):
        if len(self.plain) == 0:
            raise SeriesError("a series needs at least one coefficient")
        if self.log is not None and len(self.log) != len(self.plain):
            raise SeriesError("plain and log coefficient blocks differ in length")
        object.__setattr__(self, "alpha", _clean_alpha(self.alpha))

    # construction -------------------------------------------------------
    @classmethod
    def from_coeffs(cls, algebra, coeffs: Sequence, alpha=0, log: Sequence | None = None):
        return cls(algebra, alpha, tuple(coeffs), None if log is None else tuple(log))

    @classmethod
    def constant(cls, algebra, value, order: int, alpha=0):
        z = algebra.zero_like(value)
        return cls(algebra, alpha, (value,) + (z,) * order)

    # accessors ------------------------------------------------------------
    @property
    def order(self) -> int:
        """Truncation order N."""
        return len(self.plain) - 1

    truncation_order = order

    @property
    def has_log(self) -> bool:
        return self.log is not None

    @property
    def plain_coeffs(self) -> list:
        return list(self.plain)

    @property
    def log_coeffs(self) -> list:
        if self.log is None:
            return [self.algebra.zero_like(c) for c in self.plain]
        return list(self.log)

    def _index(self, power) -> int:
        j = _integer_offset(complex(power) - complex(self.alpha))
        if j < 0:
            return -1
        if j > self.order:
            raise SeriesError(
                f"coefficient of x^{power} lies beyond truncation order {self.order}")
        return j

    def coeff(self, power):
        """Plain coefficient of ``x^power`` (zero below the base exponent)."""
        j = self._index(power)
        if j < 0:
            return self.algebra.zero_like(self.plain[0])
        return self.plain[j]

    def log_coeff(self, power):
        j = self._index(power)
        if j < 0 or self.log is None:
            return self.algebra.zero_like(self.plain[0])
        return self.log[j]

    def __len__(self):
        return len(self.plain)

    # structural helpers ---------------------------------------------------
    def truncate(self, order: int) -> "PowerLogSeries":
        if order > self.order:
            raise SeriesError("truncation order is never extended")
        log = None if self.log is None else self.log[: order + 1]
        return PowerLogSeries(self.algebra, self.alpha, self.plain[: order + 1], log)

    def shift(self, m) -> "PowerLogSeries":
        """Multiply by x^m."""
        return PowerLogSeries(self.algebra, complex(self.alpha) + m, self.plain, self.log)

    def map(self, fn: Callable, algebra: Algebra | None = None) -> "PowerLogSeries":
        """Apply a linear map to every coefficient (e.g. a spatial derivative)."""
        log = None if self.log is None else tuple(fn(c) for c in self.log)
        return PowerLogSeries(algebra or self.algebra, self.alpha,
                              tuple(fn(c) for c in self.plain), log)

    def drop_log(self) -> "PowerLogSeries":
        return PowerLogSeries(self.algebra, self.alpha, self.plain, None)

    def is_zero(self, tol: float = ZERO_TOL) -> bool:
        norms = [self.algebra.norm(c) for c in self.plain + (self.log or ())]
        scale = max(max(norms), 1.0)
        return max(norms) <= tol * scale

    def max_norms(self) -> list[float]:
        return [self.algebra.norm(c) for c in self.plain]

    # arithmetic -------------------------------------------------------------
    def _aligned(self, other: "PowerLogSeries"):
        if other.algebra is not self.algebra:
            raise SeriesError(f"mismatched algebras {self.algebra} and {other.algebra}")
        shift = _integer_offset(complex(other.alpha) - complex(self.alpha))
        lo = self if shift >= 0 else other
        hi = other if shift >= 0 else self
        d = abs(shift)
        top = min(lo.order, hi.order + d)
        z = self.algebra.zero_like(lo.plain[0])

        def pad(s, offset, block):
            out = [z] * (top + 1)
            if block is None:
                return out
            for j, c in enumerate(block):
                if 0 <= j + offset <= top:
                    out[j + offset] = c
            return out

        a_pl, b_pl = pad(lo, 0, lo.plain), pad(hi, d, hi.plain)
        a_lg, b_lg = pad(lo, 0, lo.log), pad(hi, d, hi.log)
        with_log = lo.log is not None or hi.log is not None
        return lo.alpha, a_pl, b_pl, a_lg, b_lg, with_log, (lo is self)

    def _combine(self, other, op):
        alpha, a_pl, b_pl, a_lg, b_lg, with_log, self_low = self._aligned(other)
        if not self_low:
            a_pl, b_pl, a_lg, b_lg = b_pl, a_pl, b_lg, a_lg
        plain = tuple(op(x, y) for x, y in zip(a_pl, b_pl))
        log = tuple(op(x, y) for x, y in zip(a_lg, b_lg)) if with_log else None
        return PowerLogSeries(self.algebra, alpha, plain, log)

    def __add__(self, other):
        if isinstance(other, PowerLogSeries):
            return self._combine(other, self.algebra.add)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, PowerLogSeries):
            return self._combine(other, self.algebra.sub)
        return NotImplemented

    def __neg__(self):
        return self.scale(-1.0)

    def scale(self, c) -> "PowerLogSeries":
        return self.map(lambda a: self.algebra.scale(c, a))

    def __mul__(self, other):
        if isinstance(other, PowerLogSeries):
            return series_mul(self, other)
        if isinstance(other, numbers.Number):
            return self.scale(other)
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, numbers.Number):
            return self.scale(other)
        return NotImplemented

    # evaluation -------------------------------------------------------------
    def __call__(self, x):
        """Evaluate a scalar-coefficient series at x > 0."""
        x = np.asarray(x, dtype=float)
        base = x ** _num(self.alpha)
        val = base * np.polynomial.polynomial.polyval(x, np.asarray(self.plain, dtype=complex))
        if self.log is not None:
            val = val + base * np.log(x) * np.polynomial.polynomial.polyval(
                x, np.asarray(self.log, dtype=complex))
        return val

    def __repr__(self):
        return (f"PowerLogSeries({self.algebra.name}, alpha={self.alpha}, "
                f"N={self.order}, log={'yes' if self.has_log else 'no'})")


# --------------------------------------------------------------------------
# operations
# --------------------------------------------------------------------------

def _nonzero_flags(block, top, algebra):
    return [not algebra.is_exact_zero(c) for c in block[: top + 1]]


def _cauchy(a_block, b_block, n_top, op, zero, acc, a_alg, b_alg):
    # exact zeros (odd orders of even jets) are skipped, never approximated
    fa = _nonzero_flags(a_block, n_top, a_alg)
    fb = _nonzero_flags(b_block, n_top, b_alg)
    out = []
    for k in range(n_top + 1):
        total = None
        for i in range(k + 1):
            if not (fa[i] and fb[k - i]):
                continue
            term = op(a_block[i], b_block[k - i])
            total = term if total is None else acc(total, term)
        out.append(zero if total is None else total)
    return tuple(out)


def series_bilinear(a: PowerLogSeries, b: PowerLogSeries, op: Callable,
                    algebra: Algebra) -> PowerLogSeries:
    """Cauchy product with a custom bilinear coefficient map ``op``.

    The result lives in ``algebra``; at most one operand may carry a log
    block.
    """
    if a.has_log and b.has_log:
        raise SeriesError("product of two log-bearing series would produce log^2")
    top = min(a.order, b.order)
    first = op(a.plain[0], b.plain[0])
    zero = algebra.zero_like(first)
    plain = _cauchy(a.plain, b.plain, top, op, zero, algebra.add, a.algebra, b.algebra)
    log = None
    if a.has_log:
        log = _cauchy(a.log, b.plain, top, op, zero, algebra.add, a.algebra, b.algebra)
    elif b.has_log:
        log = _cauchy(a.plain, b.log, top, op, zero, algebra.add, a.algebra, b.algebra)
    return PowerLogSeries(algebra, complex(a.alpha) + complex(b.alpha), plain, log)


def series_mul(a: PowerLogSeries, b: PowerLogSeries) -> PowerLogSeries:
    """Truncated Cauchy product; base exponents add."""
    if a.algebra is not b.algebra:
        raise SeriesError(f"mismatched algebras {a.algebra} and {b.algebra}")
    return series_bilinear(a, b, a.algebra.mul, a.algebra)


def series_inverse(a: PowerLogSeries) -> PowerLogSeries:
    """Multiplicative inverse; ``a * series_inverse(a) = 1 + O(x^(N+1))``."""
    if a.has_log:
        raise SeriesError("cannot invert a log-bearing series")
    alg = a.algebra
    b0 = alg.inv(a.plain[0])
    out = [b0]
    for k in range(1, a.order + 1):
        acc = alg.mul(a.plain[1], out[k - 1])
        for j in range(2, k + 1):
            acc = alg.add(acc, alg.mul(a.plain[j], out[k - j]))
        out.append(alg.scale(-1.0, alg.mul(b0, acc)))
    return PowerLogSeries(alg, -complex(a.alpha), tuple(out))


def _num(p):
    p = complex(p)
    return p.real if p.imag == 0.0 else p


def series_diff(a: PowerLogSeries) -> PowerLogSeries:
    """Term-wise x-derivative; log blocks feed the plain block."""
    alg = a.algebra
    alpha = complex(a.alpha)
    plain = [alg.scale(_num(alpha + j), c) if (alpha + j) != 0 else alg.zero_like(c)
             for j, c in enumerate(a.plain)]
    log = None
    if a.log is not None:
        log = []
        for j, d in enumerate(a.log):
            plain[j] = alg.add(plain[j], d)
            log.append(alg.scale(_num(alpha + j), d) if (alpha + j) != 0 else alg.zero_like(d))
        log = tuple(log)
    return PowerLogSeries(alg, alpha - 1, tuple(plain), log)


def series_antidiff(a: PowerLogSeries) -> PowerLogSeries:
    """Formal antiderivative of a log-free series whose exponents avoid -1."""
    if a.has_log:
        raise SeriesError("antiderivative of log blocks is not supported")
    alg = a.algebra
    alpha = complex(a.alpha)
    out = []
    for j, c in enumerate(a.plain):
        p = alpha + j + 1
        if p == 0:
            if alg.norm(c) > 0:
                raise SeriesError("x^-1 term has no power antiderivative")
            out.append(alg.zero_like(c))
        else:
            out.append(alg.scale(1.0 / _num(p), c))
    return PowerLogSeries(alg, alpha + 1, tuple(out))


def series_exp(a: PowerLogSeries) -> PowerLogSeries:
    """exp of a log-free series with base exponent 0 (commutative algebras)."""
    if a.has_log or _integer_offset(a.alpha) != 0:
        raise SeriesError("exp needs a log-free series with base exponent 0")
    alg = a.algebra
    out = [alg.exp(a.plain[0])]
    for k in range(1, a.order + 1):
        acc = None
        for j in range(1, k + 1):
            term = alg.scale(j, alg.mul(a.plain[j], out[k - j]))
            acc = term if acc is None else alg.add(acc, term)
        out.append(alg.scale(1.0 / k, acc))
    return PowerLogSeries(alg, 0, tuple(out))


def series_log_unipotent(a: PowerLogSeries) -> PowerLogSeries:
    """log(1 + B) for a series 1 + B with B = O(x), via the Mercator series."""
    if a.has_log or _integer_offset(a.alpha) != 0:
        raise SeriesError("log needs a log-free series with base exponent 0")
    alg = a.algebra
    one = alg.one_like(a.plain[0])
    if alg.norm(alg.sub(a.plain[0], one)) > ZERO_TOL:
        raise SeriesError("leading coefficient must be the identity")
    zero = alg.zero_like(a.plain[0])
    b = PowerLogSeries(alg, 0, (zero,) + a.plain[1:])
    total = b
    power = b
    for m in range(2, a.order + 1):
        power = series_mul(power, b)
        total = total + power.scale(((-1) ** (m + 1)) / m)
    return total
