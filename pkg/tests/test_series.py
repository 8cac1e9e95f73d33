import numpy as np
import pytest
from hypothesis import example, given, settings, strategies as st

from fgscatter.series import (FIELD, SCALAR, SPECTRAL, TENSOR, PowerLogSeries, SeriesError,
                              SpectralScalar, series_antidiff, series_diff, series_exp,
                              series_inverse, series_log_unipotent, series_mul)


def scalar(coeffs, alpha=0, log=None):
    return PowerLogSeries.from_coeffs(SCALAR, [complex(c) for c in coeffs], alpha,
                                      None if log is None else [complex(c) for c in log])


def close(s, expected, tol=1e-14):
    got = np.array(s.plain_coeffs, dtype=complex)
    exp = np.zeros(len(got), complex)
    exp[: len(expected)] = expected
    return np.max(np.abs(got - exp)) <= tol


def test_mul_examples():
    assert close(series_mul(scalar([1, 1, 0, 0, 0]), scalar([1, -1, 0, 0, 0])), [1, 0, -1])
    a = scalar([1, 0, -0.25, 0, 0])
    assert close(a * a, [1, 0, -0.5, 0, 1 / 16])
    s, n = 0.3 + 0.7j, 4
    prod = scalar([1], alpha=s) * scalar([1], alpha=n - s)
    assert prod.alpha == 4 and close(prod, [1])


def test_truncation_is_min_order():
    assert (scalar([1, 2, 3]) * scalar([1, 1])).order == 1
    assert (scalar([1, 2, 3]) + scalar([1, 1], alpha=1)).order == 2
    with pytest.raises(SeriesError):
        scalar([1, 2]).coeff(5)
    assert scalar([1, 2], alpha=1).coeff(0) == 0


def test_inverse_examples():
    assert close(series_inverse(scalar([1, -1, 0, 0])), [1, 1, 1, 1])
    sq = scalar([1, 0, -0.5, 0, 1 / 16])
    assert close(series_inverse(sq), [1, 0, 0.5, 0, 3 / 16])
    assert close(series_inverse(scalar([2, 0])), [0.5, 0])
    with pytest.raises(SeriesError):
        series_inverse(scalar([0, 1]))


def test_diff_examples():
    a = 2.5
    d = series_diff(scalar([1], alpha=a))
    assert d.alpha == a - 1 and close(d, [a])
    d = series_diff(scalar([0], alpha=a, log=[1]))
    assert close(d, [1]) and abs(d.log_coeffs[0] - a) < 1e-15
    d = series_diff(scalar([1, 0, 1]))
    assert d.alpha == -1 and close(d, [0, 0, 2])


def test_log_squared_and_algebra_mismatch_rejected():
    a = scalar([1, 0], log=[1, 0])
    with pytest.raises(SeriesError):
        a * a
    f = PowerLogSeries.from_coeffs(FIELD, [np.ones(3), np.zeros(3)])
    with pytest.raises(SeriesError):
        series_mul(scalar([1, 0]), f)


def test_log_free_round_trip():
    a = scalar([1, 2, 3])
    b = scalar([3, 0, 1])
    assert not (a * b + a - b).has_log


def test_exp_log_round_trip():
    b = scalar([0, 0.3, -0.2, 0.1, 0.05, 0.0])
    one_plus = scalar([1, 0.3, -0.2, 0.1, 0.05, 0.0])
    back = series_exp(series_log_unipotent(one_plus))
    assert close(back, one_plus.plain_coeffs, 1e-14)
    assert close(series_log_unipotent(series_exp(b)), b.plain_coeffs, 1e-14)


def test_evaluation_with_log():
    s = scalar([1, 2], alpha=0.5, log=[3, 0])
    x = 0.3
    assert abs(s(x) - (x ** 0.5 * (1 + 2 * x) + 3 * x ** 0.5 * np.log(x))) < 1e-15


# --------------------------------------------------------------------------
# property tests over all four algebras
# --------------------------------------------------------------------------

def _rand_coeff(kind, rng):
    if kind == "scalar":
        return complex(rng.normal(), rng.normal())
    if kind == "field":
        return rng.normal(size=(3, 2))
    if kind == "tensor":
        return rng.normal(size=(2, 3, 3))
    return SpectralScalar(rng.normal(size=2))


ALGEBRAS = {"scalar": SCALAR, "field": FIELD, "tensor": TENSOR, "spectral": SPECTRAL}


def _rand_series(kind, rng, order, well_conditioned=False):
    cs = [_rand_coeff(kind, rng) for _ in range(order + 1)]
    if well_conditioned:
        if kind == "tensor":
            cs[0] = cs[0] + 4 * np.eye(3)
        elif kind == "field":
            cs[0] = cs[0] + 4.0
        elif kind == "spectral":
            cs[0] = SpectralScalar([2.0 + rng.random()])
        else:
            cs[0] = 2.0 + cs[0]
    return PowerLogSeries.from_coeffs(ALGEBRAS[kind], cs)


def _max_diff(a, b):
    alg = a.algebra
    return max(alg.norm(alg.sub(x, y)) for x, y in zip(a.plain, b.plain))


def _scale(s):
    return max(max(s.max_norms()), 1.0)


@settings(max_examples=25, deadline=None)
@given(kind=st.sampled_from(sorted(ALGEBRAS)), order=st.integers(0, 8), seed=st.integers(0, 2**31))
def test_ring_axioms(kind, order, seed):
    rng = np.random.default_rng(seed)
    a, b, c = (_rand_series(kind, rng, order) for _ in range(3))
    lhs = (a * b) * c
    rhs = a * (b * c)
    assert _max_diff(lhs, rhs) <= 1e-12 * _scale(lhs)
    lhs = a * (b + c)
    rhs = a * b + a * c
    assert _max_diff(lhs, rhs) <= 1e-12 * _scale(lhs)


@settings(max_examples=25, deadline=None)
@given(kind=st.sampled_from(["scalar", "field", "tensor"]), order=st.integers(0, 8),
       seed=st.integers(0, 2**31))
def test_inverse_property(kind, order, seed):
    rng = np.random.default_rng(seed)
    a = _rand_series(kind, rng, order, well_conditioned=True)
    prod = a * series_inverse(a)
    alg = a.algebra
    one = alg.one_like(a.plain[0])
    assert alg.norm(alg.sub(prod.plain[0], one)) <= 1e-12
    for c in prod.plain[1:]:
        assert alg.norm(c) <= 1e-12


def test_spectral_inverse_constant_only():
    a = PowerLogSeries.from_coeffs(SPECTRAL, [SpectralScalar([2.0]), SpectralScalar([0, 1])])
    inv = series_inverse(a)
    prod = a * inv
    assert SPECTRAL.norm(prod.plain[0] - 1) < 1e-15 and SPECTRAL.norm(prod.plain[1]) < 1e-15
    with pytest.raises(SeriesError):
        series_inverse(PowerLogSeries.from_coeffs(SPECTRAL, [SpectralScalar([1, 1])]))


@settings(max_examples=40, deadline=None)
@given(alpha=st.floats(-3.3, 3.3).filter(lambda a: abs(a - round(a)) > 1e-3),
       order=st.integers(0, 8), seed=st.integers(0, 2**31))
@example(alpha=0.1, order=0, seed=0)
def test_diff_antidiff_round_trip(alpha, order, seed):
    rng = np.random.default_rng(seed)
    a = scalar(rng.normal(size=order + 1), alpha=alpha)
    back = series_antidiff(series_diff(a))
    # exponents shift by -1 then +1 in floating point; they must still align
    assert abs(complex(back.alpha) - complex(a.alpha)) <= 1e-12
    assert _max_diff(back, a) <= 1e-12 * _scale(a)
