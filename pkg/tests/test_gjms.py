import math
from fractions import Fraction

import numpy as np
import pytest

from fgscatter import standard
from fgscatter.chart import EinsteinModel, GridMetric, TorusChart, inner, integrate, laplace_beltrami
from fgscatter.fg import FGExpansion, GridBackend, einstein_warp, jet_from_warp, volume_expansion
from fgscatter.gjms import (ExceptionalExponentError, P_k_apply, P_ks_apply, Q_compute, apply_Ds,
                            c_k, c_ks, eigenfunction_symbol, formal_smooth_solve, function_series,
                            log_coefficient, operator_matrix, oracle_paneitz, oracle_q2, oracle_q4,
                            oracle_yamabe, smooth_coefficient_residue)
from fgscatter.series import FIELD, PowerLogSeries, SpectralScalar


def flat_jet(n, points, order):
    h = GridMetric.flat(TorusChart.cube(n, points))
    z = np.zeros_like(h.components)
    return FGExpansion(GridBackend(h), order, [h.components] + [z] * order)


def sup_rel(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def test_constants():
    assert (c_k(1), c_k(2), c_k(3)) == (Fraction(-1, 4), Fraction(1, 32), Fraction(-1, 768))
    for n, s in ((2, 0.3 + 0.2j), (4, 1.7)):
        assert abs(c_ks(1, s, n) + 1 / (2 * (2 * s - n - 2))) < 1e-15
    with pytest.raises(ValueError):
        c_ks(2, 4.0, 4)
    # c_k is the residue of c_(k,s) at s = n/2 + k
    for k in (1, 2, 3):
        eps = 1e-7
        assert abs(eps * c_ks(k, 2 + k + eps, 4) - float(c_k(k))) < 1e-6 * abs(float(c_k(k)))


def test_ds_flat_examples():
    jet = flat_jet(2, 16, 4)
    ch = jet.backend.chart
    f = np.sin(ch.coords[0]) * np.cos(2 * ch.coords[1])
    s = 0.7 + 0.3j
    D = apply_Ds(jet, s, function_series(jet, f, 4))
    assert np.max(np.abs(D.coeff(0))) <= 1e-14
    assert np.max(np.abs(D.coeff(1) - 5 * f)) < 1e-12
    for j in range(1, 5):
        F = PowerLogSeries(FIELD, 0, tuple(f if i == j else np.zeros_like(f) for i in range(5)))
        D = apply_Ds(jet, s, F)
        assert np.max(np.abs(D.coeff(j - 1) - j * (2 * s - 2 - j) * f)) < 1e-12


def test_ds_leading_term_curved():
    jet = standard.jet_of("t2")
    f = np.cos(jet.backend.chart.coords[1])
    s = 1.3
    for j in (1, 2, 3, 4) if jet.order >= 4 else (1, 2):
        F = PowerLogSeries(FIELD, 0, tuple(f if i == j else np.zeros_like(f) for i in range(jet.order + 1)))
        D = apply_Ds(jet, s, F)
        assert np.max(np.abs(D.coeff(j - 1) - j * (2 * s - 2 - j) * f)) < 1e-12


def test_ds_odd_warp_sign():
    b, n, s = 0.3, 3, 1.1
    jet = jet_from_warp(EinsteinModel.flat_torus(n), [1.0, b], order=3)
    D = apply_Ds(jet, s, function_series(jet, 1.0, 3))
    assert abs(D.coeff(0)(0.0) - (-n * (n - s) * b)) < 1e-14
    sol = formal_smooth_solve(jet, 1.0, s, 2)
    assert abs(sol[1](0.0) - n * (n - s) * b / (2 * s - n - 1)) < 1e-14


def test_flat_f2_matches_cks():
    jet = flat_jet(2, 16, 2)
    f = np.cos(jet.backend.chart.coords[0] + jet.backend.chart.coords[1])
    s = 0.4 + 0.9j
    sol = formal_smooth_solve(jet, f, s, 2)
    assert np.max(np.abs(sol[2] - c_ks(1, s, 2) * 2 * f)) < 1e-13


def test_parity_even_jet():
    jet = standard.jet_of("t2")
    f = np.sin(jet.backend.chart.coords[0])
    sol = formal_smooth_solve(jet, f, 0.37 + 0.1j, 2)
    assert np.max(np.abs(sol[1])) <= 1e-10
    s3 = formal_smooth_solve(einstein_warp(EinsteinModel.round_sphere(3), 6), 1.0, 0.9, 6)
    for j in (1, 3, 5):
        assert np.max(np.abs(s3[j].coeffs)) <= 1e-10


def test_exceptional_exponent_reported():
    jet = flat_jet(2, 8, 4)
    with pytest.raises(ExceptionalExponentError) as err:
        formal_smooth_solve(jet, np.ones((8, 8)), 2.5, 4)
    assert err.value.j == 3


def test_log_coefficient_flat_n2():
    jet = flat_jet(2, 16, 2)
    f = jet.backend.chart.fourier_mode([1, 0])
    g = log_coefficient(jet, f, 1).g
    assert np.max(np.abs(-g / (2 * float(c_k(1))) - f)) < 1e-12


def test_log_coefficient_of_one_vanishes():
    for jet in (standard.jet_of("t2"), einstein_warp(EinsteinModel.round_sphere(4), 4)):
        one = 1.0 if jet.backend.__class__.__name__ == "EinsteinBackend" else np.ones(jet.backend.chart.shape)
        g = log_coefficient(jet, one, jet.n // 2).g
        val = g(0.0) if isinstance(g, SpectralScalar) else g
        assert np.max(np.abs(val)) <= 1e-9


@pytest.mark.parametrize("k", [1, 2, 3])
def test_flat_reduction(k):
    jet = flat_jet(2, 16, 2 * k)
    ch = jet.backend.chart
    f = np.cos(ch.coords[0] - 2 * ch.coords[1]) + 0.3 * np.sin(3 * ch.coords[1])
    expected = f
    for _ in range(k):
        expected = laplace_beltrami(GridMetric.flat(ch), expected)
    assert np.max(np.abs(P_k_apply(jet, f, k) - expected)) <= 1e-9 * max(1, np.max(np.abs(expected)))


def test_p1_is_laplacian_n2():
    jet = standard.jet_of("t2")
    h = standard.t2_metric()
    f = np.cos(h.chart.coords[0] + 2 * h.chart.coords[1])
    assert np.max(np.abs(P_k_apply(jet, f, 1) - laplace_beltrami(h, f))) <= 1e-8


def test_einstein_s4_symbols():
    jet = einstein_warp(EinsteinModel.round_sphere(4), 4)
    p1 = P_k_apply(jet, eigenfunction_symbol(), 1)
    p2 = P_k_apply(jet, eigenfunction_symbol(), 2)
    for mu in (0.0, 4.0, 10.0, 18.0):
        assert abs(p1(mu) - (mu + 2)) < 1e-12
        assert abs(p2(mu) - mu * (mu + 2)) < 1e-11
    m = EinsteinModel.round_sphere(4)
    assert oracle_yamabe(m)(0) == 2 and oracle_q4(m) == 6


def test_q_examples():
    assert abs(Q_compute(einstein_warp(EinsteinModel.round_sphere(4), 4)).Q - 6) < 1e-10
    flat = Q_compute(flat_jet(4, 8, 4))
    assert np.max(np.abs(flat.Q)) <= 1e-10
    q2 = Q_compute(standard.jet_of("t2"))
    assert np.max(np.abs(q2.Q - oracle_q2(standard.t2_metric()))) <= 1e-7


def test_q_family_polynomial_identity():
    # P_(k,s) 1 = (n - s) Q_(k,s) vanishes at s = n
    jet = einstein_warp(EinsteinModel.round_sphere(4), 4)
    vals = [P_ks_apply(jet, 1.0, 2, 4 + d)(0.0) / d for d in (1e-3, -1e-3)]
    assert abs(vals[0] + 6) < 1e-2 and abs(vals[1] + 6) < 1e-2


def test_odd_warp_residue():
    b, n = 0.2, 3
    jet = jet_from_warp(EinsteinModel.flat_torus(n), [1.0, b], order=2)
    res = smooth_coefficient_residue(jet, 1.0, 1)
    # Res p_(1,s) at s = n/2 + 1/2 is n (n - s0) b / 2
    s0 = (n + 1) / 2
    assert abs(res(0.0) - n * (n - s0) * b / 2) < 1e-14


def test_operator_matrix_flat():
    ch = TorusChart.cube(2, 8)
    M = operator_matrix(lambda f: laplace_beltrami(GridMetric.flat(ch), f), ch, [(1, 0), (0, 2), (1, 1)])
    assert np.allclose(M, np.diag([1, 4, 2]), atol=1e-12)


# --------------------------------------------------------------------------
# the generic four-torus
# --------------------------------------------------------------------------

def _t4_function(h, seed):
    rng = np.random.default_rng(seed)
    y = h.chart.coords
    out = np.zeros(h.chart.shape)
    for _ in range(4):
        xi = rng.integers(-2, 3, size=4)
        out += rng.normal() * np.cos(sum(k * c for k, c in zip(xi, y)) + rng.random())
    return out


def test_t4_yamabe_and_paneitz(t4_jet):
    h = standard.t4_metric()
    f = _t4_function(h, 0)
    assert sup_rel(P_k_apply(t4_jet, f, 1), oracle_yamabe(h, f)) <= 1e-7
    assert sup_rel(P_k_apply(t4_jet, f, 2), oracle_paneitz(h, f)) <= 1e-6


def test_t4_q_oracle(t4_jet):
    q = Q_compute(t4_jet)
    ref = oracle_q4(standard.t4_metric())
    assert np.max(np.abs(q.Q - ref)) <= 1e-6 * max(1, np.max(np.abs(ref)))


def test_t4_covariance(t4_jet, t4_rescaled_jet):
    h = standard.t4_metric()
    ups = standard.sine_weight(h.chart)
    n = 4
    f_hat = _t4_function(h, 1)
    for k in (1, 2):
        lhs = P_k_apply(t4_rescaled_jet, f_hat, k)
        rhs = np.exp((-n / 2 - k) * ups) * P_k_apply(t4_jet, np.exp((n / 2 - k) * ups) * f_hat, k)
        assert np.max(np.abs(lhs - rhs)) <= 1e-6 * max(1, np.max(np.abs(rhs)))


def test_t4_self_adjoint(t4_jet):
    h = standard.t4_metric()
    for seed in range(3):
        f, g = _t4_function(h, 10 + seed), _t4_function(h, 20 + seed)
        for k in (1, 2):
            lhs = inner(h, P_k_apply(t4_jet, f, k), g)
            rhs = inner(h, f, P_k_apply(t4_jet, g, k))
            assert abs(lhs - rhs) <= 1e-8 * math.sqrt(inner(h, f, f) * inner(h, g, g))


def test_t4_q_transformation_law(t4_jet, t4_rescaled_jet):
    h = standard.t4_metric()
    ups = standard.sine_weight(h.chart)
    q, q_hat = Q_compute(t4_jet).Q, Q_compute(t4_rescaled_jet).Q
    rhs = q + P_k_apply(t4_jet, ups, 2)
    assert np.max(np.abs(np.exp(4 * ups) * q_hat - rhs)) <= 1e-6 * max(1, np.max(np.abs(rhs)))


def test_n2_covariance_and_q_law():
    jet, jet_hat = standard.jet_of("t2"), standard.jet_of("t2_rescaled")
    h = standard.t2_metric()
    ups = standard.sine_weight(h.chart)
    f_hat = np.cos(h.chart.coords[0] - h.chart.coords[1])
    lhs = P_k_apply(jet_hat, f_hat, 1)
    rhs = np.exp(-2 * ups) * P_k_apply(jet, f_hat, 1)
    assert np.max(np.abs(lhs - rhs)) <= 1e-6 * np.max(np.abs(rhs))
    q, q_hat = Q_compute(jet).Q, Q_compute(jet_hat).Q
    assert np.max(np.abs(np.exp(2 * ups) * q_hat - q - P_k_apply(jet, ups, 1))) <= 1e-6


def test_renormalized_volume_is_total_q(t4_jet):
    L = volume_expansion(t4_jet).L
    total = integrate(standard.t4_metric(), Q_compute(t4_jet).Q)
    assert abs(L - 2 * float(c_k(2)) * total) <= 1e-6 * (1 + abs(L))
    s4 = einstein_warp(EinsteinModel.round_sphere(4), 4)
    vol = EinsteinModel.round_sphere(4).volume
    assert abs(volume_expansion(s4).L - 2 * float(c_k(2)) * Q_compute(s4).Q * vol) <= 1e-8
