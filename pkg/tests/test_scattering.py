import math

import numpy as np
import pytest
from scipy.special import gamma, iv, ivp, kv, kvp

from fgscatter.chart import EinsteinModel
from fgscatter.gjms import P_k_apply, c_k, eigenfunction_symbol, smooth_coefficient_residue
from fgscatter.scattering import (CollarModel, ExceptionalPointError, ModeProblem, ModeScattering, Warp,
                                  YukawaModel, continuous_value, energy_check, flat_closed_form,
                                  formal_residue, frobenius_basis, pairing_check, residue_extract,
                                  s_of_n_one, scattering_value, volume_limit, yukawa_coefficient,
                                  yukawa_S)


def capped_bessel_S(n, k, s, x_cap=1.0, cap="dirichlet"):
    """S for the flat collar mode |xi| = k from x^(n/2) (K_nu(kx) + c I_nu(kx)), nu = s - n/2."""
    nu = s - n / 2
    if cap == "dirichlet":
        c = -kv(nu, k * x_cap) / iv(nu, k * x_cap)
    else:
        # x d_x of x^(n/2) Z(kx) vanishes: (n/2) Z + kx Z' = 0
        num = n / 2 * kv(nu, k * x_cap) + k * x_cap * kvp(nu, k * x_cap)
        den = n / 2 * iv(nu, k * x_cap) + k * x_cap * ivp(nu, k * x_cap)
        c = -num / den
    pre = math.pi / (2 * math.sin(nu * math.pi))
    lead_minus = pre * (k / 2) ** (-nu) / gamma(1 - nu)
    lead_plus = (-pre + c) * (k / 2) ** nu / gamma(1 + nu)
    return lead_plus / lead_minus


# --------------------------------------------------------------------------
# Yukawa model
# --------------------------------------------------------------------------

def test_yukawa_coefficients():
    assert abs(yukawa_coefficient(1, 0, 1.0) - 0.5) < 1e-16
    prob = YukawaModel().problem()
    s = 0.3 + 0.4j
    basis = frobenius_basis(prob, s)
    for sign, sol in ((-1, basis.minus), (1, basis.plus)):
        b0 = yukawa_coefficient(sign, 0, s)
        for j in range(8):
            assert abs(sol.coeffs[j] - yukawa_coefficient(sign, j, s) / b0) <= 1e-14 * abs(sol.coeffs[j]) + 1e-300


def test_yukawa_unitarity_and_errors():
    for t in (0.5, 1.0, 2.0):
        assert abs(abs(yukawa_S(1j * t)) - 1) <= 1e-10
        assert abs(yukawa_S(-1j * t) - np.conj(yukawa_S(1j * t))) <= 1e-12
    with pytest.raises(ValueError):
        yukawa_S(0.5 + 1e-7)


def test_yukawa_series_vs_ode():
    rng = np.random.default_rng(7)
    prob = YukawaModel().problem()
    count = 0
    while count < 10:
        s = complex(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5))
        if abs(2 * s.real - round(2 * s.real)) <= 0.1:
            continue
        assert abs(scattering_value(prob, s) - yukawa_S(s)) <= 1e-10 * max(1, abs(yukawa_S(s)))
        count += 1


def test_yukawa_residue():
    prob = YukawaModel().problem()
    rec = residue_extract(prob, 0.5)
    assert abs(rec.residue - 0.5) <= 1e-8
    assert abs(formal_residue(prob, 1) - 0.5) <= 1e-14


# --------------------------------------------------------------------------
# flat collars
# --------------------------------------------------------------------------

def test_flat_frobenius_is_bessel_series():
    n, k, s = 2, 3.0, 1.37
    basis = frobenius_basis(CollarModel.flat(n).problem((3, 0)), s)
    for sign, sol in ((-1, basis.minus), (1, basis.plus)):
        nu = sign * (s - n / 2)
        for j in range(6):
            expected = (k / 2) ** (2 * j) * gamma(1 + nu) / (math.factorial(j) * gamma(j + nu + 1))
            assert abs(sol.coeffs[2 * j] - expected) <= 1e-13 * abs(expected)
            assert abs(sol.coeffs[2 * j + 1]) == 0


def test_zero_mode_is_exact():
    basis = frobenius_basis(CollarModel.flat(3).problem((0, 0, 0)), 1.9)
    assert np.all(basis.minus.coeffs[1:] == 0) and np.all(basis.plus.coeffs[1:] == 0)
    for cap, factor in (("dirichlet", 1.0), ("neumann", (3 - 1.9) / 1.9)):
        got = scattering_value(CollarModel.flat(3, x_cap=0.7, cap=cap).problem((0, 0, 0)), 1.9)
        assert abs(got + factor * 0.7 ** (3 - 3.8)) <= 1e-12


@pytest.mark.parametrize("cap", ["dirichlet", "neumann"])
@pytest.mark.parametrize("s", [1.3, 1.7, 2.2])
def test_flat_against_capped_bessel(s, cap):
    for xi, x_cap in (((1, 0), 1.0), ((2, 1), 0.6)):
        k = math.sqrt(np.dot(xi, xi))
        got = scattering_value(CollarModel.flat(2, x_cap, cap).problem(xi), s)
        ref = capped_bessel_S(2, k, s, x_cap, cap)
        assert abs(got - ref) <= 1e-10 * abs(ref)


def test_flat_half_space_limit():
    prob = CollarModel.flat(2).problem((8, 0))
    for s in (1.3, 1.7):
        ref = flat_closed_form(2, 8.0, s)
        assert abs(scattering_value(prob, s) - ref) <= 1e-6 * abs(ref)


@pytest.mark.parametrize("xi", [1, 2, 3])
@pytest.mark.parametrize("k", [1, 2])
def test_flat_residues(xi, k):
    rec = residue_extract(CollarModel.flat(2).problem((xi, 0)), 1 + k)
    expected = -float(c_k(k)) * xi ** (2 * k)
    assert abs(rec.residue - expected) <= 1e-5 * abs(expected)


def test_residue_cap_invariance():
    vals = [residue_extract(CollarModel.flat(2, x_cap).problem((1, 1)), 2).residue for x_cap in (0.5, 0.75, 1.0)]
    assert max(abs(v - vals[-1]) for v in vals) <= 1e-7
    rec = residue_extract(CollarModel.flat(2).problem((1, 1)), 2, check_cap=True)
    assert rec.stable is True


def test_exceptional_s_rejected():
    with pytest.raises(ExceptionalPointError):
        scattering_value(CollarModel.flat(2).problem((1, 0)), 2.0)
    with pytest.raises(ValueError):
        CollarModel(EinsteinModel.flat_torus(2), Warp.polynomial([1, -2.0])).problem(0.0)
    with pytest.raises(ValueError):
        Warp.polynomial([2.0, 1.0])


def test_conjugation_symmetry():
    prob = CollarModel.einstein(4).problem(4.0)
    s = 2.6 + 0.3j
    assert abs(scattering_value(prob, np.conj(s)) - np.conj(scattering_value(prob, s))) <= 1e-10


def test_unitarity_on_critical_line():
    for prob in (CollarModel.flat(2).problem((1, 0)), CollarModel.einstein(4).problem(10.0)):
        for t in (0.3, 1.1):
            assert abs(abs(scattering_value(prob, prob.n / 2 + 1j * t)) - 1) <= 1e-8


# --------------------------------------------------------------------------
# warped collars and the cross-module checks
# --------------------------------------------------------------------------

@pytest.mark.parametrize("mu", [0.0, 4.0, 10.0])
def test_einstein_residue_matches_p1(mu):
    model = CollarModel.einstein(4)
    p1 = P_k_apply(model.jet(4), eigenfunction_symbol(), 1)(mu)
    rec = residue_extract(model.problem(mu), 3)
    assert abs(rec.residue + float(c_k(1)) * p1) <= 1e-5 * abs(p1)


def test_einstein_residue_k2():
    model = CollarModel.einstein(4)
    mu = 4.0
    p2 = P_k_apply(model.jet(4), eigenfunction_symbol(), 2)(mu)
    rec = residue_extract(model.problem(mu), 4)
    assert abs(rec.residue + float(c_k(2)) * p2) <= 1e-5 * abs(p2)


def test_even_warp_odd_residues_vanish():
    model = CollarModel.einstein(4)
    for mu in (0.0, 4.0):
        for l in (1, 3):
            assert abs(residue_extract(model.problem(mu), 2 + l / 2).residue) <= 1e-8


def test_odd_warp_residue():
    b, n = 0.1, 2
    model = CollarModel(EinsteinModel.flat_torus(n), Warp.polynomial([1.0, b]))
    rec = residue_extract(model.problem(0.0), n / 2 + 0.5)
    assert abs(rec.residue + n * (n - 1) * b / 4) <= 1e-6
    # the same number from the formal recursion of the D_s operator
    res_p = smooth_coefficient_residue(model.jet(2), 1.0, 1)(0.0)
    assert abs(rec.residue + res_p) <= 1e-10


def test_s_of_n_one():
    s4 = CollarModel.einstein(4)
    assert abs(s_of_n_one(s4) - float(c_k(2)) * 6) <= 1e-6
    assert abs(s_of_n_one(CollarModel.einstein(3))) <= 1e-6
    assert abs(s_of_n_one(CollarModel.einstein(2)) - float(c_k(1)) * 1) <= 1e-6


def test_pairing_identity():
    for prob in (CollarModel.flat(2).problem((1, 0)), CollarModel.einstein(4).problem(4.0),
                 CollarModel(EinsteinModel.flat_torus(3), Warp.polynomial([1, 0.1, 0.05])).problem((1, 1, 0))):
        rep = pairing_check(prob, prob.n / 2 + 0.7j)
        assert rep.residual <= 1e-6
    with pytest.raises(ValueError):
        pairing_check(CollarModel.flat(2).problem((1, 0)), 1.3)


def test_energy_identity():
    cases = [(CollarModel.flat(2).problem((1, 0)), 1.3), (CollarModel.einstein(4).problem(4.0), 2.7),
             (CollarModel(EinsteinModel.flat_torus(3), Warp.polynomial([1, 0.1])).problem((0, 1, 1)), 2.2)]
    for prob, s in cases:
        rep = energy_check(prob, s)
        assert rep.residual <= 1e-6 and rep.symmetry <= 1e-6


def test_volume_limit():
    lim = volume_limit(CollarModel.einstein(4))
    assert abs(lim.limit + 2 * math.pi ** 2) <= 1e-4
    assert all(1.8 <= r <= 2.3 for r in lim.rates)


def test_continuous_value_at_regular_point():
    prob = CollarModel.flat(2).problem((1, 0))
    assert abs(continuous_value(prob, 1.3) - scattering_value(prob, 1.3)) <= 1e-10


def test_mode_sweep_records():
    ms = ModeScattering("xi=1,0", CollarModel.flat(2).problem((1, 0)))
    vals = ms.sweep([1.3, 1.7])
    assert len(ms.samples) == 2 and vals[0] == scattering_value(ms.problem, 1.3)
    rec = ms.residue(2)
    assert ms.residues == [rec] and rec.as_dict()["mode"] == "xi=1,0"
