"""The boundary recursion for (Delta_g - s(n-s)) u = 0 and the operators it yields.

Writing ``u = x^(n-s) F`` turns the eigenvalue equation into ``D_s F = 0``
with

    D_s F = -x F'' + (2s - n - 1 - x tr/2) F' - (n - s) tr/2 F + x Lap_{h_x} F,

``tr = h_x^ij d_x h_x,ij``.  Solving order by order gives the smooth
coefficients ``f_j = p_{j,s} f``; at ``s = n/2 + k`` the recursion breaks
and the log coefficient yields the GJMS operator ``P_k``.
"""
from __future__ import annotations

import weakref
from dataclasses import dataclass, field
from fractions import Fraction
from math import factorial

import numpy as np

from .chart import (EinsteinModel, GridMetric, curvature_pack, divergence_form, laplace_beltrami)
from .fg import EinsteinBackend, FGExpansion, GridBackend, volume_series
from .parallel import ordered_map
from .series import (FIELD, SCALAR, SPECTRAL, PowerLogSeries, SeriesError, SpectralScalar,
                     series_bilinear, series_diff, series_inverse, series_mul)

EXCEPTIONAL_TOL = 1e-8
Q_DELTA = 1e-2
Q_AGREEMENT = 1e-8
Q_MAX_DEGREE = 12


class ExceptionalExponentError(ValueError):
    """s sits on an excluded value 2s - n = j of the smooth recursion."""

    def __init__(self, j, s):
        super().__init__(f"2s - n = {j} at s = {s}: exceptional exponent at recursion order {j}")
        self.j = j
        self.s = s


class InterpolationError(RuntimeError):
    def __init__(self, history):
        super().__init__(f"Q interpolation did not stabilize; history {history}")
        self.history = history


# --------------------------------------------------------------------------
# constants
# --------------------------------------------------------------------------

def c_k(k: int) -> Fraction:
    """(-1)^k / (2^(2k) k! (k-1)!), exactly."""
    if k < 1:
        raise ValueError("k must be a positive integer")
    return Fraction((-1) ** k, 2 ** (2 * k) * factorial(k) * factorial(k - 1))


def c_ks(k: int, s, n: int):
    """(-1)^k Gamma(s-n/2-k) / (2^(2k) k! Gamma(s-n/2)) as a finite product."""
    if k < 1:
        raise ValueError("k must be a positive integer")
    t = s - n / 2
    prod = 1.0
    for j in range(1, k + 1):
        d = t - j
        if abs(d) < EXCEPTIONAL_TOL:
            raise ValueError(f"c_(k,s) has a pole at s = n/2 + {j}")
        prod = prod * d
    return (-1) ** k / (2 ** (2 * k) * factorial(k) * prod)


# --------------------------------------------------------------------------
# jet geometry used by D_s (independent of s, cached per jet)
# --------------------------------------------------------------------------

class _GridGeometry:
    def __init__(self, jet: FGExpansion):
        b: GridBackend = jet.backend
        self.n = b.n
        self.chart = b.chart
        H = jet.hx_series()
        Hinv = series_inverse(H)
        self.trace = series_mul(Hinv, series_diff(H)).map(b.trace, FIELD)
        sqrt_g = volume_series(jet).map(lambda v: v * b.h.sqrt_det)
        self.inv_sqrt_g = series_inverse(sqrt_g)
        self.flux_tensor = series_bilinear(sqrt_g, Hinv, b.field_times_tensor, Hinv.algebra)
        self.order = jet.order

    def zero(self, f):
        return np.zeros_like(f)

    def times(self, geom, F):
        return series_bilinear(geom, F, lambda a, c: a * c, FIELD)

    def laplacian(self, F):
        """Lap_{h_x} F as an x-series of grid fields (positive sign)."""
        grad = F.map(self.chart.grad)
        flux = series_bilinear(self.flux_tensor, grad,
                               lambda k, g: (k @ g[..., None])[..., 0], FIELD)
        div = flux.map(self.chart.div)
        return series_bilinear(self.inv_sqrt_g, div, lambda a, c: a * c, FIELD).scale(-1.0)


class _EinsteinGeometry:
    def __init__(self, jet: FGExpansion):
        b: EinsteinBackend = jet.backend
        self.n = b.n
        H = jet.hx_series()
        Hinv = series_inverse(H)
        self.trace = series_mul(Hinv, series_diff(H)).map(b.trace, SCALAR)
        self.inv_warp = Hinv
        self.order = jet.order

    def zero(self, f):
        return SpectralScalar([0.0])

    def times(self, geom, F):
        return series_bilinear(geom, F, lambda a, c: a * c, SPECTRAL)

    def laplacian(self, F):
        # h_x = A(x) h  =>  Lap_{h_x} = A^-1 Lap_h  = A^-1 mu on an eigenfunction
        mu = SpectralScalar.mu()
        return series_bilinear(self.inv_warp, F, lambda a, c: a * (mu * c), SPECTRAL)


_GEOMETRY = weakref.WeakKeyDictionary()


def jet_geometry(jet: FGExpansion):
    geo = _GEOMETRY.get(jet)
    if geo is None:
        if isinstance(jet.backend, GridBackend):
            geo = _GridGeometry(jet)
        elif isinstance(jet.backend, EinsteinBackend):
            geo = _EinsteinGeometry(jet)
        else:
            raise TypeError("unsupported jet backend")
        _GEOMETRY[jet] = geo
    return geo


def clear_geometry_cache():
    _GEOMETRY.clear()


def function_series(jet: FGExpansion, f, order: int) -> PowerLogSeries:
    """The x-constant series F = f (field on a grid, spectral symbol otherwise)."""
    if isinstance(jet.backend, EinsteinBackend):
        f = f if isinstance(f, SpectralScalar) else SpectralScalar([f])
        return PowerLogSeries.constant(SPECTRAL, f, order)
    return PowerLogSeries.constant(FIELD, np.asarray(f), order)


def eigenfunction_symbol():
    """Symbol of a Laplace eigenfunction on an Einstein model."""
    return SpectralScalar([1.0])


@dataclass
class DsOperator:
    jet: FGExpansion
    s: complex

    def __post_init__(self):
        self.geometry = jet_geometry(self.jet)

    @property
    def n(self):
        return self.jet.n

    def __call__(self, F: PowerLogSeries) -> PowerLogSeries:
        return apply_Ds(self.jet, self.s, F)


def apply_Ds(jet: FGExpansion, s, F: PowerLogSeries) -> PowerLogSeries:
    """D_s F via series arithmetic; the result has base exponent alpha(F) - 1."""
    geo = jet_geometry(jet)
    if F.order > jet.order:
        raise SeriesError(f"series order {F.order} needs a jet of order >= {F.order}, have {jet.order}")
    n = geo.n
    F1 = series_diff(F)
    F2 = series_diff(F1)
    tr = geo.trace
    out = (F2.shift(1).scale(-1.0)
           + F1.scale(2 * s - n - 1)
           - geo.times(tr, F1).shift(1).scale(0.5)
           - geo.times(tr, F).scale((n - s) / 2)
           + geo.laplacian(F).shift(1))
    return out


# --------------------------------------------------------------------------
# the smooth recursion and the log coefficient
# --------------------------------------------------------------------------

@dataclass
class SmoothSolution:
    s: complex
    series: PowerLogSeries
    coefficients: list
    metadata: dict = field(default_factory=dict)

    def __getitem__(self, j):
        return self.coefficients[j]


def _with_coeff(F: PowerLogSeries, j, value):
    cs = list(F.plain)
    cs[j] = value
    return PowerLogSeries(F.algebra, F.alpha, tuple(cs))


def formal_smooth_solve(jet: FGExpansion, f, s, J: int) -> SmoothSolution:
    """f_j = -(x^(1-j) D_s F_(j-1))|_0 / (j (2s - n - j)) for j = 1..J."""
    n = jet.n
    if J > jet.order:
        raise SeriesError(f"recursion order {J} exceeds jet order {jet.order}")
    for j in range(1, J + 1):
        if abs(2 * s - n - j) < EXCEPTIONAL_TOL:
            raise ExceptionalExponentError(j, s)
    F = function_series(jet, f, J)
    for j in range(1, J + 1):
        D = apply_Ds(jet, s, F)
        fj = D.coeff(j - 1) * (-1.0 / (j * (2 * s - n - j)))
        F = _with_coeff(F, j, fj)
    return SmoothSolution(s, F, list(F.plain))


@dataclass
class LogResult:
    k: int
    smooth: SmoothSolution
    g: object
    metadata: dict = field(default_factory=dict)


def log_coefficient(jet: FGExpansion, f, k: int) -> LogResult:
    """g_2k at s = n/2 + k; the free coefficient f_2k is taken to be zero."""
    n = jet.n
    if k < 1 or (n % 2 == 0 and k > n // 2 and not _is_flat(jet)):
        raise ValueError(f"invalid k = {k} for n = {n}")
    if jet.order < 2 * k:
        raise SeriesError(f"log coefficient at k = {k} needs jet order >= {2 * k}")
    s = n / 2 + k
    F = function_series(jet, f, 2 * k)
    for j in range(1, 2 * k):
        D = apply_Ds(jet, s, F)
        F = _with_coeff(F, j, D.coeff(j - 1) * (-1.0 / (j * (2 * s - n - j))))
    D = apply_Ds(jet, s, F)
    g = D.coeff(2 * k - 1) * (1.0 / (2 * k))
    smooth = SmoothSolution(s, F, list(F.plain), {"free_coefficient": "zero"})
    return LogResult(k, smooth, g, {"free_coefficient": "zero", "s": s})


def _is_flat(jet):
    return all(np.max(np.abs(np.asarray(c))) == 0 for c in jet.coeffs[1:])


def P_k_apply(jet: FGExpansion, f, k: int):
    """P_k f = -g_2k / (2 c_k)."""
    g = log_coefficient(jet, f, k).g
    return g * (-1.0 / (2 * float(c_k(k))))


def P_ks_apply(jet: FGExpansion, f, k: int, s):
    """P_(k,s) f = f_2k(s) / c_(k,s) off the exceptional set."""
    sol = formal_smooth_solve(jet, f, s, 2 * k)
    return sol[2 * k] * (1.0 / c_ks(k, s, jet.n))


def smooth_coefficient_residue(jet: FGExpansion, f, l: int):
    """Residue of p_(l,s) f at s = (n + l)/2, i.e. -(x^(1-l) D_s F_(l-1))|_0 / (2l)."""
    n = jet.n
    s0 = (n + l) / 2
    F = function_series(jet, f, l)
    for j in range(1, l):
        D = apply_Ds(jet, s0, F)
        F = _with_coeff(F, j, D.coeff(j - 1) * (-1.0 / (j * (2 * s0 - n - j))))
    D = apply_Ds(jet, s0, F)
    return D.coeff(l - 1) * (-1.0 / (2 * l))


# --------------------------------------------------------------------------
# Q-curvature
# --------------------------------------------------------------------------

@dataclass
class QResult:
    Q: object
    degree: int
    nodes: list
    history: list

    def __array__(self, dtype=None):
        return np.asarray(self.Q, dtype=dtype)


def _as_values(v):
    if isinstance(v, SpectralScalar):
        return np.asarray(v(0.0))
    return np.asarray(v)


def _lagrange_at(nodes, target):
    w = []
    for i, si in enumerate(nodes):
        wi = 1.0
        for j, sj in enumerate(nodes):
            if j != i:
                wi *= (target - sj) / (si - sj)
        w.append(wi)
    return w


def q_nodes(n, delta=Q_DELTA, count=Q_MAX_DEGREE + 2):
    nodes = []
    m = 1
    while len(nodes) < count:
        for sign in (1, -1):
            s = n + sign * m * delta
            if abs(2 * s - n - round(2 * s - n)) > EXCEPTIONAL_TOL:
                nodes.append(s)
        m += 1
    return nodes[:count]


def Q_ks(jet: FGExpansion, k: int, s):
    """Q_(k,s) = P_(k,s) 1 / (n - s) through the smooth recursion."""
    one = 1.0 if isinstance(jet.backend, EinsteinBackend) else np.ones(jet.backend.chart.shape)
    sol = formal_smooth_solve(jet, one, s, 2 * k)
    return _as_values(sol[2 * k]) / (c_ks(k, s, jet.n) * (jet.n - s))


def Q_compute(jet: FGExpansion, delta: float = Q_DELTA, tol: float = Q_AGREEMENT) -> QResult:
    """Q = Q_(n/2, n) by interpolating Q_(n/2, s) sampled near s = n."""
    n = jet.n
    if n % 2:
        raise ValueError("Q is computed for even n only")
    if jet.order < n:
        raise SeriesError(f"Q needs a jet of order n = {n}")
    k = n // 2
    nodes = q_nodes(n, delta)
    values = []
    history = []
    prev = None

    def sample(ss):
        return np.real_if_close(Q_ks(jet, k, ss), tol=1e6)

    # the first three nodes come in one batch; afterwards one node per degree
    values.extend(ordered_map(sample, nodes[:3]))
    for D in range(2, Q_MAX_DEGREE + 1):
        while len(values) < D + 1:
            values.append(sample(nodes[len(values)]))
        w = _lagrange_at(nodes[: D + 1], n)
        q = sum(wi * vi for wi, vi in zip(w, values))
        if prev is not None:
            change = float(np.max(np.abs(q - prev)))
            history.append((D, change))
            if change <= tol * max(1.0, float(np.max(np.abs(q)))):
                return QResult(np.real(q), D, nodes[: D + 1], history)
        prev = q
    raise InterpolationError(history)


# --------------------------------------------------------------------------
# explicit formulas
# --------------------------------------------------------------------------

def oracle_yamabe(h, f=None):
    n = h.n
    if isinstance(h, EinsteinModel):
        R = h.curvature_pack().scalar
        return SpectralScalar.mu() + (n - 2) * R / (4 * (n - 1))
    R = curvature_pack(h).scalar
    return laplace_beltrami(h, f) + (n - 2) / (4 * (n - 1)) * R * f


def oracle_paneitz(h, f=None):
    """Delta^2 + delta T d + (n-4)/2 (Delta J + n/2 J^2 - 2|P|^2)."""
    n = h.n
    if n < 3:
        raise ValueError("the Paneitz formula needs n >= 3")
    if isinstance(h, EinsteinModel):
        cp = h.curvature_pack()
        mu = SpectralScalar.mu()
        return mu * mu + cp.T * mu + (n - 4) / 2 * (n / 2 * cp.J ** 2 - 2 * cp.schouten_norm2)
    cp = curvature_pack(h)
    T_up = h.inverse @ cp.T @ h.inverse
    lap = lambda u: laplace_beltrami(h, u)
    out = lap(lap(f)) + divergence_form(h, T_up, f)
    if n != 4:
        zeroth = lap(cp.J) + n / 2 * cp.J ** 2 - 2 * cp.schouten_norm2
        out = out + (n - 4) / 2 * zeroth * f
    return out


def oracle_q4(h):
    """Q in dimension four from 6Q = Delta R + R^2 - 3|Ric|^2."""
    if h.n != 4:
        raise ValueError("the four-dimensional Q formula needs n = 4")
    if isinstance(h, EinsteinModel):
        cp = h.curvature_pack()
        return (cp.scalar ** 2 - 3 * cp.ricci_norm2) / 6
    cp = curvature_pack(h)
    return (laplace_beltrami(h, cp.scalar) + cp.scalar ** 2 - 3 * cp.ricci_norm2) / 6


def oracle_q2(h):
    """Q = R/2 in dimension two."""
    if isinstance(h, EinsteinModel):
        return h.curvature_pack().scalar / 2
    return curvature_pack(h).scalar / 2


# --------------------------------------------------------------------------
# export
# --------------------------------------------------------------------------

def operator_matrix(apply, chart, modes):
    """Matrix of f -> apply(f) on Fourier modes: M[a, b] = <e_a, apply(e_b)> / vol."""
    basis = [chart.fourier_mode(m) for m in modes]
    vol = float(np.prod(chart.periods))
    M = np.zeros((len(modes), len(modes)), complex)
    for b, eb in enumerate(basis):
        img = apply(eb)
        for a, ea in enumerate(basis):
            M[a, b] = chart.integrate(np.conj(ea) * img) / vol
    return M
