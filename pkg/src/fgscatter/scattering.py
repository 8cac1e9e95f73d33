"""Scattering on separable models: the Yukawa half-line and warped collars.

Each Fourier (flat base) or eigen (Einstein base) mode u(x) phi(y) of
``Delta_g u = s(n - s) u`` on ``g = x^-2 (a(x)^2 h + dx^2)`` reduces to

    -(x d_x)^2 u + p(x) (x d_x) u + (W(x) - s(n - s)) u = 0,
    p = n (1 - x a'/a),  W = mu x^2 / a^2 (+ x for the Yukawa model),

with characteristic exponents n - s and s at x = 0.  The series basis near
x = 0 is matched to an ODE solution integrated inward from a cap at x_cap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import gamma, rgamma

from . import expr
from .chart import EinsteinModel
from .fg import jet_from_warp
from .parallel import ordered_map
from .series import SCALAR, PowerLogSeries, series_inverse, series_mul

ODE_RTOL = 1e-12
ODE_ATOL = 1e-14
SERIES_TERMS = 64
TAIL_TOL = 1e-13
MATCH_RESIDUAL_TOL = 1e-12
COND_LIMIT = 1e10
HALF_INTEGER_TOL = 1e-6
CONTOUR_RADIUS = 0.05
CONTOUR_NODES = 32
CONTOUR_TOL = 1e-8
CONTOUR_MAX_NODES = 1024
CAP_STABILITY_TOL = 1e-7
CAPS = ("dirichlet", "neumann")


class ScatteringError(RuntimeError):
    pass


class CollisionError(ScatteringError):
    """The cap solution is (nearly) the decaying Frobenius solution."""


class ExceptionalPointError(ValueError):
    def __init__(self, s, n):
        super().__init__(f"s = {s} is on the exceptional set (2s - n = {2 * s - n} is an integer "
                         f"for n = {n}); use the residue path")
        self.s = s


# --------------------------------------------------------------------------
# warp factors
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Warp:
    """a(x) with a(0) = 1, known by its Taylor coefficients and pointwise.

    ``taylor(m)`` returns the coefficients a_0..a_m; ``evaluate(x)`` returns
    ``(a(x), a'(x))``.
    """

    taylor: Callable[[int], np.ndarray]
    evaluate: Callable
    label: str = "warp"

    @classmethod
    def polynomial(cls, coeffs, label=None):
        c = np.asarray(coeffs, dtype=float)
        if c.size == 0 or c[0] != 1.0:
            raise ValueError("a warp must satisfy a(0) = 1")
        d = np.polynomial.polynomial.polyder(c)
        P = np.polynomial.polynomial.polyval

        def taylor(m):
            out = np.zeros(m + 1)
            k = min(m + 1, c.size)
            out[:k] = c[:k]
            return out

        return cls(taylor, lambda x: (P(x, c), P(x, d)), label or "poly" + str(list(c)))

    @classmethod
    def from_expression(cls, src: str):
        """A warp given as an expression in x, e.g. ``"1 - x^2/4"``."""
        node = expr.parse_expression(src)
        extra = expr.free_variables(node) - {"x"}
        if extra:
            raise ValueError(f"a warp may only depend on x, got {sorted(extra)}")
        if abs(expr.evaluate(node, {"x": 0.0}) - 1.0) > 1e-14:
            raise ValueError("a warp must satisfy a(0) = 1")
        deriv = expr.differentiate(node, "x")

        def evaluate(x):
            x = np.asarray(x, dtype=float)
            shape = np.shape(x)
            a = np.broadcast_to(expr.evaluate(node, {"x": x}), shape)
            return a, np.broadcast_to(expr.evaluate(deriv, {"x": x}), shape)

        return cls(lambda m: np.real(expr.taylor(node, "x", m)), evaluate, src)

    @classmethod
    def identity(cls):
        return cls.polynomial([1.0], "1")

    @classmethod
    def einstein(cls, lam: float):
        """The Poincare-Einstein warp 1 - lam x^2 / 4."""
        return cls.polynomial([1.0, 0.0, -lam / 4], f"einstein(lam={lam})")

    def is_even(self, terms: int = 16) -> bool:
        return bool(np.all(self.taylor(terms)[1::2] == 0))


# --------------------------------------------------------------------------
# one mode of a separable model
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ModeProblem:
    """The radial ODE of one mode, capped at x_cap with a Dirichlet or Neumann condition."""

    n: int
    warp: Warp
    mu: float = 0.0
    linear_potential: float = 0.0
    x_cap: float = 1.0
    cap: str = "dirichlet"
    label: str = "mode"
    volume: float = 1.0

    def __post_init__(self):
        if self.cap not in CAPS:
            raise ValueError(f"cap must be one of {CAPS}, got {self.cap!r}")
        if not 0 < self.x_cap <= 1:
            raise ValueError(f"x_cap must lie in (0, 1], got {self.x_cap}")
        xs = np.linspace(0, self.x_cap, 257)
        a, _ = self.warp.evaluate(xs)
        if np.any(np.asarray(a) <= 0):
            raise ValueError(f"warp {self.warp.label} is not positive on (0, {self.x_cap}]")

    def with_cap(self, x_cap=None, cap=None) -> "ModeProblem":
        return replace(self, x_cap=self.x_cap if x_cap is None else x_cap,
                       cap=self.cap if cap is None else cap)

    def series(self, terms: int):
        """Taylor coefficients of p, W and of the density a^n."""
        a = PowerLogSeries(SCALAR, 0, tuple(self.warp.taylor(terms)))
        inv = series_inverse(a)
        k = np.arange(terms + 1)
        xda = PowerLogSeries(SCALAR, 0, tuple(k * np.asarray(a.plain, dtype=float)))
        ratio = np.asarray(series_mul(xda, inv).plain[: terms + 1], dtype=complex)
        p = -self.n * ratio
        p[0] += self.n
        W = np.zeros(terms + 1, dtype=complex)
        if self.mu:
            inv2 = np.asarray(series_mul(inv, inv).plain[: terms + 1], dtype=complex)
            W[2:] = self.mu * inv2[: terms - 1]
        if self.linear_potential and terms >= 1:
            W[1] += self.linear_potential
        dens = PowerLogSeries.constant(SCALAR, 1.0, terms)
        for _ in range(self.n):
            dens = series_mul(dens, a)
        return np.real_if_close(p), np.real_if_close(W), np.asarray(dens.plain[: terms + 1], dtype=complex)

    def pointwise(self, x):
        a, da = self.warp.evaluate(x)
        p = self.n * (1 - x * da / a)
        W = self.mu * x * x / (a * a) + self.linear_potential * x
        return p, W, a ** self.n


def _check_exceptional(s, n):
    d = 2 * s - n
    if abs(d - round(d.real)) <= HALF_INTEGER_TOL:
        raise ExceptionalPointError(s, n)


# --------------------------------------------------------------------------
# Frobenius solutions at x = 0
# --------------------------------------------------------------------------

@dataclass
class FrobeniusSolution:
    """x^exponent * sum_m coeffs[m] x^m  (+ log_factor * log(x) * partner(x))."""

    exponent: complex
    series: PowerLogSeries
    log_factor: complex = 0.0
    partner: "FrobeniusSolution | None" = None

    @property
    def coeffs(self):
        return np.asarray(self.series.plain, dtype=complex)

    def __call__(self, x):
        """Value and x d_x derivative at x > 0."""
        c = self.coeffs
        m = np.arange(c.size)
        e = self.exponent + m
        powers = x ** e
        u = np.sum(c * powers)
        du = np.sum(e * c * powers)
        if self.partner is not None and self.log_factor:
            v, dv = self.partner(x)
            u = u + self.log_factor * math.log(x) * v
            du = du + self.log_factor * (v + math.log(x) * dv)
        return u, du

    def tail(self, x, count=4):
        c = self.coeffs
        terms = np.abs(c * x ** np.arange(c.size))
        return float(np.sum(terms[-count:]) / max(np.sum(terms), 1e-300))

    def residual(self, problem: ModeProblem, s, x):
        """Relative ODE residual of the truncated series at x."""
        c = self.coeffs
        e = self.exponent + np.arange(c.size)
        pw = c * x ** e
        u, du, d2u = np.sum(pw), np.sum(e * pw), np.sum(e * e * pw)
        p, W, _ = problem.pointwise(x)
        q = s * (problem.n - s)
        parts = (-d2u, p * du, (W - q) * u)
        return float(abs(sum(parts)) / max(sum(abs(t) for t in parts), 1e-300))


def _recursion(p, W, n, s, rho, terms, forcing=None):
    q = s * (n - s)
    c = np.zeros(terms + 1, dtype=complex)
    c[0] = 1.0
    log_factor = 0.0
    for m in range(1, terms + 1):
        i = np.arange(1, m + 1)
        acc = np.dot(p[1 : m + 1] * (rho + m - i) + W[1 : m + 1], c[m - 1 :: -1])
        ind = -(rho + m) ** 2 + n * (rho + m) - q
        if forcing is not None and m >= forcing[0]:
            l, d = forcing
            if m == l:
                log_factor = acc / l  # c_l is free and set to zero
                continue
            acc = acc + log_factor * d[m - l]
        c[m] = -acc / ind
    return c, log_factor


@dataclass
class FrobeniusBasis:
    minus: FrobeniusSolution  # x^(n-s) (1 + ...)
    plus: FrobeniusSolution   # x^s (1 + ...)


def frobenius_basis(problem: ModeProblem, s, terms: int = SERIES_TERMS) -> FrobeniusBasis:
    """Series solutions x^(n-s)(1 + ...) and x^s(1 + ...) for 2s - n not an integer."""
    n = problem.n
    _check_exceptional(s, n)
    p, W, _ = problem.series(terms)
    cm, _ = _recursion(p, W, n, s, n - s, terms)
    cp, _ = _recursion(p, W, n, s, s, terms)
    return FrobeniusBasis(FrobeniusSolution(n - s, PowerLogSeries.from_coeffs(SCALAR, cm)),
                          FrobeniusSolution(s, PowerLogSeries.from_coeffs(SCALAR, cp)))


def log_solution(problem: ModeProblem, l: int, terms: int = SERIES_TERMS) -> FrobeniusSolution:
    """At s0 = (n + l)/2: x^(n-s0)(1 + ...) - 2 p_l log(x) x^s0 (1 + ...)."""
    n = problem.n
    s0 = (n + l) / 2
    p, W, _ = problem.series(terms)
    cp, _ = _recursion(p, W, n, s0, s0, terms)
    # (-2 x d_x + p) applied to the x^s0 solution, coefficient by coefficient
    j = np.arange(terms + 1)
    d = -2 * (s0 + j) * cp + np.convolve(p, cp)[: terms + 1]
    cm, K = _recursion(p, W, n, s0, n - s0, terms, forcing=(l, d))
    partner = FrobeniusSolution(s0, PowerLogSeries.from_coeffs(SCALAR, cp))
    return FrobeniusSolution(n - s0, PowerLogSeries.from_coeffs(SCALAR, cm), K, partner)


def formal_residue(problem: ModeProblem, l: int, terms: int = SERIES_TERMS) -> complex:
    """-p_l, read off the log coefficient at s0 = (n + l)/2."""
    return log_solution(problem, l, terms).log_factor / 2


# --------------------------------------------------------------------------
# the matched ODE solve
# --------------------------------------------------------------------------

@dataclass
class ModeSolution:
    s: complex
    S: complex
    kappa: complex  # physical solution = kappa * (integrated solution)
    x_match: float
    basis: FrobeniusBasis
    outer_energy: complex  # integral over [x_match, x_cap] of the energy density
    condition: float


def _choose_match(problem: ModeProblem, basis: FrobeniusBasis, s):
    x = min(0.5, problem.x_cap / 2)
    for _ in range(12):
        ok = all(sol.tail(x) <= TAIL_TOL and sol.residual(problem, s, x) <= MATCH_RESIDUAL_TOL
                 for sol in (basis.minus, basis.plus))
        if ok:
            return x
        x /= 2
    raise ScatteringError(f"Frobenius series does not converge at any x_match for s = {s} "
                          f"({problem.label})")


def _integrate_inward(problem: ModeProblem, s, x_match):
    n = problem.n
    q = s * (n - s)

    def rhs(t, y):
        x = math.exp(t)
        p, W, dens = problem.pointwise(x)
        u, ut = y[0], y[1]
        return [ut, p * ut + (W - q) * u, (ut * ut + (W - q) * u * u) * dens * x ** (-n)]

    y0 = [0.0, 1.0, 0.0] if problem.cap == "dirichlet" else [1.0, 0.0, 0.0]
    sol = solve_ivp(rhs, (math.log(problem.x_cap), math.log(x_match)), np.asarray(y0, dtype=complex),
                    method="DOP853", rtol=ODE_RTOL, atol=ODE_ATOL)
    if not sol.success:
        raise ScatteringError(f"ODE integration failed: {sol.message}")
    return sol.y[:, -1]


def solve_mode(problem: ModeProblem, s, terms: int = SERIES_TERMS) -> ModeSolution:
    s = complex(s)
    basis = frobenius_basis(problem, s, terms)
    xm = _choose_match(problem, basis, s)
    U, Ut, E = _integrate_inward(problem, s, xm)
    um, dum = basis.minus(xm)
    up, dup = basis.plus(xm)
    # kappa * U = u_minus + S u_plus, matched in value and x d_x derivative
    A = np.array([[up, -U], [dup, -Ut]])
    An = A / np.linalg.norm(A, axis=0)
    cond = float(np.linalg.cond(An))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise CollisionError(f"matching matrix condition {cond:.3g} at s = {s} ({problem.label}); "
                             "shift x_cap")
    S, kappa = np.linalg.solve(A, -np.array([um, dum]))
    # the inward integral runs from x_cap down to x_match
    return ModeSolution(s, complex(S), complex(kappa), xm, basis, complex(-E * kappa ** 2), cond)


def scattering_value(problem: ModeProblem, s) -> complex:
    return solve_mode(problem, s).S


# --------------------------------------------------------------------------
# the Yukawa model
# --------------------------------------------------------------------------

def _check_half_integer(s):
    if abs(2 * s - round((2 * s).real)) <= 2 * HALF_INTEGER_TOL:
        raise ValueError(f"s = {s} is within {HALF_INTEGER_TOL} of a half-integer; "
                         "use residue extraction instead")


def yukawa_coefficient(sign: int, j: int, s) -> complex:
    """b_j^(+-)(s) = 1 / (j! Gamma(+-2s + j + 1))."""
    s = complex(s)
    arg = sign * 2 * (s.real if s.imag == 0 else s) + j + 1
    return complex(rgamma(j + 1.0) * rgamma(arg))


def yukawa_series(sign: int, s, x: float, rel_tol: float = 1e-16, max_terms: int = 500) -> complex:
    """G_(+-)(x, s) = x^(+-s) sum_j b_j^(+-)(s) x^j, summed until terms drop below rel_tol."""
    s = complex(s)
    total = 0j
    for j in range(max_terms):
        term = yukawa_coefficient(sign, j, s) * x ** j
        total += term
        if j > 2 and abs(term) <= rel_tol * abs(total):
            break
    else:
        raise ScatteringError("Yukawa series did not converge")
    return x ** (sign * s) * total


def yukawa_S(s) -> complex:
    """S(s) = -G_-(1, s) b_0^+(s) / (G_+(1, s) b_0^-(s))."""
    s = complex(s)
    _check_half_integer(s)
    return -(yukawa_series(-1, s, 1.0) * yukawa_coefficient(1, 0, s)
             / (yukawa_series(1, s, 1.0) * yukawa_coefficient(-1, 0, s)))


@dataclass(frozen=True)
class YukawaModel:
    """H + s^2 = -(x d_x)^2 + x + s^2 on (0, 1] with u(1) = 0."""

    def problem(self) -> ModeProblem:
        return ModeProblem(n=0, warp=Warp.identity(), linear_potential=1.0, x_cap=1.0,
                           cap="dirichlet", label="yukawa")


# --------------------------------------------------------------------------
# warped collars
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CollarModel:
    """x^-2 (a(x)^2 h + dx^2) on (0, x_cap] x M for an Einstein or flat base (M, h)."""

    base: EinsteinModel
    warp: Warp
    x_cap: float = 1.0
    cap: str = "dirichlet"

    @property
    def n(self):
        return self.base.n

    @classmethod
    def flat(cls, n: int, x_cap: float = 1.0, cap: str = "dirichlet", warp: Warp | None = None):
        return cls(EinsteinModel.flat_torus(n), warp or Warp.identity(), x_cap, cap)

    @classmethod
    def einstein(cls, n: int, lam: float = 1.0, x_cap: float = 1.0, cap: str = "dirichlet"):
        base = EinsteinModel.round_sphere(n) if lam == 1.0 else EinsteinModel(n, lam, 1.0)
        return cls(base, Warp.einstein(lam), x_cap, cap)

    def mode_eigenvalue(self, mode) -> float:
        if np.ndim(mode) == 0:
            return float(mode)
        return float(np.dot(mode, mode))

    def mode_label(self, mode) -> str:
        if np.ndim(mode) == 0:
            return f"mu={float(mode):g}"
        return "xi=" + ",".join(str(int(k)) for k in mode)

    def problem(self, mode=0.0) -> ModeProblem:
        return ModeProblem(self.n, self.warp, self.mode_eigenvalue(mode), 0.0, self.x_cap, self.cap,
                           self.mode_label(mode), self.base.volume)

    def jet(self, order: int):
        """FG jet h_x = a(x)^2 h for the gjms-q recursion."""
        return jet_from_warp(self.base, self.warp.taylor(order), order)


# --------------------------------------------------------------------------
# contour integrals
# --------------------------------------------------------------------------

@dataclass
class ResidueRecord:
    s0: complex
    residue: complex
    radius: float
    nodes: int
    stable: bool | None
    label: str = ""
    estimates: list = field(default_factory=list)

    def as_dict(self):
        return {"s0": self.s0, "residue": self.residue, "radius": self.radius, "nodes": self.nodes,
                "stable": self.stable, "mode": self.label}


def _contour(fn, s0, radius, nodes, tol, max_nodes, weight):
    """Trapezoidal mean of weight(theta) * fn(s) on |s - s0| = radius, doubling nodes."""
    cache = {}

    def values(N):
        for k in range(N):
            key = (k * (max_nodes // N)) % max_nodes
            if key not in cache:
                cache[key] = None
        todo = [k for k in sorted(cache) if cache[k] is None]
        pts = [s0 + radius * np.exp(2j * np.pi * k / max_nodes) for k in todo]
        for k, v in zip(todo, ordered_map(fn, pts)):
            cache[k] = v
        keys = [(k * (max_nodes // N)) % max_nodes for k in range(N)]
        th = np.array([2 * np.pi * k / max_nodes for k in keys])
        vals = np.array([cache[k] for k in keys])
        return np.mean(weight(th) * vals), float(np.max(np.abs(vals)))

    estimates = []
    N = nodes
    prev, _ = values(N)
    estimates.append((N, prev))
    while 2 * N <= max_nodes:
        N *= 2
        cur, vmax = values(N)
        estimates.append((N, cur))
        scale = max(abs(cur), radius * vmax)
        if abs(cur - prev) <= tol * scale:
            return cur, N, estimates
        prev = cur
    raise ScatteringError(f"contour integral around {s0} did not converge: {estimates}")


def residue_extract(problem: ModeProblem, s0, radius: float = CONTOUR_RADIUS, nodes: int = CONTOUR_NODES,
                    tol: float = CONTOUR_TOL, check_cap: bool = False) -> ResidueRecord:
    """(1/2 pi i) of the contour integral of S around s0.

    With ``check_cap`` the residue is recomputed with x_cap moved to 0.75 x_cap;
    disagreement flags contamination by an eigenvalue pole of the capped problem.
    """
    s0 = complex(s0)
    if radius >= 0.5:
        raise ValueError("the contour must stay clear of neighbouring exceptional points")
    weight = lambda th: radius * np.exp(1j * th)

    def run(prob):
        return _contour(lambda s: scattering_value(prob, s), s0, radius, nodes, tol, CONTOUR_MAX_NODES, weight)

    res, N, est = run(problem)
    stable = None
    if check_cap:
        other, _, _ = run(problem.with_cap(0.75 * problem.x_cap))
        stable = bool(abs(other - res) <= CAP_STABILITY_TOL * max(abs(res), 1.0))
    return ResidueRecord(s0, complex(res), radius, N, stable, problem.label, est)


def continuous_value(problem: ModeProblem, s0, radius: float = CONTOUR_RADIUS, nodes: int = CONTOUR_NODES,
                     tol: float = CONTOUR_TOL) -> complex:
    """S(s0) at a removable point, as the contour mean of S."""
    val, _, _ = _contour(lambda s: scattering_value(problem, s), complex(s0), radius, nodes, tol,
                         CONTOUR_MAX_NODES, lambda th: np.ones_like(th))
    return complex(val)


def s_of_n_one(model: CollarModel, radius: float = CONTOUR_RADIUS) -> complex:
    """S(n)1: the zero mode with a Neumann cap, continued through s = n."""
    return continuous_value(model.problem(0.0).with_cap(cap="neumann"), model.n, radius)


# --------------------------------------------------------------------------
# Green's identities
# --------------------------------------------------------------------------

def _septic_step(t):
    t = np.clip(t, 0.0, 1.0)
    return t ** 4 * (35 - 84 * t + 70 * t ** 2 - 20 * t ** 3)


def _septic_step_derivs(t):
    d1 = 140 * t ** 3 * (1 - t) ** 3
    d2 = 420 * t ** 2 * (1 - t) ** 2 * (1 - 2 * t)
    return d1, d2


def _gauss(a, b, count=96, pieces=4):
    x, w = np.polynomial.legendre.leggauss(count)
    edges = np.linspace(a, b, pieces + 1)
    xs, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        xs.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
        ws.append(0.5 * (hi - lo) * w)
    return np.concatenate(xs), np.concatenate(ws)


@dataclass
class PairingReport:
    s: complex
    lhs: complex
    rhs: complex
    residual: float


def pairing_check(problem: ModeProblem, s, data1=(1.0, None), data2=(0.7, -0.4j)) -> PairingReport:
    """Check int (u1 conj r2 - r1 conj u2) dv_g = (2s - n) int (f1 conj f2 - g1 conj g2) dv_h.

    u_i = psi (f_i x^(n-s)(1+...) + g_i x^s(1+...)) with a cutoff psi equal to 1
    near x = 0 and 0 beyond x_match; ``g = None`` means "use S(s)".
    """
    s = complex(s)
    n = problem.n
    if abs((2 * s - n).real) > 1e-12:
        raise ValueError("the pairing formula is stated on Re s = n/2")
    sol = solve_mode(problem, s)
    data = []
    for f, g in (data1, data2):
        data.append((complex(f), sol.S if g is None else complex(g)))
    x1 = sol.x_match
    x0 = x1 / 4
    xs, ws = _gauss(x0, x1)
    lhs = 0j
    for x, w in zip(xs, ws):
        t = (x - x0) / (x1 - x0)
        psi = 1 - _septic_step(t)
        d1, d2 = _septic_step_derivs(t)
        dpsi, ddpsi = -d1 / (x1 - x0), -d2 / (x1 - x0) ** 2
        tpsi, ttpsi = x * dpsi, x * dpsi + x * x * ddpsi
        um, dum = sol.basis.minus(x)
        up, dup = sol.basis.plus(x)
        p, _, dens = problem.pointwise(x)
        vals = []
        for f, g in data:
            wv, dw = f * um + g * up, f * dum + g * dup
            r = -ttpsi * wv - 2 * tpsi * dw + p * tpsi * wv
            vals.append((psi * wv, r))
        (u1, r1), (u2, r2) = vals
        lhs += w * (u1 * np.conj(r2) - r1 * np.conj(u2)) * dens * x ** (-n - 1)
    lhs *= problem.volume
    (f1, g1), (f2, g2) = data
    rhs = (2 * s - n) * (f1 * np.conj(f2) - g1 * np.conj(g2)) * problem.volume
    scale = abs(2 * s - n) * (abs(f1 * f2) + abs(g1 * g2)) * problem.volume
    return PairingReport(s, complex(lhs), complex(rhs), float(abs(lhs - rhs) / scale))


def _pf_power_integral(coeffs, exponent0, x_match, scale):
    """pf of int_0^x_match sum_k coeffs[k] x^(exponent0 + k) dx."""
    total = 0j
    for k, c in enumerate(coeffs):
        e = exponent0 + k + 1
        if abs(e) < 1e-9:
            if abs(c) > 1e-10 * scale:
                raise ScatteringError(f"non-integrable x^-1 remainder (coefficient {c:.3g}); "
                                      "the exponents are wrong or 2s - n is an integer")
            continue
        total += c * x_match ** e / e
    return total


def pf_energy(problem: ModeProblem, s) -> tuple:
    """pf int [|du|^2 - s(n - s) u^2] dv_g for the physical mode solution u = x^(n-s)(1+...) + S x^s(1+...).

    Returns (energy, ModeSolution).  The collar near x = 0 is integrated term by
    term from the Frobenius expansions; the rest comes from the ODE.
    """
    s = complex(s)
    n = problem.n
    sol = solve_mode(problem, s)
    terms = sol.basis.minus.coeffs.size - 1
    _, W, dens = problem.series(terms)
    q = s * (n - s)

    def pieces(A, B):
        a, b = A.coeffs, B.coeffs
        ta = (A.exponent + np.arange(a.size)) * a
        tb = (B.exponent + np.arange(b.size)) * b
        cv = lambda u, v: np.convolve(u, v)[: terms + 1]
        inner = cv(ta, tb) + cv(W, cv(a, b)) - q * cv(a, b)
        return cv(inner, dens)

    S = sol.S
    mm, pp = sol.basis.minus, sol.basis.plus
    x = sol.x_match
    c_mm, c_mp, c_pp = pieces(mm, mm), pieces(mm, pp), pieces(pp, pp)
    scale = float(np.max(np.abs(c_mm))) + abs(S) * float(np.max(np.abs(c_mp)))
    inner = (_pf_power_integral(c_mm, 2 * mm.exponent - n - 1, x, scale)
             + 2 * S * _pf_power_integral(c_mp, mm.exponent + pp.exponent - n - 1, x, scale)
             + S * S * _pf_power_integral(c_pp, 2 * pp.exponent - n - 1, x, scale))
    return complex((inner + sol.outer_energy) * problem.volume), sol


@dataclass
class EnergyReport:
    s: float
    pf_energy: float
    minus_n_FG: float
    minus_n_GF: float
    residual: float
    symmetry: float


def energy_check(problem: ModeProblem, s) -> EnergyReport:
    """pf energy = -n int F1 G2 = -n int G1 F2 for u1 = u2 = the mode solution (F = 1, G = S)."""
    s = float(s)
    n = problem.n
    if s <= n / 2:
        raise ValueError("the energy identity needs real s > n/2")
    E, sol = pf_energy(problem, s)
    F, G = 1.0, sol.S
    fg = -n * F * G * problem.volume
    gf = -n * G * F * problem.volume
    scale = max(1.0, abs(fg))
    return EnergyReport(s, E.real, fg.real, gf.real, float(abs(E - fg) / scale), float(abs(fg - gf) / scale))


@dataclass
class VolumeLimit:
    s: list
    energies: list
    limit: float
    rates: list
    fit_degree: int


def volume_limit(model: CollarModel, levels: int = 6, delta0: float = 0.1, degree: int | None = None) -> VolumeLimit:
    """pf energy of the zero mode at s = n - delta0 2^-m, extrapolated to s = n.

    The zero mode uses a Neumann cap so the solution tends to the constant 1.
    The default fit interpolates all levels.  ``rates`` are successive ratios
    of distances to the limit (2 for linear convergence in n - s).
    """
    n = model.n
    prob = model.problem(0.0).with_cap(cap="neumann")
    deltas = [delta0 * 2.0 ** (-m) for m in range(levels)]
    energies = [e.real for e, _ in ordered_map(lambda d: pf_energy(prob, n - d), deltas)]
    degree = levels - 1 if degree is None else degree
    fit = np.polyfit(deltas, energies, degree)
    limit = float(np.polyval(fit, 0.0))
    err = [abs(e - limit) for e in energies]
    rates = [err[i] / err[i + 1] for i in range(len(err) - 1) if err[i + 1] > 0]
    return VolumeLimit([n - d for d in deltas], energies, limit, rates, degree)


# --------------------------------------------------------------------------
# sweeps
# --------------------------------------------------------------------------

@dataclass
class ModeScattering:
    label: str
    problem: ModeProblem
    samples: list = field(default_factory=list)  # (s, S)
    residues: list = field(default_factory=list)

    def sweep(self, s_values: Sequence):
        vals = ordered_map(lambda s: scattering_value(self.problem, s), list(s_values))
        self.samples.extend(zip(s_values, vals))
        return vals

    def residue(self, s0, **kw) -> ResidueRecord:
        rec = residue_extract(self.problem, s0, **kw)
        self.residues.append(rec)
        return rec


def flat_closed_form(n: int, k: float, s) -> complex:
    """Half-space limit 2^(n-2s) Gamma(n/2 - s) / Gamma(s - n/2) k^(2s - n)."""
    s = complex(s)
    return complex(2 ** (n - 2 * s) * gamma(n / 2 - s) / gamma(s - n / 2) * k ** (2 * s - n))
