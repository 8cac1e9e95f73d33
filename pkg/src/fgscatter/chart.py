"""Periodic torus charts, spectral calculus and the curvature suite.

Fields are numpy arrays of the chart shape; symmetric 2-tensors carry two
trailing matrix axes, ``shape = chart.shape + (n, n)``.  The Laplacian is
the positive one, ``Delta = -div grad``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class ChartError(ValueError):
    """Invalid chart, field shape or non positive-definite metric."""


@dataclass(frozen=True)
class TorusChart:
    n: int
    resolution: tuple
    periods: tuple = None

    def __post_init__(self):
        if not 1 <= self.n <= 4:
            raise ChartError(f"dimension must be 1..4, got {self.n}")
        res = tuple(int(r) for r in np.broadcast_to(self.resolution, (self.n,)))
        for r in res:
            if r < 8 or r & (r - 1):
                raise ChartError(f"resolution {r} must be a power of two >= 8")
        object.__setattr__(self, "resolution", res)
        per = self.periods
        if per is None:
            per = (2 * math.pi,) * self.n
        object.__setattr__(self, "periods", tuple(float(p) for p in np.broadcast_to(per, (self.n,))))

    @classmethod
    def cube(cls, n: int, points: int):
        return cls(n, (points,) * n)

    @property
    def shape(self) -> tuple:
        return self.resolution

    @cached_property
    def coords(self) -> tuple:
        axes = [np.arange(r) * (p / r) for r, p in zip(self.resolution, self.periods)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    @cached_property
    def _wavenumbers(self) -> tuple:
        ks = []
        for r, p in zip(self.resolution, self.periods):
            k = np.fft.fftfreq(r, d=1.0 / r) * (2 * math.pi / p)
            ks.append(k)
        return tuple(ks)

    @property
    def cell_volume(self) -> float:
        return float(np.prod([p / r for r, p in zip(self.resolution, self.periods)]))

    def _check(self, f):
        if tuple(np.shape(f)[: self.n]) != self.shape:
            raise ChartError(f"field shape {np.shape(f)} does not conform to chart {self.shape}")

    def diff(self, f, axis: int, order: int = 1):
        """Spectral derivative along a chart axis (trailing axes untouched)."""
        if not 0 <= axis < self.n:
            raise ChartError(f"axis {axis} out of range for an {self.n}-torus")
        self._check(f)
        f = np.asarray(f)
        k = self._wavenumbers[axis]
        factor = (1j * k) ** order
        if order % 2 == 1:
            factor = factor.copy()
            factor[self.resolution[axis] // 2] = 0.0  # Nyquist mode of odd derivatives
        shape = [1] * f.ndim
        shape[axis] = -1
        out = np.fft.ifft(np.fft.fft(f, axis=axis) * factor.reshape(shape), axis=axis)
        return out.real if np.isrealobj(f) else out

    def grad(self, f):
        """Coordinate gradient, components on a new trailing axis."""
        return np.stack([self.diff(f, a) for a in range(self.n)], axis=-1)

    def div(self, v):
        """Coordinate divergence sum_i d_i v^i of a trailing-axis vector field."""
        return sum(self.diff(v[..., a], a) for a in range(self.n))

    def integrate(self, f, density=None):
        """Trapezoidal (periodic) integral of f against an optional density."""
        self._check(f)
        g = f if density is None else f * density
        return np.sum(g) * self.cell_volume

    def fourier_mode(self, xi):
        xi = np.asarray(xi, dtype=float)
        phase = sum(k * y for k, y in zip(xi, self.coords))
        return np.exp(1j * phase)


# --------------------------------------------------------------------------
# metrics and curvature
# --------------------------------------------------------------------------

def _sym(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


@dataclass(frozen=True, eq=False)
class GridMetric:
    chart: TorusChart
    components: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.components, dtype=float)
        n = self.chart.n
        if c.shape != self.chart.shape + (n, n):
            raise ChartError(f"metric shape {c.shape} does not conform to chart")
        if not np.all(np.isfinite(c)):
            raise ChartError("metric has non-finite entries")
        c = _sym(c)
        eig = np.linalg.eigvalsh(c)
        if np.min(eig) <= 0:
            where = np.unravel_index(np.argmin(eig.min(axis=-1)), self.chart.shape)
            raise ChartError(f"metric is not positive definite at grid index {where}")
        object.__setattr__(self, "components", c)

    @property
    def n(self):
        return self.chart.n

    @classmethod
    def flat(cls, chart):
        return cls(chart, np.broadcast_to(np.eye(chart.n), chart.shape + (chart.n, chart.n)).copy())

    @cached_property
    def inverse(self):
        return _sym(np.linalg.inv(self.components))

    @cached_property
    def sqrt_det(self):
        return np.sqrt(np.linalg.det(self.components))

    def volume(self) -> float:
        return float(self.chart.integrate(self.sqrt_det))


def conformal_rescale(h: GridMetric, upsilon) -> GridMetric:
    """The metric e^(2 upsilon) h."""
    return GridMetric(h.chart, np.exp(2 * np.asarray(upsilon))[..., None, None] * h.components)


def christoffel(h: GridMetric):
    """Gamma^k_ij with array layout ``[..., k, i, j]``."""
    ch = h.chart
    dh = np.stack([ch.diff(h.components, a) for a in range(ch.n)], axis=-3)  # [..., a, i, j]
    first = 0.5 * (np.einsum("...ijl->...lij", dh) + np.einsum("...jil->...lij", dh)
                   - np.einsum("...lij->...lij", dh))
    return np.einsum("...kl,...lij->...kij", h.inverse, first)


def ricci_from_christoffel(chart: TorusChart, gam):
    """R_jk = d_i G^i_jk - d_k G^i_ij + G^i_im G^m_jk - G^i_km G^m_ij."""
    n = chart.n
    term1 = sum(chart.diff(gam[..., i, :, :], i) for i in range(n))
    trace = np.einsum("...iij->...j", gam)
    dtrace = np.stack([chart.diff(trace, k) for k in range(n)], axis=-1)  # [..., j, k]
    term3 = np.einsum("...m,...mjk->...jk", trace, gam)
    term4 = np.einsum("...ikm,...mij->...jk", gam, gam)
    return _sym(term1 - dtrace + term3 - term4)


@dataclass(eq=False)
class CurvaturePack:
    """Curvature quantities of a grid metric (or Einstein model scalars)."""

    metric: object
    christoffel: np.ndarray | None
    ricci: np.ndarray
    scalar: np.ndarray
    J: np.ndarray
    schouten: np.ndarray | None
    T: np.ndarray | None
    schouten_norm2: np.ndarray | None
    ricci_norm2: np.ndarray
    _riemann: np.ndarray | None = field(default=None, repr=False)

    @property
    def riemann(self):
        """R^l_ijk = d_i G^l_jk - d_j G^l_ik + G^l_im G^m_jk - G^l_jm G^m_ik."""
        if self._riemann is None:
            ch = self.metric.chart
            gam = self.christoffel
            n = ch.n
            d = np.stack([ch.diff(gam, a) for a in range(n)], axis=-4)  # [..., a, l, j, k]
            r = (np.einsum("...iljk->...lijk", d) - np.einsum("...jlik->...lijk", d)
                 + np.einsum("...lim,...mjk->...lijk", gam, gam)
                 - np.einsum("...ljm,...mik->...lijk", gam, gam))
            self._riemann = r
        return self._riemann


def curvature_pack(h: GridMetric) -> CurvaturePack:
    n = h.n
    gam = christoffel(h)
    ric = ricci_from_christoffel(h.chart, gam)
    hinv = h.inverse
    scal = np.einsum("...ij,...ij->...", hinv, ric)
    ric_up = hinv @ ric @ hinv
    ric2 = np.einsum("...ij,...ij->...", ric_up, ric)
    if n >= 2:
        J = scal / (2 * (n - 1))
    else:
        J = np.zeros_like(scal)
    if n > 2:
        P = (ric - J[..., None, None] * h.components) / (n - 2)
        T = (n - 2) * J[..., None, None] * h.components - 4 * P
        P2 = np.einsum("...ij,...ij->...", hinv @ P @ hinv, P)
    else:
        P = T = P2 = None
    return CurvaturePack(h, gam, ric, scal, J, P, T, P2, ric2)


def laplace_beltrami(h: GridMetric, f):
    """Positive Laplacian -|h|^(-1/2) d_i(|h|^(1/2) h^ij d_j f)."""
    ch = h.chart
    flux = np.einsum("...ij,...j->...i", h.inverse * h.sqrt_det[..., None, None], ch.grad(f))
    return -ch.div(flux) / h.sqrt_det


def divergence_form(h: GridMetric, tensor_up, f):
    """-|h|^(-1/2) d_i(|h|^(1/2) A^ij d_j f) for a contravariant 2-tensor A."""
    ch = h.chart
    flux = np.einsum("...ij,...j->...i", tensor_up * h.sqrt_det[..., None, None], ch.grad(f))
    return -ch.div(flux) / h.sqrt_det


def integrate(h: GridMetric, f):
    """Integral of f against dv_h."""
    return h.chart.integrate(f, h.sqrt_det)


def inner(h: GridMetric, f, g):
    """L^2(dv_h) pairing <f, g> (no complex conjugation)."""
    return integrate(h, f * g)


def generic_metric(chart: TorusChart, amplitude: float = 0.05, seed: int = 0) -> GridMetric:
    """delta + amplitude * q with q symmetric and band-limited to |xi_a| <= 1.

    The perturbation mixes independent modes in every component, so the
    result is neither flat nor conformally flat (for n >= 3).
    """
    rng = np.random.default_rng(seed)
    n = chart.n
    modes = [m for m in np.ndindex(*(3,) * n)]
    q = np.zeros(chart.shape + (n, n))
    for i in range(n):
        for j in range(i, n):
            comp = np.zeros(chart.shape)
            for m in modes:
                xi = np.array(m) - 1
                if not xi.any():
                    continue
                if rng.random() < 0.35:
                    phase = sum(k * y for k, y in zip(xi, chart.coords))
                    comp += rng.uniform(-1, 1) * np.cos(phase + rng.uniform(0, 2 * math.pi))
            q[..., i, j] = comp
            q[..., j, i] = comp
    q /= max(np.max(np.abs(q)), 1e-300)
    return GridMetric(chart, np.eye(n) + amplitude * q)


# --------------------------------------------------------------------------
# Einstein models (exact per-eigenvalue backend)
# --------------------------------------------------------------------------

def sphere_volume(n: int) -> float:
    return 2 * math.pi ** ((n + 1) / 2) / math.gamma((n + 1) / 2)


@dataclass(frozen=True)
class EinsteinModel:
    """Compact Einstein manifold with Ric = (n-1) lam h, known only spectrally.

    Tensors built from the metric are scalar multiples of h; operators act on
    a Laplace eigenfunction through polynomials in the eigenvalue mu.
    """

    n: int
    lam: float
    volume: float

    @classmethod
    def round_sphere(cls, n: int):
        return cls(n, 1.0, sphere_volume(n))

    @classmethod
    def flat_torus(cls, n: int, period: float = 2 * math.pi):
        return cls(n, 0.0, period ** n)

    def curvature_pack(self) -> CurvaturePack:
        n, lam = self.n, self.lam
        ric = (n - 1) * lam
        scal = n * (n - 1) * lam
        J = scal / (2 * (n - 1)) if n > 1 else 0.0
        if n > 2:
            P = (ric - J) / (n - 2)
            T = (n - 2) * J - 4 * P
            P2 = n * P ** 2
        else:
            P = T = P2 = None
        return CurvaturePack(self, None, ric, scal, J, P, T, P2, n * ric ** 2)

    def torus_spectrum(self, xi) -> float:
        return float(np.dot(xi, xi))
