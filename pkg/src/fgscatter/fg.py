"""Order-by-order solution of the Poincare-metric normal form.

The metric is ``g = x^-2 (h_x + dx^2)`` with ``h_x = sum_j h^(j) x^j``.  The
residual ``Ric(g) + n g`` is assembled from the compactified metric
``gbar = dx^2 + h_x`` through

    Ric(g) + n g = Ric(gbar) + x^-1 [(n-1) Hess_gbar(x) + (Lap_gbar x) gbar],

which splits into tangential, normal and mixed blocks.  Every residual
coefficient reported here is for ``x^2 (Ric(g) + n g)``, i.e. components
normalized by g, so order j of the residual is where h^(j) first enters.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .chart import EinsteinModel, GridMetric
from .series import (FIELD, SCALAR, TENSOR, PowerLogSeries, SeriesError, series_bilinear,
                     series_diff, series_exp, series_inverse, series_log_unipotent, series_mul)

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-8
MAX_ODD_ORDER = 8


class FGError(RuntimeError):
    """Singular probe system or a residual that fails tolerance after solving."""


# --------------------------------------------------------------------------
# series helpers for multi-index arrays
# --------------------------------------------------------------------------

def stack_series(parts, axis=-1):
    """Stack log-free series of arrays along a new axis after aligning exponents."""
    alphas = [complex(p.alpha).real for p in parts]
    base = parts[int(np.argmin(alphas))].alpha
    offsets = [int(round(a - complex(base).real)) for a in alphas]
    top = min(o + p.order for o, p in zip(offsets, parts))
    coeffs = []
    for k in range(top + 1):
        coeffs.append(np.stack([p.coeff(complex(base) + k) for p in parts], axis=axis))
    return PowerLogSeries(FIELD, base, tuple(coeffs))


def _einsum_op(spec):
    return lambda a, b: np.einsum(spec, a, b)


# batched-matmul forms of the hot Christoffel contractions
def _raise_first(ginv, first):
    """ginv^kl first_lij -> [..., k, i, j]."""
    d = first.shape[-1]
    out = ginv @ first.reshape(first.shape[:-2] + (d * d,))
    return out.reshape(first.shape)


def _trace_gamma(v, gam):
    """v_m gam^m_jk -> [..., j, k]."""
    d = gam.shape[-1]
    out = v[..., None, :] @ gam.reshape(gam.shape[:-2] + (d * d,))
    return out.reshape(gam.shape[:-3] + (d, d))


def _gamma_gamma(a, b):
    """a^i_km b^m_ij -> [..., j, k]."""
    d = a.shape[-1]
    lead = a.shape[:-3]
    ak = np.swapaxes(a, -3, -2).reshape(lead + (d, d * d))          # [k, (i, m)]
    bm = np.swapaxes(b, -3, -2).reshape(lead + (d * d, d))          # [(i, m), j]
    return np.swapaxes(ak @ bm, -1, -2)


def series_christoffel(G, Ginv, derivative, dim):
    """Gamma^k_ij series (layout ``[..., k, i, j]``) of a metric series ``G``.

    ``derivative(a, S)`` differentiates a series along coordinate ``a``; it
    may be spatial (coefficient-wise) or the series variable itself.
    """
    D = stack_series([derivative(a, G.map(np.asarray, FIELD)) for a in range(dim)], axis=-3)
    first = D.map(lambda c: 0.5 * (np.moveaxis(c, -1, -3) + np.moveaxis(np.swapaxes(c, -3, -2), -1, -3)
                                   - c))
    return series_bilinear(Ginv.map(np.asarray, FIELD), first, _raise_first, FIELD)


def series_ricci(G, derivative, dim, Ginv=None):
    """Ricci series of a metric series; returns ``(christoffel, ricci)``."""
    if Ginv is None:
        Ginv = series_inverse(G)
    gam = series_christoffel(G, Ginv, derivative, dim)
    term1 = None
    for i in range(dim):
        t = derivative(i, gam.map(lambda c, i=i: c[..., i, :, :]))
        term1 = t if term1 is None else term1 + t
    trace = gam.map(lambda c: np.einsum("...iij->...j", c))
    dtrace = stack_series([derivative(k, trace) for k in range(dim)], axis=-1)
    term3 = series_bilinear(trace, gam, _trace_gamma, FIELD)
    term4 = series_bilinear(gam, gam, _gamma_gamma, FIELD)
    ric = term1 - dtrace + term3 - term4
    ric = ric.map(lambda c: 0.5 * (c + np.swapaxes(c, -1, -2)), TENSOR)
    return gam, ric


# --------------------------------------------------------------------------
# geometry backends
# --------------------------------------------------------------------------

class GridBackend:
    """Jets of grid tensors over a torus chart."""

    tensor_algebra = TENSOR
    field_algebra = FIELD

    def __init__(self, h: GridMetric, frozen: bool = False):
        self.h = h
        self.n = h.n
        self.chart = h.chart
        self.is_frozen = frozen

    def frozen(self):
        """Copy that treats h as locally constant (no spatial derivatives).

        The order-j response of the residual to a coordinate-constant h^(j)
        is pointwise algebraic in h: Ricci and Codazzi contributions of
        x^j h^(j) only enter at orders >= j + 1.  Probing this copy gives the
        same affine map at a fraction of the cost.
        """
        return GridBackend(self.h, frozen=True)

    @property
    def base(self):
        return self.h.components

    def zero_tensor(self):
        return np.zeros_like(self.h.components)

    def trace(self, mixed):
        return np.trace(mixed, axis1=-2, axis2=-1)

    def field_times_tensor(self, f, t):
        return np.asarray(f)[..., None, None] * t

    def spatial(self, a, S):
        return S.map(lambda c: self.chart.diff(c, a))

    def ricci(self, H, Hinv):
        if self.is_frozen:
            return None, H.map(np.zeros_like)
        return series_ricci(H, self.spatial, self.n, Ginv=Hinv)

    def codazzi(self, H1, Hinv, trH1, gam):
        """1/2 (div_h K - d trK) with K = d_x h_x, as a vector series [..., i]."""
        if self.is_frozen:
            return None
        n = self.n
        K = H1.map(np.asarray, FIELD)
        dK = stack_series([self.spatial(l, K) for l in range(n)], axis=-3)  # [..., l, k, i]
        def lower_first(g, k):  # g^m_lk K_mi -> [..., l, k, i]
            d = k.shape[-1]
            flat = np.swapaxes(g.reshape(g.shape[:-2] + (d * d,)), -1, -2)
            return (flat @ k).reshape(g.shape)

        def lower_second(g, k):  # g^m_li K_km -> [..., l, k, i]
            d = k.shape[-1]
            flat = np.swapaxes(g.reshape(g.shape[:-2] + (d * d,)), -1, -2)
            return np.swapaxes((flat @ np.swapaxes(k, -1, -2)).reshape(g.shape), -1, -2)

        def contract(hinv, c):  # hinv^kl c_lki -> [..., i]
            d = hinv.shape[-1]
            return (hinv.reshape(hinv.shape[:-2] + (1, d * d)) @ c.reshape(c.shape[:-3] + (d * d, d)))[..., 0, :]

        c1 = series_bilinear(gam, K, lower_first, FIELD)
        c2 = series_bilinear(gam, K, lower_second, FIELD)
        cov = dK - c1 - c2
        div = series_bilinear(Hinv.map(np.asarray, FIELD), cov, contract, FIELD)
        dtr = stack_series([self.spatial(i, trH1) for i in range(n)], axis=-1)
        return (div - dtr).scale(0.5)

    def probe_basis(self):
        n = self.n
        basis = []
        for a in range(n):
            for b in range(a, n):
                e = np.zeros((n, n))
                e[a, b] = e[b, a] = 1.0
                basis.append(np.broadcast_to(e, self.h.components.shape))
        return basis

    def block_components(self, t):
        tij, txx = t
        iu = np.triu_indices(self.n)
        return np.concatenate([tij[..., iu[0], iu[1]], np.asarray(txx)[..., None]], axis=-1)

    def solve_pointwise(self, A, rhs, order):
        return _lstsq(A, rhs, order)

    def combine(self, u, basis):
        return sum(u[..., m, None, None] * e for m, e in enumerate(basis))

    def assemble(self, Eij, Exx, Exi):
        n = self.n

        def build(cij, cxx, cxi):
            out = np.zeros(cij.shape[:-2] + (n + 1, n + 1), dtype=np.result_type(cij, cxx))
            out[..., :n, :n] = cij
            out[..., n, n] = cxx
            if cxi is not None:
                out[..., :n, n] = cxi
                out[..., n, :n] = cxi
            return out

        parts = [Eij.map(np.asarray, FIELD), Exx.map(np.asarray, FIELD)]
        if Exi is not None:
            parts.append(Exi)
        base = parts[int(np.argmin([complex(p.alpha).real for p in parts]))].alpha
        top = min(int(round(complex(p.alpha).real - complex(base).real)) + p.order for p in parts)
        coeffs = []
        for k in range(top + 1):
            p = complex(base) + k
            cxi = parts[2].coeff(p) if Exi is not None else None
            coeffs.append(build(parts[0].coeff(p), parts[1].coeff(p), cxi))
        return PowerLogSeries(FIELD, base, tuple(coeffs))

    def integrate(self, f):
        return float(np.real(self.chart.integrate(f, self.h.sqrt_det)))

    def hinv(self):
        return self.h.inverse

    def left_inverse_times(self, t):
        return self.h.inverse @ t


class EinsteinBackend:
    """Jets of the form a(x) h on an Einstein model; tensors are h-multiples."""

    tensor_algebra = SCALAR
    field_algebra = SCALAR

    def __init__(self, model: EinsteinModel):
        self.model = model
        self.n = model.n

    base = 1.0

    def frozen(self):
        return self

    def zero_tensor(self):
        return 0.0

    def trace(self, mixed):
        return self.n * mixed

    def field_times_tensor(self, f, t):
        return f * t

    def ricci(self, H, Hinv):
        ric = (self.n - 1) * self.model.lam
        return None, PowerLogSeries.constant(SCALAR, ric, H.order)

    def codazzi(self, H1, Hinv, trH1, gam):
        return None

    def probe_basis(self):
        return [1.0]

    def block_components(self, t):
        return np.array([t[0], t[1]])

    def solve_pointwise(self, A, rhs, order):
        return _lstsq(A, rhs, order)

    def combine(self, u, basis):
        return float(np.real(u[0]))

    def assemble(self, Eij, Exx, Exi):
        parts = [Eij, Exx]
        base = min(complex(p.alpha).real for p in parts)
        top = min(int(round(complex(p.alpha).real - base)) + p.order for p in parts)
        coeffs = [np.array([[p.coeff(base + k) for p in parts]]) for k in range(top + 1)]
        return PowerLogSeries(FIELD, base, tuple(coeffs))

    def integrate(self, f):
        return float(np.real(f)) * self.model.volume

    def left_inverse_times(self, t):
        return t


def _lstsq(A, rhs, order):
    """Batched least squares for the (consistent) stacked probe system."""
    U, sig, Vt = np.linalg.svd(A, full_matrices=False)
    cond = sig[..., 0] / np.maximum(sig[..., -1], 1e-300)
    if not np.all(np.isfinite(cond)) or np.max(cond) > 1e10:
        where = np.unravel_index(int(np.argmax(np.where(np.isfinite(cond), cond, np.inf))),
                                 np.shape(cond))
        raise FGError(f"probe matrix singular at order {order}, grid index {where}")
    coef = np.einsum("...ki,...k->...i", U, rhs) / sig
    return np.einsum("...ij,...i->...j", Vt, coef)


def make_backend(h):
    if isinstance(h, (GridBackend, EinsteinBackend)):
        return h
    if isinstance(h, GridMetric):
        return GridBackend(h)
    if isinstance(h, EinsteinModel):
        return EinsteinBackend(h)
    raise TypeError(f"unsupported base metric {type(h).__name__}")


# --------------------------------------------------------------------------
# the expansion and its residual
# --------------------------------------------------------------------------

@dataclass
class FGResidual:
    """Residual ``x^2 (Ric(g) + n g)`` and its g-trace, both with base exponent 0."""

    components: PowerLogSeries
    trace: PowerLogSeries
    block: PowerLogSeries
    normal: PowerLogSeries

    def norm(self, j) -> float:
        return float(np.max(np.abs(self.components.coeff(j))))

    def block_coeff(self, j):
        """Tangential and normal coefficients at order j (probe targets)."""
        return self.block.coeff(j), self.normal.coeff(j)

    def trace_norm(self, j) -> float:
        return float(np.max(np.abs(self.trace.coeff(j))))


@dataclass(eq=False)
class FGExpansion:
    backend: object
    order: int
    coeffs: list
    trace_top: object = None
    metadata: dict = field(default_factory=dict)
    residual_norms: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.backend.n

    def hx_series(self, order=None) -> PowerLogSeries:
        order = self.order if order is None else order
        if order > self.order:
            raise SeriesError(f"order {order} exceeds jet order {self.order}")
        return PowerLogSeries(self.backend.tensor_algebra, 0, tuple(self.coeffs[: order + 1]))

    def coefficient(self, j):
        return self.coeffs[j]

    def export(self) -> dict:
        """Structured record of per-order components and residual norms."""
        out = {"n": self.n, "order": self.order, "coefficients": {},
               "residual_norms": {str(k): v for k, v in self.residual_norms.items()},
               "metadata": dict(self.metadata)}
        for j, c in enumerate(self.coeffs):
            if j == 0:
                continue
            arr = np.asarray(c)
            out["coefficients"][str(j)] = float(np.max(np.abs(arr))) if arr.ndim else float(arr)
        if self.trace_top is not None:
            t = np.asarray(self.trace_top)
            out["trace_top_sup"] = float(np.max(np.abs(t)))
        return out


def _residual_from_series(backend, H):
    n = backend.n
    alg_t, alg_f = backend.tensor_algebra, backend.field_algebra
    Hinv = series_inverse(H)
    H1 = series_diff(H)
    H2 = series_diff(H1)
    trace = lambda S: S.map(backend.trace, alg_f)
    trH1 = trace(series_mul(Hinv, H1))
    ftt = lambda f, t: series_bilinear(f, t, backend.field_times_tensor, alg_t)
    gam, ric = backend.ricci(H, Hinv)

    # tangential block
    e_ij = (ric - H2.scale(0.5)
            + series_mul(series_mul(H1, Hinv), H1).scale(0.5)
            - ftt(trH1, H1).scale(0.25)
            + (H1.scale((n - 1) / 2) + ftt(trH1, H).scale(0.5)).shift(-1))
    # normal block
    mixed = series_mul(Hinv, H1)
    e_xx = (trace(series_mul(Hinv, H2)).scale(-0.5)
            + trace(series_mul(mixed, mixed)).scale(0.25)
            + trH1.shift(-1).scale(0.5))
    e_xi = backend.codazzi(H1, Hinv, trH1, gam)
    # g-normalized residual and the g-trace
    comps = backend.assemble(e_ij, e_xx, e_xi).shift(2)
    tr = (e_xx + trace(series_mul(Hinv, e_ij))).shift(2)
    return FGResidual(comps, tr, e_ij.shift(2), e_xx.shift(2))


def einstein_residual(jet: FGExpansion, order=None) -> FGResidual:
    """Residual series of ``x^2 (Ric(g) + n g)`` through the requested order."""
    order = jet.order if order is None else order
    if order > jet.order:
        raise SeriesError(f"residual order {order} exceeds jet order {jet.order}")
    return _residual_from_series(jet.backend, jet.hx_series(order))


def _jet_with(backend, coeffs, j, value):
    cs = list(coeffs[:j]) + [value]
    return PowerLogSeries(backend.tensor_algebra, 0, tuple(cs))


def _probe(frozen, j, tensor, take):
    """Linear response at order j of the residual to h^(j) = tensor."""
    zero = frozen.zero_tensor()
    lower = [frozen.base] + [zero] * (j - 1)
    on = _residual_from_series(frozen, _jet_with(frozen, lower, j, tensor))
    off = _residual_from_series(frozen, _jet_with(frozen, lower, j, zero))
    return take(on) - take(off)


def _check_order(n, order):
    if order < 0:
        raise ValueError("order must be non-negative")
    if n % 2 == 0 and order > n:
        raise ValueError(f"for even n = {n} only orders <= n are determined")
    if n % 2 == 1 and order > MAX_ODD_ORDER:
        raise ValueError(f"order {order} exceeds the maximum {MAX_ODD_ORDER} for odd n")


def solve_fg(h, order: int, tol: float = RESIDUAL_TOL) -> FGExpansion:
    """Solve for the even jet h^(2), h^(4), ... by pointwise probing.

    For even n the top order only fixes the trace; the trace-free part of
    h^(n) is set to zero and recorded in the metadata.
    """
    backend = make_backend(h)
    n = backend.n
    _check_order(n, order)
    coeffs = [backend.base]
    zero = backend.zero_tensor()
    norms = {}
    trace_top = None
    meta = {}
    basis = backend.probe_basis()
    frozen = backend.frozen()
    for j in range(1, order + 1):
        if j % 2 == 1:
            coeffs.append(zero)
            continue
        if n % 2 == 0 and j == n:
            t0 = _residual_from_series(backend, _jet_with(backend, coeffs, j, zero)).trace.coeff(j)
            slope = _probe(frozen, j, backend.base, lambda r: r.trace.coeff(j))
            if np.min(np.abs(slope)) < 1e-12:
                raise FGError("trace condition at order n is degenerate")
            tau = -t0 / slope
            value = backend.field_times_tensor(tau, backend.base) if np.ndim(tau) else tau * backend.base
            coeffs.append(value)
            trace_top = n * tau
            meta["trace_free_top"] = "zero"
            meta["trace_top_representative"] = "tau * h"
        else:
            b = backend.block_components(
                _residual_from_series(backend, _jet_with(backend, coeffs, j, zero)).block_coeff(j))
            take = lambda r: backend.block_components(r.block_coeff(j))
            A = np.stack([_probe(frozen, j, e, take) for e in basis], axis=-1)
            u = backend.solve_pointwise(A, -b, j)
            coeffs.append(backend.combine(np.real_if_close(u), basis))
        log.debug("solved order %d", j)
    jet = FGExpansion(backend, order, coeffs, trace_top, meta)
    _record_and_check(jet, tol)
    return jet


def _record_and_check(jet, tol):
    n = jet.n
    res = einstein_residual(jet)
    for j in range(jet.order + 1):
        jet.residual_norms[j] = res.norm(j)
    if n % 2 == 0 and jet.order >= n:
        jet.residual_norms["trace_top"] = res.trace_norm(n)
    bad = []
    for j in range(jet.order + 1):
        if n % 2 == 0 and j >= n:
            continue
        if jet.residual_norms[j] > tol:
            bad.append(j)
    if "trace_top" in jet.residual_norms and jet.residual_norms["trace_top"] > tol:
        bad.append("trace_top")
    if bad:
        raise FGError(f"residual fails tolerance {tol:g} at orders {bad}: "
                      f"{ {k: jet.residual_norms[k] for k in bad} }")


def einstein_warp(model, order: int, tol: float = 1e-10) -> FGExpansion:
    """Jet of (1 - lam x^2/4)^2 h on an Einstein base; residual-checked."""
    backend = make_backend(model)
    if isinstance(backend, EinsteinBackend):
        lam = backend.model.lam
    else:
        raise TypeError("einstein_warp needs an Einstein model base")
    base = backend.base
    poly = [1.0, 0.0, -lam / 2, 0.0, lam ** 2 / 16]
    coeffs = [(poly[j] if j < len(poly) else 0.0) * base for j in range(order + 1)]
    jet = FGExpansion(backend, order, coeffs, metadata={"closed_form": "einstein_warp"})
    res = einstein_residual(jet)
    for j in range(order + 1):
        jet.residual_norms[j] = res.norm(j)
    worst = max(jet.residual_norms.values())
    if worst > tol:
        raise FGError(f"Einstein warp residual {worst:.3e} exceeds {tol:g}")
    if backend.n % 2 == 0 and order >= backend.n:
        jet.trace_top = backend.n * poly[backend.n] if backend.n < len(poly) else 0.0
    return jet


def jet_from_warp(model, warp_coeffs, order=None) -> FGExpansion:
    """Jet of a(x)^2 h for a warp polynomial a (not residual-checked)."""
    backend = make_backend(model)
    a = PowerLogSeries.from_coeffs(SCALAR, [float(c) for c in warp_coeffs])
    order = a.order if order is None else order
    pad = list(a.plain) + [0.0] * max(0, order + 1 - len(a.plain))
    a = PowerLogSeries(SCALAR, 0, tuple(pad[: order + 1]))
    sq = series_mul(a, a)
    coeffs = [float(np.real(c)) * backend.base for c in sq.plain]
    return FGExpansion(backend, order, coeffs, metadata={"closed_form": "warp"})


# --------------------------------------------------------------------------
# volume expansion
# --------------------------------------------------------------------------

@dataclass
class VolumeExpansion:
    coefficients: dict
    series: PowerLogSeries
    L: float | None

    def __getitem__(self, j):
        return self.coefficients[j]


def volume_series(jet: FGExpansion, order=None) -> PowerLogSeries:
    """(det h_x / det h)^(1/2) as an x-series (field or scalar coefficients)."""
    backend = jet.backend
    H = jet.hx_series(order)
    M = H.map(backend.left_inverse_times)
    logm = series_log_unipotent(M)
    tr = logm.map(backend.trace, backend.field_algebra)
    return series_exp(tr.scale(0.5))


def volume_expansion(jet: FGExpansion) -> VolumeExpansion:
    n = jet.n
    if jet.order < n and n % 2 == 0:
        raise ValueError(f"volume expansion needs jet order >= n = {n}")
    v = volume_series(jet)
    coeffs = {}
    for j in range(2, jet.order + 1, 2):
        c = v.coeff(j)
        coeffs[j] = np.real(c) if np.iscomplexobj(c) else c
    L = jet.backend.integrate(coeffs[n]) if n % 2 == 0 else None
    return VolumeExpansion(coeffs, v, L)
