"""Shared, cached test geometries (generic torus metrics and their jets)."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .chart import GridMetric, TorusChart, conformal_rescale, generic_metric
from .fg import solve_fg

T4_POINTS = 16
T4_AMPLITUDE = 0.05
T2_POINTS = 64


@lru_cache(maxsize=None)
def t4_metric(seed: int = 0) -> GridMetric:
    return generic_metric(TorusChart.cube(4, T4_POINTS), T4_AMPLITUDE, seed)


@lru_cache(maxsize=None)
def t2_metric(seed: int = 0) -> GridMetric:
    return generic_metric(TorusChart.cube(2, T2_POINTS), 0.1, seed)


def sine_weight(chart: TorusChart, amplitude: float = 0.05):
    """The conformal factor amplitude * sin(y^1)."""
    return amplitude * np.sin(chart.coords[0])


@lru_cache(maxsize=None)
def t4_rescaled(seed: int = 0) -> GridMetric:
    h = t4_metric(seed)
    return conformal_rescale(h, sine_weight(h.chart))


@lru_cache(maxsize=None)
def t2_rescaled(seed: int = 0) -> GridMetric:
    h = t2_metric(seed)
    return conformal_rescale(h, sine_weight(h.chart))


@lru_cache(maxsize=None)
def jet_of(which: str, seed: int = 0):
    metric = {"t4": t4_metric, "t4_rescaled": t4_rescaled,
              "t2": t2_metric, "t2_rescaled": t2_rescaled}[which](seed)
    return solve_fg(metric, metric.n)


def band_limited(chart: TorusChart, rng: np.random.Generator, terms: int = 4, max_freq: int = 2):
    """A random trigonometric polynomial with frequencies in [-max_freq, max_freq]^n."""
    out = np.zeros(chart.shape)
    for _ in range(terms):
        xi = rng.integers(-max_freq, max_freq + 1, size=chart.n)
        out += rng.normal() * np.cos(sum(k * c for k, c in zip(xi, chart.coords)) + rng.random())
    return out
