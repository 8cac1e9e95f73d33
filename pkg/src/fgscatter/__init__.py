"""Poincare-metric expansions, GJMS operators, Q-curvature and model scattering."""

__version__ = "0.1.0"
