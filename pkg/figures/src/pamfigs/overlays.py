"""Closed-form reference curves drawn over empirical data.

The formulas are duplicated here on purpose: the renderer owns its own
copies and cross-checks them against the oracle value tables written by
the simulation package whenever such a table accompanies a figure, so a
silently drifted copy aborts the render instead of producing a wrong plot.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import OverlayMismatchError

ORACLE_TOL = 1e-12


def gumbel_cdf(x, theta, dim=1):
    """Gumbel law with location dim*ln(2*theta) and unit scale."""
    loc = dim * math.log(2.0 * theta)
    return np.exp(-np.exp(-(np.asarray(x, dtype=float) - loc)))


def laplace_cdf(x, theta):
    """Two-sided exponential law with location 0 and scale theta."""
    x = np.asarray(x, dtype=float)
    half = 0.5 * np.exp(-np.abs(x) / theta)
    return np.where(x < 0.0, half, 1.0 - half)


def tail_asymptote(s, dim=1):
    """Leading-order survival curve (d^d/d!) (ln s)^d / s^d for s > 1."""
    s = np.asarray(s, dtype=float)
    return (dim ** dim / math.gamma(dim + 1)) * np.log(s) ** dim / s ** dim


def check_against_oracle(name, computed, expected, tol=ORACLE_TOL):
    """Abort when a duplicated formula drifts from its oracle values."""
    computed = np.asarray(computed, dtype=float)
    expected = np.asarray(expected, dtype=float)
    keep = np.isfinite(expected)
    if not keep.any():
        return
    gap = np.abs(computed[keep] - expected[keep])
    worst = float(gap.max())
    if worst > tol:
        raise OverlayMismatchError(
            f"'{name}' overlay deviates from the oracle table by {worst:.3e} "
            f"(tolerance {tol:.1e}); refusing to draw it")
