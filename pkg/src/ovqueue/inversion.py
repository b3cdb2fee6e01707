"""Numerical inversion of probability generating functions.

Evaluates the PGF on N equispaced points of a circle of given radius and
applies the discrete inverse transform (one FFT). The radius defaults to
slightly inside the unit circle, which dodges removable singularities at
z = 1; rational PGFs of stable models have no poles in the closed disk.
"""

import math

import numpy as np

from .errors import NumericalError


def pgf_circle_values(evaluator, n_points, radius):
    """Evaluate a PGF on the inversion circle, vectorized when possible."""
    z = radius * np.exp(2j * np.pi * np.arange(n_points) / n_points)
    try:
        vals = np.asarray(evaluator(z), dtype=complex)
        if vals.shape != z.shape:
            raise TypeError
    except (TypeError, ValueError):
        vals = np.array([evaluator(zk) for zk in z], dtype=complex)
    return vals


def invert_pgf(evaluator, n_max, radius=1.0 - 1e-9, n_points=None,
               neg_tol=1e-8):
    """Probabilities p_0..p_n_max from a PGF evaluator.

    Uses N = 2^ceil(log2(4 n_max)) circle points unless n_points is given.
    Small negative values (>= -neg_tol) are clipped to 0; anything more
    negative signals an invalid transform upstream and raises.
    """
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    if n_points is None:
        n_points = 2 ** max(3, math.ceil(math.log2(4 * max(n_max, 1))))
    if n_points <= n_max:
        raise ValueError("need more circle points than coefficients")
    vals = pgf_circle_values(evaluator, n_points, radius)
    coeffs = np.fft.fft(vals).real / n_points
    p = coeffs[:n_max + 1] / radius ** np.arange(n_max + 1)
    worst = p.min()
    if worst < -neg_tol:
        raise NumericalError(
            f"PGF inversion produced probability {worst:.3e} < -{neg_tol:.0e}; "
            "the transform is not a valid PGF")
    p = np.clip(p, 0.0, None)
    total = p.sum()
    if total > 1.0 + 1e-8:
        raise NumericalError(f"inverted probabilities sum to {total:.12f} > 1")
    return p
