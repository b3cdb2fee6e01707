"""Transient M/M/1 analysis at an exponential epoch and the exact stationary
PGF of the two-point resampled M/M/1 queue.

The queue with fixed rates (lambda, mu) observed at an independent
exponential(q) time is governed by the quadratic
F(z) = lambda z^2 - (lambda + mu + q) z + mu, whose smaller root x2 is the
busy-period LST E[exp(-q P)] when lambda < mu.  For a two-point rate law
the stationary PGF is a ratio of polynomials with two unknown constants
E[x2i^Q], pinned by the interior root of the denominator quartic D(z) and
by normalization.
"""

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import ModelSpecError, NumericalError
from .inversion import invert_pgf
from .models import RateLawFinite

_ROOT_IMAG_TOL = 1e-9
_ROOT_EDGE_TOL = 1e-9


@dataclass(frozen=True)
class TransientRoots:
    """Roots x1 >= x2 of F(z) = lambda z^2 - (lambda+mu+q) z + mu."""

    x1: float
    x2: float
    lam: float
    mu: float
    q: float

    @property
    def degenerate(self):
        """True when lambda = 0 (F linear, x1 flagged as +inf)."""
        return math.isinf(self.x1)

    def f_poly(self, z):
        return self.lam * z * z - (self.lam + self.mu + self.q) * z + self.mu


def quadratic_roots(lam, mu, q) -> TransientRoots:
    """Both roots of F, stabilized against cancellation.

    The larger root comes from the explicit formula (no cancellation: all
    terms positive); the smaller one from the Vieta product x1 x2 = mu/lambda.
    lambda = 0 degenerates to the linear case with single root mu/(mu+q).
    """
    if lam < 0 or mu < 0:
        raise ValueError("rates must be >= 0")
    if q <= 0:
        raise ValueError("q must be > 0")
    if lam == 0.0:
        return TransientRoots(math.inf, mu / (mu + q), lam, mu, q)
    b = lam + mu + q
    x1 = (b + math.sqrt(b * b - 4.0 * lam * mu)) / (2.0 * lam)
    x2 = mu / (lam * x1)
    return TransientRoots(x1, x2, lam, mu, q)


def transient_pgf_at_exp_epoch(i, lam, mu, q, z):
    """E[z^Q at an exp(q) epoch | Q_0 = i, rates (lambda, mu)].

    Valid for |z| <= 1.  z = 1 evaluates to exactly 1; z within 1e-9 of the
    root x2 of F is handled by the L'Hopital limit.
    """
    if i < 0 or int(i) != i:
        raise ValueError("initial queue length must be a nonnegative integer")
    roots = quadratic_roots(lam, mu, q)
    x2 = roots.x2
    fz = roots.f_poly(z)
    num = (1.0 - z) * x2 ** (i + 1) - (1.0 - x2) * z ** (i + 1)
    if abs(z - x2) < 1e-9:
        # both numerator and F vanish at x2
        dnum = -x2 ** (i + 1) - (1.0 - x2) * (i + 1) * z**i
        dfz = 2.0 * lam * z - (lam + mu + q)
        return q * dnum / ((1.0 - x2) * dfz)
    return q * num / ((1.0 - x2) * fz)


@dataclass(frozen=True)
class TwoPointSolution:
    """Stationary solution of the two-point resampled M/M/1 queue.

    u[i] = E[x2i^Q]; quartic holds D(z) ascending coefficients; cubic is D
    with the known root z = 1 deflated; z_star is the interior root of D.
    The PGF is evaluated in the deflated form -q N(z)/C(z), finite on the
    whole closed unit disk except the removable point z_star.
    """

    law: RateLawFinite
    q: float
    u: np.ndarray
    quartic: np.ndarray
    cubic: np.ndarray
    z_star: float
    _n_coef: np.ndarray

    @property
    def rho(self):
        return self.law.rho

    def pgf(self, z):
        z_arr = np.asarray(z)
        num = -self.q * P.polyval(z_arr, self._n_coef)
        den = P.polyval(z_arr, self.cubic)
        near = np.abs(z_arr - self.z_star) < 1e-9
        if np.any(near):
            # removable 0/0 at the interior root: L'Hopital
            dn = -self.q * P.polyval(z_arr, P.polyder(self._n_coef))
            dd = P.polyval(z_arr, P.polyder(self.cubic))
            out = np.where(near, dn / dd, num / np.where(near, 1.0, den))
        else:
            out = num / den
        out = np.asarray(out)
        return out[()] if out.ndim == 0 else out

    def probabilities(self, n_max, n_points=4096):
        """Invert the PGF on the unit circle (stable models: poles outside)."""
        return invert_pgf(self.pgf, n_max, radius=1.0, n_points=n_points)


def _deflate_at_one(coeffs):
    """Divide an ascending-coefficient polynomial by (z - 1)."""
    c = coeffs[::-1]  # descending
    out = np.empty(len(c) - 1)
    acc = 0.0
    for k in range(len(c) - 1):
        acc = c[k] + acc
        out[k] = acc
    remainder = c[-1] + acc
    return out[::-1].copy(), remainder


def solve_two_point_stationary(law: RateLawFinite, q) -> TwoPointSolution:
    """Exact stationary PGF for a two-atom rate law resampled at rate q.

    Builds the quartic D(z) = F1 F2 + q z (pi1 F2 + pi2 F1), deflates the
    known root z = 1, solves the residual cubic (companion-matrix roots),
    selects the unique root in (0,1), and pins the two unknowns E[x2i^Q]
    by the vanishing-numerator and normalization equations.
    """
    if law.d != 2:
        raise ModelSpecError("two-point solver needs exactly 2 atoms")
    if q <= 0:
        raise ModelSpecError("resampling rate q must be > 0")
    if not law.is_stable:
        raise ModelSpecError(
            f"unstable law (load {law.rho:.4f} >= 1); no stationary solution")
    lam, mu, pi = law.lambdas, law.mus, law.pis
    f_coeffs = [np.array([mu[i], -(lam[i] + mu[i] + q), lam[i]]) for i in range(2)]
    quartic = P.polyadd(P.polymul(f_coeffs[0], f_coeffs[1]),
                        P.polymul(np.array([0.0, q]),
                                  pi[0] * f_coeffs[1] + pi[1] * f_coeffs[0]))
    scale = np.max(np.abs(quartic))
    cubic, remainder = _deflate_at_one(quartic)
    if abs(remainder) > 1e-10 * scale:
        raise NumericalError(f"D(1) = {remainder:.3e}, expected 0")

    trimmed = np.trim_zeros(cubic, "b")  # lambda_i = 0 lowers the degree
    roots = np.roots(trimmed[::-1])
    interior = [r.real for r in roots
                if abs(r.imag) < _ROOT_IMAG_TOL
                and _ROOT_EDGE_TOL < r.real < 1.0 - _ROOT_EDGE_TOL]
    if len(interior) == 1:
        z_star = interior[0]
    elif not interior and min(mu) == 0.0:
        # a zero service atom moves the interior root to z = 0, where the
        # vanishing-numerator constraint holds automatically (x2i = 0)
        z_star = 0.0
    else:
        raise NumericalError(
            f"expected one root of D in (0,1), found {len(interior)} "
            f"(roots {np.round(roots, 6)}); model unstable or numerics failed")

    x2 = np.array([quadratic_roots(lam[i], mu[i], q).x2 for i in range(2)])
    a = pi * x2 / (1.0 - x2)
    # N(z) = a0 u0 F1(z) + a1 u1 F0(z); N(z*) = 0 and -q N(1) = D'(1)
    sysmat = np.array([
        [a[0] * P.polyval(z_star, f_coeffs[1]), a[1] * P.polyval(z_star, f_coeffs[0])],
        [q * q * a[0], q * q * a[1]],
    ])
    rhs = np.array([0.0, P.polyval(1.0, P.polyder(quartic))])
    cond = np.linalg.cond(sysmat)
    u, *_ = np.linalg.lstsq(sysmat, rhs, rcond=None)
    resid = np.max(np.abs(sysmat @ u - rhs))
    if resid > 1e-8 * max(1.0, np.max(np.abs(rhs))):
        raise NumericalError(
            f"boundary system unsolvable: residual {resid:.3e}, "
            f"condition number {cond:.3e}")

    n_coef = a[0] * u[0] * f_coeffs[1] + a[1] * u[1] * f_coeffs[0]
    return TwoPointSolution(law, q, u, quartic, cubic, z_star, n_coef)
