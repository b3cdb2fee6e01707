"""Moments of the cumulative arrival and potential-service processes under
renewal resampling, the large-deviations route to the same constants, and
the negative-correlation construction.

Writing g(u) = P(xi > u) for the clock survival and E[xi] for its mean, the
finite-horizon variance of the arrival count is

    Var A(t) = t E[L] + 2 Var(L) I(t),
    I(t) = (1/E[xi]) ( int_0^t (t u - u^2/2) g(u) du + (t^2/2) int_t^inf g ),

with the service analogue in Var(M) and the covariance in Cov(L, M).  Per
unit time these converge to E[L] + Var(L) E[xi^2]/E[xi], etc.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import ModelSpecError, NumericalError

_LD_STEP = 1e-4


# ---------------------------------------------------------------------------
# kernel integral and finite-t moments
# ---------------------------------------------------------------------------

def kernel_integral(clock, t):
    """I(t): double integral of the residual-life survival over the triangle.

    Closed form through the clock's exact partial moments (all supported
    families have them); see kernel_integral_quadrature for the adaptive
    fallback used to cross-check, and for survival functions supplied as
    plain callables.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0:
        return 0.0
    m0 = clock.partial_moment(0, t)
    m1 = clock.partial_moment(1, t)
    m2 = clock.partial_moment(2, t)
    mean = clock.mean
    return (t * m1 - 0.5 * m2 + 0.5 * t * t * (mean - m0)) / mean


def kernel_integral_quadrature(survival, mean, t, tol=1e-10, breakpoints=()):
    """I(t) by adaptive quadrature against an arbitrary survival function.

    breakpoints lists discontinuities of the survival (atoms of the clock);
    the tail integral is split there so step functions converge cleanly.
    """
    if t == 0:
        return 0.0
    inner_pts = [b for b in breakpoints if 0.0 < b < t] or None
    inner, err1 = integrate.quad(lambda u: (t * u - 0.5 * u * u) * survival(u),
                                 0.0, t, epsabs=tol, limit=400, points=inner_pts)
    cuts = sorted([b for b in breakpoints if b > t])
    tail = 0.0
    err2 = 0.0
    lo = t
    for b in cuts + [np.inf]:
        hi = min(b * (1 + 1e-12), b) if np.isfinite(b) else np.inf
        part, err = integrate.quad(survival, lo, hi, epsabs=tol, limit=400)
        tail += part
        err2 += err
        lo = hi
    if err1 + err2 > 100 * tol * max(1.0, inner + tail):
        raise NumericalError(f"kernel quadrature error estimate {err1 + err2:.3e}")
    return (inner + 0.5 * t * t * tail) / mean


@dataclass(frozen=True)
class FlowMoments:
    """Variance/covariance evaluators for the cumulative flows A(t), S(t)."""

    mean_arrival: float
    mean_service: float
    var_arrival: float
    var_service: float
    cov: float
    clock: object

    def kernel(self, t):
        return kernel_integral(self.clock, t)

    def var_arrival_at(self, t):
        return t * self.mean_arrival + 2.0 * self.var_arrival * self.kernel(t)

    def var_service_at(self, t):
        return t * self.mean_service + 2.0 * self.var_service * self.kernel(t)

    def cov_at(self, t):
        return 2.0 * self.cov * self.kernel(t)

    @property
    def moment_ratio(self):
        """E[xi^2]/E[xi] of the resampling clock."""
        return self.clock.second_moment / self.clock.mean

    @property
    def asymptotic_var_arrival(self):
        return self.mean_arrival + self.var_arrival * self.moment_ratio

    @property
    def asymptotic_var_service(self):
        return self.mean_service + self.var_service * self.moment_ratio

    @property
    def asymptotic_cov(self):
        return self.cov * self.moment_ratio

    def csv(self, t_grid):
        lines = ["t,vA,vS,cAS"]
        for t in t_grid:
            lines.append(f"{t:.12g},{self.var_arrival_at(t):.12g},"
                         f"{self.var_service_at(t):.12g},{self.cov_at(t):.12g}")
        return "\n".join(lines) + "\n"


def flow_moments(law, clock) -> FlowMoments:
    """Finite-t and asymptotic flow moments for a rate law and clock.

    law may be any object exposing mean/variance/covariance of the rate pair.
    """
    for name in ("mean_arrival", "mean_service", "var_arrival", "var_service", "cov"):
        if not math.isfinite(getattr(law, name)):
            raise ModelSpecError(f"law moment {name} must be finite")
    if not (math.isfinite(clock.mean) and math.isfinite(clock.second_moment)):
        raise ModelSpecError("clock needs finite first and second moments")
    return FlowMoments(law.mean_arrival, law.mean_service,
                       law.var_arrival, law.var_service, law.cov, clock)


# ---------------------------------------------------------------------------
# large-deviations route
# ---------------------------------------------------------------------------

def ld_variance_closed_form(law, clock, alpha):
    """Asymptotic Var[alpha A(t) + (1-alpha) S(t)]/t in closed form."""
    mix_var = (alpha**2 * law.var_arrival
               + (1.0 - alpha)**2 * law.var_service
               + 2.0 * alpha * (1.0 - alpha) * law.cov)
    ratio = clock.second_moment / clock.mean
    return ratio * mix_var + alpha**2 * law.mean_arrival + (1.0 - alpha)**2 * law.mean_service


@dataclass(frozen=True)
class LdAnalyzer:
    """Solves the zero-crossing of the per-cycle log-MGF for c_alpha(theta).

    Restricted to finite-support rate laws so every expectation is a finite
    sum; the clock enters through its MGF.
    """

    law: object  # RateLawFinite
    clock: object
    alpha: float

    def _args(self, theta):
        lam, mu = self.law.lambdas, self.law.mus
        return (lam * (math.exp(theta * self.alpha) - 1.0)
                + mu * (math.exp(theta * (1.0 - self.alpha)) - 1.0))

    def phi(self, c, theta):
        args = self._args(theta) - c * theta
        return float(self.law.pis @ np.array([self.clock.mgf(u) for u in args]))

    def _phi_c(self, c, theta):
        args = self._args(theta) - c * theta
        return float(self.law.pis @ np.array(
            [self.clock.mgf_prime(u) for u in args])) * (-theta)

    @property
    def c_at_zero(self):
        return (self.alpha * self.law.mean_arrival
                + (1.0 - self.alpha) * self.law.mean_service)

    def _mgf_upper(self):
        if self.clock.family == "exponential":
            return self.clock.params["rate"]
        if self.clock.family == "gamma":
            return self.clock.params["rate"]
        return math.inf

    def solve_c(self, theta):
        """c with phi(c, theta) = 1 by bracketed bisection plus Newton polish."""
        if theta == 0.0:
            return self.c_at_zero
        c0 = self.c_at_zero
        upper = self._mgf_upper()
        # keep every MGF argument strictly below the divergence point
        if math.isfinite(upper):
            bound = (float(np.max(self._args(theta))) - upper) / theta
            c_limit = bound + 1e-9 * max(1.0, abs(bound))
        else:
            c_limit = -math.inf if theta > 0 else math.inf

        def g(c):
            return self.phi(c, theta) - 1.0

        delta = 1e-3 * max(1.0, abs(c0))
        lo, hi = c0 - delta, c0 + delta
        if theta > 0:
            lo = max(lo, c_limit)
        else:
            hi = min(hi, c_limit)
        glo, ghi = g(lo), g(hi)
        for _ in range(80):
            if glo * ghi <= 0:
                break
            delta *= 4.0
            lo, hi = c0 - delta, c0 + delta
            if theta > 0:
                lo = max(lo, c_limit)
            else:
                hi = min(hi, c_limit)
            glo, ghi = g(lo), g(hi)
        else:
            raise NumericalError(
                f"could not bracket c_alpha({theta}); MGF domain too narrow")
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            gm = g(mid)
            if glo * gm <= 0:
                hi, ghi = mid, gm
            else:
                lo, glo = mid, gm
            if hi - lo < 1e-12 * max(1.0, abs(mid)):
                break
        c = 0.5 * (lo + hi)
        for _ in range(8):
            err = g(c)
            if abs(err) < 1e-13:
                break
            c -= err / self._phi_c(c, theta)
        if abs(g(c)) > 1e-13:
            raise NumericalError(f"Newton polish stalled at |phi-1| = {abs(g(c)):.3e}")
        return c

    def derivatives(self, h=_LD_STEP):
        """(c'(0), c''(0)) by five-point stencils through c(+-h), c(+-2h)."""
        c0 = self.c_at_zero
        c1, cm1 = self.solve_c(h), self.solve_c(-h)
        c2, cm2 = self.solve_c(2 * h), self.solve_c(-2 * h)
        d1 = (8.0 * (c1 - cm1) - (c2 - cm2)) / (12.0 * h)
        d2 = (16.0 * (c1 + cm1) - (c2 + cm2) - 30.0 * c0) / (12.0 * h * h)
        return d1, d2


@dataclass(frozen=True)
class LdResult:
    variance: float        # 2 c'(0): asymptotic variance per unit time
    third_cumulant: float  # 3 c''(0)
    c_prime: float
    c_dprime: float


def ld_variance(law, clock, alpha) -> LdResult:
    """Asymptotic variance (and third cumulant) of alpha A(t) + (1-alpha) S(t).

    Independent of the direct route: solves the per-cycle identity for
    c_alpha near 0 and finite-differences it.
    """
    if not hasattr(law, "pis"):
        raise ModelSpecError("ld_variance needs a finite-support rate law")
    analyzer = LdAnalyzer(law, clock, alpha)
    d1, d2 = analyzer.derivatives()
    return LdResult(2.0 * d1, 3.0 * d2, d1, d2)


# ---------------------------------------------------------------------------
# negative-correlation construction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NegativeCorrelationResult:
    """Joint finite law of (X, Y) with Y built to anti-correlate with X."""

    x: np.ndarray
    y: np.ndarray
    probs: np.ndarray
    correlation: float
    psi: float


def build_negatively_correlated(values, probs, s) -> NegativeCorrelationResult:
    """Pair a unit-mean finite law X with Y = (1 - X/s) 1{X <= s} / psi(s).

    psi(s) normalizes Y back to unit mean.  As s grows the correlation
    approaches -1 (Cov ~ -Var X / s while Var Y ~ Var X / s^2).
    """
    x = np.asarray(values, dtype=float)
    p = np.asarray(probs, dtype=float)
    if x.ndim != 1 or p.shape != x.shape or len(x) == 0:
        raise ModelSpecError("values/probs must be matching 1-d vectors")
    if np.any(x < 0) or np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ModelSpecError("need a nonnegative law with probs summing to 1")
    mean_x = float(p @ x)
    if abs(mean_x - 1.0) > 1e-9:
        raise ModelSpecError(f"X must have unit mean, got {mean_x!r}")
    var_x = float(p @ x**2) - mean_x**2
    if var_x <= 0:
        raise ModelSpecError("degenerate X has zero variance; correlation undefined")
    indicator = x <= s
    psi = float(p @ ((1.0 - x / s) * indicator))
    if psi <= 0:
        raise ModelSpecError(f"psi({s}) = {psi:.6g} <= 0; threshold s too small")
    y = (1.0 - x / s) * indicator / psi
    mean_y = float(p @ y)
    cov = float(p @ (x * y)) - mean_x * mean_y
    var_y = float(p @ y**2) - mean_y**2
    corr = cov / math.sqrt(var_x * var_y)
    return NegativeCorrelationResult(x, y, p, corr, psi)
