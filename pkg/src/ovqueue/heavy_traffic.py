"""Heavy-traffic limit parameters for all three queue models.

The scaled stationary queue length (1-rho) Q converges, as the load tends
to 1, to an exponential law whose mean is computed here three ways:

* generic modulated queues: numerically, from the second derivative at
  z = 1 of the determinant alpha(z) of the balance-equation matrix at the
  critically-scaled model, divided by 2 tau pi.mu;
* resampled models: the closed form
  sigma^2 = (Var L - 2 Cov + Var M) (2/q) + 2 E[M], mean sigma^2 / (2 E[M]);
* the renewal-clock analogue replaces 2/q by E[xi^2]/E[xi] and doubles as
  the variance parameter of the reflected-Brownian-motion process limit.

For the endogenous M/G/1 model the embedded-chain limit has mean
(1/2) E[L^2] E[S^2] and the geometric-time transform of the limiting RBM is
available in closed form.
"""

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.special import ndtr

from .errors import ModelSpecError, NumericalError, PoleError
from .models import MMQueueSpec

_FD_STEP = 1e-4
_FD_AGREEMENT = 1e-5


@dataclass(frozen=True)
class HtApprox:
    """Limiting-law descriptor: exponential mean, or RBM (drift, variance)."""

    kind: str
    mean: float | None = None
    drift: float | None = None
    variance: float | None = None
    source: str = ""

    def __post_init__(self):
        if self.kind not in ("exponential", "rbm"):
            raise ValueError(f"kind must be 'exponential' or 'rbm', got {self.kind!r}")
        if self.kind == "exponential":
            if self.mean is None or self.mean <= 0:
                raise ValueError("exponential approximation needs mean > 0")
        else:
            if self.variance is None or self.variance <= 0:
                raise ValueError("rbm approximation needs variance > 0")
            if self.drift is None or self.drift >= 0:
                raise ValueError("rbm approximation needs drift < 0")

    @property
    def stationary_mean(self):
        if self.kind == "exponential":
            return self.mean
        return self.variance / (2.0 * abs(self.drift))


# ---------------------------------------------------------------------------
# determinant derivatives at z = 1
# ---------------------------------------------------------------------------

def _alpha_matrix(spec, z):
    lam, mu = spec.lambdas, spec.mus
    return np.diag(lam * (z - 1.0) + mu * (1.0 / z - 1.0)) + spec.generator.q.T


def _poly_coeffs(spec):
    """Coefficients of P(z) = z^d det A(z), a polynomial of degree <= 2d.

    Each row of A(z) times z is a quadratic in z, so evaluating the
    determinant on a power-of-two grid of unit-circle points and applying
    one forward FFT recovers the coefficients exactly.
    """
    lam, mu = spec.lambdas, spec.mus
    qt = spec.generator.q.T
    d = spec.d
    n = 1
    while n < 2 * d + 1:
        n *= 2
    vals = np.empty(n, dtype=complex)
    for j in range(n):
        z = np.exp(2j * np.pi * j / n)
        vals[j] = np.linalg.det(np.diag(lam * (z * z - z) + mu * (1.0 - z)) + z * qt)
    return (np.fft.fft(vals) / n).real


def alpha_derivatives_at_one(spec: MMQueueSpec):
    """(alpha(1), alpha'(1), alpha''(1)) from the exact polynomial form."""
    d = spec.d
    c = _poly_coeffs(spec)
    p0 = P.polyval(1.0, c)
    p1 = P.polyval(1.0, P.polyder(c))
    p2 = P.polyval(1.0, P.polyder(c, 2))
    alpha0 = p0
    alpha1 = p1 - d * p0
    alpha2 = p2 - 2.0 * d * p1 + d * (d + 1.0) * p0
    return alpha0, alpha1, alpha2


def _alpha_pp_finite_diff(spec, h=_FD_STEP):
    """Validation route: central second difference plus one Richardson level."""
    def alpha(z):
        return np.linalg.det(_alpha_matrix(spec, z))

    def second_diff(hh):
        return (alpha(1.0 + hh) - 2.0 * alpha(1.0) + alpha(1.0 - hh)) / hh**2

    return (4.0 * second_diff(h / 2.0) - second_diff(h)) / 3.0


# ---------------------------------------------------------------------------
# the three exponential-limit routes
# ---------------------------------------------------------------------------

def ht_mean_modulated(spec: MMQueueSpec) -> HtApprox:
    """Exponential limit mean for a general modulated queue, numerically.

    The arrival vector is first scaled uniformly to criticality (the result
    depends only on mu and the generator).  alpha''(1) from the polynomial
    route is cross-validated against finite differences.
    """
    pi = spec.generator.pi
    pimu = float(pi @ spec.mus)
    if pimu <= 0:
        raise ModelSpecError("mean service rate pi.mu must be > 0")
    if float(pi @ spec.lambdas) <= 0:
        raise ModelSpecError("cannot scale a zero arrival vector to criticality")
    tau = spec.generator.tau
    if abs(tau) < 1e-12:
        raise NumericalError("tau is numerically 0; background chain not irreducible")
    critical = spec.scaled_arrivals(pimu / float(pi @ spec.lambdas))
    _, _, alpha_pp = alpha_derivatives_at_one(critical)
    alpha_pp_fd = _alpha_pp_finite_diff(critical)
    if abs(alpha_pp - alpha_pp_fd) > _FD_AGREEMENT * max(1.0, abs(alpha_pp)):
        raise NumericalError(
            f"alpha''(1) disagreement: polynomial {alpha_pp:.10g} vs "
            f"finite-difference {alpha_pp_fd:.10g}")
    mean = alpha_pp / (2.0 * tau * pimu)
    return HtApprox("exponential", mean=mean, source="modulated-determinant")


def ht_mean_resampled(law, q, rescale_to_critical=True) -> HtApprox:
    """Closed-form exponential limit mean for exponential-clock resampling.

    Accepts anything exposing mean/variance/covariance of the rate pair
    (finite laws and general moment holders).  With rescale_to_critical the
    arrival component is scaled so E[L] = E[M] first (variances pick up the
    square of the factor); without it the formula is evaluated at the law as
    given, which is the pre-limit form used for tail approximations.
    """
    if q <= 0:
        raise ModelSpecError("resampling rate q must be > 0")
    if law.mean_service <= 0:
        raise ModelSpecError("mean service rate must be > 0")
    if rescale_to_critical:
        law = law.scaled_to_critical()
    em = law.mean_service
    sigma_sq = ((law.var_arrival - 2.0 * law.cov + law.var_service) * (2.0 / q)
                + 2.0 * em)
    return HtApprox("exponential", mean=sigma_sq / (2.0 * em), drift=-em,
                    variance=sigma_sq, source="resampled-closed-form")


def ht_rbm_params_general(law, clock, rescale_to_critical=True) -> HtApprox:
    """RBM process-limit parameters for renewal-clock resampling.

    Drift -E[M]; variance (Var L - 2 Cov + Var M) E[xi^2]/E[xi] + 2 E[M].
    The stationary mean variance/(2 E[M]) is exposed on the result.
    """
    if law.mean_service <= 0:
        raise ModelSpecError("mean service rate must be > 0")
    if not (math.isfinite(clock.mean) and math.isfinite(clock.second_moment)):
        raise ModelSpecError("clock law needs finite first and second moments")
    if rescale_to_critical:
        law = law.scaled_to_critical()
    em = law.mean_service
    ratio = clock.second_moment / clock.mean
    sigma_sq = (law.var_arrival - 2.0 * law.cov + law.var_service) * ratio + 2.0 * em
    return HtApprox("rbm", drift=-em, variance=sigma_sq, source="renewal-rbm")


def ht_mean_endogenous(arrival_mean, arrival_second_moment,
                       service_mean, service_second_moment,
                       rescale_to_critical=True) -> HtApprox:
    """Exponential limit mean (1/2) E[L^2] E[S^2] for the endogenous model.

    The criticality convention is E[L] E[S] = 1 after uniform scaling of the
    arrival law; E[L^2] scales with the square of the factor.
    """
    if arrival_mean <= 0 or service_mean <= 0:
        raise ModelSpecError("arrival and service means must be > 0")
    if rescale_to_critical:
        c = 1.0 / (arrival_mean * service_mean)
        arrival_second_moment = arrival_second_moment * c * c
    mean = 0.5 * arrival_second_moment * service_second_moment
    return HtApprox("exponential", mean=mean, source="endogenous-embedded")


# ---------------------------------------------------------------------------
# transient transform and tail curves
# ---------------------------------------------------------------------------

def ht_transient_transform_endogenous(r, s, nu_dd1, kappa0_bar=None):
    """Geometric-time transform of the limiting reflected Brownian motion.

    With s0(r) = (-1 + sqrt(1 + 2 nu''(1) r)) / nu''(1), returns
    r / (r - s - nu''(1) s^2 / 2) * (k0(s) - (s/s0) k0(s0)), the Laplace
    transform of RBM with drift -1 and variance nu''(1) at an independent
    exponential(r) time, started from the law with transform k0 (default:
    mass at 0, k0 = 1).
    """
    if r <= 0:
        raise ValueError("r must be > 0")
    if s < 0:
        raise ValueError("s must be >= 0")
    if nu_dd1 <= 0:
        raise ValueError("nu''(1) must be > 0")
    if kappa0_bar is None:
        kappa0_bar = lambda _s: 1.0
    denom = r - s - 0.5 * nu_dd1 * s * s
    if abs(denom) < 1e-14 * max(1.0, r):
        raise PoleError(f"transform pole at (r={r}, s={s})")
    s0 = (-1.0 + math.sqrt(1.0 + 2.0 * nu_dd1 * r)) / nu_dd1
    return (r / denom) * (kappa0_bar(s) - (s / s0) * kappa0_bar(s0))


def exp_tail_curve(m, rho, n_max):
    """Exponential tail approximation exp(-n (1-rho)/m) for n = 0..n_max."""
    if not 0.0 < rho < 1.0:
        raise ModelSpecError(f"load must be in (0,1), got {rho}")
    if m <= 0:
        raise ModelSpecError("approximation mean must be > 0")
    n = np.arange(n_max + 1)
    return np.exp(-n * (1.0 - rho) / m)


def aligned_exp_tail(m, rho, n_max):
    """Exponential ccdf aligned with the integer tail P(Q > n) = P(Q >= n+1).

    Evaluating the continuous ccdf at the cell boundary n+1 removes the
    O(1-rho) offset a naive exp(-n (1-rho)/m) carries at small n.
    """
    return exp_tail_curve(m, rho, n_max + 1)[1:]


def rbm_transient_cdf(y, t, drift, variance, x0=0.0):
    """P(Q(t) <= y) for RBM with the given drift (< 0) and variance, from x0."""
    if t <= 0:
        raise ValueError("t must be > 0")
    y = np.asarray(y, dtype=float)
    sig = math.sqrt(variance * t)
    term1 = ndtr((y - x0 - drift * t) / sig)
    term2 = np.exp(2.0 * drift * y / variance) * ndtr((-y - x0 - drift * t) / sig)
    return np.where(y < 0, 0.0, term1 - term2)


def ht_tail_csv(curve, header=("n", "p_approx")):
    """CSV text with columns (n, p_approx), aligned with the exact emitter."""
    lines = [",".join(header)]
    for n, p in enumerate(np.asarray(curve)):
        lines.append(f"{n},{p:.12g}")
    return "\n".join(lines) + "\n"
