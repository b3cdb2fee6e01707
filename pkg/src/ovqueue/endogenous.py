"""M/G/1 queue whose arrival rate is resampled at each service completion.

At departure epochs the queue satisfies Q_{n+1} = (Q_n - 1)^+ + N_{n+1}
with N the number of arrivals during one service, independent across steps.
Its PGF is nu(z) = E[sigma(Lambda (1-z))] with sigma the service LST; the
stationary PGF is kappa(z) = nu(z) (1-z) (1 - E[N]) / (nu(z) - z), and the
double transform of the chain at a shifted-geometric time admits a closed
form once the unique root z0(r) of z = (1-r) nu(z) in (0,1) is known.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import ModelSpecError, NumericalError
from .inversion import invert_pgf  # noqa: F401  (re-exported: owned interface)
from .models import EndogenousSpec, ScalarLaw, ServiceLaw


def _expect_over_arrival(arrival_law, f, tol=1e-10):
    """E[f(Lambda)] exactly over atoms, else by adaptive quadrature."""
    atoms = arrival_law.atoms()
    if atoms is not None:
        values, probs = atoms
        return sum(p * f(v) for v, p in zip(values, probs))
    dens = arrival_law.density
    sample = f(arrival_law.mean)
    if np.iscomplexobj(np.asarray(sample)):
        re, ere = integrate.quad(lambda u: (f(u) * dens(u)).real, 0.0, np.inf,
                                 epsabs=tol, limit=400)
        im, eim = integrate.quad(lambda u: (f(u) * dens(u)).imag, 0.0, np.inf,
                                 epsabs=tol, limit=400)
        err, val = ere + eim, re + 1j * im
    else:
        val, err = integrate.quad(lambda u: f(u) * dens(u), 0.0, np.inf,
                                  epsabs=tol, limit=400)
    if err > 1e-7 * max(1.0, abs(val)):
        raise NumericalError(f"offspring quadrature error estimate {err:.3e}")
    return val


def offspring_pgf(arrival_law: ScalarLaw, service: ServiceLaw, z):
    """nu(z) = E[sigma(Lambda (1 - z))] for |z| <= 1."""
    return _expect_over_arrival(arrival_law, lambda lam: service.lst(lam * (1.0 - z)))


def offspring_pgf_complement(arrival_law, service, z):
    """1 - nu(z), accurate near z = 1 (no cancellation)."""
    return _expect_over_arrival(
        arrival_law, lambda lam: service.one_minus_lst(lam * (1.0 - z)))


def offspring_pgf_prime(arrival_law, service, z):
    """nu'(z) = E[-Lambda sigma'(Lambda (1 - z))]."""
    return _expect_over_arrival(
        arrival_law, lambda lam: -lam * service.lst_prime(lam * (1.0 - z)))


@dataclass(frozen=True)
class EmbeddedChain:
    """Offspring PGF and stationary transform of the departure-epoch chain."""

    arrival_law: ScalarLaw
    service: ServiceLaw
    kappa0: object = None  # PGF of Q_0; None means point mass at 0

    @property
    def mean_offspring(self):
        """E[N] = E[Lambda] E[S]; equals the load rho."""
        return self.arrival_law.mean * self.service.mean

    @property
    def nu_dd1(self):
        """nu''(1) = E[Lambda^2] E[S^2]."""
        return self.arrival_law.second_moment * self.service.second_moment

    def nu(self, z):
        return offspring_pgf(self.arrival_law, self.service, z)

    def nu_complement(self, z):
        return offspring_pgf_complement(self.arrival_law, self.service, z)

    def nu_prime(self, z):
        return offspring_pgf_prime(self.arrival_law, self.service, z)

    def kappa0_value(self, z):
        return 1.0 if self.kappa0 is None else self.kappa0(z)

    def kappa(self, z):
        return stationary_pgf(self, z)

    def probabilities(self, n_max):
        """Stationary distribution by numerical inversion of kappa."""
        return invert_pgf(lambda z: stationary_pgf(self, z), n_max)


def make_embedded_chain(spec: EndogenousSpec, kappa0=None) -> EmbeddedChain:
    return EmbeddedChain(spec.arrival_law, spec.service, kappa0)


def point_mass_kappa0(level):
    """PGF of Q_0 = level (level 0 is the default of EmbeddedChain)."""
    if level < 0 or int(level) != level:
        raise ModelSpecError("initial level must be a nonnegative integer")
    return lambda z: z ** int(level)


def geometric_kappa0(p):
    """PGF (1-p)/(1-pz) of a geometric initial law on {0, 1, ...}."""
    if not 0.0 <= p < 1.0:
        raise ModelSpecError("geometric parameter must lie in [0, 1)")
    return lambda z: (1.0 - p) / (1.0 - p * z)


def stationary_pgf(chain: EmbeddedChain, z):
    """kappa(z) = nu(z) (1-z) (1 - E[N]) / (nu(z) - z) for the stable chain.

    Evaluated in the cancellation-free form (1-z) - (1-nu(z)) for the
    denominator, which stays accurate arbitrarily close to z = 1 (there the
    value tends to 1).
    """
    en = chain.mean_offspring
    if en >= 1.0:
        raise ModelSpecError(f"unstable chain (E[N] = {en:.4f} >= 1)")
    one_minus_z = 1.0 - z
    if abs(one_minus_z) < 1e-15:
        return 1.0
    w = chain.nu_complement(z)
    denom = one_minus_z - w
    nu_z = 1.0 - w
    return nu_z * one_minus_z * (1.0 - en) / denom


def geometric_root(chain: EmbeddedChain, r):
    """Unique root z0 in (0,1) of z = (1-r) nu(z): bisection plus Newton.

    The map z -> (1-r) nu(z) is increasing and convex with values in (0,1),
    so [0, 1] brackets the root.
    """
    if not 0.0 < r < 1.0:
        raise ModelSpecError("r must lie in (0,1)")

    def g(z):
        return z - (1.0 - r) * chain.nu(z)

    lo, hi = 0.0, 1.0
    glo = g(0.0)
    if glo >= 0.0:
        raise NumericalError("invalid offspring PGF: nu(0) <= 0")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if glo * gm <= 0:
            hi = mid
        else:
            lo, glo = mid, gm
        if hi - lo < 1e-13:
            break
    z0 = 0.5 * (lo + hi)
    for _ in range(2):
        z0 -= g(z0) / (1.0 - (1.0 - r) * chain.nu_prime(z0))
    if not 0.0 < z0 < 1.0 or abs(g(z0)) > 1e-12:
        raise NumericalError(f"z0({r}) solve failed (residual {abs(g(z0)):.3e})")
    return z0


@dataclass(frozen=True)
class GeometricTimeTransform:
    """K(r, z) = sum_n (1-r)^n r E[z^{Q_n}], a mixture of PGFs over the
    shifted-geometric horizon."""

    chain: EmbeddedChain
    r: float
    z0: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "z0", geometric_root(self.chain, self.r))

    def value(self, z):
        chain, r, z0 = self.chain, self.r, self.z0
        k0_at_root = chain.kappa0_value(z0)
        boundary = r * k0_at_root / (1.0 - z0)
        denom = z - (1.0 - r) * chain.nu(z)
        if abs(denom) < 1e-9:
            # removable singularity at z = z0: L'Hopital in z
            h = 1e-6
            dk0 = (chain.kappa0_value(z + h) - chain.kappa0_value(z - h)) / (2 * h)
            nu_z = chain.nu(z)
            dnum = (r * chain.kappa0_value(z) + r * z * dk0
                    - (1.0 - r) * boundary * (-nu_z + (1.0 - z) * chain.nu_prime(z)))
            dden = 1.0 - (1.0 - r) * chain.nu_prime(z)
            return dnum / dden
        num = (r * z * chain.kappa0_value(z)
               - (1.0 - r) * (1.0 - z) * chain.nu(z) * boundary)
        return num / denom


def geometric_time_transform(chain: EmbeddedChain, r, z):
    """K(r, z) for r, z in (0,1) (kappa0 defaults to a point mass at 0)."""
    if not 0.0 < z < 1.0:
        raise ModelSpecError("z must lie in (0,1)")
    return GeometricTimeTransform(chain, r).value(z)
