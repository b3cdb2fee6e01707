"""Domain types, validation, and the model-spec file format.

All types are immutable after validation and safe to share across threads.
Rates are per unit time; the time unit is implicit but consistent within a
spec file.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special
from scipy.sparse import csgraph, csr_matrix

from .errors import ModelSpecError

_FAMILIES = ("exponential", "deterministic", "gamma", "discrete")


# ---------------------------------------------------------------------------
# scalar law families (shared by clock, service, and arrival-rate laws)
# ---------------------------------------------------------------------------

def _family_moments(family, params):
    """Return (mean, second moment) for a nonnegative scalar family."""
    if family == "exponential":
        r = params["rate"]
        return 1.0 / r, 2.0 / r**2
    if family == "deterministic":
        v = params["value"]
        return v, v * v
    if family == "gamma":
        a, b = params["shape"], params["rate"]
        return a / b, a * (a + 1.0) / b**2
    if family == "discrete":
        v = np.asarray(params["values"], dtype=float)
        p = np.asarray(params["probs"], dtype=float)
        return float(p @ v), float(p @ v**2)
    raise ModelSpecError(f"unknown law family {family!r}")


def _validate_family(family, params):
    if family not in _FAMILIES:
        raise ModelSpecError(
            f"unknown law family {family!r}; expected one of {_FAMILIES}")
    required = {
        "exponential": {"rate"},
        "deterministic": {"value"},
        "gamma": {"shape", "rate"},
        "discrete": {"values", "probs"},
    }[family]
    if set(params) != required:
        raise ModelSpecError(
            f"{family} law requires params {sorted(required)}, got {sorted(params)}")
    if family == "exponential" and params["rate"] <= 0:
        raise ModelSpecError("exponential rate must be > 0")
    if family == "deterministic" and params["value"] < 0:
        raise ModelSpecError("deterministic value must be >= 0")
    if family == "gamma" and (params["shape"] <= 0 or params["rate"] <= 0):
        raise ModelSpecError("gamma shape and rate must be > 0")
    if family == "discrete":
        v = np.asarray(params["values"], dtype=float)
        p = np.asarray(params["probs"], dtype=float)
        if v.ndim != 1 or p.shape != v.shape or len(v) == 0:
            raise ModelSpecError("discrete law needs matching 1-d values/probs")
        if np.any(v < 0):
            raise ModelSpecError("discrete values must be >= 0")
        if np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ModelSpecError("discrete probs must be > 0 and sum to 1")
    return None


def _family_sample(family, params, rng, n):
    if family == "exponential":
        return rng.exponential(1.0 / params["rate"], size=n)
    if family == "deterministic":
        return np.full(n, float(params["value"]))
    if family == "gamma":
        return rng.gamma(params["shape"], 1.0 / params["rate"], size=n)
    v = np.asarray(params["values"], dtype=float)
    p = np.asarray(params["probs"], dtype=float)
    return rng.choice(v, size=n, p=p)


def _family_survival(family, params, u):
    u = np.asarray(u, dtype=float)
    if family == "exponential":
        return np.exp(-params["rate"] * u)
    if family == "deterministic":
        return np.where(u < params["value"], 1.0, 0.0)
    if family == "gamma":
        return special.gammaincc(params["shape"], params["rate"] * u)
    v = np.asarray(params["values"], dtype=float)
    p = np.asarray(params["probs"], dtype=float)
    return (np.less.outer(u, v) * p).sum(axis=-1)


@dataclass(frozen=True)
class ScalarLaw:
    """Nonnegative scalar law from one of the supported families.

    Used for arrival-rate laws and as marginals of general rate laws.
    """

    family: str
    params: dict

    def __post_init__(self):
        _validate_family(self.family, self.params)

    @property
    def mean(self):
        return _family_moments(self.family, self.params)[0]

    @property
    def second_moment(self):
        return _family_moments(self.family, self.params)[1]

    @property
    def var(self):
        m1, m2 = _family_moments(self.family, self.params)
        return max(m2 - m1 * m1, 0.0)

    def sample(self, rng, n):
        return _family_sample(self.family, self.params, rng, n)

    def density(self, u):
        """Density on (0, inf), or None for laws without one."""
        if self.family == "exponential":
            r = self.params["rate"]
            return r * np.exp(-r * np.asarray(u, dtype=float))
        if self.family == "gamma":
            a, b = self.params["shape"], self.params["rate"]
            u = np.asarray(u, dtype=float)
            return np.exp(a * np.log(b) + (a - 1) * np.log(u) - b * u
                          - special.gammaln(a))
        return None

    def atoms(self):
        """(values, probs) for purely atomic laws, else None."""
        if self.family == "deterministic":
            return np.array([self.params["value"]]), np.array([1.0])
        if self.family == "discrete":
            return (np.asarray(self.params["values"], dtype=float),
                    np.asarray(self.params["probs"], dtype=float))
        return None

    def scaled(self, c):
        """Law of c*X (c > 0)."""
        if self.family == "exponential":
            return ScalarLaw("exponential", {"rate": self.params["rate"] / c})
        if self.family == "deterministic":
            return ScalarLaw("deterministic", {"value": self.params["value"] * c})
        if self.family == "gamma":
            return ScalarLaw("gamma", {"shape": self.params["shape"],
                                       "rate": self.params["rate"] / c})
        return ScalarLaw("discrete", {
            "values": [v * c for v in self.params["values"]],
            "probs": list(self.params["probs"])})


@dataclass(frozen=True)
class ClockLaw:
    """Resampling-interval law with residual-life machinery.

    Both the mean and second moment must be finite (all supported families
    comply); the residual density P(xi > x)/E[xi] is checked to integrate
    to 1 within 1e-8 at construction.
    """

    family: str
    params: dict

    def __post_init__(self):
        _validate_family(self.family, self.params)
        if self.mean <= 0:
            raise ModelSpecError("clock law needs a strictly positive mean")
        self._check_residual_density()

    @property
    def mean(self):
        return _family_moments(self.family, self.params)[0]

    @property
    def second_moment(self):
        return _family_moments(self.family, self.params)[1]

    def survival(self, u):
        """G(u) = P(xi > u)."""
        return _family_survival(self.family, self.params, u)

    def partial_moment(self, k, t):
        """Integral of u^k * P(xi > u) over [0, t], exact per family."""
        if t <= 0:
            return 0.0
        if self.family == "exponential":
            d = self.params["rate"]
            e = math.exp(-d * t)
            if k == 0:
                return (1.0 - e) / d
            if k == 1:
                return (1.0 - e * (1.0 + d * t)) / d**2
            return (2.0 - e * (2.0 + 2.0 * d * t + (d * t) ** 2)) / d**3
        if self.family == "deterministic":
            s = min(t, self.params["value"])
            return s ** (k + 1) / (k + 1)
        if self.family == "gamma":
            a, b = self.params["shape"], self.params["rate"]
            # int_0^t u^k G(u) du = t^{k+1} G(t)/(k+1) + E[xi^{k+1} 1{xi<=t}]/(k+1)
            tail = t ** (k + 1) * special.gammaincc(a, b * t)
            fac = 1.0
            for j in range(k + 1):
                fac *= (a + j) / b
            trunc = fac * special.gammainc(a + k + 1, b * t)
            return (tail + trunc) / (k + 1)
        v = np.asarray(self.params["values"], dtype=float)
        p = np.asarray(self.params["probs"], dtype=float)
        return float((p * np.minimum(t, v) ** (k + 1)).sum() / (k + 1))

    def mgf(self, u):
        """E[exp(u * xi)]; raises on divergence."""
        if self.family == "exponential":
            d = self.params["rate"]
            if u >= d:
                raise ValueError(f"clock MGF diverges at {u} (rate {d})")
            return d / (d - u)
        if self.family == "deterministic":
            return math.exp(u * self.params["value"])
        if self.family == "gamma":
            a, b = self.params["shape"], self.params["rate"]
            if u >= b:
                raise ValueError(f"clock MGF diverges at {u} (rate {b})")
            return (1.0 - u / b) ** (-a)
        v = np.asarray(self.params["values"], dtype=float)
        p = np.asarray(self.params["probs"], dtype=float)
        return float(p @ np.exp(u * v))

    def mgf_prime(self, u):
        if self.family == "exponential":
            d = self.params["rate"]
            return d / (d - u) ** 2
        if self.family == "deterministic":
            a = self.params["value"]
            return a * math.exp(u * a)
        if self.family == "gamma":
            a, b = self.params["shape"], self.params["rate"]
            return (a / b) * (1.0 - u / b) ** (-a - 1)
        v = np.asarray(self.params["values"], dtype=float)
        p = np.asarray(self.params["probs"], dtype=float)
        return float(p @ (v * np.exp(u * v)))

    def sample(self, rng, n):
        return _family_sample(self.family, self.params, rng, n)

    def sample_residual(self, rng, n):
        """Stationary forward recurrence times: U times a length-biased draw."""
        u = rng.random(n)
        if self.family == "exponential":
            biased = rng.gamma(2.0, 1.0 / self.params["rate"], size=n)
        elif self.family == "deterministic":
            biased = np.full(n, float(self.params["value"]))
        elif self.family == "gamma":
            a, b = self.params["shape"], self.params["rate"]
            biased = rng.gamma(a + 1.0, 1.0 / b, size=n)
        else:
            v = np.asarray(self.params["values"], dtype=float)
            p = np.asarray(self.params["probs"], dtype=float)
            biased = rng.choice(v, size=n, p=p * v / (p @ v))
        return u * biased

    def _check_residual_density(self):
        if self.family in ("discrete", "deterministic"):
            # survival vanishes beyond the largest atom
            pts = (sorted(self.params["values"]) if self.family == "discrete"
                   else [self.params["value"]])
            total, _ = integrate.quad(lambda x: float(self.survival(x)),
                                      0.0, max(pts) + 1.0, points=pts, limit=200)
        else:
            total, _ = integrate.quad(lambda x: float(self.survival(x)),
                                      0.0, np.inf, limit=200)
        if abs(total / self.mean - 1.0) > 1e-8:
            raise ModelSpecError(
                f"residual density of {self.family} clock integrates to "
                f"{total / self.mean:.12f}, not 1")


@dataclass(frozen=True)
class ServiceLaw:
    """Service-time law with an LST evaluator sigma(s) = E[exp(-s S)]."""

    family: str
    params: dict

    def __post_init__(self):
        _validate_family(self.family, self.params)
        if abs(self.lst(0.0) - 1.0) > 1e-12:
            raise ModelSpecError("service LST must satisfy sigma(0) = 1")
        # one-sided O(h^2) difference keeps s >= 0
        h = 1e-5
        d0 = (-3.0 * self.lst(0.0) + 4.0 * self.lst(h) - self.lst(2 * h)) / (2 * h)
        if abs(-d0 - self.mean) > 1e-8 * max(1.0, self.mean):
            raise ModelSpecError(
                f"-sigma'(0) = {-d0:.12g} disagrees with E[S] = {self.mean:.12g}")

    @property
    def mean(self):
        return _family_moments(self.family, self.params)[0]

    @property
    def second_moment(self):
        return _family_moments(self.family, self.params)[1]

    def lst(self, s):
        if self.family == "exponential":
            r = self.params["rate"]
            return r / (r + s)
        if self.family == "deterministic":
            return np.exp(-s * self.params["value"])
        if self.family == "gamma":
            a, b = self.params["shape"], self.params["rate"]
            return (1.0 + s / b) ** (-a)
        v = np.asarray(self.params["values"], dtype=float)
        p = np.asarray(self.params["probs"], dtype=float)
        return np.asarray(np.exp(np.multiply.outer(-np.asarray(s), v)) @ p)

    def one_minus_lst(self, s):
        """1 - sigma(s) without cancellation for small s."""
        if self.family == "exponential":
            r = self.params["rate"]
            return s / (r + s)
        if self.family == "deterministic":
            return -np.expm1(-s * self.params["value"])
        if self.family == "gamma":
            a, b = self.params["shape"], self.params["rate"]
            return -np.expm1(-a * np.log1p(s / b))
        v = np.asarray(self.params["values"], dtype=float)
        p = np.asarray(self.params["probs"], dtype=float)
        return np.asarray(-np.expm1(np.multiply.outer(-np.asarray(s), v)) @ p)

    def lst_prime(self, s):
        """sigma'(s) = -E[S exp(-s S)]."""
        if self.family == "exponential":
            r = self.params["rate"]
            return -r / (r + s) ** 2
        if self.family == "deterministic":
            v = self.params["value"]
            return -v * np.exp(-s * v)
        if self.family == "gamma":
            a, b = self.params["shape"], self.params["rate"]
            return -(a / b) * (1.0 + s / b) ** (-a - 1.0)
        v = np.asarray(self.params["values"], dtype=float)
        p = np.asarray(self.params["probs"], dtype=float)
        return np.asarray(-(np.exp(np.multiply.outer(-np.asarray(s), v)) * v) @ p)

    def sample(self, rng, n):
        return _family_sample(self.family, self.params, rng, n)


# ---------------------------------------------------------------------------
# finite rate laws and background generators
# ---------------------------------------------------------------------------

def _frozen_array(values, dtype=float):
    a = np.array(values, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class RateLawFinite:
    """Finite-support joint law of the rate pair: atoms (lambda_i, mu_i, pi_i)."""

    lambdas: np.ndarray
    mus: np.ndarray
    pis: np.ndarray

    def __post_init__(self):
        lam = _frozen_array(self.lambdas)
        mu = _frozen_array(self.mus)
        pi = _frozen_array(self.pis)
        if not (lam.ndim == mu.ndim == pi.ndim == 1
                and len(lam) == len(mu) == len(pi) > 0):
            raise ModelSpecError("rate-law atoms must be matching 1-d vectors")
        if abs(pi.sum() - 1.0) > 1e-12:
            raise ModelSpecError(f"atom probabilities sum to {pi.sum()!r}, not 1")
        if np.any(pi <= 0):
            raise ModelSpecError("atoms with pi_i <= 0 are rejected (keep d unambiguous)")
        if np.any(lam < 0) or np.any(mu < 0):
            raise ModelSpecError("rates must be >= 0")
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "mus", mu)
        object.__setattr__(self, "pis", pi)

    @property
    def d(self):
        return len(self.pis)

    @property
    def mean_arrival(self):
        return float(self.pis @ self.lambdas)

    @property
    def mean_service(self):
        return float(self.pis @ self.mus)

    @property
    def var_arrival(self):
        return float(self.pis @ self.lambdas**2 - self.mean_arrival**2)

    @property
    def var_service(self):
        return float(self.pis @ self.mus**2 - self.mean_service**2)

    @property
    def cov(self):
        return float(self.pis @ (self.lambdas * self.mus)
                     - self.mean_arrival * self.mean_service)

    @property
    def rho(self):
        """Load pi.lambda / pi.mu (inf if mean service rate is 0)."""
        ms = self.mean_service
        return self.mean_arrival / ms if ms > 0 else math.inf

    @property
    def is_stable(self):
        return self.mean_arrival < self.mean_service

    def scaled_arrivals(self, c):
        """Same law with every lambda_i multiplied by c."""
        return RateLawFinite(self.lambdas * c, self.mus, self.pis)

    def scaled_to_critical(self):
        """Uniformly rescale arrivals so the load equals 1."""
        if self.mean_arrival <= 0:
            raise ModelSpecError("cannot scale a zero arrival law to criticality")
        return self.scaled_arrivals(self.mean_service / self.mean_arrival)


def _stationary_cramer(qmat):
    """pi by Cramer's rule on T pi^T = e1 (T = q^T with an all-ones first row).

    Returns (pi, tau) with tau = det T.
    """
    d = qmat.shape[0]
    T = qmat.T.copy()
    T[0, :] = 1.0
    tau = float(np.linalg.det(T))
    pi = np.empty(d)
    e1 = np.zeros(d)
    e1[0] = 1.0
    for j in range(d):
        Tj = T.copy()
        Tj[:, j] = e1
        pi[j] = np.linalg.det(Tj) / tau
    return pi, tau


def _stationary_linear(qmat):
    d = qmat.shape[0]
    T = qmat.T.copy()
    T[0, :] = 1.0
    e1 = np.zeros(d)
    e1[0] = 1.0
    return np.linalg.solve(T, e1)


@dataclass(frozen=True)
class Generator:
    """Irreducible background-chain rate matrix with stationary vector and tau.

    tau is the determinant of the matrix T obtained by replacing the first
    balance equation of pi q = 0 with the normalization row; for a resampling
    generator q (1 pi - I) it equals (-q)^(d-1).
    """

    q: np.ndarray
    pi: np.ndarray = field(init=False)
    tau: float = field(init=False)

    def __post_init__(self):
        qm = _frozen_array(self.q)
        if qm.ndim != 2 or qm.shape[0] != qm.shape[1]:
            raise ModelSpecError("generator must be a square matrix")
        d = qm.shape[0]
        off = qm - np.diag(np.diag(qm))
        if np.any(off < 0):
            raise ModelSpecError("off-diagonal generator entries must be >= 0")
        rowsums = qm.sum(axis=1)
        if np.max(np.abs(rowsums)) > 1e-12 * max(1.0, np.max(np.abs(qm))):
            raise ModelSpecError(f"generator rows must sum to 0 (max |sum| = {np.max(np.abs(rowsums)):.3e})")
        if d > 1:
            adj = csr_matrix((off > 0).astype(np.int8))
            ncomp, _ = csgraph.connected_components(adj, connection="strong")
            if ncomp != 1:
                raise ModelSpecError("generator is not irreducible")
        pi, tau = _stationary_cramer(qm) if d <= 8 else (None, None)
        if pi is None:
            pi = _stationary_linear(qm)
            T = qm.T.copy()
            T[0, :] = 1.0
            tau = float(np.linalg.det(T))
        else:
            # both routes must agree on the overlap
            pi_lin = _stationary_linear(qm)
            if np.max(np.abs(pi - pi_lin)) > 1e-10:
                raise ModelSpecError("Cramer and linear-solve stationary vectors disagree")
        resid = np.max(np.abs(pi @ qm))
        if resid > 1e-10 * max(1.0, np.max(np.abs(qm))) or abs(pi.sum() - 1.0) > 1e-10:
            raise ModelSpecError(f"stationary vector residual too large ({resid:.3e})")
        object.__setattr__(self, "q", qm)
        object.__setattr__(self, "pi", _frozen_array(pi))
        object.__setattr__(self, "tau", tau)

    @property
    def d(self):
        return self.q.shape[0]


@dataclass(frozen=True)
class RateLawGeneral:
    """Rate-pair law given by a seeded sampler plus declared first/second moments."""

    mean_arrival: float
    mean_service: float
    var_arrival: float
    var_service: float
    cov: float
    _sampler: object
    _doc: dict | None = None

    def __post_init__(self):
        if self.var_arrival < 0 or self.var_service < 0:
            raise ModelSpecError("variances must be >= 0")
        bound = math.sqrt(self.var_arrival * self.var_service)
        if abs(self.cov) > bound + 1e-12:
            raise ModelSpecError(f"|cov| = {abs(self.cov):.6g} exceeds sqrt(VarL VarM) = {bound:.6g}")

    @property
    def rho(self):
        return self.mean_arrival / self.mean_service

    def sample(self, rng, n):
        """Draw n i.i.d. rate pairs; returns (lambda, mu) arrays."""
        return self._sampler(rng, n)

    def validate_moments(self, n=10**6, seed=0):
        """Check declared moments against n empirical samples (3 SE)."""
        rng = np.random.default_rng(seed)
        lam, mu = self.sample(rng, n)
        for name, samp, declared in (
                ("E[L]", lam, self.mean_arrival),
                ("E[M]", mu, self.mean_service),
                ("Var[L]", (lam - lam.mean())**2, self.var_arrival),
                ("Var[M]", (mu - mu.mean())**2, self.var_service),
                ("Cov", (lam - lam.mean()) * (mu - mu.mean()), self.cov)):
            se = samp.std(ddof=1) / math.sqrt(n)
            if abs(samp.mean() - declared) > 3 * se + 1e-12:
                raise ModelSpecError(
                    f"empirical {name} = {samp.mean():.6g} vs declared {declared:.6g} "
                    f"(3 SE = {3 * se:.3g})")

    def scaled_arrivals(self, c):
        base = self._sampler

        def sampler(rng, n):
            lam, mu = base(rng, n)
            return lam * c, mu

        return RateLawGeneral(self.mean_arrival * c, self.mean_service,
                              self.var_arrival * c * c, self.var_service,
                              self.cov * c, sampler)

    def scaled_to_critical(self):
        return self.scaled_arrivals(self.mean_service / self.mean_arrival)

    @staticmethod
    def from_finite(law: RateLawFinite):
        lam, mu, pi = law.lambdas, law.mus, law.pis

        def sampler(rng, n):
            idx = rng.choice(len(pi), size=n, p=pi)
            return lam[idx], mu[idx]

        return RateLawGeneral(law.mean_arrival, law.mean_service,
                              law.var_arrival, law.var_service, law.cov,
                              sampler)

    @staticmethod
    def independent(lambda_law: ScalarLaw, mu_law: ScalarLaw):
        def sampler(rng, n):
            return lambda_law.sample(rng, n), mu_law.sample(rng, n)

        return RateLawGeneral(lambda_law.mean, mu_law.mean,
                              lambda_law.var, mu_law.var, 0.0, sampler)


# ---------------------------------------------------------------------------
# model descriptors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MMQueueSpec:
    """Markov-modulated M/M/1: background generator plus per-state rates."""

    generator: Generator
    lambdas: np.ndarray
    mus: np.ndarray

    def __post_init__(self):
        lam = _frozen_array(self.lambdas)
        mu = _frozen_array(self.mus)
        d = self.generator.d
        if lam.shape != (d,) or mu.shape != (d,):
            raise ModelSpecError("rate vectors must match the generator dimension")
        if np.any(lam < 0) or np.any(mu < 0):
            raise ModelSpecError("rates must be >= 0")
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "mus", mu)

    @property
    def d(self):
        return self.generator.d

    @property
    def rho(self):
        pi = self.generator.pi
        return float(pi @ self.lambdas) / float(pi @ self.mus)

    @property
    def is_stable(self):
        return self.rho < 1.0

    def scaled_arrivals(self, c):
        return MMQueueSpec(self.generator, self.lambdas * c, self.mus)

    def scaled_to_rho(self, rho):
        return self.scaled_arrivals(rho / self.rho)


@dataclass(frozen=True)
class ResampledSpec:
    """Finite-support rate law resampled at exponential(q) epochs."""

    law: RateLawFinite
    q: float

    def __post_init__(self):
        if self.q <= 0:
            raise ModelSpecError("resampling rate q must be > 0")

    @property
    def rho(self):
        return self.law.rho

    @property
    def is_stable(self):
        return self.law.is_stable

    def to_mm(self):
        return build_resampling_generator(self.law, self.q)


@dataclass(frozen=True)
class GeneralResampledSpec:
    """General-support rate law resampled at renewal epochs of a clock law."""

    law: RateLawGeneral
    clock: ClockLaw

    @property
    def rho(self):
        return self.law.rho

    @property
    def is_stable(self):
        return self.law.mean_arrival < self.law.mean_service


@dataclass(frozen=True)
class EndogenousSpec:
    """M/G/1 whose arrival rate is resampled at each service completion."""

    arrival_law: ScalarLaw
    service: ServiceLaw

    @property
    def rho(self):
        return self.arrival_law.mean * self.service.mean

    @property
    def is_stable(self):
        return self.rho < 1.0

    @property
    def offspring_second_factorial_moment(self):
        """nu''(1) = E[Lambda^2] E[S^2]."""
        return self.arrival_law.second_moment * self.service.second_moment


def build_resampling_generator(law: RateLawFinite, q: float) -> MMQueueSpec:
    """Background generator q (1 pi - I) realizing i.i.d. resampling of the law.

    The stationary vector of the result equals the law's pi and its tau
    constant equals (-q)^(d-1).
    """
    if q <= 0:
        raise ModelSpecError("resampling rate q must be > 0")
    d = law.d
    qmat = q * np.outer(np.ones(d), law.pis) - q * np.eye(d)
    gen = Generator(qmat)
    return MMQueueSpec(gen, law.lambdas.copy(), law.mus.copy())


# ---------------------------------------------------------------------------
# spec files
# ---------------------------------------------------------------------------

_KINDS = ("resampled_finite", "mm_modulated", "resampled_general", "endogenous_mg1")


def _require_fields(doc, required, optional=(), where="model spec"):
    unknown = set(doc) - set(required) - set(optional)
    if unknown:
        raise ModelSpecError(f"unknown fields in {where}: {sorted(unknown)}")
    missing = set(required) - set(doc)
    if missing:
        raise ModelSpecError(f"missing fields in {where}: {sorted(missing)}")


def _number(x, where):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ModelSpecError(f"{where} must be a number, got {x!r}")
    return float(x)


def _parse_atoms(atoms, with_pi):
    if not isinstance(atoms, list) or not atoms:
        raise ModelSpecError("'atoms' must be a non-empty list")
    keys = ("lambda", "mu", "pi") if with_pi else ("lambda", "mu")
    rows = []
    for k, atom in enumerate(atoms):
        if not isinstance(atom, dict):
            raise ModelSpecError(f"atom {k} must be an object")
        _require_fields(atom, keys, where=f"atom {k}")
        rows.append([_number(atom[key], f"atom {k} field {key!r}") for key in keys])
    return np.array(rows, dtype=float)


def _parse_law_block(doc, where, cls):
    if not isinstance(doc, dict):
        raise ModelSpecError(f"{where} must be an object")
    _require_fields(doc, ("family", "params"), where=where)
    params = doc["params"]
    if not isinstance(params, dict):
        raise ModelSpecError(f"{where} params must be an object")
    clean = {}
    for key, val in params.items():
        if key in ("values", "probs"):
            if not isinstance(val, list):
                raise ModelSpecError(f"{where} param {key!r} must be a list")
            clean[key] = [_number(x, f"{where} param {key!r}") for x in val]
        else:
            clean[key] = _number(val, f"{where} param {key!r}")
    return cls(doc["family"], clean)


def _parse_rate_law_general(doc):
    if not isinstance(doc, dict) or "family" not in doc:
        raise ModelSpecError("'arrival_law' must be an object with a 'family'")
    if doc["family"] == "finite":
        _require_fields(doc, ("family", "atoms"), where="arrival_law")
        rows = _parse_atoms(doc["atoms"], with_pi=True)
        law = RateLawFinite(rows[:, 0], rows[:, 1], rows[:, 2])
        general = RateLawGeneral.from_finite(law)
        clean = {"family": "finite",
                 "atoms": [{"lambda": float(l), "mu": float(m), "pi": float(p)}
                           for l, m, p in rows]}
    elif doc["family"] == "independent":
        _require_fields(doc, ("family", "lambda_law", "mu_law"), where="arrival_law")
        lam_law = _parse_law_block(doc["lambda_law"], "lambda_law", ScalarLaw)
        mu_law = _parse_law_block(doc["mu_law"], "mu_law", ScalarLaw)
        general = RateLawGeneral.independent(lam_law, mu_law)
        clean = {"family": "independent",
                 "lambda_law": {"family": lam_law.family, "params": lam_law.params},
                 "mu_law": {"family": mu_law.family, "params": mu_law.params}}
    else:
        raise ModelSpecError(
            f"arrival_law family {doc['family']!r} not supported for this kind "
            "(expected 'finite' or 'independent')")
    object.__setattr__(general, "_doc", clean)
    return general


def parse_model_doc(doc):
    """Validate a parsed JSON document and build the model descriptor."""
    if not isinstance(doc, dict):
        raise ModelSpecError("model spec must be a JSON object")
    kind = doc.get("kind")
    if kind not in _KINDS:
        raise ModelSpecError(f"'kind' must be one of {_KINDS}, got {kind!r}")
    if kind == "resampled_finite":
        _require_fields(doc, ("kind", "atoms", "q"))
        rows = _parse_atoms(doc["atoms"], with_pi=True)
        law = RateLawFinite(rows[:, 0], rows[:, 1], rows[:, 2])
        return ResampledSpec(law, _number(doc["q"], "'q'"))
    if kind == "mm_modulated":
        _require_fields(doc, ("kind", "atoms", "generator"))
        rows = _parse_atoms(doc["atoms"], with_pi=False)
        gen_rows = doc["generator"]
        if not isinstance(gen_rows, list):
            raise ModelSpecError("'generator' must be a matrix (list of rows)")
        qmat = np.array([[_number(x, "generator entry") for x in row]
                         for row in gen_rows], dtype=float)
        gen = Generator(qmat)
        return MMQueueSpec(gen, rows[:, 0], rows[:, 1])
    if kind == "resampled_general":
        _require_fields(doc, ("kind", "arrival_law", "clock"))
        return GeneralResampledSpec(
            _parse_rate_law_general(doc["arrival_law"]),
            _parse_law_block(doc["clock"], "clock", ClockLaw))
    _require_fields(doc, ("kind", "arrival_law", "service"))
    return EndogenousSpec(
        _parse_law_block(doc["arrival_law"], "arrival_law", ScalarLaw),
        _parse_law_block(doc["service"], "service", ServiceLaw))


def load_model_spec(path):
    """Load, validate, and build a model descriptor from a JSON spec file.

    Unstable models are accepted (transient analyses remain valid); check
    .is_stable before running stationary solvers.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelSpecError(f"cannot parse {path}: {exc}") from exc
    return parse_model_doc(doc)


def model_to_doc(spec):
    """Canonical JSON document for a descriptor (inverse of parse_model_doc)."""
    if isinstance(spec, ResampledSpec):
        return {"kind": "resampled_finite",
                "atoms": [{"lambda": float(l), "mu": float(m), "pi": float(p)}
                          for l, m, p in zip(spec.law.lambdas, spec.law.mus,
                                             spec.law.pis)],
                "q": float(spec.q)}
    if isinstance(spec, MMQueueSpec):
        return {"kind": "mm_modulated",
                "atoms": [{"lambda": float(l), "mu": float(m)}
                          for l, m in zip(spec.lambdas, spec.mus)],
                "generator": [[float(x) for x in row] for row in spec.generator.q]}
    if isinstance(spec, GeneralResampledSpec):
        if spec.law._doc is None:
            raise ModelSpecError("this general rate law has no file representation")
        return {"kind": "resampled_general",
                "arrival_law": spec.law._doc,
                "clock": {"family": spec.clock.family, "params": spec.clock.params}}
    if isinstance(spec, EndogenousSpec):
        return {"kind": "endogenous_mg1",
                "arrival_law": {"family": spec.arrival_law.family,
                                "params": spec.arrival_law.params},
                "service": {"family": spec.service.family,
                            "params": spec.service.params}}
    raise ModelSpecError(f"not a model descriptor: {type(spec)!r}")


def canonical_json(doc):
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def write_model_spec(spec, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(model_to_doc(spec)))
