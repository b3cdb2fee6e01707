"""Exact stationary analysis of the Markov-modulated M/M/1 queue.

Level blocks of the quasi-birth-death chain on levels k >= 1:
A0 = diag(lambda) (up), A1 = Q - diag(lambda) - diag(mu) (local),
A2 = diag(mu) (down); the level-0 local block B00 = Q - diag(lambda) has no
service.  The stationary law is matrix-geometric, zeta_k = zeta_0 R^k, with
R the minimal nonnegative solution of A0 + R A1 + R^2 A2 = 0.
"""

import io
from dataclasses import dataclass

import numpy as np

from .errors import ModelSpecError, NumericalError
from .models import MMQueueSpec

_R_TOL = 1e-14
_R_MAX_ITER = 10**6
_N_MAX_CAP = 10**6


def level_blocks(spec: MMQueueSpec):
    """(A0, A1, A2, B00) for the modulated M/M/1 QBD."""
    lam, mu = spec.lambdas, spec.mus
    q = spec.generator.q
    A0 = np.diag(lam)
    A1 = q - np.diag(lam) - np.diag(mu)
    A2 = np.diag(mu)
    B00 = q - np.diag(lam)
    return A0, A1, A2, B00


@dataclass(frozen=True)
class QbdSolution:
    """Matrix-geometric stationary law: boundary vector and rate matrix R."""

    spec: MMQueueSpec
    R: np.ndarray
    zeta0: np.ndarray
    residual: float
    iterations: int

    @property
    def spectral_radius(self):
        return float(np.max(np.abs(np.linalg.eigvals(self.R))))

    def level_probabilities(self, n_max):
        """Array of shape (n_max+1, d) with zeta_k = zeta_0 R^k."""
        n_max = min(n_max, _N_MAX_CAP)
        out = np.empty((n_max + 1, len(self.zeta0)))
        row = self.zeta0.copy()
        for k in range(n_max + 1):
            out[k] = row
            row = row @ self.R
        return out

    def marginal(self, n_max):
        """P(Q = n) for n = 0..n_max."""
        return self.level_probabilities(n_max).sum(axis=1)

    def marginal_pgf(self, z):
        """E[z^Q] = zeta_0 (I - z R)^{-1} 1."""
        d = len(self.zeta0)
        one = np.ones(d)
        return self.zeta0 @ np.linalg.solve(np.eye(d) - z * self.R, one)

    def mean_queue(self):
        d = len(self.zeta0)
        inv = np.linalg.inv(np.eye(d) - self.R)
        return float(self.zeta0 @ self.R @ inv @ inv @ np.ones(d))

    def state_marginal(self):
        """P(J = i) = zeta_0 (I - R)^{-1}, should equal pi."""
        return self.zeta0 @ np.linalg.inv(np.eye(len(self.zeta0)) - self.R)


def solve_r_matrix(spec: MMQueueSpec) -> QbdSolution:
    """Minimal nonnegative R by functional iteration, plus boundary vector.

    Iterates R <- -(A0 + R^2 A2) A1^{-1} from R = 0 until the sup-norm change
    drops below 1e-14; the boundary vector solves zeta_0 (B00 + R A2) = 0
    with normalization zeta_0 (I - R)^{-1} 1 = 1.
    """
    if not spec.is_stable:
        raise ModelSpecError(
            f"unstable model (load {spec.rho:.4f} >= 1); R iteration diverges")
    A0, A1, A2, B00 = level_blocks(spec)
    d = spec.d
    # A1 is strictly diagonally dominant for valid specs
    assert np.all(np.abs(np.diag(A1)) > 0), "singular local block"
    A1_inv = np.linalg.inv(A1)
    R = np.zeros((d, d))
    delta = np.inf
    for it in range(1, _R_MAX_ITER + 1):
        R_next = -(A0 + R @ R @ A2) @ A1_inv
        delta = np.max(np.abs(R_next - R))
        R = R_next
        if delta < _R_TOL:
            break
    else:
        raise NumericalError(
            f"R iteration did not converge in {_R_MAX_ITER} steps "
            f"(last change {delta:.3e})")
    residual = float(np.max(np.abs(A0 + R @ A1 + R @ R @ A2)))

    boundary = B00 + R @ A2
    norm_col = np.linalg.solve(np.eye(d) - R, np.ones(d))
    system = np.hstack([boundary, norm_col[:, None]])  # zeta0 [boundary | norm] = [0 1]
    rhs = np.zeros(d + 1)
    rhs[-1] = 1.0
    zeta0, *_ = np.linalg.lstsq(system.T, rhs, rcond=None)
    if np.max(np.abs(system.T @ zeta0 - rhs)) > 1e-10:
        raise NumericalError("boundary system inconsistent")
    return QbdSolution(spec, R, zeta0, residual, it)


def tail_probabilities(sol: QbdSolution, n_max):
    """P(Q > n) for n = 0..n_max: complements of the cumulative level mass."""
    n_max = min(n_max, _N_MAX_CAP)
    mass = sol.marginal(n_max)
    return 1.0 - np.cumsum(mass)


@dataclass(frozen=True)
class CramerSystem:
    """Per-state stationary PGFs f_i(z) = det A_i(z) / det A(z).

    A(z) has entries lambda_i (z-1) + mu_i (1/z - 1) on the diagonal plus the
    transposed generator; A_i replaces the i-th column by the boundary vector
    b(z) with entries mu_i (1/z - 1) beta_i.  Determinants go through LU with
    partial pivoting.  Where det A vanishes (z = 1 and interior zeros) the
    ratio is a removable limit, evaluated by small-offset Richardson
    extrapolation and flagged.
    """

    spec: MMQueueSpec
    beta: np.ndarray

    def a_matrix(self, z):
        lam, mu = self.spec.lambdas, self.spec.mus
        return (np.diag(lam * (z - 1.0) + mu * (1.0 / z - 1.0))
                + self.spec.generator.q.T)

    def b_vector(self, z):
        return self.spec.mus * (1.0 / z - 1.0) * self.beta

    def alpha(self, z):
        return np.linalg.det(self.a_matrix(z))

    def alpha_i(self, z, i):
        a = self.a_matrix(z)
        a[:, i] = self.b_vector(z)
        return np.linalg.det(a)

    def _f_direct(self, z):
        a = self.a_matrix(z)
        det_a = np.linalg.det(a)
        d = self.spec.d
        out = np.empty(d)
        b = self.b_vector(z)
        for i in range(d):
            ai = a.copy()
            ai[:, i] = b
            out[i] = np.linalg.det(ai) / det_a
        return out

    def f(self, z, return_flag=False):
        """Vector (f_1(z), ..., f_d(z)); flag reports limit extrapolation."""
        if not 0.0 < z <= 1.0:
            raise ValueError("z must lie in (0, 1]")
        scale = max(1.0, abs(np.linalg.det(self.spec.generator.q.T
                                           - np.diag(self.spec.lambdas + self.spec.mus))))
        flagged = abs(self.alpha(z)) < 1e-12 * scale
        if flagged:
            h = 1e-4 if z > 0.5 else -1e-4
            g1 = self._f_direct(z - h)
            g2 = self._f_direct(z - h / 2)
            g3 = self._f_direct(z - h / 4)
            val = (8.0 * g3 - 6.0 * g2 + g1) / 3.0
        else:
            val = self._f_direct(z)
        return (val, flagged) if return_flag else val


def cramer_pgf(spec: MMQueueSpec, beta) -> CramerSystem:
    """Cramer-rule PGF evaluators for a given boundary vector beta.

    beta is supplied externally, normally zeta_0 from solve_r_matrix.
    """
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (spec.d,):
        raise ModelSpecError("beta must have one entry per background state")
    return CramerSystem(spec, beta)


def tail_csv(tails, header=("n", "p_exact")):
    """CSV text with columns (n, p_exact) for a tail curve."""
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for n, p in enumerate(np.asarray(tails)):
        buf.write(f"{n},{p:.12g}\n")
    return buf.getvalue()
