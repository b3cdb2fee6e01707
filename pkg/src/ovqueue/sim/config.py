"""Simulation configuration and result containers.

Seed-splitting rule: replication k of a run with master seed s derives all
of its randomness from SeedSequence([s, k]).  Its first uint32 word seeds
the in-kernel MT19937 stream (for chunked kernels, word c seeds chunk c);
a spawned child keys the counter-based Philox generator used for pre-drawn
arrays (intervals, rate pairs, service times).  Identical configs therefore
give bit-identical results, independent of thread scheduling and backend.
"""

import json
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..errors import ModelSpecError


def replication_streams(master_seed, index, n_kernel_seeds=1):
    """(kernel_seeds, rng) for one replication; see the module docstring."""
    ss = np.random.SeedSequence([int(master_seed), int(index)])
    seeds = ss.generate_state(n_kernel_seeds, np.uint32)
    rng = np.random.Generator(np.random.Philox(ss.spawn(1)[0]))
    return seeds, rng


@dataclass(frozen=True)
class SimConfig:
    """Run shape shared by all simulators.

    horizon_events applies to the event-driven models (CTMC events or
    embedded-chain steps), horizon_time to the renewal-resampled model and
    trajectory recording.  scaled_t_grid holds scaled-time points at which
    (1-rho) Q(t / (1-rho)^2) is recorded per replication; flow_t_grid holds
    absolute times at which the cumulative flow counts are recorded.
    """

    horizon_events: int | None = None
    horizon_time: float | None = None
    warmup_fraction: float = 0.1
    replications: int = 1
    seed: int = 0
    scaled_t_grid: tuple = ()
    flow_t_grid: tuple = ()
    hist_len: int = 4096
    n_batches: int = 32

    def __post_init__(self):
        if not 0.0 <= self.warmup_fraction <= 0.9:
            raise ModelSpecError("warmup fraction must lie in [0, 0.9]")
        if self.replications < 1:
            raise ModelSpecError("replication count must be >= 1")
        if self.hist_len < 2 or self.n_batches < 2:
            raise ModelSpecError("hist_len and n_batches must be >= 2")
        if self.horizon_events is None and self.horizon_time is None:
            raise ModelSpecError("a horizon (events or time) is required")
        for name in ("scaled_t_grid", "flow_t_grid"):
            grid = tuple(float(t) for t in getattr(self, name))
            if any(t < 0 for t in grid) or list(grid) != sorted(grid):
                raise ModelSpecError(f"{name} must be sorted and nonnegative")
            object.__setattr__(self, name, grid)


@dataclass(frozen=True)
class FlowRecord:
    t_grid: np.ndarray
    arrivals: np.ndarray  # (replications, len(t_grid)) cumulative counts
    services: np.ndarray


@dataclass(frozen=True)
class SimResult:
    """Merged output of all replications of one simulation run."""

    histogram: np.ndarray      # P(Q = n) estimates over 0..hist_len-1
    overflow_mass: float       # mass at or above hist_len
    mean: float
    variance: float
    ci_halfwidth: float        # 95% batch-means CI for the mean
    total_weight: float        # post-warmup time (or step count)
    events: int
    state_occupancy: np.ndarray | None = None
    joint_histogram: np.ndarray | None = None  # (hist_len, d) for modulated runs
    scaled_t_grid: np.ndarray | None = None
    scaled_samples: np.ndarray | None = None  # (replications, grid)
    flows: FlowRecord | None = None
    config: SimConfig | None = None

    def histogram_csv(self):
        lines = ["n,p"]
        for n, p in enumerate(self.histogram):
            lines.append(f"{n},{p:.12g}")
        return "\n".join(lines) + "\n"

    def trajectories_csv(self):
        if self.scaled_samples is None:
            raise ValueError("no scaled trajectories were recorded")
        lines = ["t,scaled_q,replication_id"]
        for rep, row in enumerate(self.scaled_samples):
            for t, q in zip(self.scaled_t_grid, row):
                lines.append(f"{t:.12g},{q:.12g},{rep}")
        return "\n".join(lines) + "\n"

    def to_json_dict(self):
        out = {
            "mean": self.mean,
            "variance": self.variance,
            "ci_halfwidth": self.ci_halfwidth,
            "total_weight": self.total_weight,
            "events": self.events,
            "overflow_mass": self.overflow_mass,
        }
        if self.state_occupancy is not None:
            out["state_occupancy"] = [float(x) for x in self.state_occupancy]
        return out

    def to_json(self):
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"


def batch_means_ci(batch_sums, batch_weights, level=0.95):
    """95% half-width for the weighted mean from batch means.

    Batches with zero weight (short runs) are dropped; with fewer than two
    usable batches the half-width is reported as inf, never silently 0.
    """
    sums = np.asarray(batch_sums, dtype=float).ravel()
    weights = np.asarray(batch_weights, dtype=float).ravel()
    keep = weights > 0
    if keep.sum() < 2:
        return float("inf")
    means = sums[keep] / weights[keep]
    b = len(means)
    half = stats.t.ppf(0.5 + level / 2.0, b - 1) * means.std(ddof=1) / np.sqrt(b)
    return float(half)
