"""Simulation drivers: replication orchestration over the kernel backends.

Each driver derives per-replication streams by the rule in config.py, runs
the kernels (threaded when the numba backend is active, serial otherwise),
and merges results in replication order, so outputs are reproducible
bit-for-bit for a given SimConfig regardless of scheduling.
"""

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..errors import ModelSpecError, NumericalError
from ..models import GeneralResampledSpec, MMQueueSpec, ResampledSpec
from . import backend
from .config import FlowRecord, SimConfig, SimResult, batch_means_ci, replication_streams

_CHUNK_STEPS = 1 << 20
_RBM_BLOCK = 1 << 14
_FLOW_CHUNK = 20000


def _run_tasks(task, n):
    workers = backend.max_workers()
    if workers <= 1 or n == 1:
        return [task(k) for k in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, range(n)))


def _scaled_grid_abs(scaled_grid, rho):
    if not scaled_grid:
        return np.empty(0)
    if not 0.0 < rho < 1.0:
        raise ModelSpecError("scaled-trajectory recording needs a load in (0,1)")
    return np.asarray(scaled_grid, dtype=float) / (1.0 - rho) ** 2


def _check_recorded(arrays):
    for arr in arrays:
        if arr.size and np.any(arr < 0):
            raise NumericalError(
                "trajectory grid not reached; increase the time horizon")


# ---------------------------------------------------------------------------
# modulated M/M/1 (CTMC)
# ---------------------------------------------------------------------------

def simulate_modulated(spec, cfg: SimConfig) -> SimResult:
    """Competing-clock CTMC simulation with time-weighted occupancy.

    Accepts an MMQueueSpec or a ResampledSpec (converted via its generator).
    Unstable models are allowed; the horizon bounds the runtime.
    """
    if isinstance(spec, ResampledSpec):
        spec = spec.to_mm()
    if not isinstance(spec, MMQueueSpec):
        raise ModelSpecError("simulate_modulated needs a modulated or resampled spec")
    gen = spec.generator
    lam, mu = spec.lambdas, spec.mus
    q_out = -np.diag(gen.q).copy()
    off = gen.q - np.diag(np.diag(gen.q))
    jump_cum = np.cumsum(off, axis=1)
    pi_cum = np.cumsum(gen.pi)

    n_events = cfg.horizon_events if cfg.horizon_events is not None else 2**62
    horizon_time = cfg.horizon_time if cfg.horizon_time is not None else math.inf
    warmup_events = (int(cfg.horizon_events * cfg.warmup_fraction)
                     if cfg.horizon_events is not None else 0)
    t_grid = _scaled_grid_abs(cfg.scaled_t_grid, spec.rho if cfg.scaled_t_grid else 0.5)

    def task(k):
        seeds, _ = replication_streams(cfg.seed, k)
        with backend.rng_guard():
            return backend.modulated_ctmc(
                int(seeds[0]), lam, mu, q_out, jump_cum, pi_cum,
                n_events, horizon_time, warmup_events,
                cfg.hist_len, cfg.n_batches, t_grid, 0)

    results = _run_tasks(task, cfg.replications)

    hist = sum(r[0] for r in results)
    overflow = sum(r[1] for r in results)  # per-state vector
    batch_sums = np.concatenate([r[2] for r in results])
    batch_times = np.concatenate([r[3] for r in results])
    post_time = sum(r[5] for r in results)
    qsum = sum(r[6] for r in results)
    qsq = sum(r[7] for r in results)
    events = int(sum(r[9] for r in results))
    if post_time <= 0:
        raise NumericalError("no post-warmup mass accumulated; extend the horizon")
    mean = qsum / post_time
    scaled = None
    if cfg.scaled_t_grid:
        rows = [r[4] for r in results]
        _check_recorded(rows)
        scaled = (1.0 - spec.rho) * np.vstack(rows)
    occupancy = (hist.sum(axis=0) + overflow) / post_time
    return SimResult(
        histogram=hist.sum(axis=1) / post_time,
        overflow_mass=float(overflow.sum()) / post_time,
        mean=mean,
        variance=qsq / post_time - mean * mean,
        ci_halfwidth=batch_means_ci(batch_sums, batch_times),
        total_weight=post_time,
        events=events,
        state_occupancy=occupancy,
        joint_histogram=hist / post_time,
        scaled_t_grid=np.asarray(cfg.scaled_t_grid) if cfg.scaled_t_grid else None,
        scaled_samples=scaled,
        config=cfg,
    )


# ---------------------------------------------------------------------------
# renewal-resampled M/M/1 (three event types)
# ---------------------------------------------------------------------------

def simulate_general_resampled(spec: GeneralResampledSpec, cfg: SimConfig) -> SimResult:
    """Event-driven run of the renewal-resampled queue with flow counters.

    The first resampling interval is drawn from the residual-life law.  The
    potential-service counter S(t) includes completions at an empty queue.
    """
    if cfg.horizon_time is None:
        raise ModelSpecError("the renewal-resampled model needs a time horizon")
    horizon = cfg.horizon_time
    warmup_time = cfg.warmup_fraction * horizon
    scaled_abs = _scaled_grid_abs(cfg.scaled_t_grid, spec.rho if cfg.scaled_t_grid else 0.5)
    flow_abs = np.asarray(cfg.flow_t_grid, dtype=float)
    grid = np.unique(np.concatenate([scaled_abs, flow_abs]))
    if grid.size and grid[-1] > horizon:
        raise ModelSpecError("recording grid exceeds the time horizon")
    mean_xi = spec.clock.mean
    base_draw = int(horizon / mean_xi * 1.25 + 10.0 * math.sqrt(horizon / mean_xi) + 50)

    def task(k):
        seeds, _ = replication_streams(cfg.seed, k)
        n_draw = base_draw
        for _attempt in range(8):
            _, rng = replication_streams(cfg.seed, k)
            intervals = np.concatenate([
                spec.clock.sample_residual(rng, 1),
                spec.clock.sample(rng, n_draw - 1)])
            lams, mus = spec.law.sample(rng, n_draw)
            with backend.rng_guard():
                out = backend.general_resampled(
                    int(seeds[0]), intervals, np.asarray(lams, dtype=float),
                    np.asarray(mus, dtype=float), horizon, warmup_time,
                    cfg.hist_len, cfg.n_batches, grid)
            if out[11]:
                return out
            n_draw *= 2
        raise NumericalError("resampling intervals exhausted repeatedly")

    results = _run_tasks(task, cfg.replications)

    hist = sum(r[0] for r in results)
    overflow = sum(r[1] for r in results)
    batch_sums = np.concatenate([r[2] for r in results])
    batch_times = np.concatenate([r[3] for r in results])
    qsum = sum(r[7] for r in results)
    qsq = sum(r[8] for r in results)
    post_time = sum(r[9] for r in results)
    events = int(sum(r[10] for r in results))  # intervals used as a proxy
    mean = qsum / post_time
    scaled = None
    flows = None
    if grid.size:
        _check_recorded([r[4] for r in results])
    if cfg.scaled_t_grid:
        idx = np.searchsorted(grid, scaled_abs)
        scaled = (1.0 - spec.rho) * np.vstack([r[4][idx] for r in results])
    if cfg.flow_t_grid:
        idx = np.searchsorted(grid, flow_abs)
        flows = FlowRecord(
            t_grid=flow_abs,
            arrivals=np.vstack([r[5][idx] for r in results]),
            services=np.vstack([r[6][idx] for r in results]))
    return SimResult(
        histogram=hist / post_time,
        overflow_mass=float(overflow) / post_time,
        mean=mean,
        variance=qsq / post_time - mean * mean,
        ci_halfwidth=batch_means_ci(batch_sums, batch_times),
        total_weight=post_time,
        events=events,
        scaled_t_grid=np.asarray(cfg.scaled_t_grid) if cfg.scaled_t_grid else None,
        scaled_samples=scaled,
        flows=flows,
        config=cfg,
    )


# ---------------------------------------------------------------------------
# endogenous M/G/1 embedded chain
# ---------------------------------------------------------------------------

def simulate_endogenous(spec, cfg: SimConfig) -> SimResult:
    """Departure-epoch recursion with a fresh (rate, service) pair per step."""
    if cfg.horizon_events is None:
        raise ModelSpecError("the embedded chain needs an event (step) horizon")
    steps = cfg.horizon_events
    warmup = int(steps * cfg.warmup_fraction)
    n_chunks = max(1, (steps + _CHUNK_STEPS - 1) // _CHUNK_STEPS)

    def task(k):
        seeds, rng = replication_streams(cfg.seed, k, n_kernel_seeds=n_chunks)
        hist = np.zeros(cfg.hist_len)
        overflow = 0.0
        batch_sums = np.zeros(cfg.n_batches)
        batch_counts = np.zeros(cfg.n_batches)
        qsum = 0.0
        qsq = 0.0
        q = 0
        done = 0
        for c in range(n_chunks):
            m = min(_CHUNK_STEPS, steps - done)
            lam = spec.arrival_law.sample(rng, m)
            svc = spec.service.sample(rng, m)
            with backend.rng_guard():
                out = backend.endogenous_chain(
                    int(seeds[c]), np.asarray(lam * svc, dtype=float), q, done,
                    warmup, steps, cfg.hist_len, cfg.n_batches)
            hist += out[0]
            overflow += out[1]
            batch_sums += out[2]
            batch_counts += out[3]
            qsum += out[4]
            qsq += out[5]
            q = int(out[6])
            done += m
        return hist, overflow, batch_sums, batch_counts, qsum, qsq

    results = _run_tasks(task, cfg.replications)
    hist = sum(r[0] for r in results)
    overflow = sum(r[1] for r in results)
    batch_sums = np.concatenate([r[2] for r in results])
    batch_counts = np.concatenate([r[3] for r in results])
    qsum = sum(r[4] for r in results)
    qsq = sum(r[5] for r in results)
    count = hist.sum() + overflow
    mean = qsum / count
    return SimResult(
        histogram=hist / count,
        overflow_mass=float(overflow) / count,
        mean=mean,
        variance=qsq / count - mean * mean,
        ci_halfwidth=batch_means_ci(batch_sums, batch_counts),
        total_weight=count,
        events=int(count),
        config=cfg,
    )


def endogenous_scaled_marginals(spec, t_scaled_grid, n_reps, seed):
    """(1-rho) Q at steps t/(1-rho)^2 from Q_0 = 0, one row per replication."""
    rho = spec.rho
    if not 0.0 < rho < 1.0:
        raise ModelSpecError("scaled marginals need a stable model")
    steps = np.asarray(np.rint(np.asarray(t_scaled_grid) / (1.0 - rho) ** 2),
                       dtype=np.int64)
    max_steps = int(steps[-1])

    def task(k):
        seeds, rng = replication_streams(seed, k)
        lam = spec.arrival_law.sample(rng, max_steps)
        svc = spec.service.sample(rng, max_steps)
        with backend.rng_guard():
            return backend.endogenous_record(
                int(seeds[0]), np.asarray(lam * svc, dtype=float), steps)

    rows = _run_tasks(task, n_reps)
    return (1.0 - rho) * np.vstack(rows)


def endogenous_pgf_at_geometric_time(spec, r, z_values, n_paths, seed):
    """Monte Carlo E[z^{Q_G}], G shifted-geometric(r), from Q_0 = 0.

    Returns (estimates, standard_errors) arrays aligned with z_values.
    """
    if not 0.0 < r < 1.0:
        raise ModelSpecError("r must lie in (0,1)")
    z = np.asarray(z_values, dtype=float)
    block = 1 << 16
    n_blocks = (n_paths + block - 1) // block
    sums = np.zeros(len(z))
    sqs = np.zeros(len(z))

    def task(b):
        m = min(block, n_paths - b * block)
        seeds, rng = replication_streams(seed, b)
        lengths = (rng.geometric(r, size=m) - 1).astype(np.int64)
        total = int(lengths.sum())
        lam = spec.arrival_law.sample(rng, total)
        svc = spec.service.sample(rng, total)
        with backend.rng_guard():
            q_end = backend.endogenous_geometric(
                int(seeds[0]), np.asarray(lam * svc, dtype=float), lengths)
        vals = z[None, :] ** q_end[:, None]
        return vals.sum(axis=0), (vals * vals).sum(axis=0)

    for s, s2 in _run_tasks(task, n_blocks):
        sums += s
        sqs += s2
    est = sums / n_paths
    se = np.sqrt(np.maximum(sqs / n_paths - est**2, 0.0) / n_paths)
    return est, se


# ---------------------------------------------------------------------------
# reflected Brownian motion
# ---------------------------------------------------------------------------

def simulate_rbm(drift, variance, x0, t_grid, cfg: SimConfig, method="exact",
                 step=None):
    """Marginal RBM samples at the grid times, one row per replication.

    method="exact" uses the bridge-maximum update (distribution-exact at the
    grid times for any step); method="euler" uses the plain Lindley recursion
    with step `step` (default 1e-3/|drift|), which carries O(sqrt(step))
    reflection bias and exists for step-size studies.
    """
    if variance <= 0:
        raise ModelSpecError("variance must be > 0")
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size == 0 or np.any(np.diff(t_grid) <= 0) or t_grid[0] <= 0:
        raise ModelSpecError("t_grid must be strictly increasing and positive")
    if method == "exact":
        dts = np.diff(np.concatenate([[0.0], t_grid]))
        keep = None
    elif method == "euler":
        h = step if step is not None else 1e-3 / max(abs(drift), 1e-12)
        fine = [0.0]
        keep = []
        for t in t_grid:
            base = fine[-1]
            seg = t - base
            nsub = max(1, int(math.ceil(seg / h)))
            fine.extend(base + seg * (i + 1) / nsub for i in range(nsub))
            keep.append(len(fine) - 2)
        dts = np.diff(np.asarray(fine))
        keep = np.asarray(keep)
    else:
        raise ModelSpecError("method must be 'exact' or 'euler'")

    kern = backend.rbm_marginal if method == "exact" else backend.rbm_euler
    n_blocks = (cfg.replications + _RBM_BLOCK - 1) // _RBM_BLOCK

    def task(b):
        m = min(_RBM_BLOCK, cfg.replications - b * _RBM_BLOCK)
        seeds, _ = replication_streams(cfg.seed, b)
        with backend.rng_guard():
            out = kern(int(seeds[0]), drift, variance, float(x0), dts, m)
        return out if keep is None else out[:, keep]

    return np.vstack(_run_tasks(task, n_blocks))


def rbm_stationary_samples(drift, variance, n_samples, seed, burn_in=None,
                           spacing=None):
    """Correlated stationary samples after a 10/|drift| burn-in per block."""
    if drift >= 0:
        raise ModelSpecError("stationary mode needs drift < 0")
    if burn_in is None:
        burn_in = 10.0 / abs(drift)
    if spacing is None:
        spacing = 0.5 * variance / (drift * drift)
    block = 1 << 16
    n_blocks = (n_samples + block - 1) // block

    def task(b):
        m = min(block, n_samples - b * block)
        seeds, _ = replication_streams(seed, b)
        with backend.rng_guard():
            return backend.rbm_stationary(int(seeds[0]), drift, variance,
                                          burn_in, spacing, m)

    return np.concatenate(_run_tasks(task, n_blocks))


def rbm_transform_mc(drift, variance, r, s_values, n_paths, seed, x0=0.0):
    """Monte Carlo E[exp(-s Q(T_r))], T_r ~ exp(r); returns (estimates, SEs).

    One exact bridge update per path straight to the random horizon, so the
    only error is statistical.
    """
    s_arr = np.asarray(s_values, dtype=float)
    block = 1 << 16
    n_blocks = (n_paths + block - 1) // block

    def task(b):
        m = min(block, n_paths - b * block)
        seeds, _ = replication_streams(seed, b)
        with backend.rng_guard():
            return backend.rbm_lst(int(seeds[0]), drift, variance, float(x0),
                                   r, s_arr, m)

    acc = np.zeros(len(s_arr))
    acc2 = np.zeros(len(s_arr))
    for a, a2 in _run_tasks(task, n_blocks):
        acc += a
        acc2 += a2
    est = acc / n_paths
    se = np.sqrt(np.maximum(acc2 / n_paths - est**2, 0.0) / n_paths)
    return est, se


# ---------------------------------------------------------------------------
# direct flow-count sampler (Cox representation)
# ---------------------------------------------------------------------------

def mc_flow_counts(law, clock, t_points, n_reps, seed):
    """Exact marginal samples of (A(t), S(t)) per grid point.

    Uses the conditional-Poisson representation directly: per replication the
    stationary rate path is drawn (residual first interval), the integrated
    rates over [0, t] computed, and one Poisson variate drawn per process.
    Marginals per t are exact; values across t are not coupled as a path.
    """
    t_arr = np.asarray(t_points, dtype=float)
    max_t = float(t_arr.max())
    mean_xi = clock.mean
    k_cols = int(max_t / mean_xi * 1.5 + 10.0 * math.sqrt(max_t / mean_xi) + 20)
    arrivals = np.empty((n_reps, len(t_arr)))
    services = np.empty((n_reps, len(t_arr)))
    done = 0
    chunk_idx = 0
    while done < n_reps:
        m = min(_FLOW_CHUNK, n_reps - done)
        _, rng = replication_streams(seed, chunk_idx)
        cols = k_cols
        for _ in range(8):
            first = clock.sample_residual(rng, m)
            rest = clock.sample(rng, (m, cols - 1))
            bounds = np.cumsum(np.hstack([first[:, None], rest]), axis=1)
            if np.all(bounds[:, -1] >= max_t):
                break
            cols *= 2
        else:
            raise NumericalError("rate-path pre-draw kept falling short")
        lam, mu = law.sample(rng, (m, cols))
        for j, t in enumerate(t_arr):
            capped = np.minimum(bounds, t)
            lengths = np.diff(np.hstack([np.zeros((m, 1)), capped]), axis=1)
            arrivals[done:done + m, j] = rng.poisson((lam * lengths).sum(axis=1))
            services[done:done + m, j] = rng.poisson((mu * lengths).sum(axis=1))
        done += m
        chunk_idx += 1
    return FlowRecord(t_grid=t_arr, arrivals=arrivals, services=services)
