"""Hot simulation loops, written in nopython-compilable form.

Every kernel seeds the legacy MT19937 stream (np.random.seed) on entry, so a
kernel's output depends only on its arguments; numba's implementation of the
legacy distributions is stream-identical to numpy's, which makes the JIT and
fallback paths produce bitwise-equal results.  See backend.py for the
compilation switch and benchmarks/bench_kernels.py for the speed comparison.

Time-weighted occupancy is recorded for continuous-time models (matching the
stationary law), event-weighted counts at departures for the embedded chain.
Queue values at or above hist_len accumulate into an overflow weight.
"""

import math

import numpy as np


def modulated_ctmc_kernel(seed, lam, mu, q_out, jump_cum, pi_cum,
                          n_events, horizon_time, warmup_events,
                          hist_len, n_batches, t_grid, q0):
    """CTMC of the modulated M/M/1 via competing exponential clocks.

    Returns (hist, overflow, batch_sums, batch_times, q_at_grid,
    post_time, qsum, qsqsum, clock, events_done).
    """
    np.random.seed(seed)
    d = lam.shape[0]
    hist = np.zeros((hist_len, d))
    overflow = np.zeros(d)
    batch_sums = np.zeros(n_batches)
    batch_times = np.zeros(n_batches)
    n_grid = t_grid.shape[0]
    q_at = np.full(n_grid, -1.0)
    per_batch = (n_events - warmup_events) // n_batches
    if per_batch < 1:
        per_batch = 1

    u = np.random.random()
    j = 0
    while j < d - 1 and u > pi_cum[j]:
        j += 1
    q = q0
    t = 0.0
    gi = 0
    qsum = 0.0
    qsqsum = 0.0
    post_time = 0.0
    ev = 0
    while ev < n_events and t < horizon_time:
        rate = lam[j] + q_out[j]
        if q > 0:
            rate += mu[j]
        if rate <= 0.0:
            break
        dt = np.random.exponential(1.0 / rate)
        tn = t + dt
        while gi < n_grid and t_grid[gi] <= tn:
            q_at[gi] = q
            gi += 1
        if ev >= warmup_events:
            if q < hist_len:
                hist[q, j] += dt
            else:
                overflow[j] += dt
            post_time += dt
            qsum += q * dt
            qsqsum += q * q * dt
            b = (ev - warmup_events) // per_batch
            if b >= n_batches:
                b = n_batches - 1
            batch_sums[b] += q * dt
            batch_times[b] += dt
        t = tn
        u = np.random.random() * rate
        if u < lam[j]:
            q += 1
        elif q > 0 and u < lam[j] + mu[j]:
            q -= 1
        else:
            u2 = u - lam[j]
            if q > 0:
                u2 -= mu[j]
            nj = 0
            while nj < d - 1 and u2 > jump_cum[j, nj]:
                nj += 1
            j = nj
        ev += 1
    return (hist, overflow, batch_sums, batch_times, q_at,
            post_time, qsum, qsqsum, t, ev)


def general_resampled_kernel(seed, intervals, lams, mus, horizon_time,
                             warmup_time, hist_len, n_batches, t_grid):
    """Renewal-resampled M/M/1 with a potential-service counter.

    intervals/lams/mus are pre-drawn per resampling interval (the first
    interval from the residual-life law).  Potential completions count into
    S even at an empty queue.  Returns (hist, overflow, batch_sums,
    batch_times, q_at, a_at, s_at, qsum, qsqsum, post_time, intervals_used,
    finished).
    """
    np.random.seed(seed)
    hist = np.zeros(hist_len)
    overflow = 0.0
    n_grid = t_grid.shape[0]
    q_at = np.full(n_grid, -1.0)
    a_at = np.full(n_grid, -1.0)
    s_at = np.full(n_grid, -1.0)
    batch_sums = np.zeros(n_batches)
    batch_times = np.zeros(n_batches)
    batch_dt = (horizon_time - warmup_time) / n_batches
    if batch_dt <= 0.0:
        batch_dt = horizon_time

    t = 0.0
    q = 0
    a_count = 0
    s_count = 0
    k = 0
    n_k = intervals.shape[0]
    t_res = intervals[0]
    gi = 0
    qsum = 0.0
    qsqsum = 0.0
    post_time = 0.0
    finished = False
    while True:
        lam = lams[k]
        mu = mus[k]
        total = lam + mu
        if total > 0.0:
            t_event = t + np.random.exponential(1.0 / total)
        else:
            t_event = 1.0e300
        t_next = t_event
        kind = 0  # 0 event, 1 resample, 2 horizon
        if t_res < t_next:
            t_next = t_res
            kind = 1
        if horizon_time < t_next:
            t_next = horizon_time
            kind = 2
        while gi < n_grid and t_grid[gi] <= t_next:
            q_at[gi] = q
            a_at[gi] = a_count
            s_at[gi] = s_count
            gi += 1
        if t_next > warmup_time:
            lo = t
            if lo < warmup_time:
                lo = warmup_time
            w = t_next - lo
            if q < hist_len:
                hist[q] += w
            else:
                overflow += w
            post_time += w
            qsum += q * w
            qsqsum += q * q * w
            b = int((lo - warmup_time) / batch_dt)
            if b >= n_batches:
                b = n_batches - 1
            batch_sums[b] += q * w
            batch_times[b] += w
        t = t_next
        if kind == 2:
            finished = True
            break
        if kind == 1:
            k += 1
            if k >= n_k:
                break  # pre-drawn intervals exhausted; caller retries larger
            t_res = t + intervals[k]
        else:
            u = np.random.random() * total
            if u < lam:
                q += 1
                a_count += 1
            else:
                s_count += 1
                if q > 0:
                    q -= 1
    return (hist, overflow, batch_sums, batch_times, q_at, a_at, s_at,
            qsum, qsqsum, post_time, k, finished)


def endogenous_chain_kernel(seed, products, q0, step0, warmup_steps,
                            total_steps, hist_len, n_batches):
    """One chunk of the departure-epoch recursion Q <- (Q-1)^+ + Poisson(L S).

    products holds the pre-drawn L*S values for this chunk.  Returns
    (hist, overflow, batch_sums, batch_counts, qsum, qsqsum, q_final).
    """
    np.random.seed(seed)
    hist = np.zeros(hist_len)
    overflow = 0.0
    batch_sums = np.zeros(n_batches)
    batch_counts = np.zeros(n_batches)
    per_batch = (total_steps - warmup_steps) // n_batches
    if per_batch < 1:
        per_batch = 1
    q = q0
    qsum = 0.0
    qsqsum = 0.0
    for i in range(products.shape[0]):
        n = np.random.poisson(products[i])
        if q > 0:
            q = q - 1 + n
        else:
            q = n
        step = step0 + i
        if step >= warmup_steps:
            if q < hist_len:
                hist[q] += 1.0
            else:
                overflow += 1.0
            qsum += q
            qsqsum += q * q
            b = (step - warmup_steps) // per_batch
            if b >= n_batches:
                b = n_batches - 1
            batch_sums[b] += q
            batch_counts[b] += 1.0
    return hist, overflow, batch_sums, batch_counts, qsum, qsqsum, q


def endogenous_record_kernel(seed, products, record_steps):
    """Run the recursion from Q_0 = 0 and record Q at the given step indices.

    record_steps must be sorted ascending; index 0 records the initial state.
    """
    np.random.seed(seed)
    n_rec = record_steps.shape[0]
    out = np.zeros(n_rec, dtype=np.int64)
    q = 0
    ri = 0
    while ri < n_rec and record_steps[ri] == 0:
        out[ri] = q
        ri += 1
    for i in range(products.shape[0]):
        n = np.random.poisson(products[i])
        if q > 0:
            q = q - 1 + n
        else:
            q = n
        while ri < n_rec and record_steps[ri] == i + 1:
            out[ri] = q
            ri += 1
    return out


def endogenous_geometric_kernel(seed, products, lengths):
    """Endpoint Q_G per replication, consuming `lengths[r]` products each.

    Replication r starts at Q_0 = 0 and runs its pre-drawn shifted-geometric
    number of steps; used for Monte Carlo of the geometric-time transform.
    """
    np.random.seed(seed)
    n_reps = lengths.shape[0]
    out = np.zeros(n_reps, dtype=np.int64)
    pos = 0
    for r in range(n_reps):
        q = 0
        for _ in range(lengths[r]):
            n = np.random.poisson(products[pos])
            pos += 1
            if q > 0:
                q = q - 1 + n
            else:
                q = n
        out[r] = q
    return out


def rbm_bridge_step(q, h, drift, sigma_sq, sigma):
    """One distribution-exact update of reflected Brownian motion.

    Couples the step increment with the within-step running maximum of the
    time-reversed path (Brownian-bridge maximum), so marginals at the grid
    times carry no discretization bias at any step size.
    """
    xi = drift * h + sigma * math.sqrt(h) * np.random.normal()
    u = 1.0 - np.random.random()  # in (0, 1], log is finite
    mx = 0.5 * (xi + math.sqrt(xi * xi - 2.0 * sigma_sq * h * math.log(u)))
    qn = q + xi
    if mx > qn:
        qn = mx
    return qn


def rbm_marginal_kernel(seed, drift, sigma_sq, x0, dts, n_reps):
    """Exact-update RBM marginals on a grid; returns (n_reps, len(dts))."""
    np.random.seed(seed)
    sigma = math.sqrt(sigma_sq)
    m = dts.shape[0]
    out = np.empty((n_reps, m))
    for r in range(n_reps):
        q = x0
        for i in range(m):
            q = rbm_bridge_step(q, dts[i], drift, sigma_sq, sigma)
            out[r, i] = q
    return out


def rbm_euler_kernel(seed, drift, sigma_sq, x0, dts, n_reps):
    """Plain Euler-Lindley recursion (O(sqrt(h)) reflection bias); kept for
    step-size studies and as the benchmark counterpart of the exact update."""
    np.random.seed(seed)
    sigma = math.sqrt(sigma_sq)
    m = dts.shape[0]
    out = np.empty((n_reps, m))
    for r in range(n_reps):
        q = x0
        for i in range(m):
            h = dts[i]
            q += drift * h + sigma * math.sqrt(h) * np.random.normal()
            if q < 0.0:
                q = 0.0
            out[r, i] = q
    return out


def rbm_lst_kernel(seed, drift, sigma_sq, x0, r, s_vals, n_paths):
    """Monte Carlo of E[exp(-s Q(T))] with T ~ exp(r), one exact step per path.

    Returns (sums, sums_of_squares) per s value.
    """
    np.random.seed(seed)
    sigma = math.sqrt(sigma_sq)
    ns = s_vals.shape[0]
    acc = np.zeros(ns)
    acc2 = np.zeros(ns)
    for p in range(n_paths):
        horizon = np.random.exponential(1.0 / r)
        q = rbm_bridge_step(x0, horizon, drift, sigma_sq, sigma)
        for i in range(ns):
            v = math.exp(-s_vals[i] * q)
            acc[i] += v
            acc2[i] += v * v
    return acc, acc2


def rbm_stationary_kernel(seed, drift, sigma_sq, burn_in, spacing, n_samples):
    """Stationary samples: one exact step across the burn-in, then one exact
    step per sample spacing (samples are correlated at lag 1)."""
    np.random.seed(seed)
    sigma = math.sqrt(sigma_sq)
    q = rbm_bridge_step(0.0, burn_in, drift, sigma_sq, sigma)
    out = np.empty(n_samples)
    for i in range(n_samples):
        q = rbm_bridge_step(q, spacing, drift, sigma_sq, sigma)
        out[i] = q
    return out


KERNELS = (
    modulated_ctmc_kernel,
    general_resampled_kernel,
    endogenous_chain_kernel,
    endogenous_record_kernel,
    endogenous_geometric_kernel,
    rbm_bridge_step,
    rbm_marginal_kernel,
    rbm_euler_kernel,
    rbm_lst_kernel,
    rbm_stationary_kernel,
)
