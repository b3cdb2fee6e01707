"""Kernel backend selection.

The hot loops in kernels.py run numba-jitted by default; setting the
environment variable OVQ_NO_NUMBA=1 (or numba being unavailable) selects the
pure-Python/numpy fallback.  Both paths consume the legacy MT19937 stream
identically, so results are bitwise equal across backends.

The fallback path mutates numpy's global RNG state (the kernels call
np.random.seed); rng_guard saves and restores it around kernel calls, and
replications run serially since the global state is not thread-safe.  Under
numba the state is thread-local and replications may run in parallel,
capped by OVQ_THREADS.
"""

import os
from contextlib import contextmanager

import numpy as np

from . import kernels as _kernels

_flag = os.environ.get("OVQ_NO_NUMBA", "").strip().lower()
_want_numba = _flag in ("", "0", "false", "no")

USING_NUMBA = False
if _want_numba:
    try:
        from numba import njit as _njit
        USING_NUMBA = True
    except ImportError:
        USING_NUMBA = False

if USING_NUMBA:
    _jit = lambda fn: _njit(cache=True, nogil=True)(fn)
    # helper must be jitted before the kernels that call it resolve the global
    _kernels.rbm_bridge_step = _jit(_kernels.rbm_bridge_step)
    modulated_ctmc = _jit(_kernels.modulated_ctmc_kernel)
    general_resampled = _jit(_kernels.general_resampled_kernel)
    endogenous_chain = _jit(_kernels.endogenous_chain_kernel)
    endogenous_record = _jit(_kernels.endogenous_record_kernel)
    endogenous_geometric = _jit(_kernels.endogenous_geometric_kernel)
    rbm_marginal = _jit(_kernels.rbm_marginal_kernel)
    rbm_euler = _jit(_kernels.rbm_euler_kernel)
    rbm_lst = _jit(_kernels.rbm_lst_kernel)
    rbm_stationary = _jit(_kernels.rbm_stationary_kernel)
else:
    modulated_ctmc = _kernels.modulated_ctmc_kernel
    general_resampled = _kernels.general_resampled_kernel
    endogenous_chain = _kernels.endogenous_chain_kernel
    endogenous_record = _kernels.endogenous_record_kernel
    endogenous_geometric = _kernels.endogenous_geometric_kernel
    rbm_marginal = _kernels.rbm_marginal_kernel
    rbm_euler = _kernels.rbm_euler_kernel
    rbm_lst = _kernels.rbm_lst_kernel
    rbm_stationary = _kernels.rbm_stationary_kernel


@contextmanager
def rng_guard():
    """Protect numpy's global RNG state from fallback-path kernel calls."""
    if USING_NUMBA:
        yield
    else:
        state = np.random.get_state()
        try:
            yield
        finally:
            np.random.set_state(state)


def max_workers():
    env = os.environ.get("OVQ_THREADS", "").strip()
    if not USING_NUMBA:
        return 1
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)
