"""Queue-length analysis for single-server queues with resampled
(overdispersed) arrival and service rates: exact stationary solvers,
heavy-traffic approximations, cumulative-flow moments, and discrete-event
simulation oracles cross-verifying each other.
"""

from .errors import ModelSpecError, NumericalError, PoleError
from .models import (
    ClockLaw,
    EndogenousSpec,
    Generator,
    GeneralResampledSpec,
    MMQueueSpec,
    RateLawFinite,
    RateLawGeneral,
    ResampledSpec,
    ScalarLaw,
    ServiceLaw,
    build_resampling_generator,
    load_model_spec,
    write_model_spec,
)

__version__ = "0.1.0"
