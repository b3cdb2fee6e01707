"""Exception types shared across the package."""


class ModelSpecError(ValueError):
    """A model spec file or descriptor failed validation."""


class NumericalError(RuntimeError):
    """A numerical procedure failed (non-convergence, ill-conditioning, ...)."""


class PoleError(NumericalError):
    """A transform was requested exactly at a pole."""
