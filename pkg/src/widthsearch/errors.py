"""Exception hierarchy shared across the package.

Two broad families matter to callers (and to the CLI exit codes): problems
with the inputs handed to us, and failures arising during computation.
"""


class WidthSearchError(Exception):
    """Base class for all package-specific errors."""


class InputError(WidthSearchError):
    """Malformed or inconsistent input (files, configs, options)."""


class FileFormatError(InputError):
    """A structured input file could not be parsed or failed validation."""


class ComputationError(WidthSearchError):
    """A well-posed request that could not be completed."""


class EnumerationCapError(ComputationError):
    """Search space too large to enumerate under the caller's cap."""

    def __init__(self, size: int, cap: int):
        self.size = size
        self.cap = cap
        super().__init__(
            f"search space holds {size} configurations, exceeding the cap of {cap}"
        )


class CoverageError(ComputationError):
    """Benchmark samples leave some latency-table entries untouched."""

    def __init__(self, missing: list  # list of (layer, c_in, c_out)
                 ):
        self.missing = missing
        shown = ", ".join(f"layer {i} ({a}->{b})" for i, a, b in missing[:5])
        more = "" if len(missing) <= 5 else f" and {len(missing) - 5} more"
        super().__init__(
            f"{len(missing)} latency-table entries have no covering sample: {shown}{more}"
        )


class FitConvergenceError(ComputationError):
    """Penalized least-squares solve did not reach tolerance."""

    def __init__(self, iterations: int, objective: float, residual_norm: float):
        self.iterations = iterations
        self.objective = objective
        self.residual_norm = residual_norm
        super().__init__(
            f"fit did not converge in {iterations} iterations "
            f"(objective {objective:.6g}, residual norm {residual_norm:.6g})"
        )


class UndefinedDeltaError(ComputationError):
    """A per-channel error estimate was queried before any observation."""

    def __init__(self, boundary: int, channel: int):
        self.boundary = boundary
        self.channel = channel
        super().__init__(
            f"no error estimate recorded for channel {channel} at boundary {boundary}"
        )


class TargetUnreachableError(ComputationError):
    """No configuration meets the latency target under the given model."""

    def __init__(self, target_ms: float, min_latency_ms: float, gamma_max: float | None = None):
        self.target_ms = target_ms
        self.min_latency_ms = min_latency_ms
        self.gamma_max = gamma_max
        if gamma_max is not None and min_latency_ms <= target_ms:
            msg = (
                f"target {target_ms:.6g} ms not reached at gamma_max={gamma_max:.6g} "
                f"(minimum achievable {min_latency_ms:.6g} ms; raise gamma_max)"
            )
        else:
            msg = (
                f"target {target_ms:.6g} ms below the minimum achievable "
                f"latency {min_latency_ms:.6g} ms"
            )
        super().__init__(msg)
