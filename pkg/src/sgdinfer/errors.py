"""Exception types shared across the package."""


class SgdInferError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(SgdInferError):
    """Invalid experiment configuration or config file."""


class NonFiniteGradientError(SgdInferError):
    """A gradient query returned a NaN or infinite component.

    Carries the 1-based iteration index at which the bad gradient was seen,
    so heavy-tail blowups can be located in long runs.
    """

    def __init__(self, iteration, context=""):
        self.iteration = iteration
        self.context = context
        where = f" ({context})" if context else ""
        super().__init__(f"non-finite gradient at iteration {iteration}{where}")


class DegenerateNormalizerError(SgdInferError):
    """The second-moment trace normalizer is zero (all gradients were zero)."""


class DegenerateCalibrationError(SgdInferError):
    """Every calibration block had a zero normalizer; no quantile available."""


class IllConditionedHessianError(SgdInferError):
    """Estimated Hessian is singular or too ill-conditioned to invert."""


class InvalidScheduleError(SgdInferError):
    """Step-size constant is at or below the stability threshold."""


class DegenerateSampleError(SgdInferError):
    """Diagnostic input carries no usable signal (e.g. all-zero gradient norms)."""


class ExperimentError(SgdInferError):
    """An experiment failed as a whole (e.g. too many failed replications)."""
