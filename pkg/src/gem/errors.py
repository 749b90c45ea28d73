"""Exception hierarchy shared by all gem modules."""


class GemError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(GemError):
    """Invalid configuration value (bad fractions, thresholds, dims...)."""


class ValidationError(GemError):
    """Malformed data: lexicon files, corpora, tensors, arguments."""


class StratificationError(GemError):
    """A stratum is too small to be split at the requested ratios."""


class IncompatibilityError(GemError):
    """Artifacts that do not belong together (vocabulary hash mismatch...)."""


class VariantError(GemError):
    """A model variant was asked for an output it does not produce."""


class TrainingAborted(GemError):
    """Training hit a non-finite loss or gradient."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class CheckpointError(GemError):
    """Checkpoint file is corrupt or has the wrong format/version."""
