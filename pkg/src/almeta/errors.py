"""Error types shared across the package."""


class ContractViolation(ValueError):
    """An operation was called outside its stated preconditions."""


class NumericFault(RuntimeError):
    """A non-finite value showed up where only finite values are allowed."""


class PoolExhausted(RuntimeError):
    """Selection was requested but no unlabeled items remain."""


class NoEvidence(RuntimeError):
    """A prediction was requested before any label has been revealed."""


class GenerationError(RuntimeError):
    """An episode could not be built from the available data."""


class MissingEmbedding(KeyError):
    """Lookup encoder was asked about an id it has no row for."""


class MissingScore(KeyError):
    """A-priori score table has no entry for the requested item."""


class ConfigurationError(ValueError):
    """Invalid or inconsistent configuration."""


class TrainingFault(RuntimeError):
    """Training diverged; usually fixable by lowering the step size."""
