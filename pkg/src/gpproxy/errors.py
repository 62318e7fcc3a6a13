"""Exception types shared across the package.

Every failure mode raised by library code subclasses :class:`GpProxyError`,
so callers can catch one base class at pipeline boundaries while tests pin
the specific condition.
"""


class GpProxyError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(GpProxyError):
    """Vectors or matrices with incompatible shapes were combined."""


class NonFiniteInput(GpProxyError):
    """An input contained NaN or infinite entries."""


class ZeroDenominator(GpProxyError):
    """A usage fraction was requested for an empty reference dataset."""


class ParseError(GpProxyError):
    """A dataset or cache file contained a malformed row."""


class LabelOutOfRange(GpProxyError):
    """A class label fell outside [0, V)."""


class EmptyTrainingSet(GpProxyError):
    """A GP fit was attempted with zero training pairs."""


class IllConditioned(GpProxyError):
    """Factorization failed even after progressive jitter.

    Raised loudly instead of ever letting NaN/Inf escape a numerical routine.
    """


class NegativeVariance(GpProxyError):
    """A posterior variance came out below the round-off tolerance."""


class EmptyInput(GpProxyError):
    """An operation that needs at least one (or two) items got none."""


class CountOutOfRange(GpProxyError):
    """A requested sample count was outside [1, |D|]."""


class ZeroVector(GpProxyError):
    """Cosine distance was requested for a zero-norm vector."""


class OracleUnavailable(GpProxyError):
    """The oracle backend could not produce an answer."""


class BudgetExceeded(GpProxyError):
    """A query would cross the configured hard cap on unique oracle calls."""


class TrainingDiverged(GpProxyError):
    """A training loop produced a non-finite loss or parameters."""


class KOutOfRange(GpProxyError):
    """A top-k truncation was requested with k outside [1, V]."""


class TokenIdOutOfRange(GpProxyError):
    """A sparse logprob entry referenced a token id >= vocabulary size."""


class EmptySplit(GpProxyError):
    """Evaluation was requested on an empty dataset split."""


class InvalidSpec(GpProxyError):
    """A synthetic-data or experiment specification was inconsistent."""


class MissingArtifacts(GpProxyError):
    """Diagnostics export could not find the artifacts of a completed run."""


class ConfigError(GpProxyError):
    """An experiment configuration file was missing or invalid."""
