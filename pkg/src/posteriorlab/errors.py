"""Exception hierarchy shared by all modules."""


class PosteriorLabError(Exception):
    """Base class for all library errors."""


class DimensionError(PosteriorLabError):
    """Mismatched support sizes or array shapes."""


class DomainError(PosteriorLabError):
    """Scalar argument outside its admissible range."""


class ErgodicityError(PosteriorLabError):
    """Transition matrix does not admit a unique stationary distribution."""


class ParameterError(PosteriorLabError):
    """Parameter invalid for the requested model family."""


class PartitionError(PosteriorLabError):
    """Data point not covered by the supplied partition."""


class ConfigurationError(PosteriorLabError):
    """Invalid configuration (bad key, incompatible metric/family pair, ...).

    Carries an optional dotted key path naming the offending entry.
    """

    def __init__(self, message, key_path=None):
        if key_path:
            message = f"{key_path}: {message}"
        super().__init__(message)
        self.key_path = key_path


class DominationError(PosteriorLabError):
    """Every prior atom assigns zero likelihood to the observed sample.

    Diagnostics record which atoms died and the first observation index
    at which each atom's likelihood hit zero.
    """

    def __init__(self, message, dead_atoms=None, first_forbidden_index=None):
        super().__init__(message)
        self.dead_atoms = dead_atoms
        self.first_forbidden_index = first_forbidden_index


class EmptyRegionError(PosteriorLabError):
    """Region has zero prior (or posterior) mass where positive mass is required."""


class RefusalError(PosteriorLabError):
    """Requested exact computation exceeds the configured enumeration cap."""


class AccuracyError(PosteriorLabError):
    """Quadrature or iteration failed to reach the requested tolerance."""


class PreconditionError(PosteriorLabError):
    """A stated mathematical precondition was checked and found violated."""


class CoverError(PosteriorLabError):
    """Candidate grid fails the net property it claims."""
