"""Exception types shared across the package."""


class SiamPFError(Exception):
    """Base class for all package errors."""


class SpecError(SiamPFError):
    """A network layer specification is internally inconsistent."""


class ShapeError(SiamPFError):
    """An array/feature-map shape does not satisfy an operation's contract."""


class DataError(SiamPFError):
    """A dataset, sequence or annotation file is malformed or unusable."""


class CheckpointError(SiamPFError):
    """A checkpoint file is missing, corrupt or incompatible."""


class ConfigError(SiamPFError):
    """One or more configuration keys are unknown or badly typed.

    ``violations`` lists every problem found so the user can fix them in
    one pass.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
