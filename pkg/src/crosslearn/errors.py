"""Exception hierarchy. CLI exit codes are attached to the classes."""


class CrossLearnError(Exception):
    exit_code = 1


class ConfigurationError(CrossLearnError, ValueError):
    """Invalid parameters or inconsistent dimensions."""

    exit_code = 2


class MissingArtifactError(CrossLearnError, FileNotFoundError):
    """A pipeline stage could not find the output of an earlier stage."""

    exit_code = 3

    def __init__(self, stage, path):
        self.stage = stage
        self.path = str(path)
        super().__init__(f"stage '{stage}' is missing required artifact: {self.path}")


class NumericError(CrossLearnError, ArithmeticError):
    """Non-finite input or an unrecoverable numerical failure."""

    exit_code = 4


class RankDeficiencyError(NumericError):
    pass


class MalformedHeaderError(CrossLearnError, ValueError):
    exit_code = 3


class DimensionMismatchError(CrossLearnError, ValueError):
    exit_code = 3
