"""Exception hierarchy. ``exit_code`` is what the CLI returns for each class."""


class LabError(Exception):
    exit_code = 1


class ConfigError(LabError):
    exit_code = 2


class EigenvalueParseError(LabError):
    exit_code = 2


class NotHyperbolicError(LabError):
    pass


class NonDiscreteGroupError(LabError):
    pass


class SpectrumIncompleteError(LabError):
    pass


class SeriesDivergenceError(LabError):
    pass


class DomainError(LabError):
    pass


class RankDeficientFitError(LabError):
    pass


class ZeroDataTooShallowError(LabError):
    def __init__(self, message: str, max_feasible_n: int):
        super().__init__(message)
        self.max_feasible_n = max_feasible_n


# Command finished on a best-effort (word-capped) spectrum
EXIT_INCOMPLETE = 3
