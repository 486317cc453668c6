"""Exception hierarchy shared by every module of the package."""


class CausError(Exception):
    """Base class for all package errors.

    ``exit_code`` is what the command-line entry point returns for the error.
    """

    exit_code = 1


class DimensionMismatch(CausError, ValueError):
    pass


class NonFiniteInput(CausError, ValueError):
    pass


class TooFewSamples(CausError, ValueError):
    pass


class DegenerateData(CausError, ValueError):
    pass


class SingularCovariateBlock(CausError, ValueError):
    pass


class RankUnattainable(CausError, ValueError):
    """The order-statistic rank exceeds the number of calibration samples."""


class TooFewDirections(CausError, ValueError):
    pass


class SingularCholesky(CausError, ValueError):
    pass


class EmptyBounds(CausError, ValueError):
    pass


class MissingBigM(CausError, ValueError):
    pass


class EnumerationTooLarge(CausError, ValueError):
    pass


class InconsistentInstance(CausError, ValueError):
    pass


class SolverFailure(CausError, RuntimeError):
    exit_code = 5


class IterationLimit(CausError, RuntimeError):
    exit_code = 6


class BackendUnavailable(SolverFailure):
    pass


class NumericalFailure(SolverFailure):
    pass


class ParseError(CausError, ValueError):
    exit_code = 3

    def __init__(self, message, path=None, line=None, column=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
                if column is not None:
                    where += f":{column}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line
        self.column = column


class MissingInput(CausError, FileNotFoundError):
    exit_code = 4
