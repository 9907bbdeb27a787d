"""Exception hierarchy shared by every module.

Each class name is what the CLI prints on failure, so names are part of the
user-facing contract.
"""


class EcocError(Exception):
    """Base class for all package errors."""


# codec
class InfeasibleCode(EcocError, ValueError):
    pass


class AttemptBudgetExceeded(EcocError, RuntimeError):
    def __init__(self, message, budget):
        super().__init__(message)
        self.budget = budget


class InvalidMatrix(EcocError, ValueError):
    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class LengthMismatch(EcocError, ValueError):
    pass


class IndexOutOfRange(EcocError, IndexError):
    pass


class IoFailure(EcocError, OSError):
    pass


class ParseError(EcocError, ValueError):
    def __init__(self, message, line=None, column=None, offset=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        if offset is not None:
            where.append(f"byte {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.line = line
        self.column = column
        self.offset = offset


# nncore
class InconsistentDims(EcocError, ValueError):
    pass


class EmptyVector(EcocError, ValueError):
    pass


class TraceMismatch(EcocError, ValueError):
    pass


class ShapeMismatch(EcocError, ValueError):
    pass


# data
class LabelOutOfRange(EcocError, ValueError):
    pass


class NonFiniteFeature(EcocError, ValueError):
    pass


class DegenerateTable(EcocError, ValueError):
    pass


class EmptySplit(EcocError, ValueError):
    pass


# trainer / synth / cli
class DimensionMismatch(EcocError, ValueError):
    pass


class IncompatibleModels(EcocError, ValueError):
    pass


class InvalidArgs(EcocError, ValueError):
    pass
