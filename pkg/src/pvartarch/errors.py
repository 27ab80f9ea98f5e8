"""Exception and warning types raised across the package."""


class PvarError(Exception):
    """Base class for all package errors."""


class MissingInput(PvarError):
    """A required input file or option was not supplied or does not exist."""

    def __init__(self, what, flag=None):
        self.what = what
        self.flag = flag
        msg = f"missing input: {what}"
        if flag:
            msg += f" (check {flag})"
        super().__init__(msg)


class MissingColumn(PvarError):
    def __init__(self, column, header=None):
        self.column = column
        super().__init__(f"missing column {column!r}" + (f" (expected header {header!r})" if header else ""))


class NonMonotonicTimestamps(PvarError):
    pass


class UnparsableRow(PvarError):
    def __init__(self, row, detail=""):
        self.row = row
        super().__init__(f"cannot parse data row {row}" + (f": {detail}" if detail else ""))


class AmbiguityUnresolvable(PvarError):
    pass


class DegenerateSeries(PvarError):
    pass


class SampleTooShort(PvarError):
    pass


class HistoryTooShort(PvarError):
    pass


class HolidayCoverage(PvarError):
    pass


class NonFiniteInput(PvarError):
    pass


class RankCollapse(RuntimeWarning):
    """A column was dropped from the LARS active set because its Gram block went singular."""


class IterationLimit(RuntimeWarning):
    """NNLS hit its iteration cap; the best feasible iterate is returned."""


class NonConvergence(RuntimeWarning):
    """The reweighting scheme stopped at the iteration cap without meeting the tolerance."""


class DroppedColumn(RuntimeWarning):
    """A zero-variance regressor was removed from a design."""
