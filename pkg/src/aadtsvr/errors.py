"""Exception hierarchy for the AADT estimation toolkit."""

from __future__ import annotations


class AadtError(Exception):
    """Base class for every error raised by this package."""


# --- domain -----------------------------------------------------------------


class UnmappedClass(AadtError):
    def __init__(self, fclass: int):
        super().__init__(
            f"functional class {fclass} has no model group; add it to the mapping file"
        )
        self.fclass = fclass


# --- ingest -----------------------------------------------------------------


class ParseError(AadtError):
    """A CSV input could not be parsed.

    ``row`` and ``col`` are 1-based spreadsheet coordinates when known.
    """

    def __init__(self, message: str, row: int | None = None, col: int | None = None):
        where = ""
        if row is not None:
            where = f"row {row}"
            if col is not None:
                where += f", column {col}"
            where = f" ({where})"
        super().__init__(f"{message}{where}")
        self.row = row
        self.col = col


class MissingHeader(ParseError):
    pass


class BadDate(ParseError):
    pass


class NonNumericVolume(ParseError):
    pass


class NonNumericCell(ParseError):
    pass


class MissingGrowthFactor(ParseError):
    def __init__(self, row: int):
        super().__init__(
            "growth factor is blank or 0; a blank cell counts as 0, "
            "so enter 1 for up-to-date counts",
            row=row,
            col=5,
        )


class WrongRowCount(ParseError):
    pass


class NonPositiveParam(ParseError):
    pass


class BadClassCode(ParseError):
    pass


class DuplicateStation(ParseError):
    def __init__(self, key, row: int | None = None):
        super().__init__(f"station {key} listed more than once", row=row)
        self.key = key


class InvalidTemplate(AadtError):
    pass


# --- svr --------------------------------------------------------------------


class DimensionMismatch(AadtError):
    pass


class EmptyTrainingSet(AadtError):
    pass


class NonFiniteInput(AadtError):
    pass


class NoConvergence(AadtError):
    def __init__(self, max_iterations: int, gap: float):
        super().__init__(
            f"SMO did not reach the KKT tolerance within {max_iterations} pair updates "
            f"(remaining gap {gap:.3g})"
        )
        self.max_iterations = max_iterations
        self.gap = gap


# --- tuning -----------------------------------------------------------------


class TooFewSamples(AadtError):
    pass


# --- estimators -------------------------------------------------------------


class NoCompleteDays(AadtError):
    pass


class UnknownStation(AadtError):
    def __init__(self, key):
        super().__init__(f"station {key} has ATR data but is not in the ATR list")
        self.key = key


class UntrainedGroup(AadtError):
    def __init__(self, group, reason: str = ""):
        msg = f"no trained model for group {group}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)
        self.group = group


class ZeroFactor(AadtError):
    def __init__(self, fclass: int, month: int, which: str = "seasonal"):
        super().__init__(
            f"ZeroFactor: {which} factor for class {fclass}, month {month} is 0 "
            "(blank cell in the expansion factor file)"
        )
        self.fclass = fclass
        self.month = month
        self.which = which


class InconsistentClass(AadtError):
    def __init__(self, key, classes):
        super().__init__(f"station {key} appears with several functional classes {sorted(classes)}")
        self.key = key


# --- evaluation -------------------------------------------------------------


class NonPositiveActual(AadtError):
    pass


class EmptyInput(AadtError):
    pass


class BadConfig(AadtError):
    pass
