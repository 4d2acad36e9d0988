"""Exception hierarchy shared across the toolkit."""


class MapweldError(Exception):
    """Base class for all domain errors raised by this package."""


class InvalidGeometry(MapweldError):
    pass


class ParseError(MapweldError):
    def __init__(self, message, line=None, offset=None):
        ctx = ""
        if line is not None:
            ctx = f" (line {line}" + (f", offset {offset}" if offset is not None else "") + ")"
        super().__init__(message + ctx)
        self.line = line
        self.offset = offset


class VersionError(MapweldError):
    pass


class IoError(MapweldError):
    pass


class EmptySet(MapweldError):
    pass


class ClassMismatch(MapweldError):
    pass


class FrameMismatch(MapweldError):
    pass


class UnknownCell(MapweldError):
    pass


class UndecidedCell(MapweldError):
    pass


class StaleProposal(MapweldError):
    pass


class DegenerateTrace(MapweldError):
    pass


class NoGroundFound(MapweldError):
    pass


class InvalidScenario(MapweldError):
    pass


class UnknownElement(MapweldError):
    pass
