"""Exception types shared across the simulator."""


class JengaError(Exception):
    """Base class for all simulator errors."""


class InvalidConfig(JengaError):
    pass


class NonPositiveDepth(JengaError):
    pass


class JointLimit(JengaError):
    pass


class CollapsedTower(JengaError):
    pass


class AlreadyExtracted(JengaError):
    pass


class NotExtracted(JengaError):
    pass


class SingularFeatures(JengaError):
    pass


class TrackingLost(JengaError):
    pass


class NoContact(JengaError):
    pass


class DegenerateMask(JengaError):
    pass


class IllConditioned(JengaError):
    pass


class TargetNotVisible(JengaError):
    pass


class InvalidWorkspace(JengaError):
    pass


class UnknownBlock(JengaError):
    pass


class IncompleteLevel(JengaError):
    pass


class ParseError(JengaError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
