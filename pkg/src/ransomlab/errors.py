"""Exception types raised across the package."""


class LabError(Exception):
    """Base class for domain errors (mapped to exit code 1 by the CLI)."""


class EmptyBuffer(LabError, ValueError):
    pass


class MissingEntropy(LabError, ValueError):
    pass


class ParseError(LabError, ValueError):
    def __init__(self, line_no, reason=""):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {reason}" if reason else f"line {line_no}")


class TimeOrder(LabError, ValueError):
    def __init__(self, line_no):
        self.line_no = line_no
        super().__init__(f"line {line_no}: timestamp decreases")


class NotEnoughSegments(LabError, ValueError):
    pass


class EmptyReference(LabError, ValueError):
    pass


class ShapeError(LabError, ValueError):
    def __init__(self, expected, got, what=""):
        self.expected = expected
        self.got = got
        prefix = f"{what}: " if what else ""
        super().__init__(f"{prefix}expected shape {expected}, got {got}")


class Diverged(LabError, RuntimeError):
    def __init__(self, epoch):
        self.epoch = epoch
        super().__init__(f"loss became non-finite at epoch {epoch}")


class DegenerateLabels(LabError, ValueError):
    pass


class EmptySet(LabError, ValueError):
    pass


class BadRank(LabError, ValueError):
    pass


class QualityStarvation(LabError, RuntimeError):
    """Regeneration ran out of rounds before collecting enough passing segments."""

    def __init__(self, rounds, passed, report=None):
        self.rounds = rounds
        self.passed = passed
        self.report = report
        super().__init__(f"only {passed} segments passed after {rounds} rounds")


class SandboxViolation(LabError, PermissionError):
    pass


class WatchError(LabError, RuntimeError):
    pass
