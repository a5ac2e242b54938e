"""Exception types shared across the package."""


class ArbLabError(Exception):
    """Base class for all errors raised by arblab."""


class DimensionError(ArbLabError, ValueError):
    pass


class RankError(ArbLabError, ValueError):
    pass


class InvalidSpec(ArbLabError, ValueError):
    pass


class FormatError(ArbLabError, ValueError):
    """Malformed input file. ``offset`` is the byte offset of the problem."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DegenerateWeights(ArbLabError, ValueError):
    pass


class DivergedError(ArbLabError, RuntimeError):
    def __init__(self, epoch, detail=""):
        msg = f"training diverged at epoch {epoch}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.epoch = epoch


class ConfigError(ArbLabError, ValueError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
