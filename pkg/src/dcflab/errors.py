"""Exception hierarchy shared by the lab modules."""


class LabError(Exception):
    """Base class for every error raised by dcflab."""


class InvalidKeyLength(LabError, ValueError):
    pass


class IndexOutOfRange(LabError, IndexError):
    pass


class EmptyInput(LabError, ValueError):
    pass


class InsufficientSamples(LabError, ValueError):
    """A timing profile has at least one byte value with no samples."""

    def __init__(self, position, empty_values):
        self.position = position
        self.empty_values = tuple(empty_values)
        super().__init__(
            f"position {position}: {len(self.empty_values)} byte values have no samples"
        )


class AmbiguousMaximum(LabError):
    """The candidate scores have more than one maximiser."""

    def __init__(self, tied, position=None):
        self.tied = tuple(int(t) for t in tied)
        self.position = position
        where = "" if position is None else f"position {position}: "
        super().__init__(f"{where}{len(self.tied)} candidates share the maximum score")


class InvalidSpec(LabError, ValueError):
    pass


class ConfigError(LabError, ValueError):
    pass
