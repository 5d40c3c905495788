"""Exception hierarchy shared by every stage of the matcher."""


class HomopatchError(Exception):
    """Base class for all library errors."""


class InvalidConfig(HomopatchError, ValueError):
    """A parameter violates a documented precondition."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class DegenerateProjection(HomopatchError, ArithmeticError):
    """A point maps to (or near) infinity under a homography."""

    def __init__(self, message, index=None):
        self.index = index
        super().__init__(message if index is None else f"{message} at index {index}")


class DegenerateConfiguration(HomopatchError, ArithmeticError):
    """A DLT system is rank deficient or the correspondences are not in general position."""


class FormatError(HomopatchError, ValueError):
    """A file does not follow its declared on-disk format."""


class LevelMismatch(HomopatchError, ValueError):
    """A feature map was supplied at the wrong pyramid level."""


class PointOutsidePatch(HomopatchError, ValueError):
    """A query point lies outside the patch it is supposed to belong to."""


class MissingGroundTruth(HomopatchError, KeyError):
    """The ground-truth oracle has no correspondence for a query point."""

    def __str__(self):
        return str(self.args[0]) if self.args else "missing ground truth"
