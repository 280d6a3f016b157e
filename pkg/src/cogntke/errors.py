"""Exception types shared across the package."""


class CognTkeError(Exception):
    """Base class for all package errors."""


class MissingData(CognTkeError):
    """A required dataset file is absent or empty."""


class ParseError(CognTkeError):
    """A dataset line could not be parsed; carries the offending line number."""

    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


class InvalidSplit(CognTkeError):
    """Train/valid/test splits are not in chronological order."""


class AlreadyAugmented(CognTkeError):
    """Inverse/identity augmentation was applied twice."""


class OutOfRange(CognTkeError):
    """An id or offset falls outside its vocabulary or table bounds."""


class ShapeError(CognTkeError):
    """Tensor arguments have inconsistent dimensions."""


class EmptyNeighborhood(CognTkeError):
    """Attention was requested for an entity with no in-edges."""


class DivergenceError(CognTkeError):
    """Training produced a non-finite loss."""


class VocabError(CognTkeError):
    """Checkpoint and dataset vocabularies are incompatible."""


class RemapError(CognTkeError):
    """Zero-shot relation remapping found no overlapping names."""


class TargetAbsent(CognTkeError):
    """Explanation target entity is not present in the digraph."""
