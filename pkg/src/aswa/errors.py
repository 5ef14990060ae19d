"""Exception types shared across the package."""


class DatasetError(Exception):
    """Problem with dataset files: missing, malformed, or inconsistent."""


class VocabMismatchError(DatasetError):
    """Checkpoint vocabulary does not match the loaded dataset."""


class NumericsError(RuntimeError):
    """A numerical failure (non-finite loss, gradient, or metric)."""


class QueryGenerationError(RuntimeError):
    """The graph cannot supply enough distinct query instantiations."""
