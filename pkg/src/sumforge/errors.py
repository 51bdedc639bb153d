"""Exception types shared across the package."""


class SumforgeError(Exception):
    """Base class for all package errors."""


class EmptyCorpus(SumforgeError):
    """An operation that needs at least one example got none."""


class EmptyModelRequest(SumforgeError):
    """BPE learning was asked for zero merges."""


class DanglingMarker(SumforgeError):
    """A subword sequence ends on a continuation piece."""


class SpanOutOfRange(SumforgeError):
    """A mask span does not fit the document it is applied to."""


class EmptyDocument(SumforgeError):
    """A document with no tokens where content is required."""


class MalformedLine(SumforgeError):
    """A corpus line that is not valid JSON or violates the record schema."""

    def __init__(self, line_no: int, detail: str = ""):
        self.line_no = line_no
        self.detail = detail
        msg = f"line {line_no}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class MissingField(SumforgeError):
    """A required field is absent from a corpus record."""

    def __init__(self, name: str, line_no: int | None = None):
        self.name = name
        self.line_no = line_no
        msg = f"missing field {name!r}"
        if line_no is not None:
            msg += f" at line {line_no}"
        super().__init__(msg)


class EmptyDataset(SumforgeError):
    """A named dataset in a schedule or pipeline stage has no examples."""

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"dataset {name!r} is empty")


class BackendFailure(SumforgeError):
    """An external or built-in summarizer backend failed or broke protocol."""

    def __init__(self, detail: str, item_index: int | None = None):
        self.detail = detail
        self.item_index = item_index
        msg = detail
        if item_index is not None:
            msg = f"item {item_index}: {detail}"
        super().__init__(msg)


class NoCandidates(SumforgeError):
    """Model selection was called with an empty candidate list."""


class LengthMismatch(SumforgeError):
    """Parallel evaluation inputs have different lengths."""


class CheckpointCorruption(SumforgeError):
    """A synthesis checkpoint does not match the run it claims to resume."""
