"""Exception hierarchy shared by all charsiu_lite modules."""


class CharsiuLiteError(Exception):
    """Base class for all errors raised by this package."""


class DuplicateSymbol(CharsiuLiteError):
    """An inventory declares the same phone symbol twice."""


class CollapseTargetMissing(CharsiuLiteError):
    """A collapse-map target is not a member of the inventory."""


class UnmappedSymbol(CharsiuLiteError):
    """A sequence contains a symbol with no collapse mapping and no keep entry."""


class InventoryMismatch(CharsiuLiteError):
    """Two tiers cannot be compared because their label sets are incompatible."""


class InvalidInput(CharsiuLiteError):
    """A numeric argument violates the operation's preconditions."""


class Infeasible(CharsiuLiteError):
    """No monotonic alignment exists (fewer frames than phones)."""


class EmptyDecode(CharsiuLiteError):
    """Greedy CTC decoding produced an empty phone sequence."""


class InvalidNegatives(CharsiuLiteError):
    """A negative-sample set contains the positive target index."""


class TrainingDiverged(CharsiuLiteError):
    """Training hit a non-finite loss; `step` is the offending step index."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"non-finite loss at step {step}")


class ParseError(CharsiuLiteError):
    """A file does not parse; `line` is the 1-based offending line when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvalidTier(CharsiuLiteError):
    """Interval tier violates contiguity (gap, overlap, or bad span)."""


class EmptyTiers(CharsiuLiteError):
    """A TextGrid must contain at least one tier."""


class CorruptFile(CharsiuLiteError):
    """Declared and actual payload sizes disagree."""


class Unsupported(CharsiuLiteError):
    """File declares a dtype/endianness this reader does not handle."""
