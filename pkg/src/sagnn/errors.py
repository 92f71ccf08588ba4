"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Bad user input: out-of-range options, malformed records, shape errors."""


class FormatError(ValidationError):
    """A file does not conform to its declared on-disk format."""


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during training."""

    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


class TrialError(RuntimeError):
    """A trial in a multi-seed run failed; completed trials are attached."""

    def __init__(self, message: str, partial):
        super().__init__(message)
        self.partial = partial
