"""Exception types shared across the simulator."""

from __future__ import annotations


class FlsimError(Exception):
    """Base class for every error raised by flsim."""


class FormatError(FlsimError, ValueError):
    """Input bytes do not follow the expected file format."""


class ConsistencyError(FlsimError, ValueError):
    """Two pieces of input that must agree do not."""


class TruncatedStreamError(FlsimError, IOError):
    """A byte stream ended before the declared payload was read."""


class InfeasiblePartitionError(FlsimError, ValueError):
    pass


class DomainError(FlsimError, ValueError):
    pass


class AggregationError(FlsimError, ValueError):
    pass


class DivergenceError(FlsimError, ArithmeticError):
    """Local training produced a non-finite loss."""

    def __init__(self, message: str, *, client_id: int | None = None, epoch: int | None = None,
                 batch: int | None = None, round_idx: int | None = None):
        super().__init__(message)
        self.client_id = client_id
        self.epoch = epoch
        self.batch = batch
        self.round_idx = round_idx

    def __str__(self) -> str:
        where = ", ".join(
            f"{k}={v}" for k, v in (("round", self.round_idx), ("client", self.client_id),
                                    ("epoch", self.epoch), ("batch", self.batch)) if v is not None
        )
        base = super().__str__()
        return f"{base} ({where})" if where else base


class ConfigError(FlsimError, ValueError):
    """Bad configuration file or value.

    ``line`` is set for syntax problems, ``field`` for range violations.
    """

    def __init__(self, message: str, *, line: int | None = None, field: str | None = None):
        prefix = ""
        if line is not None:
            prefix += f"line {line}: "
        if field is not None:
            prefix += f"{field}: "
        super().__init__(prefix + message)
        self.line = line
        self.field = field


class ReproducibilityError(FlsimError):
    """A replayed run diverged from the stored report."""

    def __init__(self, message: str, *, path: str):
        super().__init__(f"{message} at {path}")
        self.path = path
