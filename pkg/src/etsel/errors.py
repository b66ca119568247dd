"""Exception hierarchy with stable machine-readable error codes.

Every error the engine can raise carries a `code` string that is part of the
CLI contract: tools consuming the JSON error output key off the code, never
the message text.
"""

from __future__ import annotations


class EtselError(Exception):
    """Base class for all engine errors."""

    code = "internal"

    def to_json(self) -> dict:
        return {"error": {"code": self.code, "message": str(self)}}


class FormatError(EtselError):
    """File is not an ETS1 tensor (bad magic or truncated header)."""

    code = "bad_format"


class CorruptionError(EtselError):
    """Declared dims disagree with the payload size."""

    code = "corrupt_tensor"


class ValidationError(EtselError):
    """Tensor content violates a value constraint (NaN/Inf, bad dims for role)."""

    code = "invalid_value"


class SchemaError(EtselError):
    """Manifest JSON violates the instance schema."""

    code = "bad_manifest"


class IOFailure(EtselError):
    """Underlying filesystem read/write failed."""

    code = "io_error"


class DomainError(EtselError):
    """Argument outside the operation's domain (e.g. key count > frame count)."""

    code = "domain"


class InfeasibleError(EtselError):
    """No candidate can satisfy the budget (e.g. key tokens alone exceed it)."""

    code = "infeasible"
