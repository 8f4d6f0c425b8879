"""Exception types shared across the package."""

from __future__ import annotations


class KffiError(Exception):
    """Base class for every error raised by this package."""


class MalformedIRError(KffiError):
    """An IR violates the field invariants of its kind."""


class UnsupportedIRKindError(KffiError):
    """Wire text carries an unknown IR type tag."""


class MarshallingError(KffiError):
    """A value cannot be encoded for the wire (e.g. a function value)."""


class UnknownReferenceError(KffiError):
    """An object reference points at a store key that does not exist."""

    def __init__(self, key: str, message: str | None = None):
        super().__init__(message or f"unknown reference: {key!r}")
        self.key = key


class SymbolNotFoundError(KffiError):
    """No foreign kernel defines the requested symbol."""


class AmbiguousSymbolError(KffiError):
    """Several foreign kernels define the symbol and no qualifier was given."""

    def __init__(self, name: str, candidates: list[str]):
        super().__init__(
            f"ambiguous symbol {name!r}: defined in kernels {', '.join(sorted(candidates))}"
            " (qualify as kernel_id:name)"
        )
        self.name = name
        self.candidates = list(candidates)


class ArityMismatchError(KffiError):
    """A rewritten call's argument count disagrees with the registered signature."""

    def __init__(self, name: str, expected: int, actual: int):
        super().__init__(f"{name} expects {expected} argument(s), got {actual}")
        self.name = name
        self.expected = expected
        self.actual = actual


class CodegenError(KffiError):
    """No template exists for the requested IR kind / profile combination."""


class ForeignError(KffiError):
    """An error raised inside another kernel, carried back over the wire."""

    def __init__(self, ename: str, evalue: str, trace: str = "", origin_kernel: str = ""):
        label = f"[{origin_kernel}] " if origin_kernel else ""
        super().__init__(f"{label}{ename}: {evalue}")
        self.ename = ename
        self.evalue = evalue
        self.trace = trace
        self.origin_kernel = origin_kernel


class TransportTimeoutError(KffiError):
    """A dispatch did not complete in time (includes blocking-wire deadlocks)."""

    def __init__(self, message: str, correlation_id: str = ""):
        super().__init__(message)
        self.correlation_id = correlation_id


class KernelUnavailableError(KffiError):
    """The target kernel is unknown or not reachable."""


class RecursionLimitError(KffiError):
    """A foreign-call chain exceeded the configured depth cap."""


class ConfigError(KffiError):
    """A service/notebook configuration file is invalid."""
