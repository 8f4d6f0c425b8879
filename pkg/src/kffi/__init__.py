"""kffi: a broker that lets code cells in one language call functions,
variables, and classes defined in cells of another language.

The pieces: a canonical JSON operation format (wire), per-kernel object
stores with reference marshalling (store, codec), per-language code
generation (codegen), source rewriting of client cells (registry, rewriter),
and an HTTP side channel that keeps cross-kernel recursion from deadlocking
(transport, broker).  session ties them together; a small built-in cell
language (cellscript) provides hermetic kernels for tests and demos.
"""

from .errors import (
    AmbiguousSymbolError,
    ArityMismatchError,
    CodegenError,
    ConfigError,
    ForeignError,
    KernelUnavailableError,
    KffiError,
    MalformedIRError,
    MarshallingError,
    RecursionLimitError,
    SymbolNotFoundError,
    TransportTimeoutError,
    UnknownReferenceError,
    UnsupportedIRKindError,
)
from .wire import IR, EncodedValue, KernelDescriptor, ObjectRef, ir_from_json, ir_to_json, make_ref

__version__ = "0.1.0"

__all__ = [
    "IR",
    "EncodedValue",
    "KernelDescriptor",
    "ObjectRef",
    "ir_from_json",
    "ir_to_json",
    "make_ref",
    "KffiError",
    "MalformedIRError",
    "UnsupportedIRKindError",
    "MarshallingError",
    "UnknownReferenceError",
    "SymbolNotFoundError",
    "AmbiguousSymbolError",
    "ArityMismatchError",
    "CodegenError",
    "ForeignError",
    "TransportTimeoutError",
    "KernelUnavailableError",
    "RecursionLimitError",
    "ConfigError",
    "__version__",
]
