"""An FFI-capable cellscript kernel.

Wraps one persistent interpreter with the machinery a kernel needs to sit
in a session: a global object store, a value codec, client-side helpers
(``kffi_call`` and friends, spliced in by the source rewriter), and the
host-side shims that generated code calls when a foreign operation arrives
(``apply``, ``argsDecode``, ``returnEncode``, ...).

The kernel is transport-agnostic.  Its ``dispatch`` slot is filled in by
the session with a callable routing an operation to another kernel and
returning the encoded result text.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from ..codec import Codec, ForeignProxy
from ..errors import KernelUnavailableError, MarshallingError, SymbolNotFoundError, UnknownReferenceError
from ..store import GlobalStore
from ..wire import IR, ObjectRef
from .interp import Builtin, CsClass, CsFunction, CsObject, Interp, cs_format


@dataclass
class CellResult:
    """What one executed cell produced: its print lines and the display
    form of its trailing expression (None when there is nothing to show)."""

    displayed: str | None
    printed: list[str]


class EncodedResult:
    """Marker wrapping already-encoded wire text, produced by returnEncode
    so the transport layer never encodes a result twice."""

    __slots__ = ("text",)

    def __init__(self, text: str):
        self.text = text


class CellscriptKernel:
    lang = "cellscript"

    def __init__(self, kernel_id: str, print_sink: Callable[[str], None] | None = None):
        self.kernel_id = kernel_id
        self.store = GlobalStore(kernel_id)
        # Routing into the rest of the session; wired up by the session.
        self.dispatch: Callable[[str, IR], str] | None = None
        self._session_print = print_sink
        self.printed: list[str] = []
        self.codec = Codec(
            owner_id=kernel_id,
            store=self.store,
            make_proxy=self._make_proxy,
            proxy_ref=lambda v: v.ref if isinstance(v, ForeignProxy) else None,
            type_name_of=self._type_name_of,
        )
        self.interp = Interp(print_sink=self._on_print, release_hook=self.release_value)
        self._install_helpers()

    # -- session-facing surface ----------------------------------------

    def run_cell(self, source: str) -> CellResult:
        """Execute one (already rewritten) cell in the persistent env."""
        mark = len(self.printed)
        value = self.interp.run(source)
        displayed = None if value is None else cs_format(value)
        return CellResult(displayed=displayed, printed=self.printed[mark:])

    def eval_code(self, code: str) -> str:
        """Evaluate generated operation code, returning encoded result text."""
        value = self.interp.run(code)
        if isinstance(value, EncodedResult):
            return value.text
        return self.codec.encode(value)

    # cellscript has no statement/expression split; both channels evaluate.
    exec_code = eval_code

    def release_value(self, value: object) -> None:
        """Drop one binding's worth of interest in a value.

        Proxies forward a delete to the owning kernel; anything of ours that
        was parked for a peer comes out of the local store.
        """
        if isinstance(value, ForeignProxy):
            if self.dispatch is not None:
                self.dispatch(value.ref.lang, IR("delete", name=value.ref.varname))
            return
        key = self.store.find_key(value)
        if key is not None:
            self.store.delete(key)

    # -- plumbing -------------------------------------------------------

    def _on_print(self, line: str) -> None:
        self.printed.append(line)
        if self._session_print is not None:
            self._session_print(line)

    def _type_name_of(self, obj: object) -> str:
        if isinstance(obj, CsObject):
            return obj.cls.name
        if isinstance(obj, (CsFunction, CsClass, Builtin)):
            raise MarshallingError(
                f"cannot marshal {cs_format(obj)}; pass data or an object instead"
            )
        return type(obj).__name__

    def _make_proxy(self, ref: ObjectRef) -> ForeignProxy:
        return ForeignProxy(ref, self._proxy_dispatch)

    def _dispatch_required(self) -> Callable[[str, IR], str]:
        if self.dispatch is None:
            raise KernelUnavailableError(
                f"kernel {self.kernel_id!r} is not connected to a session"
            )
        return self.dispatch

    def _proxy_dispatch(self, ref: ObjectRef, method: str, args: list) -> object:
        ir = IR("method", obj=ref.varname, method=method, args=self.codec.encode_args(args))
        return self.codec.decode(self._dispatch_required()(ref.lang, ir))

    # -- client-side helpers (targets of the source rewriter) ----------

    def _install_helpers(self):
        g = self.interp.globals

        def kffi_call(kernel, name, *args):
            ir = IR("function", name=name, args=self.codec.encode_args(list(args)))
            return self.codec.decode(self._dispatch_required()(kernel, ir))

        def kffi_var(kernel, name):
            ir = IR("variable", name=name)
            return self.codec.decode(self._dispatch_required()(kernel, ir))

        def kffi_new(kernel, class_name, *args):
            ir = IR("instantiate", name=class_name, args=self.codec.encode_args(list(args)))
            return self.codec.decode(self._dispatch_required()(kernel, ir))

        def kffi_release(value):
            self.release_value(value)
            return None

        g["kffi_call"] = Builtin("kffi_call", kffi_call)
        g["kffi_var"] = Builtin("kffi_var", kffi_var)
        g["kffi_new"] = Builtin("kffi_new", kffi_new)
        g["kffi_release"] = Builtin("kffi_release", kffi_release, 1)

        # Host-side endpoint shims, called only from generated code.
        g["argsDecode"] = Builtin("argsDecode", self.codec.decode_args, 1)
        g["returnEncode"] = Builtin(
            "returnEncode", lambda v: EncodedResult(self.codec.encode(v)), 1
        )
        g["apply"] = Builtin("apply", self.apply_function, 2)
        g["applyMethod"] = Builtin("applyMethod", self.apply_method, 3)
        g["resolveObj"] = Builtin("resolveObj", self.resolve_receiver, 1)
        g["readVar"] = Builtin("readVar", self.read_variable, 1)
        g["storeNew"] = Builtin("storeNew", self.construct, 3)
        g["storeDel"] = Builtin("storeDel", self.drop, 1)

    # -- host-side operation primitives (shims for generated code) ------

    def apply_function(self, name: str, args: list):
        fn = self.interp.globals.get(name)
        if fn is None:
            raise SymbolNotFoundError(f"kernel {self.kernel_id!r} defines no function {name!r}")
        return self.interp.invoke(fn, args, None)

    def apply_method(self, recv, method: str, args: list):
        return self.interp.invoke_method(recv, method, args, None)

    def resolve_receiver(self, identifier: str):
        """Receivers arrive as store keys (marshalled objects) or, for
        convenience, as names of top-level variables in this kernel."""
        if self.store.contains(identifier):
            return self.store.get(identifier)
        if identifier in self.interp.globals:
            return self.interp.globals[identifier]
        raise UnknownReferenceError(identifier)

    def read_variable(self, name: str):
        if name not in self.interp.globals:
            raise SymbolNotFoundError(f"kernel {self.kernel_id!r} defines no variable {name!r}")
        value = self.interp.globals[name]
        if isinstance(value, (CsFunction, CsClass, Builtin)):
            raise SymbolNotFoundError(
                f"{name!r} names a {'class' if isinstance(value, CsClass) else 'function'}, "
                "not a variable"
            )
        return value

    def construct(self, class_name: str, key: str, args: list):
        cls = self.interp.globals.get(class_name)
        if not isinstance(cls, CsClass):
            raise SymbolNotFoundError(
                f"kernel {self.kernel_id!r} defines no class {class_name!r}"
            )
        obj = self.interp.instantiate(cls, args)
        self.store.put(obj, cls.name, key=key)
        return obj

    def drop(self, name: str):
        if self.store.delete(name):
            return None
        # Falls back to dropping a top-level binding of that name, matching
        # how a delete may target a named host variable.
        value = self.interp.globals.get(name)
        if name in self.interp.globals and not isinstance(value, Builtin):
            del self.interp.globals[name]
        return None
