"""Value marshalling for the Python guest.

Values cross the wire as JSON text.  Primitives and containers encode
inline; anything else is parked in ``globalVars`` under a fresh UUID and
travels as a reference map:

    {"varname": "<uuid>", "lang": "<owning kernel>", "typeName": "...",
     "__kffi_ref__": true}

Decoding reverses this: a reference owned by this kernel localizes to
the exact parked object; a foreign reference becomes a RemoteRef proxy
whose method calls go back through the broker.
"""

from __future__ import annotations

import json
import math
import types
import uuid
from typing import Callable

REF_MARKER = "__kffi_ref__"
MAX_DEPTH = 64


class MarshalError(Exception):
    pass


class EncodedResult:
    """Wrapper marking text that is already encoded, so a result is never
    encoded twice on its way out of /eval or /exec."""

    __slots__ = ("text",)

    def __init__(self, text: str):
        self.text = text

    def __repr__(self):
        return f"EncodedResult({self.text!r})"


class RemoteRef:
    """Proxy for an object living in another kernel.

    Attribute access returns a closure that sends a method operation to
    the owner and returns the decoded result.
    """

    __slots__ = ("ref", "_call_method")

    def __init__(self, ref: dict, call_method: Callable):
        object.__setattr__(self, "ref", dict(ref))
        object.__setattr__(self, "_call_method", call_method)

    @property
    def varname(self) -> str:
        return self.ref["varname"]

    @property
    def lang(self) -> str:
        return self.ref["lang"]

    @property
    def type_name(self) -> str:
        return self.ref.get("typeName", "")

    def __getattr__(self, name: str):
        if name.startswith("_"):
            raise AttributeError(name)

        def call(*args):
            return self._call_method(self, name, list(args))

        call.__name__ = name
        return call

    def __repr__(self):
        return f"<{self.type_name or 'object'}>"

    def __eq__(self, other):
        return (
            isinstance(other, RemoteRef)
            and other.lang == self.lang
            and other.varname == self.varname
        )

    def __hash__(self):
        return hash((self.lang, self.varname))


def is_ref_map(value) -> bool:
    return isinstance(value, dict) and bool(value.get(REF_MARKER))


class Marshal:
    """Encoder/decoder bound to one guest kernel's globalVars."""

    def __init__(self, kernel_id: str, global_vars: dict, make_proxy: Callable):
        self.kernel_id = kernel_id
        self.global_vars = global_vars
        self.make_proxy = make_proxy

    # -- encode ---------------------------------------------------------

    def encode(self, value) -> str:
        return json.dumps(self._to_tree(value, 0), ensure_ascii=False)

    def encode_args(self, args: list) -> str:
        return json.dumps([self._to_tree(a, 0) for a in args], ensure_ascii=False)

    def _to_tree(self, value, depth: int):
        if depth > MAX_DEPTH:
            raise MarshalError(f"value nesting exceeds {MAX_DEPTH} levels")
        if value is None or isinstance(value, (bool, int, str)):
            return value
        if isinstance(value, float):
            if not math.isfinite(value):
                raise MarshalError(f"cannot encode non-finite float {value!r}")
            return value
        if isinstance(value, (list, tuple)):
            return [self._to_tree(v, depth + 1) for v in value]
        if isinstance(value, dict):
            if REF_MARKER in value:
                raise MarshalError(f"map key {REF_MARKER!r} is reserved")
            out = {}
            for k, v in value.items():
                if not isinstance(k, str):
                    raise MarshalError(f"map keys must be strings, got {k!r}")
                out[k] = self._to_tree(v, depth + 1)
            return out
        if isinstance(value, RemoteRef):
            return dict(value.ref)
        if isinstance(value, EncodedResult):
            raise MarshalError("encoded result used as a value")
        if isinstance(
            value,
            (
                type,
                types.ModuleType,
                types.FunctionType,
                types.BuiltinFunctionType,
                types.MethodType,
            ),
        ):
            raise MarshalError(f"cannot encode {type(value).__name__} {value!r}")
        return self.park(value)

    def park(self, obj) -> dict:
        """Store a local object and return its reference map.  Re-parking
        the same object reuses its key, keeping references identity-stable."""
        for key, existing in self.global_vars.items():
            if existing is obj:
                return self.ref_map(key)
        key = str(uuid.uuid4())
        self.global_vars[key] = obj
        return self.ref_map(key)

    def ref_map(self, key: str) -> dict:
        obj = self.global_vars[key]
        return {
            "varname": key,
            "lang": self.kernel_id,
            "typeName": type(obj).__name__,
            REF_MARKER: True,
        }

    # -- decode ---------------------------------------------------------

    def decode(self, text: str):
        try:
            tree = json.loads(text)
        except json.JSONDecodeError as exc:
            raise MarshalError(f"bad encoded value: {exc}") from None
        return self._from_tree(tree)

    def decode_args(self, text: str) -> list:
        args = self.decode(text)
        if not isinstance(args, list):
            raise MarshalError("argument payload must decode to a list")
        return args

    def _from_tree(self, tree):
        if isinstance(tree, list):
            return [self._from_tree(v) for v in tree]
        if isinstance(tree, dict):
            if is_ref_map(tree):
                if tree.get("lang") == self.kernel_id:
                    key = tree.get("varname", "")
                    if key not in self.global_vars:
                        raise MarshalError(f"unknown local reference {key!r}")
                    return self.global_vars[key]
                return self.make_proxy(tree)
            return {k: self._from_tree(v) for k, v in tree.items()}
        return tree
