"""Value marshalling between a kernel and the wire.

Primitives and JSON-shaped containers travel by value.  Anything else is
parked in the owning kernel's global store and travels as an object
reference; on the receiving side a reference either resolves back to the
original object (when it came home to its owner) or becomes a proxy that
forwards attribute access as method operations.
"""

from __future__ import annotations

import json
import math
from typing import Callable

from .errors import MalformedIRError, MarshallingError
from .store import GlobalStore
from .wire import REF_MARKER, ObjectRef, is_ref_map, make_ref, ref_from_map

# json.dumps on these goes by value; everything else goes by reference.
_PRIMITIVES = (bool, int, float, str, type(None))

DEFAULT_MAX_DEPTH = 64


class ForeignProxy:
    """Stand-in for an object living in another kernel.

    Attribute access yields callables that forward as method operations
    through the dispatcher the proxy was built with.  Only methods are
    reachable; fields would need a getter on the owning side.
    """

    # Keep the instance namespace empty of public names so __getattr__ sees
    # every method name the user asks for.
    __slots__ = ("_ref", "_dispatch")

    def __init__(self, ref: ObjectRef, dispatch: Callable):
        object.__setattr__(self, "_ref", ref)
        object.__setattr__(self, "_dispatch", dispatch)

    @property
    def ref(self) -> ObjectRef:
        return self._ref

    def __getattr__(self, name: str):
        if name.startswith("_"):
            raise AttributeError(name)

        def method(*args):
            return self._dispatch(self._ref, name, list(args))

        method.__name__ = name
        return method

    def __repr__(self) -> str:
        return f"<{self._ref.type_name or 'object'}>"

    def __eq__(self, other) -> bool:
        return isinstance(other, ForeignProxy) and other._ref == self._ref

    def __hash__(self) -> int:
        return hash(self._ref)


class Codec:
    """Encode/decode values for one kernel.

    ``owner_id`` names the kernel whose store backs local objects.
    ``make_proxy`` builds the local stand-in for a foreign reference (the
    kernel decides what a proxy looks like in its value space);
    ``proxy_ref`` extracts the reference back out of such a stand-in, or
    returns None for ordinary values.
    """

    def __init__(
        self,
        owner_id: str,
        store: GlobalStore,
        make_proxy: Callable[[ObjectRef], object],
        proxy_ref: Callable[[object], ObjectRef | None],
        type_name_of: Callable[[object], str] = lambda obj: type(obj).__name__,
        max_depth: int = DEFAULT_MAX_DEPTH,
    ):
        self.owner_id = owner_id
        self.store = store
        self.make_proxy = make_proxy
        self.proxy_ref = proxy_ref
        self.type_name_of = type_name_of
        self.max_depth = max_depth

    # -- encode ---------------------------------------------------------

    def encode(self, value: object) -> str:
        """Wire text for one value."""
        return json.dumps(self._to_jsonable(value, 0), ensure_ascii=False)

    def encode_args(self, values: list[object]) -> str:
        """Wire text for an argument list: a JSON array string."""
        parts = [json.dumps(self._to_jsonable(v, 0), ensure_ascii=False) for v in values]
        return "[" + ", ".join(parts) + "]"

    def _to_jsonable(self, value: object, depth: int):
        if depth > self.max_depth:
            raise MarshallingError(f"value nesting exceeds {self.max_depth} levels")
        ref = self.proxy_ref(value)
        if ref is not None:
            # Already a handle to someone's object; pass it through untouched
            # so the owner can recognize it.
            return ref.to_wire()
        if isinstance(value, bool) or value is None:
            return value
        if isinstance(value, int):
            return value
        if isinstance(value, float):
            if not math.isfinite(value):
                raise MarshallingError(f"cannot marshal non-finite float {value!r}")
            return value
        if isinstance(value, str):
            return value
        if isinstance(value, (list, tuple)):
            return [self._to_jsonable(v, depth + 1) for v in value]
        if isinstance(value, dict):
            out = {}
            for k, v in value.items():
                if not isinstance(k, str):
                    raise MarshallingError(
                        f"map keys must be strings, got {type(k).__name__}"
                    )
                if k == REF_MARKER:
                    raise MarshallingError(
                        f"map key {REF_MARKER!r} is reserved for object references"
                    )
                out[k] = self._to_jsonable(v, depth + 1)
            return out
        if callable(value) and not hasattr(value, "__kffi_storable__"):
            raise MarshallingError(
                f"cannot marshal callable {getattr(value, '__name__', value)!r}; "
                "pass an object with methods instead"
            )
        # Anything else is a live object: park it and send a reference.
        key = self.store.find_key(value)
        if key is None:
            key = self.store.put(value, self.type_name_of(value))
        return make_ref(key, self.owner_id, self.store.type_name(key)).to_wire()

    # -- decode ---------------------------------------------------------

    def decode(self, text: str) -> object:
        """Value for one piece of wire text."""
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise MalformedIRError(f"encoded value is not valid JSON: {exc}") from exc
        return self._from_jsonable(raw)

    def decode_args(self, args_text: str) -> list[object]:
        """Values for an argument-list string.  Content must be a JSON array."""
        try:
            raw = json.loads(args_text)
        except json.JSONDecodeError as exc:
            raise MalformedIRError(f"args text is not valid JSON: {exc}") from exc
        if not isinstance(raw, list):
            raise MalformedIRError("args content must be a JSON array")
        return [self._from_jsonable(v) for v in raw]

    def _from_jsonable(self, raw):
        if is_ref_map(raw):
            ref = ref_from_map(raw)
            if ref.lang == self.owner_id:
                # Our own object coming home: hand back the original.
                return self.store.get(ref.varname)
            return self.make_proxy(ref)
        if isinstance(raw, list):
            return [self._from_jsonable(v) for v in raw]
        if isinstance(raw, dict):
            return {k: self._from_jsonable(v) for k, v in raw.items()}
        return raw
