"""Canonical data types and byte-exact JSON wire forms.

Everything that crosses a kernel boundary is built from these types: the
tagged IR records describing one foreign operation, object references into a
kernel's global store, and encoded argument/return values.  The JSON layouts
produced here are the wire contract documented in docs/wire-protocol.md;
tests byte-compare against them, so changes here are breaking changes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import MalformedIRError, UnsupportedIRKindError

# Reserved key marking a JSON object as an object reference rather than a
# plain user map.
REF_MARKER = "__kffi_ref__"

IR_KINDS = ("function", "variable", "method", "instantiate", "delete")

# Fields each kind must carry, beyond "kind" itself.
_REQUIRED = {
    "function": ("name", "args"),
    "variable": ("name",),
    "method": ("obj", "method", "args"),
    "instantiate": ("name", "args"),
    "delete": ("name",),
}


@dataclass(frozen=True)
class IR:
    """One foreign operation: a function call, variable read, method call,
    class instantiation, or store deletion.

    ``name`` holds the function name, variable name, class name, or store key
    depending on ``kind``; ``obj``/``method`` are set for method calls only.
    ``args``, when present, is a string whose content is a JSON array.
    """

    kind: str
    name: str | None = None
    obj: str | None = None
    method: str | None = None
    args: str | None = None

    def validate(self) -> None:
        if self.kind not in IR_KINDS:
            raise UnsupportedIRKindError(f"unknown IR kind {self.kind!r}")
        required = _REQUIRED[self.kind]
        for f in required:
            if getattr(self, f) is None:
                raise MalformedIRError(f"{self.kind} IR missing field {f!r}")
        for f in ("name", "obj", "method", "args"):
            if f not in required and getattr(self, f) is not None:
                raise MalformedIRError(f"{self.kind} IR has unexpected field {f!r}")
        if self.args is not None:
            try:
                parsed = json.loads(self.args)
            except json.JSONDecodeError as exc:
                raise MalformedIRError(f"args is not valid JSON: {exc}") from exc
            if not isinstance(parsed, list):
                raise MalformedIRError("args content must be a JSON array")


def ir_to_json(ir: IR) -> str:
    """Serialize an IR to its canonical wire text.

    Key order is fixed (type, then name/obj/method/class, then args) and the
    output carries no whitespace outside string values, so the result is
    byte-identical across calls.
    """
    ir.validate()
    out: dict[str, str] = {"type": ir.kind}
    if ir.kind == "method":
        out["obj"] = ir.obj  # type: ignore[assignment]
        out["method"] = ir.method  # type: ignore[assignment]
    elif ir.kind == "instantiate":
        out["class"] = ir.name  # type: ignore[assignment]
    else:
        out["name"] = ir.name  # type: ignore[assignment]
    if ir.args is not None:
        out["args"] = ir.args
    return json.dumps(out, separators=(",", ":"), ensure_ascii=False)


def ir_from_json(text: str) -> IR:
    """Parse wire text back into an IR.  Inverse of :func:`ir_to_json`.

    Accepts ``"obj"`` as an alias for ``"name"`` on delete IRs (both spellings
    occur in the wild).
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedIRError(f"IR text is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise MalformedIRError("IR text must be a JSON object")
    kind = raw.get("type")
    if kind not in IR_KINDS:
        raise UnsupportedIRKindError(f"unknown IR kind {kind!r}")
    for key, value in raw.items():
        if key != "type" and value is not None and not isinstance(value, str):
            raise MalformedIRError(f"IR field {key!r} must be a string")
    if kind == "method":
        ir = IR("method", obj=raw.get("obj"), method=raw.get("method"), args=raw.get("args"))
    elif kind == "instantiate":
        ir = IR("instantiate", name=raw.get("class"), args=raw.get("args"))
    elif kind == "delete":
        ir = IR("delete", name=raw.get("name", raw.get("obj")))
    else:
        ir = IR(kind, name=raw.get("name"), args=raw.get("args"))
    ir.validate()
    return ir


@dataclass(frozen=True)
class ObjectRef:
    """Marshalled handle standing in for a live object owned by some kernel.

    ``varname`` is the key in the owner's global store; ``lang`` identifies
    the owning kernel (its language id in one-kernel-per-language sessions,
    see docs/wire-protocol.md); ``type_name`` is the owner-side class name,
    possibly empty for dynamic guests.
    """

    varname: str
    lang: str
    type_name: str = ""

    def __post_init__(self):
        if not self.varname:
            raise ValueError("object reference requires a non-empty varname")

    def to_wire(self) -> dict:
        return {
            "varname": self.varname,
            "lang": self.lang,
            "typeName": self.type_name,
            REF_MARKER: True,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_wire(), ensure_ascii=False)


def make_ref(store_key: str, lang: str, type_name: str = "") -> ObjectRef:
    """Build an object reference for a stored object."""
    return ObjectRef(varname=store_key, lang=lang, type_name=type_name)


def is_ref_map(value) -> bool:
    """A parsed JSON value is a reference iff it is a map carrying the marker,
    regardless of other keys present."""
    return isinstance(value, dict) and bool(value.get(REF_MARKER))


def ref_from_map(value: dict) -> ObjectRef:
    if "varname" not in value or "lang" not in value:
        raise MalformedIRError("reference map missing varname/lang")
    return ObjectRef(
        varname=value["varname"], lang=value["lang"], type_name=value.get("typeName", "")
    )


@dataclass(frozen=True)
class EncodedValue:
    """Wire text for one argument or return value."""

    text: str
    cls: str = "primitive_json"  # or "reference"

    def parsed(self):
        return json.loads(self.text)


def classify_encoded(text: str) -> EncodedValue:
    """Wrap wire text, classifying it as reference or primitive payload."""
    value = json.loads(text)
    cls = "reference" if is_ref_map(value) else "primitive_json"
    return EncodedValue(text=text, cls=cls)


@dataclass(frozen=True)
class KernelDescriptor:
    """Identity and capabilities of one registered kernel.

    ``eval_capable`` kernels serve the HTTP side channel; others only accept
    code over their blocking wire.  ``exec_split`` marks languages whose
    statement-shaped IRs (instantiate/delete) must go to a separate /exec
    endpoint.
    """

    kernel_id: str
    lang: str
    type_profile: str = "dynamic"  # or "static"
    eval_capable: bool = True
    side_channel_endpoint: str | None = None
    exec_split: bool = False
    wire_endpoint: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.type_profile not in ("dynamic", "static"):
            raise ValueError(f"bad type_profile {self.type_profile!r}")
        if not self.eval_capable and self.side_channel_endpoint is not None:
            raise ValueError("eval-incapable kernels cannot advertise a side channel")

    def to_wire(self) -> dict:
        return {
            "kernel_id": self.kernel_id,
            "lang": self.lang,
            "type_profile": self.type_profile,
            "eval_capable": self.eval_capable,
            "side_channel_endpoint": self.side_channel_endpoint,
            "exec_split": self.exec_split,
        }

    @classmethod
    def from_wire(cls, raw: dict) -> "KernelDescriptor":
        return cls(
            kernel_id=raw["kernel_id"],
            lang=raw["lang"],
            type_profile=raw.get("type_profile", "dynamic"),
            eval_capable=bool(raw.get("eval_capable", True)),
            side_channel_endpoint=raw.get("side_channel_endpoint"),
            exec_split=bool(raw.get("exec_split", False)),
        )
