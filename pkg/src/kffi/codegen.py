"""Turn wire operations into executable code per target language.

The broker does not interpret an operation itself; it renders a small code
string in the owning kernel's language and sends that for evaluation.  Each
language profile fixes the template set.  Dynamic implicitly-typed targets
decode arguments with a splat; explicitly-typed targets unpack them one by
one, and statically-typed targets additionally wrap every value in a cast
because their global store is type-erased.

Rendered text is part of the compatibility surface: goldens under
tests/goldens/ pin it byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import CodegenError
from .wire import IR, is_ref_map

EVAL = "eval"
EXEC = "exec"


@dataclass(frozen=True)
class LanguageProfile:
    """How one language receives generated code."""

    lang: str
    typing: str  # dynamic_implicit | dynamic_explicit | static_explicit
    exec_kinds: frozenset[str]  # IR kinds that must go to the exec channel
    eval_capable: bool = True

    def channel(self, kind: str) -> str:
        return EXEC if kind in self.exec_kinds else EVAL


PROFILES: dict[str, LanguageProfile] = {
    "cellscript": LanguageProfile(
        "cellscript", "dynamic_implicit", frozenset()
    ),
    "python": LanguageProfile(
        # eval() rejects statements, so instantiate/delete go through exec().
        "python", "dynamic_implicit", frozenset({"instantiate", "delete"})
    ),
    "cpp": LanguageProfile(
        # No eval in a compiled target: every kind goes down the exec path.
        "cpp", "static_explicit",
        frozenset({"function", "variable", "method", "instantiate", "delete"}),
        eval_capable=False,
    ),
    "csharp": LanguageProfile(
        "csharp", "dynamic_explicit", frozenset({"instantiate", "delete"})
    ),
}


@dataclass(frozen=True)
class Generated:
    code: str
    channel: str  # eval | exec


def _q(text: str) -> str:
    """Embed text as a quoted string literal (JSON escaping, which all the
    target languages accept for the characters we emit)."""
    return json.dumps(text, ensure_ascii=False)


def _ident(name: str, what: str) -> str:
    """Names spliced in bare must be plain identifiers; anything else would
    change the meaning of the generated code."""
    if not name.isidentifier():
        raise CodegenError(f"{what} {name!r} is not a plain identifier")
    return name


def _parse_args(ir: IR) -> list:
    try:
        parsed = json.loads(ir.args or "[]")
    except json.JSONDecodeError as exc:
        raise CodegenError(f"bad args payload: {exc}") from exc
    if not isinstance(parsed, list):
        raise CodegenError("args payload must be a JSON array")
    return parsed


def generate(
    ir: IR,
    profile: LanguageProfile,
    fresh_key: str | None = None,
    obj_type: str | None = None,
) -> Generated:
    """Render one operation for one language.

    ``fresh_key`` is the pre-minted store key for an instantiate (the broker
    chooses it so the reference can be built without a second round trip).
    ``obj_type`` optionally names the receiver's class, which static targets
    need for the receiver cast.
    """
    ir.validate()
    if ir.kind == "instantiate" and not fresh_key:
        raise CodegenError("instantiate requires a pre-minted store key")
    if ir.kind != "instantiate" and fresh_key:
        raise CodegenError(f"{ir.kind} does not take a store key")
    gen = _GENERATORS.get(profile.lang)
    if gen is None:
        raise CodegenError(f"no generator for language {profile.lang!r}")
    code = gen(ir, fresh_key, obj_type)
    return Generated(code=code, channel=profile.channel(ir.kind))


# ---------------------------------------------------------------------------
# cellscript: everything is an expression evaluated through endpoint shims.


def _gen_cellscript(ir: IR, fresh_key, obj_type) -> str:
    if ir.kind == "function":
        return f'returnEncode(apply({_q(ir.name)}, argsDecode({_q(ir.args)})))'
    if ir.kind == "variable":
        return f'returnEncode(readVar({_q(ir.name)}))'
    if ir.kind == "method":
        return (
            f'returnEncode(applyMethod(resolveObj({_q(ir.obj)}), '
            f'{_q(ir.method)}, argsDecode({_q(ir.args)})))'
        )
    if ir.kind == "instantiate":
        return (
            f'returnEncode(storeNew({_q(ir.name)}, {_q(fresh_key)}, '
            f'argsDecode({_q(ir.args)})))'
        )
    return f'returnEncode(storeDel({_q(ir.name)}))'


# ---------------------------------------------------------------------------
# python: expression kinds ride eval; instantiate/delete are statements.


def _gen_python(ir: IR, fresh_key, obj_type) -> str:
    if ir.kind == "function":
        name = _ident(ir.name, "function name")
        return f'myReturnEncode({name}(*myArgsDecode({_q(ir.args)})))'
    if ir.kind == "variable":
        return f'myReturnEncode({_ident(ir.name, "variable name")})'
    if ir.kind == "method":
        method = _ident(ir.method, "method name")
        return (
            f'myReturnEncode(myResolveObj({_q(ir.obj)}).'
            f'{method}(*myArgsDecode({_q(ir.args)})))'
        )
    if ir.kind == "instantiate":
        cls = _ident(ir.name, "class name")
        return (
            f'globalVars[{_q(fresh_key)}] = {cls}(*myArgsDecode({_q(ir.args)}))\n'
            f'myLastResult = myMakeRef({_q(fresh_key)})'
        )
    return f'myLastResult = myDeleteVar({_q(ir.name)})'


# ---------------------------------------------------------------------------
# cpp: statically typed, explicit casts everywhere, no eval at all.


def _cpp_value(value) -> str:
    if value is None:
        return "nullptr"
    if value is True:
        return "static_cast<bool>(true)"
    if value is False:
        return "static_cast<bool>(false)"
    if isinstance(value, int):
        return f"static_cast<int64_t>({value})"
    if isinstance(value, float):
        return f"static_cast<double>({json.dumps(value)})"
    if isinstance(value, str):
        return f"std::string({_q(value)})"
    if is_ref_map(value):
        cast_to = value.get("typeName") or "void"
        return f'static_cast<{cast_to}*>(globalVars[{_q(value["varname"])}])'
    # Structured data arrives as its JSON text and is parsed on the far side.
    return f"myJsonValue(std::string({_q(json.dumps(value, ensure_ascii=False))}))"


def _gen_cpp(ir: IR, fresh_key, obj_type) -> str:
    if ir.kind == "function":
        name = _ident(ir.name, "function name")
        rendered = ", ".join(_cpp_value(v) for v in _parse_args(ir))
        return f"myReturnEncode({name}({rendered}));"
    if ir.kind == "variable":
        return f"myReturnEncode({_ident(ir.name, 'variable name')});"
    if ir.kind == "method":
        method = _ident(ir.method, "method name")
        rendered = ", ".join(_cpp_value(v) for v in _parse_args(ir))
        receiver = f"myResolveObj({_q(ir.obj)})"
        if obj_type:
            receiver = f"static_cast<{obj_type}*>({receiver})"
        return f"myReturnEncode({receiver}->{method}({rendered}));"
    if ir.kind == "instantiate":
        cls = _ident(ir.name, "class name")
        rendered = ", ".join(_cpp_value(v) for v in _parse_args(ir))
        return (
            f"globalVars[{_q(fresh_key)}] = new {cls}({rendered});\n"
            f"myReturnEncode(myMakeRef({_q(fresh_key)}, {_q(cls)}));"
        )
    return f"globalVars.erase({_q(ir.name)});\nmyReturnEncode(nullptr);"


# ---------------------------------------------------------------------------
# csharp: dynamically dispatched but explicit, arguments unpacked by index.


def _gen_csharp(ir: IR, fresh_key, obj_type) -> str:
    def unpack(n: int) -> str:
        return ", ".join(f"args[{i}]" for i in range(n))

    if ir.kind == "function":
        name = _ident(ir.name, "function name")
        n = len(_parse_args(ir))
        return (
            f"dynamic[] args = myArgsDecode({_q(ir.args)});\n"
            f"myReturnEncode({name}({unpack(n)}));"
        )
    if ir.kind == "variable":
        return f"myReturnEncode({_ident(ir.name, 'variable name')});"
    if ir.kind == "method":
        method = _ident(ir.method, "method name")
        n = len(_parse_args(ir))
        return (
            f"dynamic[] args = myArgsDecode({_q(ir.args)});\n"
            f"myReturnEncode(((dynamic)myResolveObj({_q(ir.obj)})).{method}({unpack(n)}));"
        )
    if ir.kind == "instantiate":
        cls = _ident(ir.name, "class name")
        n = len(_parse_args(ir))
        return (
            f"dynamic[] args = myArgsDecode({_q(ir.args)});\n"
            f"globalVars[{_q(fresh_key)}] = new {cls}({unpack(n)});\n"
            f"myReturnEncode(myMakeRef({_q(fresh_key)}, {_q(cls)}));"
        )
    return f"globalVars.Remove({_q(ir.name)});\nmyReturnEncode(null);"


_GENERATORS = {
    "cellscript": _gen_cellscript,
    "python": _gen_python,
    "cpp": _gen_cpp,
    "csharp": _gen_csharp,
}
