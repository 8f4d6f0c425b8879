"""Host-side execution of wire operations.

Two routes compute the same thing:

  * :func:`execute_ir` composes a kernel's operation primitives directly
    (decode args, look up, invoke, encode), which is the reference meaning
    of each operation kind;
  * :func:`execute_via_codegen` renders the operation as code and runs it
    through the kernel's own evaluator, which is what actually happens on
    the wire.

Tests hold the two routes byte-equal over randomized operations, so the
template set in codegen and the primitives in the kernels cannot drift
apart silently.
"""

from __future__ import annotations

from .codegen import EXEC, LanguageProfile, generate
from .errors import MalformedIRError
from .wire import IR


def execute_ir(ir: IR, kernel, fresh_key: str | None = None) -> str:
    """Run one operation on its owning kernel, returning encoded result text."""
    ir.validate()
    codec = kernel.codec
    if ir.kind == "function":
        result = kernel.apply_function(ir.name, codec.decode_args(ir.args))
        return codec.encode(result)
    if ir.kind == "variable":
        return codec.encode(kernel.read_variable(ir.name))
    if ir.kind == "method":
        recv = kernel.resolve_receiver(ir.obj)
        result = kernel.apply_method(recv, ir.method, codec.decode_args(ir.args))
        return codec.encode(result)
    if ir.kind == "instantiate":
        if not fresh_key:
            raise MalformedIRError("instantiate requires a pre-minted store key")
        obj = kernel.construct(ir.name, fresh_key, codec.decode_args(ir.args))
        return codec.encode(obj)
    kernel.drop(ir.name)
    return codec.encode(None)


def execute_via_codegen(
    ir: IR,
    kernel,
    profile: LanguageProfile,
    fresh_key: str | None = None,
    obj_type: str | None = None,
) -> str:
    """Render the operation in the kernel's language and evaluate it there."""
    generated = generate(ir, profile, fresh_key=fresh_key, obj_type=obj_type)
    if generated.channel == EXEC:
        return kernel.exec_code(generated.code)
    return kernel.eval_code(generated.code)
