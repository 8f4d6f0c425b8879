"""Tree-walking evaluator for cellscript.

Values are plain Python where possible (numbers, strings, booleans, null,
lists, maps) plus a handful of wrapper types for functions, classes, and
instances.  Foreign proxies from the marshalling layer flow through the
evaluator as opaque values: methods dispatch remotely, operators reject
them, and display renders them exactly like a local instance so a program
produces the same text whether its objects are local or remote.

The evaluator itself knows nothing about kernels or brokers.  FFI behavior
arrives from outside, as builtins injected into the global environment and
a release hook invoked when bindings drop.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from typing import Callable

from ..codec import ForeignProxy
from . import syntax as S

MAX_LOOP_ITERATIONS = 1_000_000
# Each cellscript frame costs several Python frames, so this must stay well
# under Python's own recursion limit to fail with a clean error.
MAX_CALL_DEPTH = 100


class CsError(Exception):
    """Runtime error inside a cell, with a source line when known."""

    def __init__(self, message: str, line: int | None = None):
        self.bare_message = message
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


class _ReturnSignal(Exception):
    def __init__(self, value):
        self.value = value


@dataclass
class CsFunction:
    name: str
    params: list[str]
    body: list


@dataclass
class CsClass:
    name: str
    methods: dict[str, CsFunction]


@dataclass
class CsObject:
    cls: CsClass
    fields: dict = field(default_factory=dict)

    @property
    def type_name(self) -> str:
        return self.cls.name


@dataclass
class Builtin:
    name: str
    fn: Callable
    arity: int | None = None  # None means variadic


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def truthy(v) -> bool:
    if isinstance(v, (CsObject, ForeignProxy)):
        return True
    return bool(v)


def _fmt(v) -> str:
    if v is None:
        return "null"
    if v is True:
        return "true"
    if v is False:
        return "false"
    if isinstance(v, (int, float, str)):
        return json.dumps(v, ensure_ascii=False)
    if isinstance(v, list):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    if isinstance(v, dict):
        parts = [f"{json.dumps(k, ensure_ascii=False)}: {_fmt(x)}" for k, x in v.items()]
        return "{" + ", ".join(parts) + "}"
    if isinstance(v, CsObject):
        return f"<{v.cls.name}>"
    if isinstance(v, ForeignProxy):
        return f"<{v.ref.type_name or 'object'}>"
    if isinstance(v, (CsFunction, Builtin)):
        return f"<fn {v.name}>"
    if isinstance(v, CsClass):
        return f"<class {v.name}>"
    return f"<{type(v).__name__}>"


def cs_format(v) -> str:
    """Display form of a value.  Top-level strings print bare; everything
    else (including strings nested in containers) uses JSON-flavored text."""
    if isinstance(v, str):
        return v
    return _fmt(v)


def _typeof(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "bool"
    if isinstance(v, int):
        return "int"
    if isinstance(v, float):
        return "float"
    if isinstance(v, str):
        return "str"
    if isinstance(v, list):
        return "list"
    if isinstance(v, dict):
        return "map"
    if isinstance(v, CsObject):
        return v.cls.name
    if isinstance(v, ForeignProxy):
        return v.ref.type_name or "object"
    if isinstance(v, (CsFunction, Builtin)):
        return "fn"
    if isinstance(v, CsClass):
        return "class"
    return type(v).__name__


class _CallState(threading.local):
    """Call frames and depth are per thread.  Globals are shared, but each
    in-flight evaluation (cells on the worker thread, foreign calls arriving
    on server threads) keeps its own stack, so a call that blocks waiting on
    a remote kernel cannot see frames pushed by the call re-entering us."""

    def __init__(self):
        self.frames: list[dict] = []
        self.depth = 0


class Interp:
    """One persistent cellscript environment (the REPL state of a kernel).

    ``print_sink`` receives each print() line.  ``release_hook`` is called
    with the old value whenever a binding is released explicitly or a
    foreign proxy is displaced by rebinding; the embedding kernel uses it
    to forward delete operations.
    """

    def __init__(
        self,
        print_sink: Callable[[str], None] | None = None,
        release_hook: Callable[[object], None] | None = None,
    ):
        self.globals: dict[str, object] = {}
        self.print_sink = print_sink or (lambda line: None)
        self.release_hook = release_hook
        self._state = _CallState()
        self._install_builtins()

    @property
    def _frames(self) -> list[dict]:
        return self._state.frames

    # -- public entry points -------------------------------------------

    def run(self, src: str) -> object:
        """Execute a cell.  Returns the value of its last top-level
        expression statement, or None if the cell ends with a non-expression."""
        stmts = S.parse(src)
        return self.exec_block(stmts, top=True)

    def call_function(self, name: str, args: list) -> object:
        fn = self.globals.get(name)
        if fn is None:
            raise CsError(f"unknown function {name!r}")
        return self._invoke(fn, args, line=None)

    def invoke(self, fn, args: list, line=None) -> object:
        """Call a function value with already-evaluated arguments."""
        return self._invoke(fn, args, line)

    def invoke_method(self, recv, method: str, args: list, line=None) -> object:
        return self._invoke_method(recv, method, args, line)

    # -- builtins -------------------------------------------------------

    def _install_builtins(self):
        def b(name, fn, arity=None):
            self.globals[name] = Builtin(name, fn, arity)

        b("print", lambda *args: self.print_sink(" ".join(cs_format(a) for a in args)))
        b("len", self._bi_len, 1)
        b("get", self._bi_get, 2)
        b("set", self._bi_set, 3)
        b("push", self._bi_push, 2)
        b("keys", self._bi_keys, 1)
        b("range", self._bi_range)
        b("abs", self._bi_abs, 1)
        b("str", lambda v: cs_format(v), 1)
        b("typeof", lambda v: _typeof(v), 1)
        b("sleep", self._bi_sleep, 1)

    @staticmethod
    def _bi_len(x):
        if isinstance(x, (str, list, dict)):
            return len(x)
        raise CsError(f"len() does not apply to {_typeof(x)}")

    @staticmethod
    def _bi_get(x, k):
        if isinstance(x, list):
            if not isinstance(k, int) or isinstance(k, bool):
                raise CsError("list index must be an int")
            if not 0 <= k < len(x):
                raise CsError(f"list index {k} out of range")
            return x[k]
        if isinstance(x, dict):
            if k not in x:
                raise CsError(f"missing map key {k!r}")
            return x[k]
        raise CsError(f"get() does not apply to {_typeof(x)}")

    @staticmethod
    def _bi_set(x, k, v):
        if isinstance(x, list):
            if not isinstance(k, int) or isinstance(k, bool) or not 0 <= k < len(x):
                raise CsError(f"bad list index {k!r}")
            x[k] = v
            return None
        if isinstance(x, dict):
            if not isinstance(k, str):
                raise CsError("map keys must be strings")
            x[k] = v
            return None
        raise CsError(f"set() does not apply to {_typeof(x)}")

    @staticmethod
    def _bi_push(lst, v):
        if not isinstance(lst, list):
            raise CsError(f"push() does not apply to {_typeof(lst)}")
        lst.append(v)
        return None

    @staticmethod
    def _bi_keys(m):
        if not isinstance(m, dict):
            raise CsError(f"keys() does not apply to {_typeof(m)}")
        return list(m.keys())

    @staticmethod
    def _bi_range(*args):
        if not 1 <= len(args) <= 2 or not all(isinstance(a, int) and not isinstance(a, bool) for a in args):
            raise CsError("range() takes one or two int arguments")
        return list(range(*args))

    @staticmethod
    def _bi_abs(x):
        if not _is_num(x):
            raise CsError(f"abs() does not apply to {_typeof(x)}")
        return abs(x)

    @staticmethod
    def _bi_sleep(seconds):
        if not _is_num(seconds) or seconds < 0 or seconds > 60:
            raise CsError("sleep() takes seconds in [0, 60]")
        time.sleep(seconds)
        return None

    # -- environment ----------------------------------------------------

    def _lookup(self, name: str, line):
        if self._frames and name in self._frames[-1]:
            return self._frames[-1][name]
        if name in self.globals:
            return self.globals[name]
        raise CsError(f"unknown name {name!r}", line)

    def _bind(self, name: str, value, line):
        scope = self._frames[-1] if self._frames else self.globals
        old = scope.get(name)
        if (
            self.release_hook is not None
            and isinstance(old, ForeignProxy)
            and old is not value
        ):
            # Rebinding the last handle to a remote object releases it.
            self.release_hook(old)
        scope[name] = value

    def _unbind(self, name: str, line):
        if self._frames and name in self._frames[-1]:
            return self._frames[-1].pop(name)
        if name in self.globals:
            return self.globals.pop(name)
        raise CsError(f"cannot release unknown name {name!r}", line)

    # -- statement execution -------------------------------------------

    def exec_block(self, stmts: list, top: bool = False) -> object:
        last_expr_value = None
        for stmt in stmts:
            value, is_expr = self._exec_stmt(stmt)
            if top and is_expr:
                last_expr_value = value
        return last_expr_value

    def _exec_stmt(self, stmt) -> tuple[object, bool]:
        if isinstance(stmt, S.ExprStmt):
            return self.eval_expr(stmt.expr), True
        if isinstance(stmt, S.Assign):
            value = self.eval_expr(stmt.value)
            if isinstance(stmt.target, S.Name):
                self._bind(stmt.target.ident, value, stmt.line)
            else:  # Member target
                recv = self.eval_expr(stmt.target.receiver)
                if not isinstance(recv, CsObject):
                    raise CsError(
                        f"cannot assign field on {_typeof(recv)}", stmt.line
                    )
                recv.fields[stmt.target.field_name] = value
            return None, False
        if isinstance(stmt, S.FnDef):
            self._bind(stmt.name, CsFunction(stmt.name, stmt.params, stmt.body), stmt.line)
            return None, False
        if isinstance(stmt, S.ClassDef):
            methods = {m.name: CsFunction(m.name, m.params, m.body) for m in stmt.methods}
            self._bind(stmt.name, CsClass(stmt.name, methods), stmt.line)
            return None, False
        if isinstance(stmt, S.Return):
            if not self._frames:
                raise CsError("return outside function", stmt.line)
            raise _ReturnSignal(self.eval_expr(stmt.value) if stmt.value else None)
        if isinstance(stmt, S.Release):
            value = self._unbind(stmt.ident, stmt.line)
            if self.release_hook is not None:
                self.release_hook(value)
            return None, False
        if isinstance(stmt, S.If):
            if truthy(self.eval_expr(stmt.cond)):
                self.exec_block(stmt.then_body)
            elif stmt.else_body is not None:
                self.exec_block(stmt.else_body)
            return None, False
        if isinstance(stmt, S.While):
            count = 0
            while truthy(self.eval_expr(stmt.cond)):
                count += 1
                if count > MAX_LOOP_ITERATIONS:
                    raise CsError("loop iteration limit exceeded", stmt.line)
                self.exec_block(stmt.body)
            return None, False
        raise CsError(f"unhandled statement {type(stmt).__name__}", stmt.line)

    # -- expression evaluation -----------------------------------------

    def eval_expr(self, node):
        if isinstance(node, S.Literal):
            return node.value
        if isinstance(node, S.ListLit):
            return [self.eval_expr(item) for item in node.items]
        if isinstance(node, S.MapLit):
            return {k: self.eval_expr(v) for k, v in node.pairs}
        if isinstance(node, S.Name):
            if node.qualifier is not None:
                raise CsError(
                    f"unresolved qualified name {node.qualifier}:{node.ident}", node.line
                )
            return self._lookup(node.ident, node.line)
        if isinstance(node, S.ThisExpr):
            if not self._frames or "this" not in self._frames[-1]:
                raise CsError("this outside method", node.line)
            return self._frames[-1]["this"]
        if isinstance(node, S.BinOp):
            if node.op == "&&":
                left = self.eval_expr(node.left)
                return self.eval_expr(node.right) if truthy(left) else left
            if node.op == "||":
                left = self.eval_expr(node.left)
                return left if truthy(left) else self.eval_expr(node.right)
            return self._binop(
                node.op, self.eval_expr(node.left), self.eval_expr(node.right), node.line
            )
        if isinstance(node, S.UnaryOp):
            operand = self.eval_expr(node.operand)
            if node.op == "-":
                if not _is_num(operand):
                    raise CsError(f"cannot negate {_typeof(operand)}", node.line)
                return -operand
            return not truthy(operand)
        if isinstance(node, S.Call):
            if node.qualifier is not None:
                raise CsError(
                    f"unresolved qualified name {node.qualifier}:{node.name}", node.line
                )
            fn = self._lookup(node.name, node.line)
            args = [self.eval_expr(a) for a in node.args]
            return self._invoke(fn, args, node.line, name=node.name)
        if isinstance(node, S.MethodCall):
            recv = self.eval_expr(node.receiver)
            args = [self.eval_expr(a) for a in node.args]
            return self._invoke_method(recv, node.method, args, node.line)
        if isinstance(node, S.Member):
            recv = self.eval_expr(node.receiver)
            if isinstance(recv, CsObject):
                if node.field_name not in recv.fields:
                    raise CsError(
                        f"no field {node.field_name!r} on {recv.cls.name}", node.line
                    )
                return recv.fields[node.field_name]
            if isinstance(recv, ForeignProxy):
                raise CsError(
                    "foreign objects expose methods only; call it instead", node.line
                )
            raise CsError(f"no fields on {_typeof(recv)}", node.line)
        if isinstance(node, S.New):
            if node.qualifier is not None:
                raise CsError(
                    f"unresolved qualified name {node.qualifier}:{node.class_name}",
                    node.line,
                )
            cls = self._lookup(node.class_name, node.line)
            args = [self.eval_expr(a) for a in node.args]
            return self.instantiate(cls, args, node.line)
        raise CsError(f"unhandled expression {type(node).__name__}", node.line)

    # -- calls ----------------------------------------------------------

    def instantiate(self, cls, args: list, line=None) -> CsObject:
        if not isinstance(cls, CsClass):
            raise CsError(f"{_typeof(cls)} is not a class", line)
        obj = CsObject(cls)
        init = cls.methods.get("init")
        if init is not None:
            self._call_cs(init, args, this=obj, line=line)
        elif args:
            raise CsError(f"{cls.name} takes no constructor arguments", line)
        return obj

    def _invoke(self, fn, args: list, line, name: str | None = None):
        if isinstance(fn, CsFunction):
            return self._call_cs(fn, args, this=None, line=line)
        if isinstance(fn, Builtin):
            if fn.arity is not None and len(args) != fn.arity:
                raise CsError(
                    f"{fn.name}() expects {fn.arity} arguments, got {len(args)}", line
                )
            return fn.fn(*args)
        if isinstance(fn, CsClass):
            raise CsError(f"use new {fn.name}(...) to instantiate", line)
        raise CsError(f"{name or _typeof(fn)} is not callable", line)

    def _invoke_method(self, recv, method: str, args: list, line):
        if isinstance(recv, CsObject):
            fn = recv.cls.methods.get(method)
            if fn is None:
                raise CsError(f"no method {method!r} on {recv.cls.name}", line)
            return self._call_cs(fn, args, this=recv, line=line)
        if isinstance(recv, ForeignProxy):
            return getattr(recv, method)(*args)
        raise CsError(f"no methods on {_typeof(recv)}", line)

    def _call_cs(self, fn: CsFunction, args: list, this, line):
        if len(args) != len(fn.params):
            raise CsError(
                f"{fn.name}() expects {len(fn.params)} arguments, got {len(args)}", line
            )
        if self._state.depth >= MAX_CALL_DEPTH:
            raise CsError("call depth limit exceeded", line)
        frame = dict(zip(fn.params, args))
        if this is not None:
            frame["this"] = this
        self._state.frames.append(frame)
        self._state.depth += 1
        try:
            self.exec_block(fn.body)
            return None
        except _ReturnSignal as sig:
            return sig.value
        finally:
            self._state.depth -= 1
            self._state.frames.pop()

    def _binop(self, op, left, right, line):
        if op == "==":
            return self._equals(left, right)
        if op == "!=":
            return not self._equals(left, right)
        if op == "+":
            if _is_num(left) and _is_num(right):
                return left + right
            if isinstance(left, str) and isinstance(right, str):
                return left + right
            if isinstance(left, list) and isinstance(right, list):
                return left + right
            raise CsError(f"cannot add {_typeof(left)} and {_typeof(right)}", line)
        if op in ("-", "*", "/", "%"):
            if not (_is_num(left) and _is_num(right)):
                raise CsError(
                    f"cannot apply {op} to {_typeof(left)} and {_typeof(right)}", line
                )
            if op == "-":
                return left - right
            if op == "*":
                return left * right
            if right == 0:
                raise CsError("division by zero", line)
            if op == "%":
                return left % right
            if isinstance(left, int) and isinstance(right, int):
                return left // right
            return left / right
        if op in ("<", ">", "<=", ">="):
            ok = (_is_num(left) and _is_num(right)) or (
                isinstance(left, str) and isinstance(right, str)
            )
            if not ok:
                raise CsError(
                    f"cannot compare {_typeof(left)} and {_typeof(right)}", line
                )
            return {"<": left < right, ">": left > right, "<=": left <= right, ">=": left >= right}[op]
        raise CsError(f"unknown operator {op!r}", line)

    @staticmethod
    def _equals(left, right) -> bool:
        if isinstance(left, CsObject) or isinstance(right, CsObject):
            return left is right
        if isinstance(left, ForeignProxy) or isinstance(right, ForeignProxy):
            return left == right
        return left == right
