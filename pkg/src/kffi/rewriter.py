"""Rewrites client cells so foreign names dispatch through the broker.

A cell is parsed, every free reference is classified against the scope chain
(builtins and helpers, the client kernel's own symbols, bindings made by
this cell, then function-local names), and references that resolve to
another kernel are spliced into calls to the runtime helpers:

    fact(n - 1)        ->  kffi_call("b", "fact", n - 1)
    counter            ->  kffi_var("b", "counter")
    new Point(1, 2)    ->  kffi_new("geom", "Point", 1, 2)

Only the referenced spans change; every byte outside them (layout,
comments, the rest of the expression) is preserved, and rewriting is
idempotent because the helper names themselves are native.  Names that
resolve nowhere are left alone for the runtime to report, matching how a
plain undefined name behaves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .cellscript import syntax as S
from .errors import ArityMismatchError, CodegenError
from .registry import Registry, Symbol


@dataclass(frozen=True)
class RewriteSite:
    kind: str  # call | variable | instantiate | requalified
    start: int
    end: int
    original: str
    replacement: str
    target_kernel: str
    name: str


@dataclass
class RewriteResult:
    text: str
    sites: list[RewriteSite] = field(default_factory=list)

    @property
    def changed(self) -> bool:
        return bool(self.sites)


def top_level_bindings(stmts: list) -> set[str]:
    """Names a cell binds at its own top level (shadowing is whole-cell:
    a name defined anywhere in the cell is native to it everywhere)."""
    names = set()
    for stmt in stmts:
        if isinstance(stmt, (S.FnDef, S.ClassDef)):
            names.add(stmt.name)
        elif isinstance(stmt, S.Assign) and isinstance(stmt.target, S.Name):
            names.add(stmt.target.ident)
    return names


def _local_bindings(body: list) -> set[str]:
    """Assignment targets anywhere in a function body, nested blocks
    included (binding is flow-insensitive, like the evaluator's frames)."""
    names: set[str] = set()
    stack = list(body)
    while stack:
        stmt = stack.pop()
        if isinstance(stmt, S.Assign) and isinstance(stmt.target, S.Name):
            names.add(stmt.target.ident)
        elif isinstance(stmt, S.If):
            stack.extend(stmt.then_body)
            if stmt.else_body:
                stack.extend(stmt.else_body)
        elif isinstance(stmt, S.While):
            stack.extend(stmt.body)
    return names


class _Rewriter:
    def __init__(self, source: str, client_kernel: str, registry: Registry, env_names: set[str]):
        self.source = source
        self.client = client_kernel
        self.registry = registry
        self.stmts = S.parse(source)
        self.scopes: list[set[str]] = [
            set(env_names) | registry.names_in(client_kernel) | top_level_bindings(self.stmts)
        ]
        self.sites: list[RewriteSite] = []

    # -- scope ----------------------------------------------------------

    def _is_native(self, name: str) -> bool:
        return any(name in scope for scope in self.scopes)

    def _resolve_foreign(self, name: str, qualifier: str | None) -> Symbol | None:
        if qualifier is None and self._is_native(name):
            return None
        if qualifier == self.client:
            return None  # self-qualification: native, handled by caller
        return self.registry.try_resolve(name, qualifier, client_kernel=self.client)

    # -- emission -------------------------------------------------------

    def run(self) -> RewriteResult:
        replacements: list[tuple[int, int, str]] = []
        for stmt in self.stmts:
            text = self._emit_stmt(stmt)
            if text is not None:
                replacements.append((stmt.start, stmt.end, text))
        return RewriteResult(text=_splice(self.source, replacements), sites=self.sites)

    def _slice(self, node) -> str:
        return self.source[node.start : node.end]

    def _sub(self, node) -> str:
        return self._emit_expr(node) or self._slice(node)

    def _patched(self, node, children: list) -> str | None:
        """Re-render a node by splicing changed children into its span."""
        replacements = []
        for child in children:
            text = self._emit_expr(child)
            if text is not None:
                replacements.append((child.start, child.end, text))
        if not replacements:
            return None
        shifted = [(s - node.start, e - node.start, t) for s, e, t in replacements]
        return _splice(self._slice(node), shifted)

    def _record(self, kind, node, name_span, replacement, symbol, name):
        self.sites.append(
            RewriteSite(
                kind=kind,
                start=node.start,
                end=node.end,
                original=self._slice(node),
                replacement=replacement,
                target_kernel=symbol.kernel_id if symbol else self.client,
                name=name,
            )
        )

    def _emit_stmt(self, stmt) -> str | None:
        if isinstance(stmt, S.ExprStmt):
            return self._patched(stmt, [stmt.expr])
        if isinstance(stmt, S.Assign):
            children = [stmt.value]
            if isinstance(stmt.target, S.Member):
                children.append(stmt.target.receiver)
            return self._patched(stmt, children)
        if isinstance(stmt, S.FnDef):
            return self._emit_fn_body(stmt, stmt.params)
        if isinstance(stmt, S.ClassDef):
            replacements = []
            for method in stmt.methods:
                text = self._emit_fn_body(method, method.params)
                if text is not None:
                    replacements.append((method.start - stmt.start, method.end - stmt.start, text))
            if not replacements:
                return None
            return _splice(self._slice(stmt), replacements)
        if isinstance(stmt, S.Return):
            return self._patched(stmt, [stmt.value]) if stmt.value else None
        if isinstance(stmt, S.Release):
            return None
        if isinstance(stmt, S.If):
            return self._emit_block_stmt(stmt, [stmt.cond], stmt.then_body, stmt.else_body or [])
        if isinstance(stmt, S.While):
            return self._emit_block_stmt(stmt, [stmt.cond], stmt.body, [])
        return None

    def _emit_fn_body(self, fn: S.FnDef, params: list[str]) -> str | None:
        self.scopes.append(set(params) | _local_bindings(fn.body) | {"this"})
        try:
            replacements = []
            for inner in fn.body:
                text = self._emit_stmt(inner)
                if text is not None:
                    replacements.append((inner.start - fn.start, inner.end - fn.start, text))
            if not replacements:
                return None
            return _splice(self._slice(fn), replacements)
        finally:
            self.scopes.pop()

    def _emit_block_stmt(self, stmt, exprs: list, *bodies: list) -> str | None:
        replacements = []
        for expr in exprs:
            text = self._emit_expr(expr)
            if text is not None:
                replacements.append((expr.start - stmt.start, expr.end - stmt.start, text))
        for body in bodies:
            for inner in body:
                text = self._emit_stmt(inner)
                if text is not None:
                    replacements.append((inner.start - stmt.start, inner.end - stmt.start, text))
        if not replacements:
            return None
        return _splice(self._slice(stmt), replacements)

    def _emit_expr(self, node) -> str | None:
        if isinstance(node, S.Call):
            return self._emit_call(node)
        if isinstance(node, S.New):
            return self._emit_new(node)
        if isinstance(node, S.Name):
            return self._emit_name(node)
        if isinstance(node, S.ListLit):
            return self._patched(node, node.items)
        if isinstance(node, S.MapLit):
            return self._patched(node, [v for _, v in node.pairs])
        if isinstance(node, S.BinOp):
            return self._patched(node, [node.left, node.right])
        if isinstance(node, S.UnaryOp):
            return self._patched(node, [node.operand])
        if isinstance(node, S.MethodCall):
            return self._patched(node, [node.receiver, *node.args])
        if isinstance(node, S.Member):
            return self._patched(node, [node.receiver])
        return None  # literals, this

    def _emit_call(self, node: S.Call) -> str | None:
        symbol = self._resolve_foreign(node.name, node.qualifier)
        args_text = ", ".join(self._sub(a) for a in node.args)
        if symbol is None:
            if node.qualifier == self.client:
                # a:f(..) referenced from a itself: strip the qualifier.
                text = f"{node.name}({args_text})"
                self._record("requalified", node, None, text, None, node.name)
                return text
            return self._patched(node, list(node.args))
        if symbol.kind == "class":
            raise CodegenError(
                f"{symbol.kernel_id}:{node.name} is a class; instantiate it with "
                f"new {node.name}(...)"
            )
        if symbol.kind == "function" and not symbol.arity_ok(len(node.args)):
            raise ArityMismatchError(node.name, _expected(symbol), len(node.args))
        tail = f", {args_text}" if node.args else ""
        text = f'kffi_call("{symbol.kernel_id}", "{node.name}"{tail})'
        self._record("call", node, None, text, symbol, node.name)
        return text

    def _emit_new(self, node: S.New) -> str | None:
        symbol = self._resolve_foreign(node.class_name, node.qualifier)
        args_text = ", ".join(self._sub(a) for a in node.args)
        if symbol is None:
            if node.qualifier == self.client:
                text = f"new {node.class_name}({args_text})"
                self._record("requalified", node, None, text, None, node.class_name)
                return text
            return self._patched(node, list(node.args))
        if symbol.kind != "class":
            raise CodegenError(
                f"{symbol.kernel_id}:{node.class_name} is a {symbol.kind}, not a class"
            )
        if not symbol.arity_ok(len(node.args)):
            raise ArityMismatchError(node.class_name, _expected(symbol), len(node.args))
        tail = f", {args_text}" if node.args else ""
        text = f'kffi_new("{symbol.kernel_id}", "{node.class_name}"{tail})'
        self._record("instantiate", node, None, text, symbol, node.class_name)
        return text

    def _emit_name(self, node: S.Name) -> str | None:
        symbol = self._resolve_foreign(node.ident, node.qualifier)
        if symbol is None:
            if node.qualifier == self.client:
                self._record("requalified", node, None, node.ident, None, node.ident)
                return node.ident
            return None
        text = f'kffi_var("{symbol.kernel_id}", "{node.ident}")'
        self._record("variable", node, None, text, symbol, node.ident)
        return text


def _expected(symbol: Symbol) -> str:
    if symbol.params is None:
        return "any"
    low, high = symbol.required, len(symbol.params)
    return str(low) if low == high else f"{low}..{high}"


def _splice(text: str, replacements: list[tuple[int, int, str]]) -> str:
    """Apply non-overlapping (start, end, new_text) replacements."""
    out = []
    cursor = 0
    for start, end, new_text in sorted(replacements):
        out.append(text[cursor:start])
        out.append(new_text)
        cursor = end
    out.append(text[cursor:])
    return "".join(out)


def rewrite_cell(
    source: str,
    client_kernel: str,
    registry: Registry,
    env_names: set[str] | frozenset[str] = frozenset(),
) -> RewriteResult:
    """Rewrite one cellscript cell for execution on ``client_kernel``.

    ``env_names`` are names already live in the kernel's environment
    (builtins, helpers, bindings from earlier cells); they always win over
    foreign symbols.
    """
    return _Rewriter(source, client_kernel, registry, set(env_names)).run()
