"""Cross-kernel symbol registry.

Each executed (or pre-registered) cell contributes the functions, classes,
and top-level variables it defines, keyed by kernel.  The rewriter consults
this table to decide which names in a client cell refer to another kernel
and how many arguments those foreign functions expect.

Resolution policy, in order:
  * A qualified reference (``kernel:name``) looks only in that kernel and
    fails loudly if absent.
  * An unqualified name defined by exactly one other kernel resolves there.
  * Defined by several other kernels: ambiguous, refuse with the candidate
    list so the user can qualify.
  * Defined nowhere else: not a registry matter; the name stays untouched.
Within one kernel the latest definition wins (a redefining cell shadows an
earlier one), and a top-level ``release``/``del`` removes the symbol.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field

from .errors import AmbiguousSymbolError, SymbolNotFoundError
from .cellscript import syntax as cs_syntax


@dataclass(frozen=True)
class Symbol:
    name: str
    kind: str  # function | class | variable
    kernel_id: str
    cell_index: int
    params: tuple[str, ...] | None = None
    required: int = 0
    variadic: bool = False

    def arity_ok(self, n: int) -> bool:
        if self.params is None or self.variadic:
            return True
        return self.required <= n <= len(self.params)

    def to_wire(self) -> dict:
        return {
            "kind": self.kind,
            "cell": self.cell_index,
            "params": list(self.params) if self.params is not None else None,
            "required": self.required,
            "variadic": self.variadic,
        }


@dataclass(frozen=True)
class RegistryEvent:
    action: str  # define | redefine | remove
    kernel_id: str
    name: str
    cell_index: int


@dataclass(frozen=True)
class _Spec:
    """One definition found in a cell, before it lands in the table."""

    name: str
    kind: str
    params: tuple[str, ...] | None = None
    required: int = 0
    variadic: bool = False


# ---------------------------------------------------------------------------
# per-language symbol extraction


def _extract_cellscript(source: str) -> tuple[list[_Spec], list[str]]:
    defs: list[_Spec] = []
    removals: list[str] = []
    for stmt in cs_syntax.parse(source):
        if isinstance(stmt, cs_syntax.FnDef):
            defs.append(
                _Spec(stmt.name, "function", tuple(stmt.params), len(stmt.params))
            )
        elif isinstance(stmt, cs_syntax.ClassDef):
            init = next((m for m in stmt.methods if m.name == "init"), None)
            params = tuple(init.params) if init else ()
            defs.append(_Spec(stmt.name, "class", params, len(params)))
        elif isinstance(stmt, cs_syntax.Assign) and isinstance(stmt.target, cs_syntax.Name):
            defs.append(_Spec(stmt.target.ident, "variable"))
        elif isinstance(stmt, cs_syntax.Release):
            removals.append(stmt.ident)
    return defs, removals


def _py_fn_spec(name: str, node: ast.FunctionDef | ast.AsyncFunctionDef, kind: str) -> _Spec:
    args = node.args
    params = tuple(a.arg for a in args.posonlyargs + args.args)
    required = len(params) - len(args.defaults)
    variadic = bool(args.vararg or args.kwarg or args.kwonlyargs)
    return _Spec(name, kind, params, required, variadic)


def _extract_python(source: str) -> tuple[list[_Spec], list[str]]:
    defs: list[_Spec] = []
    removals: list[str] = []
    for node in ast.parse(source).body:
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
            defs.append(_py_fn_spec(node.name, node, "function"))
        elif isinstance(node, ast.ClassDef):
            init = next(
                (
                    n
                    for n in node.body
                    if isinstance(n, ast.FunctionDef) and n.name == "__init__"
                ),
                None,
            )
            if init is not None:
                spec = _py_fn_spec(node.name, init, "class")
                # drop self
                params = spec.params[1:] if spec.params else ()
                defs.append(
                    _Spec(node.name, "class", params, max(spec.required - 1, 0), spec.variadic)
                )
            else:
                # No visible constructor (maybe inherited): accept any arity.
                defs.append(_Spec(node.name, "class", None, 0, True))
        elif isinstance(node, ast.Assign):
            for target in node.targets:
                if isinstance(target, ast.Name):
                    defs.append(_Spec(target.id, "variable"))
        elif isinstance(node, ast.AnnAssign):
            if isinstance(node.target, ast.Name) and node.value is not None:
                defs.append(_Spec(node.target.id, "variable"))
        elif isinstance(node, ast.Delete):
            for target in node.targets:
                if isinstance(target, ast.Name):
                    removals.append(target.id)
    return defs, removals


_EXTRACTORS = {
    "cellscript": _extract_cellscript,
    "python": _extract_python,
}


def extract_symbols(lang: str, source: str) -> tuple[list[_Spec], list[str]]:
    """Definitions and removals declared by one cell.  Languages without an
    extractor contribute nothing (their symbols can be registered directly
    via :meth:`Registry.define`)."""
    extractor = _EXTRACTORS.get(lang)
    if extractor is None:
        return [], []
    return extractor(source)


# ---------------------------------------------------------------------------


class Registry:
    """The live symbol table across all kernels of a session."""

    def __init__(self):
        # kernel -> name -> Symbol (latest definition)
        self._table: dict[str, dict[str, Symbol]] = {}
        self.events: list[RegistryEvent] = []

    def add_kernel(self, kernel_id: str) -> None:
        self._table.setdefault(kernel_id, {})

    def add_cell(
        self, kernel_id: str, cell_index: int, source: str, lang: str
    ) -> list[RegistryEvent]:
        """Fold one cell's definitions into the table, in order."""
        defs, removals = extract_symbols(lang, source)
        events = []
        for spec in defs:
            events.append(
                self.define(
                    kernel_id,
                    spec.name,
                    spec.kind,
                    cell_index,
                    params=spec.params,
                    required=spec.required,
                    variadic=spec.variadic,
                )
            )
        for name in removals:
            event = self.remove(kernel_id, name, cell_index)
            if event is not None:
                events.append(event)
        self.events.extend(events)
        return events

    def define(
        self,
        kernel_id: str,
        name: str,
        kind: str,
        cell_index: int,
        params=None,
        required: int = 0,
        variadic: bool = False,
    ) -> RegistryEvent:
        table = self._table.setdefault(kernel_id, {})
        action = "redefine" if name in table else "define"
        table[name] = Symbol(
            name=name,
            kind=kind,
            kernel_id=kernel_id,
            cell_index=cell_index,
            params=tuple(params) if params is not None else None,
            required=required,
            variadic=variadic,
        )
        return RegistryEvent(action, kernel_id, name, cell_index)

    def remove(self, kernel_id: str, name: str, cell_index: int) -> RegistryEvent | None:
        table = self._table.setdefault(kernel_id, {})
        if name not in table:
            return None
        del table[name]
        return RegistryEvent("remove", kernel_id, name, cell_index)

    # -- queries --------------------------------------------------------

    def lookup(self, kernel_id: str, name: str) -> Symbol | None:
        return self._table.get(kernel_id, {}).get(name)

    def names_in(self, kernel_id: str) -> set[str]:
        return set(self._table.get(kernel_id, {}))

    def kernels(self) -> list[str]:
        return list(self._table)

    def resolve(
        self, name: str, qualifier: str | None = None, client_kernel: str | None = None
    ) -> Symbol:
        """Find which kernel defines a name referenced from ``client_kernel``."""
        if qualifier is not None:
            if qualifier not in self._table:
                raise SymbolNotFoundError(f"unknown kernel {qualifier!r} in {qualifier}:{name}")
            symbol = self._table[qualifier].get(name)
            if symbol is None:
                raise SymbolNotFoundError(f"kernel {qualifier!r} defines no symbol {name!r}")
            return symbol
        candidates = [
            table[name]
            for kernel, table in self._table.items()
            if kernel != client_kernel and name in table
        ]
        if not candidates:
            raise SymbolNotFoundError(f"no kernel defines {name!r}")
        if len(candidates) > 1:
            raise AmbiguousSymbolError(name, sorted(s.kernel_id for s in candidates))
        return candidates[0]

    def try_resolve(
        self, name: str, qualifier: str | None = None, client_kernel: str | None = None
    ) -> Symbol | None:
        """Like resolve, but unknown unqualified names return None (the
        rewriter leaves them for the runtime to complain about).
        Ambiguity still raises."""
        try:
            return self.resolve(name, qualifier, client_kernel)
        except SymbolNotFoundError:
            if qualifier is not None:
                raise
            return None

    def snapshot(self) -> dict:
        return {
            kernel: {name: sym.to_wire() for name, sym in sorted(table.items())}
            for kernel, table in sorted(self._table.items())
        }
