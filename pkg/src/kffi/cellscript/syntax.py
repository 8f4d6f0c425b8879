"""Tokenizer, AST, and recursive-descent parser for cellscript.

Every node records its character span in the source so downstream passes
(notably the cross-kernel call rewriter) can splice replacement text without
disturbing surrounding bytes.

Shape of the language:

    fn area(w, h) { return w * h; }
    class Counter {
      fn init(start) { this.n = start; }
      fn bump(by) { this.n = this.n + by; return this.n; }
    }
    c = new Counter(5);
    if (c.bump(3) > 7) { print("big"); } else { print("small"); }
    release c;

Semicolons are optional.  Strings use JSON syntax and escapes.  A name may
carry a kernel qualifier (``other:func(1)``) to pin which kernel defines it;
plain cellscript treats an unresolved qualified name as an error, so the
syntax is only useful under the FFI rewriter.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field


class CsSyntaxError(Exception):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


# ---------------------------------------------------------------------------
# tokens

KEYWORDS = {
    "fn", "class", "return", "release", "new",
    "if", "else", "while", "true", "false", "null", "this",
}

_TWO_CHAR = ("==", "!=", "<=", ">=", "&&", "||")
_ONE_CHAR = "(){}[],;:.=<>+-*/%!"


@dataclass(frozen=True)
class Token:
    kind: str  # name | keyword | number | string | op | eof
    text: str
    start: int
    end: int
    line: int


def tokenize(src: str) -> list[Token]:
    toks: list[Token] = []
    i, line, n = 0, 1, len(src)
    while i < n:
        ch = src[i]
        if ch == "\n":
            line += 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            continue
        if src.startswith("//", i):
            while i < n and src[i] != "\n":
                i += 1
            continue
        start = i
        if ch.isdigit():
            while i < n and src[i].isdigit():
                i += 1
            if i < n and src[i] == "." and i + 1 < n and src[i + 1].isdigit():
                i += 1
                while i < n and src[i].isdigit():
                    i += 1
            toks.append(Token("number", src[start:i], start, i, line))
            continue
        if ch.isalpha() or ch == "_":
            while i < n and (src[i].isalnum() or src[i] == "_"):
                i += 1
            text = src[start:i]
            kind = "keyword" if text in KEYWORDS else "name"
            toks.append(Token(kind, text, start, i, line))
            continue
        if ch == '"':
            i += 1
            while i < n:
                if src[i] == "\\":
                    i += 2
                    continue
                if src[i] == '"':
                    break
                if src[i] == "\n":
                    raise CsSyntaxError("unterminated string", line)
                i += 1
            if i >= n:
                raise CsSyntaxError("unterminated string", line)
            i += 1
            toks.append(Token("string", src[start:i], start, i, line))
            continue
        if src[i : i + 2] in _TWO_CHAR:
            toks.append(Token("op", src[i : i + 2], start, i + 2, line))
            i += 2
            continue
        if ch in _ONE_CHAR:
            toks.append(Token("op", ch, start, i + 1, line))
            i += 1
            continue
        raise CsSyntaxError(f"unexpected character {ch!r}", line)
    toks.append(Token("eof", "", n, n, line))
    return toks


# ---------------------------------------------------------------------------
# AST


@dataclass
class Node:
    start: int
    end: int
    line: int


# expressions
@dataclass
class Literal(Node):
    value: object


@dataclass
class ListLit(Node):
    items: list


@dataclass
class MapLit(Node):
    pairs: list  # list[(str, expr)]


@dataclass
class Name(Node):
    ident: str
    qualifier: str | None = None


@dataclass
class BinOp(Node):
    op: str
    left: Node
    right: Node


@dataclass
class UnaryOp(Node):
    op: str
    operand: Node


@dataclass
class Call(Node):
    """Free function call.  ``name_start``/``name_end`` span the (possibly
    qualified) callee text, for targeted rewriting."""

    name: str
    args: list
    qualifier: str | None = None
    name_start: int = 0
    name_end: int = 0


@dataclass
class MethodCall(Node):
    receiver: Node
    method: str
    args: list


@dataclass
class Member(Node):
    receiver: Node
    field_name: str


@dataclass
class New(Node):
    class_name: str
    args: list
    qualifier: str | None = None
    name_start: int = 0
    name_end: int = 0


@dataclass
class ThisExpr(Node):
    pass


# statements
@dataclass
class ExprStmt(Node):
    expr: Node


@dataclass
class Assign(Node):
    target: Node  # Name or Member
    value: Node


@dataclass
class FnDef(Node):
    name: str
    params: list[str]
    body: list


@dataclass
class ClassDef(Node):
    name: str
    methods: list[FnDef] = field(default_factory=list)


@dataclass
class Return(Node):
    value: Node | None


@dataclass
class Release(Node):
    ident: str


@dataclass
class If(Node):
    cond: Node
    then_body: list
    else_body: list | None


@dataclass
class While(Node):
    cond: Node
    body: list


# ---------------------------------------------------------------------------
# parser


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.toks = tokenize(src)
        self.pos = 0

    # token helpers

    def peek(self, ahead: int = 0) -> Token:
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def next(self) -> Token:
        tok = self.toks[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def at(self, kind: str, text: str | None = None) -> bool:
        tok = self.peek()
        return tok.kind == kind and (text is None or tok.text == text)

    def accept(self, kind: str, text: str | None = None) -> Token | None:
        if self.at(kind, text):
            return self.next()
        return None

    def expect(self, kind: str, text: str | None = None) -> Token:
        tok = self.peek()
        if not self.at(kind, text):
            want = text or kind
            raise CsSyntaxError(f"expected {want!r}, got {tok.text or tok.kind!r}", tok.line)
        return self.next()

    # statements

    def parse_program(self) -> list[Node]:
        stmts = []
        while not self.at("eof"):
            stmts.append(self.statement(top=True))
        return stmts

    def statement(self, top: bool) -> Node:
        tok = self.peek()
        if tok.kind == "keyword":
            if tok.text == "fn":
                if not top:
                    raise CsSyntaxError("functions may only be defined at top level", tok.line)
                return self.fndef()
            if tok.text == "class":
                if not top:
                    raise CsSyntaxError("classes may only be defined at top level", tok.line)
                return self.classdef()
            if tok.text == "return":
                return self.retstmt()
            if tok.text == "release":
                return self.relstmt()
            if tok.text == "if":
                return self.ifstmt()
            if tok.text == "while":
                return self.whilestmt()
        return self.simplestmt()

    def block(self) -> list[Node]:
        self.expect("op", "{")
        body = []
        while not self.at("op", "}"):
            if self.at("eof"):
                raise CsSyntaxError("unterminated block", self.peek().line)
            body.append(self.statement(top=False))
        self.expect("op", "}")
        return body

    def fndef(self) -> FnDef:
        kw = self.expect("keyword", "fn")
        name = self.expect("name")
        self.expect("op", "(")
        params = []
        if not self.at("op", ")"):
            params.append(self.expect("name").text)
            while self.accept("op", ","):
                params.append(self.expect("name").text)
        self.expect("op", ")")
        body = self.block()
        end = self.toks[self.pos - 1].end
        return FnDef(kw.start, end, kw.line, name.text, params, body)

    def classdef(self) -> ClassDef:
        kw = self.expect("keyword", "class")
        name = self.expect("name")
        self.expect("op", "{")
        methods = []
        while not self.at("op", "}"):
            if not self.at("keyword", "fn"):
                raise CsSyntaxError("class bodies contain only fn definitions", self.peek().line)
            methods.append(self.fndef())
        close = self.expect("op", "}")
        return ClassDef(kw.start, close.end, kw.line, name.text, methods)

    def retstmt(self) -> Return:
        kw = self.expect("keyword", "return")
        value = None
        if not (self.at("op", ";") or self.at("op", "}") or self.at("eof")):
            value = self.expression()
        end = self._finish_stmt()
        return Return(kw.start, end, kw.line, value)

    def relstmt(self) -> Release:
        kw = self.expect("keyword", "release")
        name = self.expect("name")
        end = self._finish_stmt()
        return Release(kw.start, end, kw.line, name.text)

    def ifstmt(self) -> If:
        kw = self.expect("keyword", "if")
        self.expect("op", "(")
        cond = self.expression()
        self.expect("op", ")")
        then_body = self.block()
        else_body = None
        if self.accept("keyword", "else"):
            if self.at("keyword", "if"):
                else_body = [self.ifstmt()]
            else:
                else_body = self.block()
        end = self.toks[self.pos - 1].end
        return If(kw.start, end, kw.line, cond, then_body, else_body)

    def whilestmt(self) -> While:
        kw = self.expect("keyword", "while")
        self.expect("op", "(")
        cond = self.expression()
        self.expect("op", ")")
        body = self.block()
        end = self.toks[self.pos - 1].end
        return While(kw.start, end, kw.line, cond, body)

    def simplestmt(self) -> Node:
        start_tok = self.peek()
        expr = self.expression()
        if self.at("op", "=") :
            if not isinstance(expr, (Name, Member)):
                raise CsSyntaxError("cannot assign to this expression", start_tok.line)
            if isinstance(expr, Name) and expr.qualifier is not None:
                raise CsSyntaxError("cannot assign to a qualified name", start_tok.line)
            self.next()
            value = self.expression()
            end = self._finish_stmt()
            return Assign(start_tok.start, end, start_tok.line, expr, value)
        end = self._finish_stmt()
        return ExprStmt(start_tok.start, end, start_tok.line, expr)

    def _finish_stmt(self) -> int:
        last_end = self.toks[self.pos - 1].end
        if self.accept("op", ";"):
            return self.toks[self.pos - 1].end
        return last_end

    # expressions, lowest precedence first

    def expression(self) -> Node:
        return self.logic_or()

    def _binop_chain(self, sub, ops):
        left = sub()
        while self.peek().kind == "op" and self.peek().text in ops:
            op = self.next()
            right = sub()
            left = BinOp(left.start, right.end, left.line, op.text, left, right)
        return left

    def logic_or(self) -> Node:
        return self._binop_chain(self.logic_and, ("||",))

    def logic_and(self) -> Node:
        return self._binop_chain(self.equality, ("&&",))

    def equality(self) -> Node:
        return self._binop_chain(self.comparison, ("==", "!="))

    def comparison(self) -> Node:
        return self._binop_chain(self.additive, ("<", ">", "<=", ">="))

    def additive(self) -> Node:
        return self._binop_chain(self.multiplicative, ("+", "-"))

    def multiplicative(self) -> Node:
        return self._binop_chain(self.unary, ("*", "/", "%"))

    def unary(self) -> Node:
        tok = self.peek()
        if tok.kind == "op" and tok.text in ("-", "!"):
            self.next()
            operand = self.unary()
            return UnaryOp(tok.start, operand.end, tok.line, tok.text, operand)
        return self.postfix()

    def postfix(self) -> Node:
        expr = self.primary()
        while True:
            if self.at("op", "."):
                self.next()
                name = self.expect("name")
                if self.at("op", "("):
                    args, close_end = self.arglist()
                    expr = MethodCall(expr.start, close_end, expr.line, expr, name.text, args)
                else:
                    expr = Member(expr.start, name.end, expr.line, expr, name.text)
                continue
            if self.at("op", "("):
                tok = self.peek()
                raise CsSyntaxError("only named functions and methods are callable", tok.line)
            break
        return expr

    def arglist(self) -> tuple[list[Node], int]:
        self.expect("op", "(")
        args = []
        if not self.at("op", ")"):
            args.append(self.expression())
            while self.accept("op", ","):
                args.append(self.expression())
        close = self.expect("op", ")")
        return args, close.end

    def primary(self) -> Node:
        tok = self.peek()
        if tok.kind == "number":
            self.next()
            value = float(tok.text) if "." in tok.text else int(tok.text)
            return Literal(tok.start, tok.end, tok.line, value)
        if tok.kind == "string":
            self.next()
            return Literal(tok.start, tok.end, tok.line, json.loads(tok.text))
        if tok.kind == "keyword":
            if tok.text in ("true", "false", "null"):
                self.next()
                value = {"true": True, "false": False, "null": None}[tok.text]
                return Literal(tok.start, tok.end, tok.line, value)
            if tok.text == "this":
                self.next()
                return ThisExpr(tok.start, tok.end, tok.line)
            if tok.text == "new":
                return self.newexpr()
            raise CsSyntaxError(f"unexpected keyword {tok.text!r}", tok.line)
        if tok.kind == "name":
            return self.name_or_call()
        if self.at("op", "("):
            self.next()
            inner = self.expression()
            close = self.expect("op", ")")
            inner.start, inner.end = tok.start, close.end
            return inner
        if self.at("op", "["):
            self.next()
            items = []
            if not self.at("op", "]"):
                items.append(self.expression())
                while self.accept("op", ","):
                    items.append(self.expression())
            close = self.expect("op", "]")
            return ListLit(tok.start, close.end, tok.line, items)
        if self.at("op", "{"):
            self.next()
            pairs = []
            if not self.at("op", "}"):
                pairs.append(self._mappair())
                while self.accept("op", ","):
                    pairs.append(self._mappair())
            close = self.expect("op", "}")
            return MapLit(tok.start, close.end, tok.line, pairs)
        raise CsSyntaxError(f"unexpected token {tok.text or tok.kind!r}", tok.line)

    def _mappair(self):
        key_tok = self.expect("string")
        self.expect("op", ":")
        return (json.loads(key_tok.text), self.expression())

    def name_or_call(self) -> Node:
        first = self.expect("name")
        qualifier = None
        ident_tok = first
        name_start, name_end = first.start, first.end
        # kernel-qualified reference: kernel:name
        if self.at("op", ":") and self.peek(1).kind == "name":
            self.next()
            ident_tok = self.expect("name")
            qualifier = first.text
            name_end = ident_tok.end
        if self.at("op", "("):
            args, close_end = self.arglist()
            return Call(
                first.start, close_end, first.line, ident_tok.text, args,
                qualifier=qualifier, name_start=name_start, name_end=name_end,
            )
        return Name(first.start, name_end, first.line, ident_tok.text, qualifier=qualifier)

    def newexpr(self) -> New:
        kw = self.expect("keyword", "new")
        first = self.expect("name")
        qualifier = None
        ident_tok = first
        name_start, name_end = first.start, first.end
        if self.at("op", ":") and self.peek(1).kind == "name":
            self.next()
            ident_tok = self.expect("name")
            qualifier = first.text
            name_end = ident_tok.end
        args, close_end = self.arglist()
        return New(
            kw.start, close_end, kw.line, ident_tok.text, args,
            qualifier=qualifier, name_start=name_start, name_end=name_end,
        )


def parse(src: str) -> list[Node]:
    """Parse a cell into a list of top-level statements."""
    return _Parser(src).parse_program()
