"""Text format for programs: parsing and canonical formatting.

Example::

    global x = 0;
    thread p {
      L0:
        a := x;                 # load
        br a != 1 L0 L1;
      L1:
        exit;
    }

Statement spellings (``r`` a register, ``x`` a shared variable)::

    r := x;                     load
    x := e;                     store
    r := e;                     assign
    r := faa(x, e);  x +:= e;   fetch-and-add (with / without result)
    r := xchg(x, e);            exchange
    r := cmpxchg(x, e1, e2);    compare-exchange, r := 1 on success else 0
    assume(e);  assert(e);
    await(x == a);              simple await (any of == != < <= > >=)
    r := await(x == a);         load-await
    r := xchg_await(x == a, e); exchange-await (``xchg_await(x == a, e);`` drops the result)
    spawn(t);  join(t);
    r := phi(L1: a, L2: 0);     only at the top of a block
    goto L;  br e L1 L2;  exit;
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from . import ir
from .ir import (
    Assert, Assign, Assume, Await, BasicBlock, BinOp, Branch, CmpXchg, Const, Exit, Faa,
    Goto, Join, Load, LoadAwait, Phi, Program, Reg, Spawn, Store, ThreadCfg, UnOp, Xchg,
    XchgAwait,
)


@dataclass(frozen=True)
class SourceLocation:
    file: str
    line: int
    column: int

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.column}"


class ProgramError(Exception):
    """Base class for errors raised while reading a program."""


class ParseError(ProgramError):
    def __init__(self, message: str, loc: SourceLocation):
        super().__init__(f"{loc}: {message}")
        self.message = message
        self.loc = loc


class ValidationError(ProgramError):
    def __init__(self, diagnostics: list, file: str = "<input>"):
        lines = "\n".join(f"  {d}" for d in diagnostics)
        super().__init__(f"{file}: invalid program:\n{lines}")
        self.diagnostics = diagnostics


KEYWORDS = {
    "global", "thread", "goto", "br", "exit", "assume", "assert", "await", "spawn", "join",
    "phi", "faa", "xchg", "cmpxchg", "xchg_await", "true", "false",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\f\v]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<int>[0-9]+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>\+:=|:=|==|!=|<=|>=|&&|\|\||[-+*<>=!(){},;:])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # "int", "ident", "op", "eof"
    text: str
    loc: SourceLocation


def tokenize(text: str, file: str = "<input>") -> list:
    toks = []
    line, col, pos = 1, 1, 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", SourceLocation(file, line, col))
        kind = m.lastgroup
        s = m.group()
        if kind == "nl":
            line += 1
            col = 1
        else:
            if kind in ("int", "ident", "op"):
                toks.append(Token(kind, s, SourceLocation(file, line, col)))
            col += len(s)
        pos = m.end()
    toks.append(Token("eof", "", SourceLocation(file, line, col)))
    return toks


class _Parser:
    def __init__(self, text: str, file: str):
        self.file = file
        self.toks = tokenize(text, file)
        self.i = 0
        self.globals: dict = {}

    # -- token helpers ------------------------------------------------------
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg: str, tok: Optional[Token] = None) -> ParseError:
        tok = tok or self.tok
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        return ParseError(f"{msg} (found {found})", tok.loc)

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("op", "ident") and t.text == text

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise self.error(f"expected {text!r}")
        t = self.tok
        self.i += 1
        return t

    def ident(self, what: str = "identifier", allow_keyword: bool = False) -> str:
        t = self.tok
        if t.kind != "ident" or (not allow_keyword and t.text in KEYWORDS):
            raise self.error(f"expected {what}")
        self.i += 1
        return t.text

    def integer(self) -> int:
        neg = False
        if self.at("-"):
            neg = True
            self.i += 1
        t = self.tok
        if t.kind != "int":
            raise self.error("expected integer")
        self.i += 1
        v = -int(t.text) if neg else int(t.text)
        if not ir.INT64_MIN <= v <= ir.INT64_MAX:
            raise ParseError("integer literal out of 64-bit range", t.loc)
        return v

    # -- program ------------------------------------------------------------
    def program(self) -> Program:
        glist = []
        while self.at("global"):
            start = self.tok
            self.i += 1
            name = self.ident("variable name")
            self.expect("=")
            val = self.integer()
            self.expect(";")
            if name in self.globals:
                raise ParseError(f"duplicate global {name}", start.loc)
            self.globals[name] = val
            glist.append((name, val))
        threads = []
        while self.at("thread"):
            threads.append(self.thread())
        if self.tok.kind != "eof":
            raise self.error("expected 'global' or 'thread'")
        if not threads:
            raise ParseError("no threads declared", self.tok.loc)
        return Program(tuple(glist), tuple(threads))

    def thread(self) -> ThreadCfg:
        self.expect("thread")
        name = self.ident("thread name")
        self.expect("{")
        blocks = []
        while not self.at("}"):
            blocks.append(self.block())
        self.expect("}")
        if not blocks:
            raise self.error(f"thread {name} has no blocks")
        return ThreadCfg(name, tuple(blocks))

    def block(self) -> BasicBlock:
        if not (self.tok.kind == "ident" and self.peek().text == ":"):
            raise self.error("expected block label")
        label = self.ident("block label")
        self.expect(":")
        phis = []
        while (
            self.tok.kind == "ident"
            and self.peek().text == ":="
            and self.peek(2).text == "phi"
            and self.peek(3).text == "("
        ):
            phis.append(self.phi())
        stmts = []
        while True:
            if self.at("goto"):
                self.i += 1
                tgt = self.ident("block label")
                self.expect(";")
                return BasicBlock(label, tuple(phis), tuple(stmts), Goto(tgt))
            if self.at("br"):
                self.i += 1
                cond = self.expr()
                a = self.ident("block label")
                b = self.ident("block label")
                self.expect(";")
                return BasicBlock(label, tuple(phis), tuple(stmts), Branch(cond, a, b))
            if self.at("exit"):
                self.i += 1
                self.expect(";")
                return BasicBlock(label, tuple(phis), tuple(stmts), Exit())
            if self.tok.kind == "eof" or self.at("}"):
                raise self.error(f"block {label} lacks a terminator (goto, br or exit)")
            if self.tok.kind == "ident" and self.peek().text == ":":
                raise self.error(f"block {label} lacks a terminator before the next label")
            stmts.append(self.stmt())

    def phi(self) -> Phi:
        dst = self.ident("register")
        self.expect(":=")
        self.expect("phi")
        self.expect("(")
        srcs = []
        while True:
            lbl = self.ident("block label")
            self.expect(":")
            srcs.append((lbl, self.atom()))
            if self.at(","):
                self.i += 1
                continue
            break
        self.expect(")")
        self.expect(";")
        return Phi(dst, tuple(srcs))

    def atom(self):
        t = self.tok
        if t.kind == "int" or (t.text == "-" and self.peek().kind == "int"):
            return Const(self.integer())
        if t.kind == "ident" and t.text in ("true", "false"):
            self.i += 1
            return Const(1 if t.text == "true" else 0)
        name = self.ident("register or integer")
        if name in self.globals:
            raise ParseError(f"shared variable {name} cannot be used as an operand", t.loc)
        return Reg(name)

    def shared(self) -> str:
        t = self.tok
        name = self.ident("shared variable")
        if name not in self.globals:
            raise ParseError(f"{name} is not a declared shared variable", t.loc)
        return name

    def await_pred(self):
        var = self.shared()
        t = self.tok
        op = t.text
        if op == "=":
            op = "=="
        if t.kind != "op" or op not in ir.RELOPS:
            raise self.error("expected comparison operator")
        self.i += 1
        return var, op, self.atom()

    def stmt(self):
        t = self.tok
        if t.kind != "ident":
            raise self.error("expected statement")
        kw = t.text
        if kw in ("assume", "assert"):
            self.i += 1
            self.expect("(")
            e = self.expr()
            self.expect(")")
            self.expect(";")
            return Assume(e) if kw == "assume" else Assert(e)
        if kw == "await":
            self.i += 1
            self.expect("(")
            var, op, rhs = self.await_pred()
            self.expect(")")
            self.expect(";")
            return Await(var, op, rhs)
        if kw == "xchg_await":
            s = self.xchg_await_tail(None)
            self.expect(";")
            return s
        if kw in ("spawn", "join"):
            self.i += 1
            self.expect("(")
            th = self.ident("thread name")
            self.expect(")")
            self.expect(";")
            return Spawn(th) if kw == "spawn" else Join(th)
        if kw in KEYWORDS:
            raise self.error("unexpected keyword")
        name = kw
        self.i += 1
        if self.at("+:="):
            if name not in self.globals:
                raise ParseError(f"{name} is not a declared shared variable", t.loc)
            self.i += 1
            e = self.expr()
            self.expect(";")
            return Faa(None, name, e)
        self.expect(":=")
        if name in self.globals:
            e = self.expr()
            self.expect(";")
            return Store(name, e)
        s = self.rhs(name)
        self.expect(";")
        return s

    def xchg_await_tail(self, dst):
        self.expect("xchg_await")
        self.expect("(")
        var, op, rhs = self.await_pred()
        self.expect(",")
        new = self.expr()
        self.expect(")")
        return XchgAwait(dst, var, op, rhs, new)

    def rhs(self, dst: str):
        t = self.tok
        if t.kind == "ident":
            nxt = self.peek().text
            if t.text == "faa" and nxt == "(":
                self.i += 2
                var = self.shared()
                self.expect(",")
                e = self.expr()
                self.expect(")")
                return Faa(dst, var, e)
            if t.text == "xchg" and nxt == "(":
                self.i += 2
                var = self.shared()
                self.expect(",")
                e = self.expr()
                self.expect(")")
                return Xchg(dst, var, e)
            if t.text == "cmpxchg" and nxt == "(":
                self.i += 2
                var = self.shared()
                self.expect(",")
                a = self.expr()
                self.expect(",")
                b = self.expr()
                self.expect(")")
                return CmpXchg(dst, var, a, b)
            if t.text == "await" and nxt == "(":
                self.i += 2
                var, op, rhs = self.await_pred()
                self.expect(")")
                return LoadAwait(dst, var, op, rhs)
            if t.text == "xchg_await":
                return self.xchg_await_tail(dst)
            if t.text == "phi":
                raise self.error("phi nodes must precede all statements of a block")
            if t.text in self.globals:
                self.i += 1
                if not self.at(";"):
                    raise self.error("a load must have the form 'r := x;'")
                return Load(dst, t.text)
        return Assign(dst, self.expr())

    # -- expressions ---------------------------------------------------------
    _PREC = {"||": 1, "&&": 2, "==": 3, "!=": 3, "<": 3, "<=": 3, ">": 3, ">=": 3,
             "=": 3, "+": 4, "-": 4, "*": 5}

    def expr(self, min_prec: int = 1):
        lhs = self.unary()
        while True:
            t = self.tok
            if t.kind != "op" or t.text not in self._PREC:
                return lhs
            prec = self._PREC[t.text]
            if prec < min_prec:
                return lhs
            op = "==" if t.text == "=" else t.text
            self.i += 1
            rhs = self.expr(prec + 1)
            if prec == 3 and self.tok.kind == "op" and self._PREC.get(self.tok.text) == 3:
                raise self.error("comparisons do not chain; add parentheses")
            lhs = BinOp(op, lhs, rhs)

    def unary(self):
        t = self.tok
        if t.text == "-" and t.kind == "op":
            self.i += 1
            if self.tok.kind == "int":
                tok = self.tok
                self.i += 1
                v = -int(tok.text)
                if v < ir.INT64_MIN:
                    raise ParseError("integer literal out of 64-bit range", tok.loc)
                return Const(v)
            return UnOp("-", self.unary())
        if t.text == "!" and t.kind == "op":
            self.i += 1
            return UnOp("!", self.unary())
        if t.text == "(":
            self.i += 1
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "int":
            self.i += 1
            v = int(t.text)
            if v > ir.INT64_MAX:
                raise ParseError("integer literal out of 64-bit range", t.loc)
            return Const(v)
        if t.kind == "ident":
            if t.text in ("true", "false"):
                self.i += 1
                return Const(1 if t.text == "true" else 0)
            if t.text in self.globals:
                raise ParseError(
                    f"shared variable {t.text} cannot appear in an expression; load it first", t.loc
                )
            return Reg(self.ident("register"))
        raise self.error("expected expression")


def parse_program(text: str, file: str = "<input>", validate: bool = True) -> Program:
    """Parse program text.  Raises ``ParseError`` or ``ValidationError``."""
    try:
        prog = _Parser(text, file).program()
    except RecursionError:
        raise ParseError("expression nested too deeply", SourceLocation(file, 1, 1)) from None
    if validate:
        diags = ir.validate_program(prog)
        if diags:
            raise ValidationError(diags, file)
    return prog


def parse_file(path: str) -> Program:
    with open(path, encoding="utf-8") as fh:
        return parse_program(fh.read(), file=str(path))


# ---------------------------------------------------------------------------
# Formatting
# ---------------------------------------------------------------------------

_FMT_PREC = {"||": 1, "&&": 2, "+": 4, "-": 4, "*": 5}
for _op in ir.RELOPS:
    _FMT_PREC[_op] = 3


def _prec(e) -> int:
    if isinstance(e, BinOp):
        return _FMT_PREC[e.op]
    if isinstance(e, UnOp):
        return 6
    if isinstance(e, Const) and e.value < 0:
        return 6
    return 7


def format_expr(e) -> str:
    if isinstance(e, Const):
        return str(e.value)
    if isinstance(e, Reg):
        return e.name
    if isinstance(e, UnOp):
        inner = format_expr(e.arg)
        if _prec(e.arg) < 7 or isinstance(e.arg, Const):
            inner = f"({inner})"
        return f"{e.op}{inner}"
    p = _FMT_PREC[e.op]
    lhs = format_expr(e.lhs)
    rhs = format_expr(e.rhs)
    lp, rp = _prec(e.lhs), _prec(e.rhs)
    if lp < p or (p == 3 and lp == 3):
        lhs = f"({lhs})"
    if rp <= p:
        rhs = f"({rhs})"
    return f"{lhs} {e.op} {rhs}"


def format_stmt(s) -> str:
    f = format_expr
    if isinstance(s, Load):
        return f"{s.dst} := {s.var};"
    if isinstance(s, Store):
        return f"{s.var} := {f(s.value)};"
    if isinstance(s, Faa):
        if s.dst is None:
            return f"{s.var} +:= {f(s.value)};"
        return f"{s.dst} := faa({s.var}, {f(s.value)});"
    if isinstance(s, Xchg):
        return f"{s.dst} := xchg({s.var}, {f(s.value)});"
    if isinstance(s, CmpXchg):
        return f"{s.dst} := cmpxchg({s.var}, {f(s.expected)}, {f(s.new)});"
    if isinstance(s, Assume):
        return f"assume({f(s.cond)});"
    if isinstance(s, Assert):
        return f"assert({f(s.cond)});"
    if isinstance(s, Await):
        return f"await({s.var} {s.op} {f(s.rhs)});"
    if isinstance(s, LoadAwait):
        return f"{s.dst} := await({s.var} {s.op} {f(s.rhs)});"
    if isinstance(s, XchgAwait):
        core = f"xchg_await({s.var} {s.op} {f(s.rhs)}, {f(s.new)});"
        return core if s.dst is None else f"{s.dst} := {core}"
    if isinstance(s, Assign):
        return f"{s.dst} := {f(s.value)};"
    if isinstance(s, Spawn):
        return f"spawn({s.thread});"
    if isinstance(s, Join):
        return f"join({s.thread});"
    raise TypeError(f"not a statement: {s!r}")


def format_term(t) -> str:
    if isinstance(t, Goto):
        return f"goto {t.target};"
    if isinstance(t, Branch):
        return f"br {format_expr(t.cond)} {t.then} {t.orelse};"
    return "exit;"


def format_block(b: BasicBlock, indent: str = "  ") -> list:
    lines = [f"{indent}{b.label}:"]
    inner = indent + "  "
    for ph in b.phis:
        srcs = ", ".join(f"{lbl}: {format_expr(a)}" for lbl, a in ph.sources)
        lines.append(f"{inner}{ph.dst} := phi({srcs});")
    for s in b.stmts:
        lines.append(inner + format_stmt(s))
    lines.append(inner + format_term(b.term))
    return lines


def format_thread(t: ThreadCfg) -> str:
    lines = [f"thread {t.name} {{"]
    for b in t.blocks:
        lines.extend(format_block(b))
    lines.append("}")
    return "\n".join(lines)


def format_program(p: Program) -> str:
    """Canonical text; ``parse_program(format_program(p)) == p``."""
    parts = []
    if p.globals:
        parts.append("\n".join(f"global {n} = {v};" for n, v in p.globals))
    parts.extend(format_thread(t) for t in p.threads)
    return "\n\n".join(parts) + "\n"
