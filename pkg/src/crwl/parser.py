"""Concrete syntax: module files, module expressions and goals.

Module files hold one or more definitions::

    Name = < {params}, {exports}, {
        lhs -> rhs <= a >< b, c >< d.
    } >

Lowercase (or numeric) identifiers are symbols, uppercase ones variables.
Whether a symbol is a function or a constructor is decided per module: it is
a function when it is declared in one of the two signatures or heads a rule.
Operators declared as ``_op_/2`` are infix, left associative, one level.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .core import (
    BOT,
    CONSTRUCTOR,
    FUNCTION,
    App,
    CRWLError,
    Joinability,
    Reduction,
    Renaming,
    Rule,
    RuleError,
    SignatureError,
    Statement,
    SymbolRef,
    Term,
    Var,
    check_rule,
)
from .modulesys import (
    Abstract,
    Closure,
    ClosureHiding,
    Deletion,
    Export,
    Import,
    Instantiate,
    Isa,
    Module,
    Ref,
    Rename,
    Union_,
)


class ParseError(CRWLError):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {msg}" if line else msg)
        self.line = line
        self.col = col
        self.path: str | None = None


# ---------------------------------------------------------------------------
# lexer
# ---------------------------------------------------------------------------

OPCHARS = "+-*/<>=!&^~@#$%:?\\"
RESERVED_OPS = {"->", "<=", "><", "=", "<", ">", "/", "\\"}


@dataclass(frozen=True)
class Tok:
    kind: str  # ident, var, num, op, punct, bottom, labeled, infixname, eof
    text: str
    line: int
    col: int
    label: str | None = None


_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>--[^\n]*)
  | (?P<bottom>_\|_)
  | (?P<infixname>_[+\-*/<>=!&^~@\#$%:?\\]+_)
  | (?P<qlabel>`[^`]*`\.(?:[A-Za-z0-9_']+|[+\-*/<>=!&^~@\#$%:?\\]+))
  | (?P<label>[A-Za-z][A-Za-z0-9_']*\.(?:[a-z0-9][A-Za-z0-9_']*|[+\-*/<>=!&^~@\#$%:?\\]+))
  | (?P<var>[A-Z][A-Za-z0-9_']*)
  | (?P<ident>[a-z][A-Za-z0-9_']*)
  | (?P<num>[0-9]+)
  | (?P<op>[+\-*/<>=!&^~@\#$%:?\\]+)
  | (?P<punct>[()\[\]{},|.])
    """,
    re.VERBOSE,
)
_NOLABEL = re.compile(
    r"""
    (?P<var>[A-Z][A-Za-z0-9_']*)
  | (?P<ident>[a-z][A-Za-z0-9_']*)
  | (?P<op>`)
    """,
    re.VERBOSE,
)


def tokenize(text: str, labels: bool = False) -> list[Tok]:
    """Split ``text`` into tokens; ``Label.f`` forms are recognised only when
    ``labels`` is set (tool-emitted dumps)."""
    out: list[Tok] = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        s = m.group()
        if kind in ("label", "qlabel") and not labels:
            m = _NOLABEL.match(text, pos)
            kind = m.lastgroup
            s = m.group()
        if kind in ("ws", "comment"):
            pass
        elif kind in ("label", "qlabel"):
            lab, _, name = s.rpartition(".")
            if kind == "qlabel":
                lab = lab[1:-1]
            out.append(Tok("labeled", name, line, col, label=lab))
        elif kind == "infixname":
            out.append(Tok("infixname", s[1:-1], line, col))
        else:
            out.append(Tok(kind, s, line, col))
        nl = s.count("\n")
        if nl:
            line += nl
            line_start = pos + s.rfind("\n") + 1
        pos = m.end()
    out.append(Tok("eof", "", line, pos - line_start + 1))
    return out


def _split_ops(toks: list[Tok], known: set[str]) -> list[Tok]:
    """Split operator runs such as ``=<<`` or ``++[`` into known operators."""
    out = []
    ops = sorted(known | RESERVED_OPS, key=len, reverse=True)
    for t in toks:
        if t.kind != "op" or t.text in known or t.text in RESERVED_OPS:
            out.append(t)
            continue
        s, col = t.text, t.col
        while s:
            for o in ops:
                if s.startswith(o):
                    out.append(Tok("op", o, t.line, col))
                    s = s[len(o):]
                    col += len(o)
                    break
            else:
                raise ParseError(f"unknown operator {s!r}", t.line, col)
    return out


# ---------------------------------------------------------------------------
# raw syntax (before function/constructor classification)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RVar:
    name: str
    line: int
    col: int


@dataclass(frozen=True)
class RBot:
    line: int
    col: int


@dataclass(frozen=True)
class RApp:
    name: str
    args: tuple
    line: int
    col: int
    label: str | None = None
    builtin: str | None = None  # "nil" / "cons" / "infix"


@dataclass
class RawRule:
    lhs: object
    rhs: object
    cond: list
    line: int
    col: int


class _Stream:
    def __init__(self, toks: list[Tok], infix: set[str], allow_labels: bool, allow_bottom: bool):
        self.toks = toks
        self.i = 0
        self.infix = infix
        self.allow_labels = allow_labels
        self.allow_bottom = allow_bottom

    @property
    def cur(self) -> Tok:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self) -> Tok:
        t = self.toks[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def at(self, kind: str, text: str | None = None) -> bool:
        t = self.cur
        return t.kind == kind and (text is None or t.text == text)

    def accept(self, kind: str, text: str | None = None) -> Tok | None:
        if self.at(kind, text):
            return self.next()
        return None

    def expect(self, kind: str, text: str | None = None, what: str | None = None) -> Tok:
        if self.at(kind, text):
            return self.next()
        t = self.cur
        want = what or (repr(text) if text else kind)
        got = "end of input" if t.kind == "eof" else repr(t.text)
        raise ParseError(f"expected {want}, found {got}", t.line, t.col)

    def error(self, msg: str, tok: Tok | None = None) -> ParseError:
        t = tok or self.cur
        return ParseError(msg, t.line, t.col)

    # terms -----------------------------------------------------------------

    def term(self):
        left = self.primary()
        while self.cur.kind == "op" and self.cur.text in self.infix:
            op = self.next()
            right = self.primary()
            left = RApp(op.text, (left, right), op.line, op.col, builtin="infix")
        return left

    def primary(self):
        t = self.cur
        if t.kind == "var":
            self.next()
            if self.at("punct", "("):
                raise self.error("a variable cannot be applied", t)
            return RVar(t.text, t.line, t.col)
        if t.kind == "bottom":
            self.next()
            if not self.allow_bottom:
                raise self.error("bottom may not be written in source", t)
            return RBot(t.line, t.col)
        if t.kind in ("ident", "num", "labeled"):
            self.next()
            if t.kind == "labeled" and not self.allow_labels:
                raise self.error("labeled symbols are only accepted in emitted dumps", t)
            args = []
            if t.kind != "num" and self.accept("punct", "("):
                args.append(self.term())
                while self.accept("punct", ","):
                    args.append(self.term())
                self.expect("punct", ")")
            return RApp(t.text, tuple(args), t.line, t.col, label=t.label)
        if t.kind == "punct" and t.text == "[":
            self.next()
            if self.accept("punct", "]"):
                return RApp("[]", (), t.line, t.col, builtin="nil")
            items = [self.term()]
            while self.accept("punct", ","):
                items.append(self.term())
            tail = self.term() if self.accept("punct", "|") else RApp("[]", (), t.line, t.col, builtin="nil")
            self.expect("punct", "]")
            for it in reversed(items):
                tail = RApp("|", (it, tail), t.line, t.col, builtin="cons")
            return tail
        if t.kind == "punct" and t.text == "(":
            self.next()
            inner = self.term()
            self.expect("punct", ")")
            return inner
        if t.kind == "op" and t.text == "->":
            raise self.error("unexpected '->' inside a term")
        raise self.error(f"expected a term, found {t.text or 'end of input'!r}")

    # signatures --------------------------------------------------------------

    def sig_entry(self) -> tuple[str, int, str | None, Tok]:
        t = self.cur
        if t.kind in ("ident", "num", "infixname", "labeled"):
            self.next()
        elif t.kind == "punct" and t.text == "[":
            # list constructors may be listed as []/0 or [_|_]/2
            self.next()
            if self.accept("punct", "]"):
                name = "[]"
            else:
                self.expect("bottom", what="'_|_' in '[_|_]'")
                self.expect("punct", "]")
                name = "|"
            self.expect("op", "/")
            arity = self.expect("num", what="arity")
            return name, int(arity.text), None, t
        else:
            raise self.error("expected a symbol in signature")
        self.expect("op", "/")
        arity = self.expect("num", what="arity")
        return t.text, int(arity.text), t.label, t

    def signature(self) -> list[tuple[str, int, str | None, Tok]]:
        self.expect("punct", "{")
        out = []
        if not self.at("punct", "}"):
            out.append(self.sig_entry())
            while self.accept("punct", ","):
                out.append(self.sig_entry())
        self.expect("punct", "}")
        return out

    # rules ----------------------------------------------------------------

    def rule(self) -> RawRule:
        start = self.cur
        lhs = self.term()
        if isinstance(lhs, RVar):
            raise self.error("left-hand side cannot be a variable", start)
        self.expect("op", "->", what="'->'")
        rhs = self.term()
        cond = []
        if self.accept("op", "<="):
            cond.append(self.join())
            while self.accept("punct", ","):
                cond.append(self.join())
        self.expect("punct", ".", what="'.' ending the rule")
        return RawRule(lhs, rhs, cond, start.line, start.col)

    def join(self):
        a = self.term()
        self.expect("op", "><", what="'><'")
        b = self.term()
        return (a, b)


def _infix_names(text: str) -> set[str]:
    return set(re.findall(r"_([+\-*/<>=!&^~@#$%:?\\]+)_", text))


def _stream(text: str, infix: set[str], allow_labels=False, allow_bottom=False) -> _Stream:
    infix = set(infix) - {"->", "<=", "><"}
    toks = _split_ops(tokenize(text, allow_labels), infix)
    return _Stream(toks, infix, allow_labels, allow_bottom)


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------


def _walk(raw):
    yield raw
    if isinstance(raw, RApp):
        for a in raw.args:
            yield from _walk(a)


class _Classifier:
    def __init__(self, functions: set[tuple[str | None, str, int]]):
        self.functions = functions

    def sym(self, r: RApp) -> SymbolRef:
        key = (r.label, r.name, len(r.args))
        kind = FUNCTION if key in self.functions else CONSTRUCTOR
        return SymbolRef(r.name, len(r.args), kind, r.label)

    def term(self, raw) -> Term:
        if isinstance(raw, RVar):
            return Var(raw.name)
        if isinstance(raw, RBot):
            return BOT
        return App(self.sym(raw), tuple(self.term(a) for a in raw.args))


def _check_arities(raws, declared) -> None:
    arity: dict[tuple[str | None, str], tuple[int, int, int]] = {}
    for name, n, label, tok in declared:
        prev = arity.get((label, name))
        if prev is not None and prev[0] != n:
            raise ParseError(f"arity conflict for {name}: {prev[0]} and {n}", tok.line, tok.col)
        arity[(label, name)] = (n, tok.line, tok.col)
    for raw in raws:
        for node in _walk(raw):
            if not isinstance(node, RApp):
                continue
            k = (node.label, node.name)
            n = len(node.args)
            prev = arity.get(k)
            if prev is not None and prev[0] != n:
                raise ParseError(f"arity conflict for {node.name}: used with {prev[0]} and {n} arguments",
                                 node.line, node.col)
            arity.setdefault(k, (n, node.line, node.col))


def _build_rule(rr: RawRule, cls: _Classifier, strict: bool) -> Rule:
    lhs = rr.lhs
    if isinstance(lhs, RVar):
        raise ParseError("left-hand side cannot be a variable", rr.line, rr.col)
    if not isinstance(lhs, RApp):
        raise ParseError("left-hand side must be a function application", rr.line, rr.col)
    head = cls.sym(lhs)
    rule = Rule(head, tuple(cls.term(a) for a in lhs.args), cls.term(rr.rhs),
                tuple(Joinability(cls.term(a), cls.term(b)) for a, b in rr.cond))
    if strict:
        try:
            check_rule(rule)
        except RuleError as e:
            raise ParseError(str(e), rr.line, rr.col) from None
    return rule


@dataclass
class SourceModule:
    name: str
    declared_params: frozenset
    declared_exports: frozenset
    rules: list
    line: int = 0

    @property
    def module(self) -> Module:
        return Module(self.rules, name=self.name)


def _module_def(st: _Stream, strict: bool) -> SourceModule:
    name_tok = st.cur
    if name_tok.kind not in ("var", "ident"):
        raise st.error("expected a module name")
    st.next()
    st.expect("op", "=")
    st.expect("op", "<", what="'<' opening the module")
    params = st.signature()
    st.expect("punct", ",")
    exports = st.signature()
    st.expect("punct", ",")
    st.expect("punct", "{")
    raws = []
    while not st.at("punct", "}"):
        if st.at("eof"):
            raise st.error("unterminated rule block")
        raws.append(st.rule())
    st.expect("punct", "}")
    st.expect("op", ">", what="'>' closing the module")
    st.accept("punct", ".")

    all_raw = [x for rr in raws for x in (rr.lhs, rr.rhs, *[t for j in rr.cond for t in j])]
    _check_arities(all_raw, params + exports)
    functions = {(lab, n, k) for n, k, lab, _ in params + exports}
    for rr in raws:
        if isinstance(rr.lhs, RApp):
            functions.add((rr.lhs.label, rr.lhs.name, len(rr.lhs.args)))
    cls = _Classifier(functions)
    rules = [_build_rule(rr, cls, strict) for rr in raws]
    pset = frozenset(SymbolRef(n, k, FUNCTION, lab) for n, k, lab, _ in params)
    eset = frozenset(SymbolRef(n, k, FUNCTION, lab) for n, k, lab, _ in exports)
    heads = {r.head for r in rules}
    clash = pset & heads
    if clash:
        s = sorted(clash)[0]
        raise ParseError(f"{s.name}/{s.arity} is declared as a parameter but has rules",
                         name_tok.line, name_tok.col)
    try:
        Module(rules) if strict else None
    except SignatureError as e:
        raise ParseError(str(e), name_tok.line, name_tok.col) from None
    return SourceModule(name_tok.text, pset, eset, rules, name_tok.line)


def parse_modules(text: str, allow_labels: bool = False) -> list[SourceModule]:
    st = _stream(text, _infix_names(text), allow_labels=allow_labels, allow_bottom=False)
    out = []
    names = set()
    while not st.at("eof"):
        sm = _module_def(st, strict=True)
        if sm.name in names:
            raise ParseError(f"module {sm.name} defined twice", sm.line, 1)
        names.add(sm.name)
        out.append(sm)
    return out


def parse_module(text: str) -> SourceModule:
    mods = parse_modules(text)
    if len(mods) != 1:
        raise ParseError(f"expected exactly one module, found {len(mods)}")
    return mods[0]


def infix_operators(symbols: Iterable[SymbolRef]) -> set[str]:
    from .core import is_operator_name

    return {s.name for s in symbols if s.arity == 2 and is_operator_name(s.name)}


# ---------------------------------------------------------------------------
# goals and standalone terms
# ---------------------------------------------------------------------------


def _resolver(symbols: Iterable[SymbolRef]) -> _Classifier:
    return _Classifier({(s.label, s.name, s.arity) for s in symbols if s.is_function})


def parse_term(text: str, symbols: Iterable[SymbolRef] = (), allow_bottom: bool = True) -> Term:
    symbols = list(symbols)
    st = _stream(text, infix_operators(symbols) | _infix_names(text), allow_labels=True,
                 allow_bottom=allow_bottom)
    raw = st.term()
    st.expect("eof", what="end of term")
    _check_known(raw, symbols)
    return _resolver(symbols).term(raw)


def _check_known(raw, symbols: list[SymbolRef]) -> None:
    if not symbols:
        return
    arities: dict[tuple, set[int]] = {}
    for s in symbols:
        arities.setdefault((s.label, s.name), set()).add(s.arity)
    for node in _walk(raw):
        if isinstance(node, RApp) and node.builtin not in ("nil", "cons") and not node.name.isdigit():
            got = arities.get((node.label, node.name))
            if got is None:
                raise ParseError(f"unknown symbol {node.name}", node.line, node.col)
            if len(node.args) not in got:
                raise ParseError(f"{node.name} expects {sorted(got)} arguments, got {len(node.args)}",
                                 node.line, node.col)


def parse_goal(text: str, symbols: Iterable[SymbolRef] = ()) -> Statement:
    symbols = list(symbols)
    st = _stream(text, infix_operators(symbols), allow_labels=True, allow_bottom=True)
    a = st.term()
    if st.accept("op", "->"):
        kind = Reduction
    elif st.accept("op", "><"):
        kind = Joinability
    else:
        raise st.error("expected '->' or '><' in goal")
    b = st.term()
    st.expect("eof", what="end of goal")
    _check_known(a, symbols)
    _check_known(b, symbols)
    cls = _resolver(symbols)
    return kind(cls.term(a), cls.term(b))


def parse_rules(text: str, symbols: Iterable[SymbolRef], allow_labels: bool = True) -> list[Rule]:
    """Rules written against a known signature (used for emitted dumps)."""
    symbols = list(symbols)
    st = _stream(text, infix_operators(symbols) | _infix_names(text), allow_labels=allow_labels,
                 allow_bottom=True)
    raws = []
    while not st.at("eof"):
        raws.append(st.rule())
    functions = {(s.label, s.name, s.arity) for s in symbols if s.is_function}
    for rr in raws:
        if isinstance(rr.lhs, RApp):
            functions.add((rr.lhs.label, rr.lhs.name, len(rr.lhs.args)))
    cls = _Classifier(functions)
    return [_build_rule(rr, cls, strict=False) for rr in raws]


# ---------------------------------------------------------------------------
# module expressions
# ---------------------------------------------------------------------------

KEYWORDS = {"close", "export", "import", "inst", "abstract", "isa", "closeH"}


class _ExprParser:
    def __init__(self, text: str):
        self.st = _stream(text, {"+"}, allow_labels=False)

    def parse(self):
        e = self.expr()
        self.st.expect("eof", what="end of expression")
        return e

    def expr(self):
        left = self.union()
        while self.st.at("ident", "isa"):
            self.st.next()
            left = Isa(left, self.union())
        return left

    def union(self):
        left = self.postfix()
        while self.st.accept("op", "+"):
            left = Union_(left, self.postfix())
        return left

    def postfix(self):
        e = self.primary()
        while self.st.accept("op", "\\"):
            e = Deletion(e, self.fsig())
        return e

    def primary(self):
        st = self.st
        t = st.cur
        if t.kind == "punct" and t.text == "(":
            st.next()
            e = self.expr()
            st.expect("punct", ")")
            return e
        if t.kind == "punct" and t.text == "{":
            rho = self.renaming()
            st.expect("punct", "(")
            e = self.expr()
            st.expect("punct", ")")
            return Rename(rho, e)
        if t.kind == "ident" and t.text in KEYWORDS and st.peek().text == "(":
            return self.keyword()
        if t.kind in ("var", "ident"):
            st.next()
            return Ref(t.text)
        raise st.error(f"expected a module expression, found {t.text or 'end of input'!r}")

    def keyword(self):
        st = self.st
        kw = st.next().text
        st.expect("punct", "(")
        if kw == "close":
            e = self.expr()
            sig = self.fsig() if st.accept("punct", ",") else None
            out = Closure(e, sig)
        elif kw == "export":
            sig = self.fsig()
            st.expect("punct", ",")
            out = Export(sig, self.expr())
        elif kw == "import":
            left = self.expr()
            st.expect("punct", ",")
            right = self.expr()
            sig = rho = None
            if st.accept("punct", ","):
                sig = self.fsig()
                if st.accept("punct", ","):
                    rho = self.renaming()
            out = Import(left, right, sig, rho)
        elif kw == "inst":
            left = self.expr()
            st.expect("punct", ",")
            right = self.expr()
            st.expect("punct", ",")
            out = Instantiate(left, right, self.renaming())
        elif kw == "abstract":
            e = self.expr()
            st.expect("punct", ",")
            out = Abstract(e, self.fsig())
        elif kw == "isa":
            left = self.expr()
            st.expect("punct", ",")
            out = Isa(left, self.expr())
        else:  # closeH
            e = self.expr()
            st.expect("punct", ",")
            out = ClosureHiding(e, self.csig())
        st.expect("punct", ")")
        return out

    def fsig(self) -> frozenset:
        return frozenset(SymbolRef(n, k, FUNCTION, lab) for n, k, lab, _ in self.st.signature())

    def csig(self) -> frozenset:
        return frozenset(SymbolRef(n, k, CONSTRUCTOR, lab) for n, k, lab, _ in self.st.signature())

    def renaming(self) -> Renaming:
        st = self.st
        st.expect("punct", "{")
        pairs = {}
        if not st.at("punct", "}"):
            while True:
                a = st.sig_entry()
                st.expect("op", "->")
                b = st.sig_entry()
                if a[1] != b[1]:
                    raise ParseError(f"renaming {a[0]}/{a[1]} -> {b[0]}/{b[1]} changes arity",
                                     a[3].line, a[3].col)
                pairs[SymbolRef(a[0], a[1], FUNCTION, a[2])] = SymbolRef(b[0], b[1], FUNCTION, b[2])
                if not st.accept("punct", ","):
                    break
        st.expect("punct", "}")
        return Renaming.of(pairs)


def parse_expr(text: str):
    return _ExprParser(text).parse()


def check_renaming_kinds(rho: Renaming, constructors: Iterable[SymbolRef]) -> None:
    """A renaming entry naming a constructor is an error."""
    cons = {(c.label, c.name, c.arity) for c in constructors}
    for a, b in rho.mapping:
        for s in (a, b):
            if (s.label, s.name, s.arity) in cons:
                raise SignatureError(f"renaming names constructor {s.name}/{s.arity}")


# ---------------------------------------------------------------------------
# loading module files
# ---------------------------------------------------------------------------


def load_modules(paths: Iterable[str | os.PathLike]) -> dict[str, Module]:
    """Read every ``.crwl`` file under the given files or directories.

    Defining the same module name twice is an error.
    """
    files: list[Path] = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            files += sorted(p.glob("*.crwl"))
        elif p.exists():
            files.append(p)
        else:
            raise FileNotFoundError(str(p))
    out: dict[str, Module] = {}
    origin: dict[str, Path] = {}
    for f in files:
        try:
            mods = parse_modules(f.read_text())
        except ParseError as e:
            e.path = str(f)
            raise
        for sm in mods:
            if sm.name in out:
                raise ParseError(f"module {sm.name} defined in both {origin[sm.name]} and {f}",
                                 sm.line, 1)
            out[sm.name] = Module(sm.rules, name=sm.name)
            origin[sm.name] = f
    return out
