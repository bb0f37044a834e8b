"""Terms, symbols, substitutions, renamings and program rules.

Everything here is immutable and hashable so terms can key memo tables and
rules can live in frozensets.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Literal, Mapping, Union

Kind = Literal["constructor", "function"]
CONSTRUCTOR: Kind = "constructor"
FUNCTION: Kind = "function"


# ---------------------------------------------------------------------------
# errors
# ---------------------------------------------------------------------------


class CRWLError(Exception):
    """Base class for every error raised by the package."""


class SignatureError(CRWLError):
    pass


class RuleError(CRWLError):
    pass


class PreconditionError(CRWLError):
    pass


# ---------------------------------------------------------------------------
# symbols
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class SymbolRef:
    name: str
    arity: int
    kind: Kind
    label: str | None = None

    @property
    def is_constructor(self) -> bool:
        return self.kind == CONSTRUCTOR

    @property
    def is_function(self) -> bool:
        return self.kind == FUNCTION

    @property
    def is_labeled(self) -> bool:
        return self.label is not None

    def relabel(self, label: str | None) -> SymbolRef:
        return SymbolRef(self.name, self.arity, self.kind, label)

    def __str__(self) -> str:
        return show_symbol(self)


Signature = frozenset  # frozenset[SymbolRef]


def fsym(name: str, arity: int = 0, label: str | None = None) -> SymbolRef:
    return SymbolRef(name, arity, FUNCTION, label)


def csym(name: str, arity: int = 0, label: str | None = None) -> SymbolRef:
    return SymbolRef(name, arity, CONSTRUCTOR, label)


def sort_symbols(syms: Iterable[SymbolRef]) -> list[SymbolRef]:
    return sorted(syms, key=lambda s: (s.label or "", s.name, s.arity, s.kind))


# ---------------------------------------------------------------------------
# terms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return self.name


class _Bottom:
    __slots__ = ()
    _inst: _Bottom | None = None

    def __new__(cls) -> _Bottom:
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self) -> str:
        return "BOT"

    def __str__(self) -> str:
        return "_|_"

    def __reduce__(self):
        return (_Bottom, ())


BOT = _Bottom()


@dataclass(frozen=True)
class App:
    sym: SymbolRef
    args: tuple = ()
    _hash: int = field(default=0, compare=False, repr=False)

    def __post_init__(self) -> None:
        if len(self.args) != self.sym.arity:
            raise SignatureError(
                f"{show_symbol(self.sym)} applied to {len(self.args)} arguments"
            )
        object.__setattr__(self, "_hash", hash((self.sym, self.args)))

    def __hash__(self) -> int:
        return self._hash

    def __str__(self) -> str:
        return show_term(self)


Term = Union[Var, _Bottom, App]


def app(sym: SymbolRef, *args: Term) -> App:
    return App(sym, tuple(args))


def is_var(t: Term) -> bool:
    return isinstance(t, Var)


def is_bottom(t: Term) -> bool:
    return t is BOT


def subterms(t: Term) -> Iterator[Term]:
    yield t
    if isinstance(t, App):
        for a in t.args:
            yield from subterms(a)


def variables(t: Term) -> list[Var]:
    """Variables of ``t`` in order of first occurrence."""
    seen: dict[Var, None] = {}
    for s in subterms(t):
        if isinstance(s, Var):
            seen.setdefault(s, None)
    return list(seen)


def symbols_of(t: Term) -> set[SymbolRef]:
    return {s.sym for s in subterms(t) if isinstance(s, App)}


def is_cterm(t: Term) -> bool:
    return all(not (isinstance(s, App) and s.sym.is_function) for s in subterms(t))


def is_total(t: Term) -> bool:
    return all(s is not BOT for s in subterms(t))


def term_depth(t: Term) -> int:
    if isinstance(t, App) and t.args:
        return 1 + max(term_depth(a) for a in t.args)
    return 0


def term_key(t: Term) -> tuple:
    """Deterministic total order on terms: depth first, then structure."""
    if t is BOT:
        return (0, 0)
    if isinstance(t, Var):
        return (0, 1, t.name)
    s = t.sym
    return (
        term_depth(t),
        2,
        s.label or "",
        s.name,
        s.arity,
        s.kind,
        tuple(term_key(a) for a in t.args),
    )


def approx_le(s: Term, t: Term) -> bool:
    """The information ordering on partial constructor terms."""
    if not (is_cterm(s) and is_cterm(t)):
        raise PreconditionError("approx_le is defined on constructor terms only")
    return _le(s, t)


def _le(s: Term, t: Term) -> bool:
    if s is BOT:
        return True
    if isinstance(s, Var):
        return s == t
    if not isinstance(t, App) or t.sym != s.sym:
        return False
    return all(_le(a, b) for a, b in zip(s.args, t.args))


def meet_terms(s: Term, t: Term) -> Term:
    """Greatest lower bound of two constructor terms."""
    if s == t:
        return s
    if isinstance(s, App) and isinstance(t, App) and s.sym == t.sym:
        return App(s.sym, tuple(meet_terms(a, b) for a, b in zip(s.args, t.args)))
    return BOT


# ---------------------------------------------------------------------------
# substitutions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CSubst:
    """Finite map from variables to constructor terms; identity elsewhere."""

    mapping: tuple = ()  # sorted tuple of (Var, Term)

    @staticmethod
    def of(m: Mapping[Var, Term]) -> CSubst:
        for v, t in m.items():
            if not is_cterm(t):
                raise PreconditionError(f"substitution image {show_term(t)} is not a constructor term")
        return CSubst(tuple(sorted(m.items(), key=lambda kv: kv[0].name)))

    def as_dict(self) -> dict[Var, Term]:
        return dict(self.mapping)

    @property
    def is_total(self) -> bool:
        return all(is_total(t) for _, t in self.mapping)

    def __call__(self, t: Term) -> Term:
        return substitute(t, self.as_dict())

    def __str__(self) -> str:
        body = ", ".join(f"{v.name} / {show_term(t)}" for v, t in self.mapping)
        return "{" + body + "}"


def substitute(t: Term, m: Mapping[Var, Term]) -> Term:
    if isinstance(t, Var):
        return m.get(t, t)
    if isinstance(t, App) and t.args:
        return App(t.sym, tuple(substitute(a, m) for a in t.args))
    return t


# ---------------------------------------------------------------------------
# renamings
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Renaming:
    """Arity preserving map between function symbols; identity outside ``mapping``."""

    mapping: tuple = ()  # sorted tuple of (SymbolRef, SymbolRef)

    @staticmethod
    def of(m: Mapping[SymbolRef, SymbolRef]) -> Renaming:
        for a, b in m.items():
            if not (a.is_function and b.is_function):
                raise SignatureError(f"renaming must map functions to functions: {a} -> {b}")
            if a.arity != b.arity:
                raise SignatureError(f"renaming changes arity: {a} -> {b}")
        items = [(a, b) for a, b in m.items() if a != b]
        return Renaming(tuple(sorted(items)))

    def as_dict(self) -> dict[SymbolRef, SymbolRef]:
        return dict(self.mapping)

    def sym(self, f: SymbolRef) -> SymbolRef:
        for a, b in self.mapping:
            if a == f:
                return b
        return f

    def sig(self, sig: Iterable[SymbolRef]) -> frozenset:
        return frozenset(self.sym(f) for f in sig)

    @property
    def domain(self) -> frozenset:
        return frozenset(a for a, _ in self.mapping)

    def is_injective_on(self, sig: Iterable[SymbolRef]) -> bool:
        sig = list(sig)
        return len({self.sym(f) for f in sig}) == len(set(sig))

    def compose(self, first: Renaming) -> Renaming:
        """``self`` after ``first``."""
        dom = first.domain | self.domain
        return Renaming.of({f: self.sym(first.sym(f)) for f in dom})

    def term(self, t: Term) -> Term:
        return rename_term(t, self.as_dict())

    def __str__(self) -> str:
        body = ", ".join(f"{show_symbol(a)} -> {show_symbol(b)}" for a, b in self.mapping)
        return "{" + body + "}"


def rename_term(t: Term, m: Mapping[SymbolRef, SymbolRef]) -> Term:
    if isinstance(t, App):
        sym = m.get(t.sym, t.sym) if t.sym.is_function else t.sym
        if not t.args:
            return t if sym is t.sym else App(sym, ())
        return App(sym, tuple(rename_term(a, m) for a in t.args))
    return t


def map_symbols(t: Term, fn) -> Term:
    """Rebuild ``t`` replacing every symbol ``s`` by ``fn(s)``."""
    if isinstance(t, App):
        return App(fn(t.sym), tuple(map_symbols(a, fn) for a in t.args))
    return t


# ---------------------------------------------------------------------------
# statements and rules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Reduction:
    lhs: Term
    rhs: Term

    def __str__(self) -> str:
        return f"{show_term(self.lhs)} -> {show_term(self.rhs)}"


@dataclass(frozen=True)
class Joinability:
    lhs: Term
    rhs: Term

    def __str__(self) -> str:
        return f"{show_term(self.lhs)} >< {show_term(self.rhs)}"


Statement = Union[Reduction, Joinability]


@dataclass(frozen=True)
class Rule:
    """``head(args) -> rhs <= cond``; ``cond`` is a tuple of joinability pairs.

    The constructor does not validate: rule instances (with bottom in the
    patterns or as right-hand side) share this type.  ``check_rule`` holds the
    program-rule invariants.
    """

    head: SymbolRef
    args: tuple
    rhs: Term
    cond: tuple = ()

    @property
    def lhs(self) -> App:
        return App(self.head, self.args)

    def terms(self) -> Iterator[Term]:
        yield from self.args
        yield self.rhs
        for j in self.cond:
            yield j.lhs
            yield j.rhs

    def variables(self) -> list[Var]:
        seen: dict[Var, None] = {}
        for t in self.terms():
            for v in variables(t):
                seen.setdefault(v, None)
        return list(seen)

    def pattern_variables(self) -> list[Var]:
        seen: dict[Var, None] = {}
        for t in self.args:
            for v in variables(t):
                seen.setdefault(v, None)
        return list(seen)

    def symbols(self) -> set[SymbolRef]:
        out = {self.head}
        for t in self.terms():
            out |= symbols_of(t)
        return out

    def invoked_functions(self) -> set[SymbolRef]:
        out: set[SymbolRef] = set()
        for t in self.terms():
            out |= {s for s in symbols_of(t) if s.is_function}
        return out

    def body_functions(self) -> set[SymbolRef]:
        """Functions read when the rule fires: those in rhs and condition."""
        out: set[SymbolRef] = set()
        for t in list(self.terms())[len(self.args):]:
            out |= {s for s in symbols_of(t) if s.is_function}
        return out

    def substitute(self, m: Mapping[Var, Term]) -> Rule:
        return Rule(
            self.head,
            tuple(substitute(a, m) for a in self.args),
            substitute(self.rhs, m),
            tuple(type(j)(substitute(j.lhs, m), substitute(j.rhs, m)) for j in self.cond),
        )

    def map_symbols(self, fn) -> Rule:
        return Rule(
            fn(self.head),
            tuple(map_symbols(a, fn) for a in self.args),
            map_symbols(self.rhs, fn),
            tuple(type(j)(map_symbols(j.lhs, fn), map_symbols(j.rhs, fn)) for j in self.cond),
        )

    def rename(self, rho: Renaming) -> Rule:
        m = rho.as_dict()
        return self.map_symbols(lambda s: m.get(s, s) if s.is_function else s)

    def __str__(self) -> str:
        return show_rule(self)


def check_rule(rule: Rule) -> None:
    """Raise ``RuleError`` unless ``rule`` is a legal program rule."""
    if not rule.head.is_function:
        raise RuleError(f"rule head {show_symbol(rule.head)} is a constructor")
    seen: set[Var] = set()
    for a in rule.args:
        if not is_cterm(a):
            raise RuleError(f"non-constructor pattern {show_term(a)} in {show_rule(rule)}")
        for s in subterms(a):
            if s is BOT:
                raise RuleError(f"bottom in pattern of {show_rule(rule)}")
            if isinstance(s, Var):
                if s in seen:
                    raise RuleError(f"non-linear left-hand side in {show_rule(rule)}")
                seen.add(s)
    for t in rule.terms():
        if any(s is BOT for s in subterms(t)):
            raise RuleError(f"bottom in program rule {show_rule(rule)}")


# ---------------------------------------------------------------------------
# canonical rewrite rules
# ---------------------------------------------------------------------------


def _fresh(base: str, taken: set[str], first_bare: bool = False) -> str:
    if first_bare and base not in taken:
        taken.add(base)
        return base
    k = 1
    while f"{base}{k}" in taken:
        k += 1
    name = f"{base}{k}"
    taken.add(name)
    return name


def make_crr(head: SymbolRef, args: Iterable[Term], rhs: Term) -> tuple[Rule, CSubst]:
    """Canonical rewrite rule for the approximation ``head(args) -> rhs``.

    Returns the rule and the substitution sending each fresh variable back to
    what it replaced (a repeated variable, or bottom).
    """
    args = tuple(args)
    if rhs is BOT:
        raise PreconditionError("canonical rule needs a non-bottom right-hand side")
    if not head.is_function:
        raise PreconditionError("canonical rule head must be a function symbol")
    for t in (*args, rhs):
        if not is_cterm(t):
            raise PreconditionError(f"{show_term(t)} is not a constructor term")

    taken = {v.name for t in (*args, rhs) for v in variables(t)}
    counts: dict[Var, int] = {}
    for a in args:
        for s in subterms(a):
            if isinstance(s, Var):
                counts[s] = counts.get(s, 0) + 1

    seen: set[Var] = set()
    theta: dict[Var, Term] = {}
    joins: list[Joinability] = []

    def walk(t: Term) -> Term:
        if t is BOT:
            v = Var(_fresh("V", taken, first_bare=True))
            theta[v] = BOT
            return v
        if isinstance(t, Var):
            if t in seen:
                v = Var(_fresh(t.name, taken))
                theta[v] = t
                joins.append(Joinability(v, t))
                return v
            seen.add(t)
            return t
        if isinstance(t, App) and t.args:
            return App(t.sym, tuple(walk(a) for a in t.args))
        return t

    new_args = tuple(walk(a) for a in args)
    singles: dict[Var, None] = {}
    for a in args:
        for v in variables(a):
            if counts[v] == 1:
                singles.setdefault(v, None)
    for v in variables(rhs):
        if counts.get(v, 0) <= 1:
            singles.setdefault(v, None)
    joins.extend(Joinability(v, v) for v in singles)
    return Rule(head, new_args, rhs, tuple(joins)), CSubst.of(theta)


# ---------------------------------------------------------------------------
# canonical forms (alpha equivalence)
# ---------------------------------------------------------------------------


def _shape(t: Term, names: Mapping[Var, str]) -> tuple:
    if t is BOT:
        return ("b",)
    if isinstance(t, Var):
        return ("v", names.get(t, "?"))
    return ("a", t.sym.label or "", t.sym.name, t.sym.arity, t.sym.kind,
            tuple(_shape(a, names) for a in t.args))


def canonical_rule(rule: Rule) -> Rule:
    """Alpha-rename ``rule`` so that equal-up-to-renaming rules coincide."""
    names: dict[Var, str] = {}

    def number(t: Term) -> None:
        for v in variables(t):
            if v not in names:
                names[v] = f"V{len(names) + 1}"

    for a in rule.args:
        number(a)
    number(rule.rhs)
    pending = list(rule.cond)
    ordered: list = []
    while pending:
        pending.sort(key=lambda j: (type(j).__name__, _shape(j.lhs, names), _shape(j.rhs, names)))
        j = pending.pop(0)
        number(j.lhs)
        number(j.rhs)
        ordered.append(j)
    m = {v: Var(n) for v, n in names.items()}
    r = Rule(rule.head, rule.args, rule.rhs, tuple(ordered)).substitute(m)
    return Rule(r.head, r.args, r.rhs,
                tuple(sorted(r.cond, key=lambda j: (_shape(j.lhs, {}), _shape(j.rhs, {}), str(j)))))


def canonical_rules(rules: Iterable[Rule]) -> frozenset:
    return frozenset(canonical_rule(r) for r in rules)


# ---------------------------------------------------------------------------
# printing
# ---------------------------------------------------------------------------

_IDENT = re.compile(r"[a-z0-9][A-Za-z0-9_']*\Z")
_OPCHARS = set("+-*/<>=!&^~@#$%:?\\")


def is_operator_name(name: str) -> bool:
    return bool(name) and all(c in _OPCHARS for c in name)


def show_label(label: str) -> str:
    if re.fullmatch(r"[A-Za-z][A-Za-z0-9_']*", label):
        return label
    return "`" + label + "`"


def show_symbol_name(s: SymbolRef) -> str:
    return s.name if s.label is None else f"{show_label(s.label)}.{s.name}"


def show_symbol(s: SymbolRef) -> str:
    name = s.name
    if is_operator_name(name) and s.arity == 2 and s.label is None:
        name = f"_{name}_"
    elif s.label is not None:
        name = f"{show_label(s.label)}.{s.name}"
    return f"{name}/{s.arity}"


def show_signature(sig: Iterable[SymbolRef]) -> str:
    return "{" + ", ".join(show_symbol(s) for s in sort_symbols(sig)) + "}"


def _is_infix(t: Term) -> bool:
    return (isinstance(t, App) and t.sym.arity == 2 and t.sym.label is None
            and is_operator_name(t.sym.name))


def _is_nil(t: Term) -> bool:
    return isinstance(t, App) and t.sym.name == "[]" and t.sym.arity == 0 and t.sym.is_constructor


def _is_cons(t: Term) -> bool:
    return isinstance(t, App) and t.sym.name == "|" and t.sym.arity == 2 and t.sym.is_constructor


def show_term(t: Term) -> str:
    if t is BOT:
        return "_|_"
    if isinstance(t, Var):
        return t.name
    if _is_nil(t):
        return "[]"
    if _is_cons(t):
        items = []
        cur: Term = t
        while _is_cons(cur):
            items.append(show_term(cur.args[0]))
            cur = cur.args[1]
        if _is_nil(cur):
            return "[" + ", ".join(items) + "]"
        return "[" + ", ".join(items) + " | " + show_term(cur) + "]"
    if _is_infix(t):
        left, right = t.args
        ls = show_term(left)
        rs = show_term(right)
        if _is_infix(right):
            rs = f"({rs})"
        return f"{ls} {t.sym.name} {rs}"
    head = show_symbol_name(t.sym)
    if not t.args:
        return head
    return head + "(" + ", ".join(show_term(a) for a in t.args) + ")"


def show_statement(s: Statement) -> str:
    return str(s)


def show_rule(rule: Rule) -> str:
    out = f"{show_term(rule.lhs)} -> {show_term(rule.rhs)}"
    if rule.cond:
        out += " <= " + ", ".join(str(j) for j in rule.cond)
    return out + "."
