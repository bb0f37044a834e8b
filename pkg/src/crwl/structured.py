"""Structured modules: visible, bridge and hidden rules with labeled symbols.

Closing a module keeps its rules instead of its (infinite) extension: every
visible function ``f`` of the closed expression ``P`` becomes the hidden
symbol ``P.f`` and a bridge ``f(X1..Xn) -> P.f(X1..Xn)`` re-exports it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .algebra import BoundedTermAlgebra, Universe, bits, bottom, join, key_of, lfp, t_step, unkey
from .core import (
    BOT,
    App,
    Renaming,
    Rule,
    SignatureError,
    SymbolRef,
    Term,
    Var,
    show_rule,
    show_signature,
    show_symbol,
    sort_symbols,
)


@dataclass(frozen=True)
class StructuredModule:
    rules_v: frozenset = frozenset()
    rules_b: frozenset = frozenset()
    rules_h: frozenset = frozenset()
    hidden_constructors: frozenset = frozenset()

    @property
    def exports(self) -> frozenset:
        return frozenset(r.head for r in self.rules_v | self.rules_b)

    @property
    def params(self) -> frozenset:
        invoked = {f for r in self.rules_v for f in r.invoked_functions() if not f.is_labeled}
        return frozenset(invoked - self.exports)

    @property
    def rules(self) -> frozenset:
        return self.rules_v | self.rules_b | self.rules_h

    @property
    def constructors(self) -> frozenset:
        return frozenset(s for r in self.rules for s in r.symbols() if s.is_constructor)

    @property
    def visible_constructors(self) -> frozenset:
        return frozenset(c for c in self.constructors if not c.is_labeled)

    def union(self, other: StructuredModule) -> StructuredModule:
        return StructuredModule(self.rules_v | other.rules_v, self.rules_b | other.rules_b,
                                self.rules_h | other.rules_h,
                                self.hidden_constructors | other.hidden_constructors)

    def delete(self, sigma: Iterable[SymbolRef]) -> StructuredModule:
        sigma = frozenset(sigma)
        _visible_only(sigma)
        return StructuredModule(frozenset(r for r in self.rules_v if r.head not in sigma),
                                frozenset(r for r in self.rules_b if r.head not in sigma),
                                self.rules_h, self.hidden_constructors)

    def rename(self, rho: Renaming) -> StructuredModule:
        _visible_only(s for pair in rho.mapping for s in pair)
        return StructuredModule(frozenset(r.rename(rho) for r in self.rules_v),
                                frozenset(r.rename(rho) for r in self.rules_b),
                                self.rules_h, self.hidden_constructors)

    def show(self) -> str:
        def block(rules) -> list[str]:
            return sorted(show_rule(r) for r in rules)

        lines = [f"-- params {show_signature(self.params)}",
                 f"-- exports {show_signature(self.exports)}"]
        if self.hidden_constructors:
            lines.append(f"-- hidden constructors {show_signature(self.hidden_constructors)}")
        lines.append("-- visible")
        lines += block(self.rules_v)
        lines.append("-- bridge")
        lines += block(self.rules_b)
        lines.append("-- hidden")
        lines += block(self.rules_h)
        return "\n".join(lines)


def _visible_only(syms: Iterable[SymbolRef]) -> None:
    for s in syms:
        if s.is_labeled:
            raise SignatureError(f"{show_symbol(s)} is a hidden symbol")


def iota_module(m) -> StructuredModule:
    """A plain module seen as a structured one: everything is visible."""
    return StructuredModule(rules_v=frozenset(m.rules))


def iota(expr, env) -> StructuredModule:
    from .modulesys import FlattenEnv, flatten

    env = FlattenEnv(env.modules if isinstance(env, FlattenEnv) else env, strategy="structured")
    return flatten(expr, env).module


def _tau(label: str, hide: frozenset = frozenset()):
    def fn(s: SymbolRef) -> SymbolRef:
        if s.is_labeled:
            return s
        if s.is_function or s in hide:
            return s.relabel(label)
        return s

    return fn


def star_hiding(sm: StructuredModule, cons: Iterable[SymbolRef], label: str) -> StructuredModule:
    cons = frozenset(cons)
    for c in cons:
        if not c.is_constructor:
            raise SignatureError(f"{show_symbol(c)} is not a constructor")
        if c.is_labeled:
            raise SignatureError(f"{show_symbol(c)} is already hidden")
    tau = _tau(label, cons)
    pushed = frozenset(r.map_symbols(tau) for r in sm.rules_v | sm.rules_b)
    bridges = []
    for f in sort_symbols(sm.exports):
        xs = tuple(Var(f"X{i}") for i in range(1, f.arity + 1))
        bridges.append(Rule(f, xs, App(f.relabel(label), xs)))
    return StructuredModule(frozenset(), frozenset(bridges), sm.rules_h | pushed,
                            sm.hidden_constructors | frozenset(c.relabel(label) for c in cons))


def star(sm: StructuredModule, label: str) -> StructuredModule:
    return star_hiding(sm, (), label)


# ---------------------------------------------------------------------------
# the visible-behaviour operator
# ---------------------------------------------------------------------------


def _strip_hidden(t: Term) -> Term:
    """Replace every subterm rooted at a labeled constructor by bottom."""
    if isinstance(t, App):
        if t.sym.is_labeled:
            return BOT
        if t.args:
            return App(t.sym, tuple(_strip_hidden(a) for a in t.args))
    return t


def extended_universe(sm: StructuredModule, u: Universe) -> Universe:
    if not sm.hidden_constructors:
        return u
    return Universe(u.constructors | sm.hidden_constructors, u.depth, u.vars, cap=u.cap)


def u_step(sm: StructuredModule, a: BoundedTermAlgebra) -> BoundedTermAlgebra:
    """``T_{V+B}(hidden lfp joined with the extension of a)`` reducted to the visible part."""
    u = a.universe
    ext = extended_universe(sm, u)
    if ext is u:
        hidden = lfp(sm.rules_h, u)
        lifted = join(hidden, a)
        out = t_step(sm.rules_v | sm.rules_b, lifted)
        return BoundedTermAlgebra(u, {f: t for f, t in out.tables.items() if not f.is_labeled})

    vterms, eterms = u.terms, ext.terms
    to_ext = [ext.index[t] for t in vterms]
    strip = [u.index[_strip_hidden(t)] for t in eterms]
    n_e = len(eterms)

    def embed(mask: int) -> int:
        out = 0
        for i in bits(mask):
            out |= 1 << to_ext[i]
        return out

    def project(mask: int) -> int:
        out = 0
        for i, j in enumerate(to_ext):
            if (mask >> j) & 1:
                out |= 1 << i
        return out

    ext_tables = {}
    for f, tab in a.tables.items():
        new = []
        for key in range(n_e ** f.arity):
            idxs = unkey(ext, key, f.arity)
            new.append(embed(tab[key_of(u, [strip[i] for i in idxs])]))
        ext_tables[f] = new
    lifted = join(lfp(sm.rules_h, ext), BoundedTermAlgebra(ext, ext_tables))
    out = t_step(sm.rules_v | sm.rules_b, lifted)
    result = {}
    for f, tab in out.tables.items():
        if f.is_labeled:
            continue
        result[f] = [project(tab[key_of(ext, [to_ext[i] for i in unkey(u, k, f.arity)])])
                     for k in range(len(vterms) ** f.arity)]
    return BoundedTermAlgebra(u, result)


def visible_model(sm: StructuredModule, u: Universe, max_iter: int = 10_000) -> BoundedTermAlgebra:
    """Least fixpoint of ``u_step`` over a universe of visible constructors."""
    cur = bottom(u)
    for _ in range(max_iter):
        nxt = u_step(sm, cur)
        if nxt == cur:
            return cur
        cur = nxt
    raise RuntimeError("u_step did not converge")  # pragma: no cover
