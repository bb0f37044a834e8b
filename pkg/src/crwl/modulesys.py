"""Plain modules, the four basic operations, derived constructs and flattening."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Union

from .algebra import Universe, bits, lfp, unkey
from .core import (
    CRWLError,
    PreconditionError,
    Renaming,
    Rule,
    SignatureError,
    SymbolRef,
    canonical_rules,
    check_rule,
    make_crr,
    show_rule,
    show_signature,
    show_symbol,
    sort_symbols,
)


class ModuleWarning(UserWarning):
    pass


class FlattenError(CRWLError):
    pass


# ---------------------------------------------------------------------------
# modules
# ---------------------------------------------------------------------------


def check_kinds(symbols: Iterable[SymbolRef]) -> None:
    """Refuse a name/arity pair used both as constructor and function."""
    seen: dict[tuple, SymbolRef] = {}
    for s in symbols:
        k = (s.label, s.name, s.arity)
        prev = seen.get(k)
        if prev is not None and prev.kind != s.kind:
            raise SignatureError(f"{show_symbol(s)} is used both as constructor and function")
        seen[k] = s


class Module:
    """``<params, exports, rules>`` with both signatures derived from the rules."""

    __slots__ = ("rules", "name", "_canon")

    def __init__(self, rules: Iterable[Rule] = (), name: str | None = None, check: bool = True):
        rules = frozenset(rules)
        if check:
            for r in rules:
                check_rule(r)
            check_kinds(s for r in rules for s in r.symbols())
        self.rules = rules
        self.name = name
        self._canon: frozenset | None = None

    @property
    def exports(self) -> frozenset:
        return frozenset(r.head for r in self.rules)

    @property
    def params(self) -> frozenset:
        invoked = {f for r in self.rules for f in r.invoked_functions()}
        return frozenset(invoked - self.exports)

    @property
    def functions(self) -> frozenset:
        return self.exports | self.params

    @property
    def constructors(self) -> frozenset:
        return frozenset(s for r in self.rules for s in r.symbols() if s.is_constructor)

    def rules_for(self, f: SymbolRef) -> frozenset:
        return frozenset(r for r in self.rules if r.head == f)

    def canonical(self) -> frozenset:
        if self._canon is None:
            self._canon = canonical_rules(self.rules)
        return self._canon

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Module) and self.canonical() == other.canonical()

    def __hash__(self) -> int:
        return hash(self.canonical())

    def __len__(self) -> int:
        return len(self.rules)

    def __repr__(self) -> str:
        return f"Module({self.name or '?'}, {len(self.rules)} rules)"

    def sorted_rules(self) -> list[Rule]:
        return sorted(self.rules, key=lambda r: (sort_symbols([r.head])[0].name, r.head.arity, show_rule(r)))

    def show(self, name: str | None = None) -> str:
        name = name or self.name or "M"
        lines = [f"{name} = < {show_signature(self.params)},",
                 f"      {show_signature(self.exports)},",
                 "      {"]
        lines += [f"        {show_rule(r)}" for r in self.sorted_rules()]
        lines.append("      } >")
        return "\n".join(lines)


NULL = Module()


def union(m1: Module, m2: Module) -> Module:
    rules = m1.rules | m2.rules
    check_kinds(s for r in rules for s in r.symbols())
    return Module(rules, check=False)


def delete(m: Module, sigma: Iterable[SymbolRef]) -> Module:
    sigma = frozenset(sigma)
    out = Module((r for r in m.rules if r.head not in sigma), check=False)
    assert out.params <= m.params | (m.exports & sigma)
    return out


def rename(m: Module, rho: Renaming) -> Module:
    cons = {(c.label, c.name, c.arity) for c in m.constructors}
    for _, g in rho.mapping:
        if (g.label, g.name, g.arity) in cons:
            raise SignatureError(f"renaming target {show_symbol(g)} is a constructor of the module")
    return Module((r.rename(rho) for r in m.rules), check=False)


def materialize(m: Module, universe: Universe, sigma: Iterable[SymbolRef] | None = None) -> Module:
    """Extensional closure: one canonical rule per non-bottom lfp cone member."""
    exports = m.exports
    sigma = exports if sigma is None else frozenset(sigma) & exports
    if not sigma:
        return NULL
    model = lfp(m.rules, universe)
    terms = universe.terms
    out = []
    for f in sort_symbols(sigma):
        tab = model.table(f)
        for key, cone in enumerate(tab):
            if cone == 1:
                continue
            args = [terms[i] for i in unkey(universe, key, f.arity)]
            for j in bits(cone & ~1):
                out.append(make_crr(f, args, terms[j])[0])
    return Module(out, check=False)


def close(m: Module, sigma: Iterable[SymbolRef] | None = None, strategy: str = "materialize",
          universe: Universe | None = None):
    if strategy == "materialize":
        if universe is None:
            raise PreconditionError("materialized closure needs a universe")
        return materialize(m, universe, sigma)
    if strategy == "structured":
        from .structured import iota_module, star

        sm = star(iota_module(m), m.name or "M")
        if sigma is not None:
            sm = sm.delete(sm.exports - frozenset(sigma))
        return sm
    raise ValueError(strategy)


# derived constructs ----------------------------------------------------------


def export_(sigma: Iterable[SymbolRef], m: Module, universe: Universe) -> Module:
    return close(m, sigma, universe=universe)


def import_(m: Module, n: Module, universe: Universe) -> Module:
    return union(m, close(n, universe=universe))


def import_sel(m: Module, sigma: Iterable[SymbolRef], n: Module, universe: Universe) -> Module:
    return union(m, close(n, sigma, universe=universe))


def import_ren(m: Module, rho: Renaming, sigma: Iterable[SymbolRef], n: Module,
               universe: Universe) -> Module:
    return union(m, rename(close(n, sigma, universe=universe), rho))


def instantiate(m: Module, n: Module, rho: Renaming, universe: Universe) -> Module:
    _warn_instantiate(m.params, n.exports, rho)
    return union(rename(m, rho), close(n, universe=universe))


def _warn_instantiate(params, exports, rho: Renaming) -> None:
    if not (rho.sig(params) & exports):
        warnings.warn("instantiation binds no parameter to an export of the argument module",
                      ModuleWarning, stacklevel=3)


def abstract_(m: Module, sigma: Iterable[SymbolRef]) -> Module:
    sigma = frozenset(sigma)
    out = delete(m, sigma)
    _warn_abstract(m.exports, out.params, sigma)
    return out


def _warn_abstract(exports, params_after, sigma) -> None:
    if not sigma <= exports or not sigma <= params_after:
        warnings.warn("abstracted symbols should be exported and still used by the remaining rules",
                      ModuleWarning, stacklevel=3)


def isa(m: Module, n: Module) -> Module:
    return union(m, delete(n, m.exports))


# ---------------------------------------------------------------------------
# module expressions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Ref:
    name: str


@dataclass(frozen=True)
class Union_:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Closure:
    expr: "Expr"
    sig: frozenset | None = None


@dataclass(frozen=True)
class Deletion:
    expr: "Expr"
    sig: frozenset


@dataclass(frozen=True)
class Rename:
    rho: Renaming
    expr: "Expr"


@dataclass(frozen=True)
class Export:
    sig: frozenset
    expr: "Expr"


@dataclass(frozen=True)
class Import:
    """``left`` importing ``right``; optional selection and renaming of the import."""

    left: "Expr"
    right: "Expr"
    sig: frozenset | None = None
    rho: Renaming | None = None


@dataclass(frozen=True)
class Instantiate:
    left: "Expr"
    right: "Expr"
    rho: Renaming


@dataclass(frozen=True)
class Abstract:
    expr: "Expr"
    sig: frozenset


@dataclass(frozen=True)
class Isa:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class ClosureHiding:
    expr: "Expr"
    cons: frozenset


Expr = Union[Ref, Union_, Closure, Deletion, Rename, Export, Import, Instantiate, Abstract,
             Isa, ClosureHiding]


def _sig(sig: Iterable[SymbolRef]) -> str:
    return show_signature(sig)


def _renaming(rho: Renaming) -> str:
    return "{" + ", ".join(f"{show_symbol(a)} -> {show_symbol(b)}" for a, b in rho.mapping) + "}"


def show_expr(e: Expr) -> str:
    """Canonical text of an expression; also the label of its closure."""
    if isinstance(e, Ref):
        return e.name
    if isinstance(e, Union_):
        right = show_expr(e.right)
        if isinstance(e.right, (Union_, Isa)):
            right = f"({right})"
        left = show_expr(e.left)
        if isinstance(e.left, Isa):
            left = f"({left})"
        return f"{left} + {right}"
    if isinstance(e, Deletion):
        inner = show_expr(e.expr)
        if isinstance(e.expr, (Union_, Isa)):
            inner = f"({inner})"
        return f"{inner} \\ {_sig(e.sig)}"
    if isinstance(e, Rename):
        return f"{_renaming(e.rho)}({show_expr(e.expr)})"
    if isinstance(e, Closure):
        if e.sig is None:
            return f"close({show_expr(e.expr)})"
        return f"close({show_expr(e.expr)}, {_sig(e.sig)})"
    if isinstance(e, Export):
        return f"export({_sig(e.sig)}, {show_expr(e.expr)})"
    if isinstance(e, Import):
        parts = [show_expr(e.left), show_expr(e.right)]
        if e.sig is not None:
            parts.append(_sig(e.sig))
        if e.rho is not None:
            parts.append(_renaming(e.rho))
        return f"import({', '.join(parts)})"
    if isinstance(e, Instantiate):
        return f"inst({show_expr(e.left)}, {show_expr(e.right)}, {_renaming(e.rho)})"
    if isinstance(e, Abstract):
        return f"abstract({show_expr(e.expr)}, {_sig(e.sig)})"
    if isinstance(e, Isa):
        left, right = show_expr(e.left), show_expr(e.right)
        if isinstance(e.right, (Union_, Isa)):
            right = f"({right})"
        return f"{left} isa {right}"
    if isinstance(e, ClosureHiding):
        return f"closeH({show_expr(e.expr)}, {_sig(e.cons)})"
    raise TypeError(e)


def refs(e: Expr) -> set[str]:
    if isinstance(e, Ref):
        return {e.name}
    out: set[str] = set()
    for v in vars(e).values():
        if isinstance(v, (Ref, Union_, Closure, Deletion, Rename, Export, Import, Instantiate,
                          Abstract, Isa, ClosureHiding)):
            out |= refs(v)
    return out


def desugar(e: Expr) -> Expr:
    """Rewrite derived nodes into union, deletion, renaming and closure.

    ``Isa`` and ``Abstract`` stay: isa needs the exports of its evaluated left
    operand, abstract carries a warning.
    """
    if isinstance(e, Ref):
        return e
    if isinstance(e, Union_):
        return Union_(desugar(e.left), desugar(e.right))
    if isinstance(e, Deletion):
        return Deletion(desugar(e.expr), e.sig)
    if isinstance(e, Rename):
        return Rename(e.rho, desugar(e.expr))
    if isinstance(e, Closure):
        return Closure(desugar(e.expr), e.sig)
    if isinstance(e, Export):
        return Closure(desugar(e.expr), e.sig)
    if isinstance(e, Import):
        imported: Expr = Closure(desugar(e.right), e.sig)
        if e.rho is not None:
            imported = Rename(e.rho, imported)
        return Union_(desugar(e.left), imported)
    if isinstance(e, Instantiate):
        return Instantiate(desugar(e.left), desugar(e.right), e.rho)
    if isinstance(e, Abstract):
        return Abstract(desugar(e.expr), e.sig)
    if isinstance(e, Isa):
        return Isa(desugar(e.left), desugar(e.right))
    if isinstance(e, ClosureHiding):
        return ClosureHiding(desugar(e.expr), e.cons)
    raise TypeError(e)


# ---------------------------------------------------------------------------
# flattening
# ---------------------------------------------------------------------------


@dataclass
class FlattenEnv:
    """Named modules (or named expressions) plus the closure strategy."""

    modules: Mapping[str, object]
    strategy: str = "materialize"
    depth: int = 1
    vars: int = 1
    universe: Universe | None = None


@dataclass
class FlattenResult:
    module: object
    provenance: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    universe: Universe | None = None


def expr_constructors(e: Expr, modules: Mapping[str, object]) -> frozenset:
    from .structured import StructuredModule

    seen: set[str] = set()
    out: set[SymbolRef] = set()

    def visit(x: Expr) -> None:
        for name in refs(x):
            if name in seen:
                continue
            seen.add(name)
            target = modules.get(name)
            if isinstance(target, Module):
                out.update(target.constructors)
            elif isinstance(target, StructuredModule):
                out.update(c for c in target.constructors if not c.is_labeled)
            elif target is not None:
                visit(target)

    visit(e)
    return frozenset(out)


def flatten(e: Expr, env: FlattenEnv) -> FlattenResult:
    """Evaluate ``e`` bottom-up to a plain module (materialize) or a structured one."""
    universe = env.universe
    if env.strategy == "materialize" and universe is None:
        universe = Universe(expr_constructors(e, env.modules), env.depth, env.vars)
    result = FlattenResult(module=None, universe=universe)
    ops = _MaterializeOps(universe) if env.strategy == "materialize" else _StructuredOps()
    if env.strategy not in ("materialize", "structured"):
        raise ValueError(env.strategy)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ModuleWarning)
        result.module = _eval(desugar(e), env, ops, result, ())
    result.warnings = [str(w.message) for w in caught if issubclass(w.category, ModuleWarning)]
    return result


def _eval(e: Expr, env: FlattenEnv, ops, result: FlattenResult, stack: tuple):
    if isinstance(e, Ref):
        if e.name in stack:
            raise FlattenError("cyclic module reference: " + " -> ".join((*stack, e.name)))
        if e.name not in env.modules:
            raise FlattenError(f"unresolved module name {e.name}")
        target = env.modules[e.name]
        if isinstance(target, (Module,)) or _is_structured(target):
            out = ops.lift(target)
        else:
            out = _eval(desugar(target), env, ops, result, (*stack, e.name))
        result.provenance.append(f"ref {e.name}: {ops.size(out)} rules")
        return out
    if isinstance(e, Union_):
        out = ops.union(_eval(e.left, env, ops, result, stack), _eval(e.right, env, ops, result, stack))
    elif isinstance(e, Deletion):
        out = ops.delete(_eval(e.expr, env, ops, result, stack), e.sig)
    elif isinstance(e, Abstract):
        inner = _eval(e.expr, env, ops, result, stack)
        out = ops.delete(inner, e.sig)
        _warn_abstract(ops.exports(inner), ops.params(out), frozenset(e.sig))
    elif isinstance(e, Rename):
        out = ops.rename(_eval(e.expr, env, ops, result, stack), e.rho)
    elif isinstance(e, Instantiate):
        left = _eval(e.left, env, ops, result, stack)
        right = _eval(e.right, env, ops, result, stack)
        _warn_instantiate(ops.params(left), ops.exports(right), e.rho)
        out = ops.union(ops.rename(left, e.rho), ops.close(right, None, show_expr(e.right)))
    elif isinstance(e, Isa):
        left = _eval(e.left, env, ops, result, stack)
        right = _eval(e.right, env, ops, result, stack)
        out = ops.union(left, ops.delete(right, ops.exports(left)))
    elif isinstance(e, Closure):
        out = ops.close(_eval(e.expr, env, ops, result, stack), e.sig, show_expr(e.expr))
    elif isinstance(e, ClosureHiding):
        out = ops.close_hiding(_eval(e.expr, env, ops, result, stack), e.cons, show_expr(e.expr))
    else:
        raise TypeError(e)
    result.provenance.append(f"{type(e).__name__.rstrip('_').lower()} {show_expr(e)}: {ops.size(out)} rules")
    return out


def _is_structured(x) -> bool:
    from .structured import StructuredModule

    return isinstance(x, StructuredModule)


class _MaterializeOps:
    def __init__(self, universe: Universe):
        self.universe = universe

    def lift(self, m):
        if _is_structured(m):
            raise FlattenError("a structured module cannot be materialized")
        return m

    def size(self, m: Module) -> int:
        return len(m.rules)

    def exports(self, m: Module):
        return m.exports

    def params(self, m: Module):
        return m.params

    def union(self, a, b):
        return union(a, b)

    def delete(self, m, sig):
        _no_labels(sig)
        return delete(m, sig)

    def rename(self, m, rho):
        _no_labels(s for pair in rho.mapping for s in pair)
        return rename(m, rho)

    def close(self, m, sig, label):
        return materialize(m, self.universe, sig)

    def close_hiding(self, m, cons, label):
        raise FlattenError("closure with constructor hiding needs the structured strategy")


class _StructuredOps:
    def lift(self, m):
        from .structured import iota_module

        return m if _is_structured(m) else iota_module(m)

    def size(self, sm) -> int:
        return len(sm.rules_v) + len(sm.rules_b) + len(sm.rules_h)

    def exports(self, sm):
        return sm.exports

    def params(self, sm):
        return sm.params

    def union(self, a, b):
        return a.union(b)

    def delete(self, sm, sig):
        return sm.delete(sig)

    def rename(self, sm, rho):
        return sm.rename(rho)

    def close(self, sm, sig, label):
        from .structured import star

        out = star(sm, label)
        if sig is not None:
            out = out.delete(out.exports - frozenset(sig))
        return out

    def close_hiding(self, sm, cons, label):
        from .structured import star_hiding

        return star_hiding(sm, cons, label)


def _no_labels(syms: Iterable[SymbolRef]) -> None:
    for s in syms:
        if s.is_labeled:
            raise SignatureError(f"{show_symbol(s)} is a hidden symbol")

