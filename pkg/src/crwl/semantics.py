"""Observables, the five program equivalences, deletion semantics, the
homomorphism checks and the witness/context constructions.

All quantification over algebras is over a bounded universe, so an
"equivalent" answer always means *equivalent at these bounds*.

Most questions only depend on the tables of functions that rule bodies read.
``t_step(P, A)`` is blind to every other table, so the T relation enumerates
only those.  The model relations (M and CM) also need the tables of the
defined functions, but for a fixed choice of the read tables the least
completion that makes ``P`` a model is known.  For M it is ``t_step(P, A)``
itself.  For CM it is that table's consistent closure.  ``Q`` fails on some
model of ``P`` in that fibre iff it fails on this completion, so the
projection stays exact.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .algebra import (
    DEFAULT_CAP,
    BoundedTermAlgebra,
    CapExceeded,
    Universe,
    apply_rho,
    apply_rho_inv,
    bits,
    bottom,
    consistent_closure,
    count_algebras,
    enumerate_algebras,
    eval_term,
    is_consistent,
    is_model,
    join,
    key_of,
    leq,
    lfp,
    meet,
    restrict,
    sample_algebras,
    t_step,
    top,
    unkey,
)
from .core import (
    BOT,
    App,
    PreconditionError,
    Renaming,
    Rule,
    SymbolRef,
    Term,
    Var,
    approx_le,
    make_crr,
    show_rule,
    show_signature,
    show_symbol,
    show_term,
    sort_symbols,
    substitute,
)

RELATIONS = ("lm", "t", "m", "cm", "d")
EQUIVALENT = "equivalent-at-bounds"
COUNTEREXAMPLE = "counterexample"
INCONCLUSIVE = "inconclusive-sampled"


def rules_of(p) -> frozenset:
    """Accept a module, a structured module's plain view or any rule collection."""
    rules = getattr(p, "rules", p)
    return frozenset(rules)


def heads(rules: Iterable[Rule]) -> frozenset:
    return frozenset(r.head for r in rules)


def reads(rules: Iterable[Rule]) -> frozenset:
    """Functions whose tables ``t_step`` consults."""
    return frozenset(f for r in rules for f in r.body_functions())


def functions_of(rules: Iterable[Rule]) -> frozenset:
    return heads(rules) | reads(rules)


def delete_rules(rules: Iterable[Rule], sigma: Iterable[SymbolRef]) -> frozenset:
    sigma = frozenset(sigma)
    return frozenset(r for r in rules if r.head not in sigma)


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------


def observable(p, universe: Universe) -> BoundedTermAlgebra:
    """The observable behaviour of a program: its bounded canonical model."""
    return lfp(rules_of(p), universe)


# ---------------------------------------------------------------------------
# verdicts
# ---------------------------------------------------------------------------


@dataclass
class Witness:
    """Why two programs differ.

    ``algebra`` is the separating algebra (or the model, for LM).  ``model_of``
    names the side of which it is a model (M, CM, D) and ``sigma`` the
    deleted signature for D.  ``entry`` is the first differing table entry.
    """

    algebra: BoundedTermAlgebra | None = None
    model_of: str | None = None
    sigma: frozenset | None = None
    entry: tuple | None = None

    def lines(self) -> list[str]:
        out = []
        if self.sigma is not None:
            out.append(f"deleted\t{show_signature(self.sigma)}")
        if self.model_of is not None:
            out.append(f"model-of\t{self.model_of}")
        if self.entry is not None:
            f, args, left, right = self.entry
            call = show_term(App(f, tuple(args))) if args or f.arity == 0 else show_symbol(f)
            out.append(f"entry\t{call}: {left} vs {right}")
        if self.algebra is not None:
            dump = self.algebra.dump()
            out += [f"algebra\t{line}" for line in dump] or ["algebra\tbottom"]
        return out


@dataclass
class EquivVerdict:
    relation: str
    outcome: str
    witness: Witness | None = None
    checked: int = 0
    exhaustive: bool = True
    note: str = ""

    @property
    def equivalent(self) -> bool:
        return self.outcome == EQUIVALENT

    def lines(self) -> list[str]:
        out = [f"relation\t{self.relation.upper()}", f"outcome\t{self.outcome}",
               f"checked\t{self.checked}", f"mode\t{'exhaustive' if self.exhaustive else 'sampled'}"]
        if self.note:
            out.append(f"note\t{self.note}")
        if self.witness is not None:
            out += self.witness.lines()
        return out


def _cone_str(u: Universe, mask: int) -> str:
    return "{" + ", ".join(show_term(t) for t in u.cone_terms(mask)) + "}"


def _first_difference(a: BoundedTermAlgebra, b: BoundedTermAlgebra) -> tuple | None:
    u = a.universe
    for f in sort_symbols(set(a.tables) | set(b.tables)):
        ta, tb = a.table(f), b.table(f)
        for key, (x, y) in enumerate(zip(ta, tb)):
            if x != y:
                args = [u.terms[i] for i in unkey(u, key, f.arity)]
                return f, args, _cone_str(u, x), _cone_str(u, y)
    return None


# ---------------------------------------------------------------------------
# algebra spaces
# ---------------------------------------------------------------------------


@dataclass
class _Space:
    algebras: Iterable[BoundedTermAlgebra]
    exhaustive: bool
    size: int | None


def _space(functions: Iterable[SymbolRef], u: Universe, filter: str, samples: int | None,
           cap: int, seed: int) -> _Space:
    fs = sort_symbols(functions)
    if samples is None:
        try:
            n = count_algebras(fs, u, cap)
        except CapExceeded:
            n = None
        if n is not None:
            return _Space(enumerate_algebras(fs, u, filter, cap), True, n)
        samples = 500
    return _Space(_samples(fs, u, samples, seed, filter), False, None)


def _samples(fs, u: Universe, n: int, seed: int, filter: str) -> Iterator[BoundedTermAlgebra]:
    """Bottom, top and random algebras (repaired to be consistent if asked)."""
    extra = [bottom(u), top(fs, u)]
    for a in extra:
        if filter != "consistent" or is_consistent(a):
            yield a
    for a in sample_algebras(fs, u, n, seed):
        if filter == "consistent":
            a = BoundedTermAlgebra(u, {f: consistent_closure(u, f.arity, t) for f, t in a.tables.items()})
        yield a


# ---------------------------------------------------------------------------
# the equivalences
# ---------------------------------------------------------------------------


def _lm(p, q, u: Universe) -> EquivVerdict:
    a, b = lfp(p, u), lfp(q, u)
    if a == b:
        return EquivVerdict("lm", EQUIVALENT, checked=1)
    return EquivVerdict("lm", COUNTEREXAMPLE, Witness(entry=_first_difference(a, b)), checked=1)


def _t(p, q, u: Universe, samples, cap, seed) -> EquivVerdict:
    space = _space(reads(p | q), u, "all", samples, cap, seed)
    n = 0
    for a in space.algebras:
        n += 1
        tp, tq = t_step(p, a), t_step(q, a)
        if tp != tq:
            return EquivVerdict("t", COUNTEREXAMPLE, Witness(a, entry=_first_difference(tp, tq)),
                                checked=n, exhaustive=space.exhaustive)
    return _no_counterexample("t", n, space.exhaustive)


def _no_counterexample(rel: str, n: int, exhaustive: bool) -> EquivVerdict:
    return EquivVerdict(rel, EQUIVALENT if exhaustive else INCONCLUSIVE, checked=n, exhaustive=exhaustive)


def _completion(p: frozenset, a: BoundedTermAlgebra, free: Iterable[SymbolRef],
                consistent: bool) -> BoundedTermAlgebra | None:
    """Least algebra agreeing with ``a`` on its tables that is a model of ``p``,
    filling in the tables of ``free``; None when ``a`` already rules it out."""
    u = a.universe
    tp = t_step(p, a)
    for f in tp.tables:
        if f not in free and not _table_le(tp.table(f), a.table(f)):
            return None
    tables = dict(a.tables)
    for f in free:
        tab = tp.table(f)
        tables[f] = consistent_closure(u, f.arity, tab) if consistent else tab
    return BoundedTermAlgebra(u, tables)


def _table_le(x, y) -> bool:
    return all(a & ~b == 0 for a, b in zip(x, y))


def model_gap(p, q, u: Universe, consistent: bool = False, samples: int | None = None,
              cap: int = DEFAULT_CAP, seed: int = 0):
    """Search an algebra that is a model of one program only.

    Returns ``(witness, side, checked, exhaustive)`` where ``side`` names the
    program the witness is a model of.
    """
    p, q = rules_of(p), rules_of(q)
    read = reads(p | q)
    free = heads(p | q) - read
    space = _space(read, u, "consistent" if consistent else "all", samples, cap, seed)
    n = 0
    for a in space.algebras:
        n += 1
        for side, x, y in (("P", p, q), ("Q", q, p)):
            w = _completion(x, a, free, consistent)
            if w is not None and not is_model(y, w):
                return w, side, n, space.exhaustive
    return None, None, n, space.exhaustive


def _models(rel: str, p, q, u: Universe, samples, cap, seed) -> EquivVerdict:
    w, side, n, exhaustive = model_gap(p, q, u, rel == "cm", samples, cap, seed)
    if w is None:
        return _no_counterexample(rel, n, exhaustive)
    return EquivVerdict(rel, COUNTEREXAMPLE, Witness(w, side), checked=n, exhaustive=exhaustive)


def deletion_sigmas(p, q) -> list[frozenset]:
    """Every subset of the defined functions, smallest first."""
    ex = sort_symbols(heads(rules_of(p) | rules_of(q)))
    out = []
    for k in range(len(ex) + 1):
        out += [frozenset(c) for c in itertools.combinations(ex, k)]
    return out


def _d(p, q, u: Universe, samples, cap, seed) -> EquivVerdict:
    total = 0
    exhaustive = True
    for sigma in deletion_sigmas(p, q):
        w, side, n, ex = model_gap(delete_rules(p, sigma), delete_rules(q, sigma), u, True,
                                   samples, cap, seed)
        total += n
        exhaustive = exhaustive and ex
        if w is not None:
            return EquivVerdict("d", COUNTEREXAMPLE, Witness(w, side, sigma), checked=total,
                                exhaustive=ex)
    return _no_counterexample("d", total, exhaustive)


def equiv(p, q, relation: str, universe: Universe, samples: int | None = None,
          cap: int = DEFAULT_CAP, seed: int = 0) -> EquivVerdict:
    """Decide one of LM, T, M, CM, D at the given bounds.

    ``samples=None`` enumerates exhaustively when the algebra space fits under
    ``cap`` and falls back to 500 samples otherwise; a number forces sampling.
    Sampling can only ever report a counterexample or "inconclusive".
    """
    p, q = rules_of(p), rules_of(q)
    relation = relation.lower()
    if relation == "lm":
        return _lm(p, q, universe)
    if relation == "t":
        return _t(p, q, universe, samples, cap, seed)
    if relation in ("m", "cm"):
        return _models(relation, p, q, universe, samples, cap, seed)
    if relation == "d":
        return _d(p, q, universe, samples, cap, seed)
    raise ValueError(f"unknown relation {relation!r}")


def check_witness(p, q, verdict: EquivVerdict, universe: Universe) -> bool:
    """Re-validate a counterexample against the definition of its relation."""
    p, q = rules_of(p), rules_of(q)
    w = verdict.witness
    if verdict.outcome != COUNTEREXAMPLE or w is None:
        return False
    if verdict.relation == "lm":
        return lfp(p, universe) != lfp(q, universe)
    a = w.algebra
    if verdict.relation == "t":
        return t_step(p, a) != t_step(q, a)
    if verdict.relation == "d":
        p, q = delete_rules(p, w.sigma), delete_rules(q, w.sigma)
    if verdict.relation in ("cm", "d") and not is_consistent(a):
        return False
    yes, no = (p, q) if w.model_of == "P" else (q, p)
    return is_model(yes, a) and not is_model(no, a)


# ---------------------------------------------------------------------------
# deletion semantics
# ---------------------------------------------------------------------------


def deletion_semantics(p, universe: Universe, functions: Iterable[SymbolRef] | None = None,
                       cap: int = DEFAULT_CAP) -> dict[SymbolRef, frozenset]:
    """For each defined function, the consistent models of its defining rules.

    ``functions`` fixes the signature the algebras range over (defaults to the
    functions of ``p``); pass the same one when comparing two programs.
    """
    p = rules_of(p)
    fs = sort_symbols(functions if functions is not None else functions_of(p))
    algebras = list(enumerate_algebras(fs, universe, "consistent", cap))
    out = {}
    for f in sort_symbols(set(fs) | heads(p)):
        own = frozenset(r for r in p if r.head == f)
        out[f] = frozenset(a for a in algebras if leq(t_step(own, a), a))
    return out


# ---------------------------------------------------------------------------
# homomorphism checks
# ---------------------------------------------------------------------------


@dataclass
class HomomorphismReport:
    items: dict = field(default_factory=dict)  # name -> (ok, algebras checked, note)

    @property
    def ok(self) -> bool:
        return all(v[0] for v in self.items.values())

    def lines(self) -> list[str]:
        return [f"({k})\t{'ok' if ok else 'FAILED'}\t{n} algebras\t{note}".rstrip()
                for k, (ok, n, note) in sorted(self.items.items())]


def _all(functions, u: Universe, cap: int) -> list[BoundedTermAlgebra]:
    return list(enumerate_algebras(functions, u, "all", cap))


def check_homomorphism(p, q, universe: Universe, sigma: Iterable[SymbolRef] | None = None,
                       rho: Renaming | None = None, cap: int = DEFAULT_CAP) -> HomomorphismReport:
    """Check (a) union, (b) closure, (c) deletion and (d) renaming over every
    algebra of the tables the transformers read."""
    from .modulesys import Module, materialize

    p, q = rules_of(p), rules_of(q)
    u = universe
    rep = HomomorphismReport()
    exp_p = heads(p)
    sigma = exp_p if sigma is None else frozenset(sigma)

    # (a) union
    algs = _all(reads(p | q), u, cap)
    ok = all(t_step(p | q, a) == join(t_step(p, a), t_step(q, a)) for a in algs)
    rep.items["a"] = (ok, len(algs), "")

    # (b) closure: the transformer of the closed program is constant
    closed = materialize(Module(p, check=False), u, sigma).rules
    algs = _all(reads(closed), u, cap)
    target = restrict(lfp(p, u), sigma)
    ok = all(t_step(closed, a) == target for a in algs)
    rep.items["b"] = (ok, len(algs), f"closed program reads {len(reads(closed))} functions")

    # (c) deletion
    algs = _all(reads(p), u, cap)
    rest = delete_rules(p, sigma)
    mask = top(exp_p - sigma, u)
    ok = all(t_step(rest, a) == meet(t_step(p, a), mask) for a in algs)
    rep.items["c"] = (ok, len(algs), "")

    # (d) renaming
    rho = rho or Renaming.of({})
    renamed = frozenset(r.rename(rho) for r in p)
    algs = _all(reads(renamed) | rho.sig(reads(p)), u, cap)
    ok = all(t_step(renamed, a) == apply_rho_inv(t_step(p, apply_rho(a, rho)), rho) for a in algs)
    rep.items["d"] = (ok, len(algs), "")
    return rep


# ---------------------------------------------------------------------------
# witness programs and separating contexts
# ---------------------------------------------------------------------------


def _crr(f: SymbolRef, args, t: Term) -> Rule:
    return make_crr(f, list(args), t)[0]


def build_witness_program(a: BoundedTermAlgebra, r: Term, t: Term, check: bool = True) -> frozenset:
    """A small program ``R`` with ``t`` in the value of ``r`` in its canonical
    model and ``a`` a model of ``R``.

    ``a`` must be consistent and ``t`` a member of ``eval(a, r)``.
    """
    u = a.universe
    if check:
        if not is_consistent(a):
            raise PreconditionError("the algebra is not consistent")
        if not (eval_term(a, r) >> u.idx(t)) & 1:
            raise PreconditionError(f"{show_term(t)} is not a value of {show_term(r)}")
    out = _witness(a, r, t)
    if check:
        m = lfp(out, u)
        assert (eval_term(m, r) >> u.idx(t)) & 1, "witness program misses the value"
        assert leq(t_step(out, a), a), "algebra is not a model of the witness program"
        assert not reads(out), "witness program transformer is not constant"
    return out


def _witness(a: BoundedTermAlgebra, r: Term, t: Term) -> frozenset:
    u = a.universe
    if t is BOT or r is BOT or isinstance(r, Var):
        return frozenset()
    if r.sym.is_constructor:
        if not r.args:
            return frozenset()
        # t is below c(v1..vn) with every vi a value of the i-th argument
        return frozenset().union(*(_witness(a, e, s) for e, s in zip(r.args, t.args)))
    f = r.sym
    if not r.args:
        return frozenset([_crr(f, (), t)])
    cones = [eval_term(a, e) for e in r.args]
    tab = a.table(f)
    ti = u.idx(t)
    for combo in itertools.product(*(list(bits(c)) for c in cones)):
        if (tab[key_of(u, combo)] >> ti) & 1:
            vs = [u.terms[i] for i in combo]
            subs = [_witness(a, e, v) for e, v in zip(r.args, vs)]
            return frozenset().union(*subs) | {_crr(f, vs, t)}
    raise AssertionError("value without a supporting argument tuple")  # pragma: no cover


@dataclass
class Context:
    """The context ``(X \\ sigma) + R`` and the observation it separates."""

    rules: frozenset
    sigma: frozenset
    function: SymbolRef
    args: tuple
    value: Term
    gains: str  # which program (P or Q) produces the value

    def lines(self) -> list[str]:
        call = show_term(App(self.function, self.args))
        out = [f"context\tX \\ {show_signature(self.sigma)} + R" if self.sigma else "context\tX + R",
               f"observe\t{show_term(self.value)} in {call} only for {self.gains}"]
        out += [f"R\t{show_rule(r)}" for r in sorted(self.rules, key=show_rule)]
        return out


def _triggering_instance(q: frozenset, a: BoundedTermAlgebra, f: SymbolRef, args, t: Term):
    """A rule instance of ``q`` that puts ``t`` into ``f(args)`` one step above ``a``."""
    u = a.universe
    ti = u.idx(t)
    tm = u.total_mask
    for rule in sorted((r for r in q if r.head == f), key=show_rule):
        vs = rule.variables()
        for pick in itertools.product(u.terms, repeat=len(vs)):
            theta = dict(zip(vs, pick))
            pats = [substitute(p, theta) for p in rule.args]
            if not all(u.contains(s) and approx_le(s, x) for s, x in zip(pats, args)):
                continue
            joins = []
            for j in rule.cond:
                l, r = substitute(j.lhs, theta), substitute(j.rhs, theta)
                common = eval_term(a, l) & eval_term(a, r) & tm
                if not common:
                    break
                joins.append((l, r, u.terms[min(bits(common))]))
            else:
                body = substitute(rule.rhs, theta)
                if (eval_term(a, body) >> ti) & 1:
                    return body, joins
    return None


def distinguish(p, q, universe: Universe, sigma: Iterable[SymbolRef] = (),
                cap: int = DEFAULT_CAP) -> Context | None:
    """A context telling ``p \\ sigma`` and ``q \\ sigma`` apart by their observables.

    Returns None when the two (after deletion) are CM-equivalent at the bounds.
    """
    u = universe
    sigma = frozenset(sigma)
    p0, q0 = delete_rules(rules_of(p), sigma), delete_rules(rules_of(q), sigma)
    w, side, _, exhaustive = model_gap(p0, q0, u, consistent=True, cap=cap)
    if w is None:
        return None
    model_side, other = (p0, q0) if side == "P" else (q0, p0)
    gains = "Q" if side == "P" else "P"
    step = t_step(other, w)
    for f in sort_symbols(step.tables):
        tab, mine = step.table(f), w.table(f)
        for key, cone in enumerate(tab):
            extra = cone & ~mine[key]
            if not extra:
                continue
            args = tuple(u.terms[i] for i in unkey(u, key, f.arity))
            t = u.terms[min(bits(extra))]
            found = _triggering_instance(other, w, f, args, t)
            if found is None:
                continue
            body, joins = found
            r = set(build_witness_program(w, body, t))
            for l, rr, val in joins:
                r |= build_witness_program(w, l, val)
                r |= build_witness_program(w, rr, val)
            ctx = Context(frozenset(r), sigma, f, args, t, gains)
            _assert_separates(ctx, model_side, other, u)
            return ctx
    raise AssertionError("no triggering rule instance found")  # pragma: no cover


def _assert_separates(ctx: Context, quiet: frozenset, loud: frozenset, u: Universe) -> None:
    key = key_of(u, [u.idx(x) for x in ctx.args])
    ti = u.idx(ctx.value)
    yes = lfp(loud | ctx.rules, u).table(ctx.function)[key]
    no = lfp(quiet | ctx.rules, u).table(ctx.function)[key]
    assert (yes >> ti) & 1 and not (no >> ti) & 1, "context does not separate the observables"


def random_witness_triple(a: BoundedTermAlgebra, functions, constructors, rng: random.Random,
                          depth: int = 2) -> tuple[Term, Term]:
    """A random expression and a random member of its value (for property tests)."""
    u = a.universe
    syms = sort_symbols(functions) + sort_symbols(constructors)

    def gen(d: int) -> Term:
        leaves = [s for s in syms if s.arity == 0]
        if d == 0 or rng.random() < 0.3:
            choice = rng.choice(leaves + list(u.pool) + [BOT]) if leaves or u.pool else BOT
            return App(choice, ()) if isinstance(choice, SymbolRef) else choice
        s = rng.choice(syms)
        return App(s, tuple(gen(d - 1) for _ in range(s.arity)))

    r = gen(depth)
    members = list(bits(eval_term(a, r)))
    return r, u.terms[rng.choice(members)]
