"""Bounded term algebras and the immediate consequence operator.

A universe is every partial constructor term up to a depth bound, built over
a finite pool of variables.  Terms are numbered; a cone (a down-closed set of
terms containing bottom) is an ``int`` bitmask over those numbers, so bottom
alone is the mask ``1``.  A function table maps argument tuples (mixed-radix
keys) to cones.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Iterator, Mapping, Sequence

from .core import (
    BOT,
    App,
    CRWLError,
    CSubst,
    Joinability,
    PreconditionError,
    Reduction,
    Rule,
    Statement,
    SymbolRef,
    Term,
    Var,
    is_total,
    show_term,
    sort_symbols,
    substitute,
    term_key,
)

DEFAULT_CAP = 10**6


class CapExceeded(CRWLError):
    def __init__(self, what: str, estimate: int, cap: int):
        super().__init__(f"{what}: {estimate} exceeds cap {cap}")
        self.estimate = estimate
        self.cap = cap


class UniverseError(CRWLError):
    pass


def bits(mask: int) -> Iterator[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


# ---------------------------------------------------------------------------
# universe
# ---------------------------------------------------------------------------


_DERIVED = frozenset({"index", "size", "full", "total_mask", "entries", "down", "down_list",
                      "strict_down_list", "up_strict", "_maxima"})


class Universe:
    """Partial constructor terms of depth at most ``depth`` over ``X1..Xvars``.

    Construction is cheap; the term list is materialised on first use so that
    huge universes can still answer ``contains`` and ``truncate``.
    """

    def __init__(self, constructors: Iterable[SymbolRef], depth: int, vars: int,
                 cap: int = 200_000):
        cons = frozenset(constructors)
        for c in cons:
            if not c.is_constructor:
                raise UniverseError(f"{c} is not a constructor")
        if depth < 0 or vars < 0:
            raise UniverseError("depth and vars must be non-negative")
        self.constructors = cons
        self.depth = depth
        self.vars = vars
        self.pool = tuple(Var(f"X{i}") for i in range(1, vars + 1))
        self.cap = cap
        self._pool_set = frozenset(self.pool)
        self._terms: list[Term] | None = None

    # identity ------------------------------------------------------------

    def _ident(self) -> tuple:
        return (self.constructors, self.depth, self.vars)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Universe) and self._ident() == other._ident()

    def __hash__(self) -> int:
        return hash(self._ident())

    def __repr__(self) -> str:
        cs = ", ".join(str(c) for c in sort_symbols(self.constructors))
        return f"Universe({{{cs}}}, depth={self.depth}, vars={self.vars})"

    # membership without materialising ----------------------------------

    def contains(self, t: Term) -> bool:
        return self.truncate(t) == t

    def truncate(self, t: Term) -> Term:
        """Greatest approximation of ``t`` that lies in the universe."""
        return self._trunc(t, self.depth)

    def _trunc(self, t: Term, budget: int) -> Term:
        if t is BOT:
            return BOT
        if isinstance(t, Var):
            return t if t in self._pool_set else BOT
        if not t.sym.is_constructor or t.sym not in self.constructors:
            return BOT
        if not t.args:
            return t
        if budget == 0:
            return BOT
        return App(t.sym, tuple(self._trunc(a, budget - 1) for a in t.args))

    def estimate_size(self) -> int:
        level0 = 1 + self.vars + sum(1 for c in self.constructors if c.arity == 0)
        size = level0
        for _ in range(self.depth):
            size = level0 + sum(size ** c.arity for c in self.constructors if c.arity > 0)
        return size

    # materialised view ------------------------------------------------------

    @property
    def terms(self) -> list[Term]:
        if self._terms is None:
            self._build()
        return self._terms  # type: ignore[return-value]

    def __getattr__(self, name: str):
        # index, masks and order tables appear once the term list is built
        if name in _DERIVED and self.__dict__.get("_terms") is None:
            self._build()
            return getattr(self, name)
        raise AttributeError(name)

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self) -> Iterator[Term]:
        return iter(self.terms)

    def _build(self) -> None:
        est = self.estimate_size()
        if est > self.cap:
            raise CapExceeded("universe size", est, self.cap)
        level: list[Term] = [BOT, *self.pool]
        level += [App(c, ()) for c in sort_symbols(self.constructors) if c.arity == 0]
        base = list(level)
        current = list(level)
        compound = [c for c in sort_symbols(self.constructors) if c.arity > 0]
        for _ in range(self.depth):
            nxt = list(base)
            for c in compound:
                for args in itertools.product(current, repeat=c.arity):
                    nxt.append(App(c, args))
            current = nxt
        terms = sorted(set(current), key=term_key)
        self._terms = terms
        self.index: dict[Term, int] = {t: i for i, t in enumerate(terms)}
        n = len(terms)
        self.size = n
        self.full = (1 << n) - 1
        self.total_mask = sum(1 << i for i, t in enumerate(terms) if is_total(t))
        # constructor entries: sym -> list of (child indices, index)
        entries: dict[SymbolRef, list[tuple[tuple[int, ...], int]]] = {}
        for i, t in enumerate(terms):
            if isinstance(t, App):
                entries.setdefault(t.sym, []).append(
                    (tuple(self.index[a] for a in t.args), i))
        self.entries = entries
        down = [0] * n
        for i, t in enumerate(terms):
            m = 1 | (1 << i)
            if isinstance(t, App) and t.args:
                kid_downs = [list(bits(down[self.index[a]])) for a in t.args]
                for combo in itertools.product(*kid_downs):
                    j = self.index.get(App(t.sym, tuple(terms[k] for k in combo)))
                    if j is not None:
                        m |= 1 << j
            down[i] = m
        self.down = down
        self.down_list = [tuple(bits(m)) for m in down]
        self.strict_down_list = [tuple(j for j in bits(m) if j != i) for i, m in enumerate(down)]
        up_strict = [0] * n
        for i, m in enumerate(down):
            for j in bits(m):
                if j != i:
                    up_strict[j] |= 1 << i
        self.up_strict = up_strict
        self._maxima: dict[int, tuple[int, ...]] = {}

    # cone helpers ------------------------------------------------------------

    def idx(self, t: Term) -> int:
        self.terms
        try:
            return self.index[t]
        except KeyError:
            raise UniverseError(f"{show_term(t)} is not in {self!r}") from None

    def ideal(self, t: Term) -> int:
        """Cone of approximations of ``t`` that lie in the universe."""
        self.terms
        i = self.index.get(t)
        if i is not None:
            return self.down[i]
        return self.down[self.index[self.truncate(t)]]

    def cone_terms(self, mask: int) -> list[Term]:
        terms = self.terms
        return [terms[i] for i in bits(mask)]

    def cone_of(self, ts: Iterable[Term]) -> int:
        m = 1
        for t in ts:
            m |= self.ideal(t)
        return m

    def is_cone(self, mask: int) -> bool:
        if not mask & 1:
            return False
        return all(self.down[i] & ~mask == 0 for i in bits(mask))

    def maxima(self, mask: int) -> tuple[int, ...]:
        got = self._maxima.get(mask)
        if got is None:
            got = tuple(i for i in bits(mask) if not self.up_strict[i] & mask)
            self._maxima[mask] = got
        return got

    def cones(self) -> list[int]:
        """Every cone, ascending by mask (so ``{bottom}`` comes first)."""
        n = len(self.terms)
        out: list[int] = []

        def rec(i: int, cur: int) -> None:
            if i == n:
                out.append(cur)
                return
            rec(i + 1, cur)
            if self.down[i] & ~cur == 1 << i:
                rec(i + 1, cur | (1 << i))

        rec(1, 1)
        return sorted(out)


# ---------------------------------------------------------------------------
# algebras
# ---------------------------------------------------------------------------


def _keys(universe: Universe, arity: int) -> int:
    return len(universe.terms) ** arity


def key_of(universe: Universe, idxs: Sequence[int]) -> int:
    n = len(universe.terms)
    k = 0
    for i in idxs:
        k = k * n + i
    return k


def unkey(universe: Universe, key: int, arity: int) -> tuple[int, ...]:
    n = len(universe.terms)
    out = []
    for _ in range(arity):
        key, r = divmod(key, n)
        out.append(r)
    return tuple(reversed(out))


class BoundedTermAlgebra:
    """Cone-valued function tables over a universe.

    Functions whose table is everywhere ``{bottom}`` are not stored, so two
    algebras are equal exactly when they agree on every function symbol.
    """

    __slots__ = ("universe", "tables", "_hash")

    def __init__(self, universe: Universe, tables: Mapping[SymbolRef, Sequence[int]] | None = None):
        self.universe = universe
        norm: dict[SymbolRef, tuple[int, ...]] = {}
        for f, tab in (tables or {}).items():
            tab = tuple(tab)
            if len(tab) != _keys(universe, f.arity):
                raise PreconditionError(f"table for {f} has wrong size")
            if any(m != 1 for m in tab):
                norm[f] = tab
        self.tables = norm
        self._hash: int | None = None

    def table(self, f: SymbolRef) -> tuple[int, ...]:
        tab = self.tables.get(f)
        if tab is None:
            return _bottom_table(self.universe, f.arity)
        return tab

    def cone(self, f: SymbolRef, args: Sequence[Term]) -> int:
        u = self.universe
        return self.table(f)[key_of(u, [u.idx(a) for a in args])]

    @property
    def functions(self) -> frozenset:
        return frozenset(self.tables)

    def _norm(self) -> tuple:
        return tuple(sorted(self.tables.items(), key=lambda kv: sort_symbols([kv[0]])[0].__repr__()))

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, BoundedTermAlgebra) and self.universe == other.universe
                and self.tables == other.tables)

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.universe, frozenset(self.tables.items())))
        return self._hash

    def __le__(self, other: BoundedTermAlgebra) -> bool:
        return leq(self, other)

    def __repr__(self) -> str:
        return f"BoundedTermAlgebra({len(self.tables)} non-bottom tables)"

    def dump(self, functions: Iterable[SymbolRef] | None = None, show_bottom: bool = False) -> list[str]:
        """``f(t1,...,tn) |-> {u1,...}`` lines, one per table entry."""
        u = self.universe
        terms = u.terms
        fs = sort_symbols(functions if functions is not None else self.tables)
        lines = []
        for f in fs:
            tab = self.table(f)
            for k, m in enumerate(tab):
                if m == 1 and not show_bottom:
                    continue
                args = [terms[i] for i in unkey(u, k, f.arity)]
                lhs = show_term(App(f, tuple(args)))
                body = ", ".join(show_term(terms[i]) for i in bits(m))
                lines.append(f"{lhs} |-> {{{body}}}")
        return lines


@lru_cache(maxsize=None)
def _bottom_table(universe: Universe, arity: int) -> tuple[int, ...]:
    return (1,) * _keys(universe, arity)


def bottom(universe: Universe) -> BoundedTermAlgebra:
    return BoundedTermAlgebra(universe)


def top(functions: Iterable[SymbolRef], universe: Universe) -> BoundedTermAlgebra:
    full = universe.full if universe.terms else 1
    return BoundedTermAlgebra(universe, {f: (full,) * _keys(universe, f.arity) for f in functions})


def _same_universe(a: BoundedTermAlgebra, b: BoundedTermAlgebra) -> Universe:
    if a.universe != b.universe:
        raise PreconditionError("algebras over different universes")
    return a.universe


def join(a: BoundedTermAlgebra, b: BoundedTermAlgebra) -> BoundedTermAlgebra:
    u = _same_universe(a, b)
    fs = set(a.tables) | set(b.tables)
    return BoundedTermAlgebra(u, {f: tuple(x | y for x, y in zip(a.table(f), b.table(f))) for f in fs})


def meet(a: BoundedTermAlgebra, b: BoundedTermAlgebra) -> BoundedTermAlgebra:
    u = _same_universe(a, b)
    fs = set(a.tables) & set(b.tables)
    return BoundedTermAlgebra(u, {f: tuple(x & y for x, y in zip(a.table(f), b.table(f))) for f in fs})


def leq(a: BoundedTermAlgebra, b: BoundedTermAlgebra) -> bool:
    _same_universe(a, b)
    for f, tab in a.tables.items():
        other = b.table(f)
        if any(x & ~y for x, y in zip(tab, other)):
            return False
    return True


def restrict(a: BoundedTermAlgebra, functions: Iterable[SymbolRef]) -> BoundedTermAlgebra:
    keep = set(functions)
    return BoundedTermAlgebra(a.universe, {f: t for f, t in a.tables.items() if f in keep})


def apply_rho(a: BoundedTermAlgebra, rho) -> BoundedTermAlgebra:
    """Reduct along a renaming: the ``f`` table becomes the ``rho(f)`` table."""
    fs = set(a.tables) | set(rho.domain)
    return BoundedTermAlgebra(a.universe, {f: a.table(rho.sym(f)) for f in fs})


def apply_rho_inv(a: BoundedTermAlgebra, rho) -> BoundedTermAlgebra:
    """Left adjoint of ``apply_rho``: ``f`` collects every ``g`` with ``rho(g) = f``."""
    out: dict[SymbolRef, tuple[int, ...]] = {}
    dom = rho.domain
    for g in set(a.tables) | set(dom):
        f = rho.sym(g)
        tab = a.table(g)
        prev = out.get(f)
        out[f] = tab if prev is None else tuple(x | y for x, y in zip(prev, tab))
    for g in dom:
        out.setdefault(g, _bottom_table(a.universe, g.arity))
    return BoundedTermAlgebra(a.universe, out)


def is_monotone(a: BoundedTermAlgebra) -> bool:
    u = a.universe
    for f, tab in a.tables.items():
        if any(not u.is_cone(m) for m in tab):
            return False
        if _upward_close(u, f.arity, list(tab)) != list(tab):
            return False
    return True


def _upward_close(u: Universe, arity: int, tab: list[int]) -> list[int]:
    """Smallest monotone table above ``tab`` (cones are joined upwards)."""
    n = len(u.terms)
    size = len(tab)
    sdl = u.strict_down_list
    for d in range(arity):
        stride = n ** (arity - 1 - d)
        for key in range(size):
            digit = (key // stride) % n
            acc = tab[key]
            for s in sdl[digit]:
                acc |= tab[key + (s - digit) * stride]
            tab[key] = acc
    return tab


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------
#
# Terms are compiled against an environment: an ``int`` is a constant cone,
# ``(0, f, kids)`` is a function call and ``(1, c, kids)`` a constructor
# application with at least one non-constant child.


def _con_eval(u: Universe, c: SymbolRef, masks: Sequence[int]) -> int:
    out = 1
    for kids, i in u.entries.get(c, ()):
        for m, k in zip(masks, kids):
            if not (m >> k) & 1:
                break
        else:
            out |= 1 << i
    return out


def _compile(u: Universe, t: Term, env: Mapping[Var, int]):
    if t is BOT:
        return 1
    if isinstance(t, Var):
        i = env.get(t)
        if i is None:
            i = u.index.get(t)
            if i is None:
                raise PreconditionError(f"variable {t} is unbound and not in the universe pool")
        return u.down[i]
    sym = t.sym
    if not t.args:
        if sym.is_function:
            return (0, sym, ())
        i = u.index.get(t)
        return u.down[i] if i is not None else 1
    kids = tuple(_compile(u, a, env) for a in t.args)
    if sym.is_function:
        return (0, sym, kids)
    if all(isinstance(k, int) for k in kids):
        return _con_eval(u, sym, kids)
    return (1, sym, kids)


def _run(u: Universe, code, a: BoundedTermAlgebra) -> int:
    if isinstance(code, int):
        return code
    tag, sym, kids = code
    masks = [_run(u, k, a) for k in kids]
    if tag == 1:
        return _con_eval(u, sym, masks)
    tab = a.table(sym)
    if not masks:
        return tab[0]
    n = len(u.terms)
    if len(masks) == 1:
        out = 0
        for i in u.maxima(masks[0]):
            out |= tab[i]
        return out
    out = 0
    for combo in itertools.product(*(u.maxima(m) for m in masks)):
        k = 0
        for i in combo:
            k = k * n + i
        out |= tab[k]
    return out


def _env(u: Universe, theta: CSubst | Mapping[Var, Term] | None) -> dict[Var, int]:
    if theta is None:
        return {}
    m = theta.as_dict() if isinstance(theta, CSubst) else dict(theta)
    return {v: u.idx(t) for v, t in m.items()}


def eval_term(a: BoundedTermAlgebra, e: Term, theta: CSubst | Mapping[Var, Term] | None = None) -> int:
    """Cone denoted by ``e`` under ``theta``; results outside the universe are dropped."""
    u = a.universe
    return _run(u, _compile(u, e, _env(u, theta)), a)


def satisfies(a: BoundedTermAlgebra, stmt: Statement, theta=None) -> bool:
    u = a.universe
    env = _env(u, theta)
    left = _run(u, _compile(u, stmt.lhs, env), a)
    right = _run(u, _compile(u, stmt.rhs, env), a)
    if isinstance(stmt, Reduction):
        return right & ~left == 0
    if isinstance(stmt, Joinability):
        return bool(left & right & u.total_mask)
    raise TypeError(stmt)


# ---------------------------------------------------------------------------
# compiled programs and the immediate consequence operator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Instance:
    head: SymbolRef
    key: int
    conds: tuple
    rhs: object


def _match_index(u: Universe, pattern: Term, t: Term, env: dict[Var, int]) -> bool:
    if isinstance(pattern, Var):
        env[pattern] = u.index[t]
        return True
    if pattern is BOT:
        return t is BOT
    if not isinstance(t, App) or t.sym != pattern.sym:
        return False
    return all(_match_index(u, p, s, env) for p, s in zip(pattern.args, t.args))


def pattern_matches(u: Universe, pattern: Term) -> list[tuple[int, dict[Var, int]]]:
    """Every universe term that is an instance of ``pattern``, with its binding."""
    out = []
    for i, t in enumerate(u.terms):
        env: dict[Var, int] = {}
        if _match_index(u, pattern, t, env):
            out.append((i, env))
    return out


def count_instances(rule: Rule, u: Universe) -> int:
    total = 1
    for p in rule.args:
        total *= len(pattern_matches(u, p))
    extra = [v for v in rule.variables() if v not in set(rule.pattern_variables())]
    return total * len(u.terms) ** len(extra)


def iter_instance_envs(rule: Rule, u: Universe) -> Iterator[tuple[tuple[int, ...], dict[Var, int]]]:
    """Bindings of the rule variables into the universe whose pattern instance
    stays inside the universe, paired with the argument indices."""
    per_arg = [pattern_matches(u, p) for p in rule.args]
    pvars = set(rule.pattern_variables())
    extra = [v for v in rule.variables() if v not in pvars]
    n = len(u.terms)
    for combo in itertools.product(*per_arg):
        base: dict[Var, int] = {}
        for _, env in combo:
            base.update(env)
        idxs = tuple(i for i, _ in combo)
        if not extra:
            yield idxs, base
            continue
        for vals in itertools.product(range(n), repeat=len(extra)):
            env = dict(base)
            env.update(zip(extra, vals))
            yield idxs, env


_INSTANCE_CAP = 2_000_000


@lru_cache(maxsize=256)
def _compiled(rules: frozenset, u: Universe) -> tuple[_Instance, ...]:
    u.terms
    total = sum(count_instances(r, u) for r in rules)
    if total > _INSTANCE_CAP:
        raise CapExceeded("rule instances", total, _INSTANCE_CAP)
    out = []
    for r in sorted(rules, key=str):
        for idxs, env in iter_instance_envs(r, u):
            conds = tuple((_compile(u, j.lhs, env), _compile(u, j.rhs, env)) for j in r.cond)
            # conditions that are constant and fail can be dropped right away
            if any(isinstance(x, int) and isinstance(y, int) and not (x & y & u.total_mask)
                   for x, y in conds):
                continue
            conds = tuple(c for c in conds if not (isinstance(c[0], int) and isinstance(c[1], int)))
            out.append(_Instance(r.head, key_of(u, idxs), conds, _compile(u, r.rhs, env)))
    return tuple(out)


def compile_program(rules: Iterable[Rule], u: Universe) -> tuple[_Instance, ...]:
    return _compiled(frozenset(rules), u)


def t_step(rules: Iterable[Rule], a: BoundedTermAlgebra) -> BoundedTermAlgebra:
    """One application of the immediate consequence operator."""
    u = a.universe
    rules = frozenset(rules)
    insts = _compiled(rules, u)
    heads = {r.head for r in rules}
    base: dict[SymbolRef, list[int]] = {f: [1] * _keys(u, f.arity) for f in heads}
    tm = u.total_mask
    for inst in insts:
        ok = True
        for x, y in inst.conds:
            if not (_run(u, x, a) & _run(u, y, a) & tm):
                ok = False
                break
        if ok:
            tab = base[inst.head]
            tab[inst.key] |= _run(u, inst.rhs, a)
    return BoundedTermAlgebra(u, {f: _upward_close(u, f.arity, tab) for f, tab in base.items()})


def lfp(rules: Iterable[Rule], u: Universe, max_iter: int = 10_000) -> BoundedTermAlgebra:
    rules = frozenset(rules)
    cur = bottom(u)
    for _ in range(max_iter):
        nxt = t_step(rules, cur)
        if nxt == cur:
            return cur
        cur = nxt
    raise CRWLError("fixpoint iteration did not stabilise")


def lfp_iterates(rules: Iterable[Rule], u: Universe) -> list[BoundedTermAlgebra]:
    rules = frozenset(rules)
    out = [bottom(u)]
    while True:
        nxt = t_step(rules, out[-1])
        if nxt == out[-1]:
            return out
        out.append(nxt)


def satisfies_rules(rules: Iterable[Rule], a: BoundedTermAlgebra) -> bool:
    """Direct check: every universe instance whose condition holds has
    ``eval(lhs) >= eval(rhs)``."""
    u = a.universe
    tm = u.total_mask
    for inst in _compiled(frozenset(rules), u):
        if all(_run(u, x, a) & _run(u, y, a) & tm for x, y in inst.conds):
            if _run(u, inst.rhs, a) & ~a.table(inst.head)[inst.key]:
                return False
    return True


def is_model(rules: Iterable[Rule], a: BoundedTermAlgebra) -> bool:
    rules = frozenset(rules)
    via_t = leq(t_step(rules, a), a)
    direct = satisfies_rules(rules, a)
    assert via_t == direct, "pre-fixpoint and rule satisfaction disagree"
    return via_t


# ---------------------------------------------------------------------------
# consistency
# ---------------------------------------------------------------------------


def _subst_tables(u: Universe) -> list[tuple[list[int], list[int]]]:
    """For each non-identity total substitution over the pool: the exact image
    index of every universe term (or -1) and the cone of its image."""
    terms = u.terms
    totals = [t for t in terms if is_total(t)]
    out = []
    for images in itertools.product(totals, repeat=len(u.pool)):
        m = dict(zip(u.pool, images))
        if all(v == t for v, t in m.items()):
            continue
        exact = []
        cone = []
        for t in terms:
            s = substitute(t, m)
            exact.append(u.index.get(s, -1))
            cone.append(u.ideal(s))
        out.append((exact, cone))
    return out


@lru_cache(maxsize=64)
def _subst_tables_cached(u: Universe):
    return _subst_tables(u)


def consistency_violation(a: BoundedTermAlgebra):
    """First ``(f, args, theta_index)`` breaking substitution consistency, or None."""
    u = a.universe
    n = len(u.terms)
    subs = _subst_tables_cached(u)
    if not subs:
        return None
    for f in sort_symbols(a.tables):
        tab = a.table(f)
        for key, m in enumerate(tab):
            if m == 1:
                continue
            args = unkey(u, key, f.arity)
            for si, (exact, cone) in enumerate(subs):
                k = 0
                for i in args:
                    j = exact[i]
                    if j < 0:
                        break
                    k = k * n + j
                else:
                    target = tab[k]
                    for t in bits(m):
                        if cone[t] & ~target:
                            return f, args, si
    return None


def is_consistent(a: BoundedTermAlgebra) -> bool:
    return consistency_violation(a) is None


def consistent_closure(u: Universe, arity: int, tab: Sequence[int]) -> list[int]:
    """Least monotone, consistent table above ``tab``.

    Both conditions only ever ask for more members in some cone, so the
    closure is reached by adding what is missing until nothing changes.
    """
    n = len(u.terms)
    subs = _subst_tables_cached(u)
    tab = _upward_close(u, arity, list(tab))
    while True:
        changed = False
        for key in range(len(tab)):
            m = tab[key]
            if m == 1:
                continue
            args = unkey(u, key, arity)
            for exact, cone in subs:
                k = 0
                for i in args:
                    j = exact[i]
                    if j < 0:
                        break
                    k = k * n + j
                else:
                    add = 0
                    for t in bits(m):
                        add |= cone[t]
                    if add & ~tab[k]:
                        tab[k] |= add
                        changed = True
        if not changed:
            return tab
        tab = _upward_close(u, arity, tab)


def consistent_algebra(a: BoundedTermAlgebra) -> BoundedTermAlgebra:
    """Least consistent algebra above ``a``."""
    u = a.universe
    return BoundedTermAlgebra(u, {f: consistent_closure(u, f.arity, t) for f, t in a.tables.items()})


# ---------------------------------------------------------------------------
# enumeration and sampling
# ---------------------------------------------------------------------------


def _monotone_tables(u: Universe, arity: int, cap: int) -> list[tuple[int, ...]]:
    cones = u.cones()
    n = len(u.terms)
    size = n ** arity
    sdl = u.strict_down_list
    preds: list[list[int]] = []
    for key in range(size):
        ps = []
        for d in range(arity):
            stride = n ** (arity - 1 - d)
            digit = (key // stride) % n
            ps.extend(key + (s - digit) * stride for s in sdl[digit])
        preds.append(ps)
    out: list[tuple[int, ...]] = []
    cur = [0] * size

    def rec(key: int) -> None:
        if key == size:
            out.append(tuple(cur))
            if len(out) > cap:
                raise CapExceeded("monotone tables", len(out), cap)
            return
        lower = 1
        for p in preds[key]:
            lower |= cur[p]
        for c in cones:
            if c & lower == lower:
                cur[key] = c
                rec(key + 1)

    rec(0)
    return out


@lru_cache(maxsize=128)
def _tables_cached(u: Universe, arity: int, cap: int) -> tuple:
    return tuple(_monotone_tables(u, arity, cap))


def count_algebras(functions: Iterable[SymbolRef], u: Universe, cap: int = DEFAULT_CAP) -> int:
    total = 1
    for f in sort_symbols(functions):
        total *= len(_tables_cached(u, f.arity, cap))
        if total > cap:
            raise CapExceeded("algebra count", total, cap)
    return total


def enumerate_algebras(functions: Iterable[SymbolRef], u: Universe, filter: str = "all",
                       cap: int = DEFAULT_CAP) -> Iterator[BoundedTermAlgebra]:
    """Every monotone algebra over ``functions``; ``bottom`` comes first.

    Raises ``CapExceeded`` before yielding anything when the space is larger
    than ``cap``.
    """
    if filter not in ("all", "consistent"):
        raise ValueError(filter)
    fs = sort_symbols(functions)
    count_algebras(fs, u, cap)
    spaces = [_tables_cached(u, f.arity, cap) for f in fs]
    for combo in itertools.product(*spaces):
        a = BoundedTermAlgebra(u, dict(zip(fs, combo)))
        if filter == "consistent" and not is_consistent(a):
            continue
        yield a


def sample_algebras(functions: Iterable[SymbolRef], u: Universe, n: int, seed: int = 0,
                    filter: str = "all") -> Iterator[BoundedTermAlgebra]:
    """Random monotone algebras: random cones, down-closed, then made monotone."""
    rng = random.Random(seed)
    fs = sort_symbols(functions)
    size = len(u.terms)
    produced = 0
    attempts = 0
    while produced < n and attempts < 50 * n + 100:
        attempts += 1
        tables = {}
        for f in fs:
            p = rng.random()
            tab = []
            for _ in range(size ** f.arity):
                m = 1
                for i in range(1, size):
                    if rng.random() < p * 0.5:
                        m |= u.down[i]
                tab.append(m)
            tables[f] = _upward_close(u, f.arity, tab)
        a = BoundedTermAlgebra(u, tables)
        if filter == "consistent" and not is_consistent(a):
            continue
        produced += 1
        yield a


def algebra_space(functions: Iterable[SymbolRef], u: Universe, *, filter: str = "all",
                  cap: int = DEFAULT_CAP, samples: int | None = None, seed: int = 0):
    """``(algebras, exhaustive)``: enumeration when within the cap, else samples."""
    fs = list(functions)
    if samples is None:
        try:
            count_algebras(fs, u, cap)
            return enumerate_algebras(fs, u, filter, cap), True
        except CapExceeded:
            samples = 500
    extra = [bottom(u), top(fs, u)]
    if filter == "consistent":
        extra = [a for a in extra if is_consistent(a)]
    return itertools.chain(extra, sample_algebras(fs, u, samples, seed, filter)), False
