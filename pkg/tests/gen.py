"""Random small modules, algebras and renamings shared by the test suite."""

from __future__ import annotations

import random

from crwl.core import App, Joinability, Renaming, Rule, Var, csym, fsym
from crwl.modulesys import Module

A, B, S = csym("a"), csym("b"), csym("s", 1)
CONSTRUCTORS = (A, B, S)
FUNCTIONS = (fsym("f"), fsym("g", 1), fsym("h", 1), fsym("k", 2))
FRESH = (fsym("p"), fsym("q", 1), fsym("r", 1), fsym("w", 2))


def _pattern(rng: random.Random, depth: int, fresh, unary: bool = True) -> object:
    if depth == 0 or not unary or rng.random() < 0.5:
        return App(rng.choice([A, B]), ()) if rng.random() < 0.4 else next(fresh)
    return App(S, (_pattern(rng, depth - 1, fresh, unary),))


def _body(rng: random.Random, depth: int, vars_: list, funs, unary: bool = True) -> object:
    leaves = [App(A, ()), App(B, ())] + vars_
    if depth == 0 or rng.random() < 0.35:
        return rng.choice(leaves)
    pick = rng.random()
    if pick < 0.3 and unary:
        return App(S, (_body(rng, depth - 1, vars_, funs, unary),))
    f = rng.choice(funs)
    return App(f, tuple(_body(rng, depth - 1, vars_, funs, unary) for _ in range(f.arity)))


def random_rule(rng: random.Random, heads, funs, depth: int = 2, unary: bool = True) -> Rule:
    counter = iter(Var(f"Y{i}") for i in range(100))
    f = rng.choice(heads)
    args = tuple(_pattern(rng, depth, counter, unary) for _ in range(f.arity))
    vars_ = sorted({v for a in args for v in _vars(a)}, key=lambda v: v.name)
    if rng.random() < 0.2:
        vars_.append(Var("E"))  # extra variable
    rhs = _body(rng, depth, vars_, funs, unary)
    cond = ()
    if rng.random() < 0.4:
        cond = (Joinability(_body(rng, depth, vars_, funs, unary), _body(rng, 1, vars_, funs, unary)),)
    return Rule(f, args, rhs, cond)


def _vars(t):
    if isinstance(t, Var):
        yield t
    elif isinstance(t, App):
        for a in t.args:
            yield from _vars(a)


def random_module(rng: random.Random, heads=None, funs=FUNCTIONS, max_rules: int = 3,
                  unary: bool = True) -> Module:
    """At most three functions and three rules, terms at most two deep.

    ``unary=False`` leaves out ``s/1``: every term then has depth 0, so a
    depth-0 universe holds all total values and nothing is truncated.
    """
    funs = list(funs)
    if len(funs) > 3:
        funs = rng.sample(funs, 3)
    if heads is None:
        heads = rng.sample(funs, rng.randint(1, len(funs)))
    n = rng.randint(1, max_rules)
    return Module([random_rule(rng, list(heads), list(funs), unary=unary) for _ in range(n)])


def random_sig(rng: random.Random, pool=FUNCTIONS) -> frozenset:
    return frozenset(f for f in pool if rng.random() < 0.5)


def random_injective(rng: random.Random) -> Renaming:
    """A permutation of FUNCTIONS and FRESH that preserves arities."""
    by_arity: dict[int, list] = {}
    for f in FUNCTIONS + FRESH:
        by_arity.setdefault(f.arity, []).append(f)
    m = {}
    for group in by_arity.values():
        img = group[:]
        rng.shuffle(img)
        m.update({s: t for s, t in zip(group, img) if s != t})
    return Renaming.of(m)


def random_renaming(rng: random.Random) -> Renaming:
    """Arity-preserving, possibly non-injective."""
    m = {}
    for f in FUNCTIONS:
        if rng.random() < 0.5:
            m[f] = rng.choice([g for g in FUNCTIONS + FRESH if g.arity == f.arity])
    return Renaming.of({s: t for s, t in m.items() if s != t})
