import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from crwl.algebra import (
    BoundedTermAlgebra, CapExceeded, Universe, UniverseError, apply_rho, apply_rho_inv,
    bottom, consistent_closure, count_algebras, enumerate_algebras, eval_term, is_consistent,
    is_model, is_monotone, join, leq, lfp, meet, restrict, sample_algebras, satisfies,
    satisfies_rules, t_step, top,
)
from crwl.core import BOT, App, Joinability, Reduction, Renaming, Var, csym, fsym, show_term
from crwl.parser import parse_module

from gen import CONSTRUCTORS, random_module

a, b, c, d, s, k2 = csym("a"), csym("b"), csym("c"), csym("d"), csym("s", 1), csym("c", 1)
A, B, C, D = (App(x, ()) for x in (a, b, c, d))
X1 = Var("X1")
f, g, h1 = fsym("f"), fsym("g"), fsym("h", 1)


def rules(text):
    return parse_module("M = <{},{},{" + text + "}>").module.rules


def shown(u, mask):
    return sorted(show_term(t) for t in u.cone_terms(mask))


def test_universe_examples():
    u = Universe([a, b], 0, 1)
    assert len(u) == 4 and set(u.terms) == {BOT, X1, A, B}
    u2 = Universe([a, b, s], 1, 1)
    assert len(u2) == 8 and set(u.terms) < set(u2.terms)
    assert Universe([], 2, 0).terms == [BOT]
    assert u.terms[0] is BOT


def test_universe_cap():
    with pytest.raises(CapExceeded):
        Universe([a, csym("p", 2)], 4, 2, cap=1000).terms
    with pytest.raises(UniverseError):
        Universe([f], 0, 0)


def test_ideals():
    u = Universe([a, k2], 1, 1)
    assert shown(u, u.ideal(BOT)) == ["_|_"]
    assert shown(u, u.ideal(App(k2, (A,)))) == ["_|_", "c(_|_)", "c(a)"]
    assert shown(u, u.ideal(X1)) == ["X1", "_|_"]


def test_eval_and_satisfies():
    u = Universe([a, c, k2], 1, 1)
    cf = fsym("f", 1)
    tab = [1] * len(u)
    tab[u.idx(A)] = u.ideal(C)  # a is maximal, so the table stays monotone
    alg = BoundedTermAlgebra(u, {cf: tab})
    X = Var("X")
    assert eval_term(alg, App(k2, (X,)), {X: A}) == u.ideal(App(k2, (A,)))
    assert shown(u, eval_term(alg, App(cf, (X,)), {X: A})) == ["_|_", "c"]
    assert eval_term(bottom(u), App(cf, (A,))) == 1
    z = BoundedTermAlgebra(u, {f: [u.ideal(C)]})
    assert satisfies(z, Reduction(App(f, ()), BOT))
    assert satisfies(z, Joinability(App(f, ()), C))
    assert not satisfies(bottom(u), Joinability(App(f, ()), App(f, ())))


def test_t_step_examples():
    u = Universe([c, d], 0, 0)
    p = rules("f -> c. f -> d.")
    q = rules("f -> c. f -> d <= f >< c.")
    assert shown(u, t_step(p, bottom(u)).table(f)[0]) == ["_|_", "c", "d"]
    assert shown(u, t_step(q, bottom(u)).table(f)[0]) == ["_|_", "c"]
    full = top([f], u)
    assert t_step(frozenset(), full) == bottom(u)


def test_weekdays_lfp(mods):
    wd = mods["WeekDays"]
    u = Universe(wd.constructors, 0, 0)
    m = lfp(wd.rules, u)
    before = fsym("before", 1)
    assert shown(u, m.cone(before, [App(csym("tu"), ())])) == ["_|_", "mo"]
    assert shown(u, m.cone(before, [App(csym("mo"), ())])) == ["_|_", "su"]
    assert len(m.dump()) == 14


def test_lattice_examples():
    u = Universe([a, b], 0, 0)
    algs = list(enumerate_algebras([f, g], u))
    full = top([f, g], u)
    for x in algs:
        assert join(bottom(u), x) == x
        assert meet(full, x) == x
        assert restrict(x, []) == bottom(u)
    x = algs[7]
    rho = Renaming.of({f: g})
    assert apply_rho(x, rho).table(f) == x.table(g)


def test_rho_adjunction():
    u = Universe([a, b], 0, 0)
    rho = Renaming.of({f: g, fsym("h"): g})
    fs = [f, g, fsym("h")]
    algs = list(enumerate_algebras(fs, u))
    sample = random.Random(0).sample(algs, 40)
    for x, y in itertools.product(sample, sample):
        assert leq(apply_rho_inv(x, rho), y) == leq(x, apply_rho(y, rho))


def test_is_model_examples(mods):
    u = Universe([a, b], 0, 1)
    p, q = mods["DelP"].rules, mods["DelQ"].rules
    qd = frozenset(r for r in q if r.head == g)
    pd = frozenset(r for r in p if r.head == g)
    assert is_model(qd, bottom(u)) and not is_model(pd, bottom(u))
    assert is_model(p, top([f, g], u))
    assert is_model(p, lfp(p, u))


def test_is_consistent_examples():
    u = Universe([a], 0, 1)
    gg = fsym("g", 1)
    assert is_consistent(bottom(u))
    tab = [u.ideal(A) if t == X1 else 1 for t in u.terms]
    w = BoundedTermAlgebra(u, {gg: tab})
    assert not is_consistent(w)
    fixed = BoundedTermAlgebra(u, {gg: consistent_closure(u, 1, tab)})
    assert is_consistent(fixed) and leq(w, fixed)


def test_lfp_consistent_for_fixtures(mods):
    for name, m in mods.items():
        if name in ("Polygonal", "Square", "MoneyChange", "LSort", "BST"):
            continue
        u = Universe(m.constructors, 1, 1)
        assert is_consistent(lfp(m.rules, u)), name


def test_enumeration_counts():
    assert len(list(enumerate_algebras([f], Universe([a], 0, 0)))) == 2
    assert len(list(enumerate_algebras([f], Universe([a, b], 0, 0)))) == 4
    assert count_algebras([f, g], Universe([a, b], 0, 0)) == 16
    u = Universe([a, b], 0, 1)
    algs = list(enumerate_algebras([h1], u))
    assert len(set(algs)) == len(algs) == count_algebras([h1], u)
    assert all(is_monotone(x) for x in algs)
    cons = list(enumerate_algebras([h1], u, filter="consistent"))
    assert cons == [x for x in algs if is_consistent(x)]


def test_enumeration_cap():
    u = Universe([a, b, s], 1, 1)
    with pytest.raises(CapExceeded):
        list(enumerate_algebras([fsym("k", 2)], u, cap=1000))


def test_sampling_is_valid_and_seeded():
    u = Universe([a, b, s], 1, 1)
    xs = list(sample_algebras([h1, f], u, 20, seed=3))
    ys = list(sample_algebras([h1, f], u, 20, seed=3))
    assert xs == ys and all(is_monotone(x) for x in xs)
    cs = list(sample_algebras([h1], u, 10, seed=3, filter="consistent"))
    assert all(is_consistent(x) for x in cs)


# -- properties over small instances -----------------------------------------

U_SMALL = Universe([a, b], 0, 1)
FS = [f, h1]
ALGS = list(enumerate_algebras(FS, U_SMALL))
CONS = [x for x in ALGS if is_consistent(x)]

P_SMALL = rules("f -> a. h(X) -> b <= f >< X. h(a) -> f.")


def test_t_step_monotone_exhaustive():
    rng = random.Random(0)
    for x in ALGS:
        for y in rng.sample(ALGS, 3):
            assert leq(t_step(P_SMALL, x), t_step(P_SMALL, join(x, y)))


def test_t_step_preserves_consistency_exhaustive():
    for x in CONS:
        assert is_consistent(t_step(P_SMALL, x))


def test_lfp_least_prefixpoint_exhaustive():
    m = lfp(P_SMALL, U_SMALL)
    for x in ALGS:
        if is_model(P_SMALL, x):
            assert leq(m, x)
        assert is_model(P_SMALL, x) == satisfies_rules(P_SMALL, x)


U1 = Universe(CONSTRUCTORS, 1, 1)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**9))
def test_t_step_properties_random(seed):
    rng = random.Random(seed)
    p = random_module(rng)
    fs = sorted({r.head for r in p.rules} | {s for r in p.rules for s in r.invoked_functions()})
    x, y = sample_algebras(fs, U1, 2, seed=seed)
    z = join(x, y)
    tx, tz = t_step(p.rules, x), t_step(p.rules, z)
    assert is_monotone(tx) and leq(tx, tz)
    m = lfp(p.rules, U1)
    assert is_consistent(m) and is_model(p.rules, m)
    assert is_model(p.rules, z) == satisfies_rules(p.rules, z)
    if is_model(p.rules, z):
        assert leq(m, z)


U0 = Universe([a, b], 0, 1)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10**9))
def test_consistency_preserved_random(seed):
    # no unary constructor, so no value is cut off by the depth bound
    p = random_module(random.Random(seed), unary=False)
    fs = sorted({r.head for r in p.rules} | {s for r in p.rules for s in r.invoked_functions()})
    for x in sample_algebras(fs, U0, 5, seed=seed, filter="consistent"):
        assert is_consistent(x)
        assert is_consistent(t_step(p.rules, x))
    assert is_consistent(lfp(p.rules, U0))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**9))
def test_universe_monotonicity(seed):
    p = random_module(random.Random(seed))
    small, big = Universe(CONSTRUCTORS, 0, 0), Universe(CONSTRUCTORS, 1, 1)
    ms, mb = lfp(p.rules, small), lfp(p.rules, big)
    for fn in p.exports:
        for key, cone in enumerate(ms.table(fn)):
            args = [small.terms[i] for i in _unkey(small, key, fn.arity)]
            big_cone = mb.cone(fn, args)
            for t in small.cone_terms(cone):
                assert (big_cone >> big.idx(t)) & 1


def _unkey(u, key, n):
    from crwl.algebra import unkey
    return unkey(u, key, n)


def test_fresh_universe_builds_on_demand():
    # the empty program never asks for the term list before reading the masks
    u = Universe([csym("a")], 0, 0)
    assert t_step(frozenset(), bottom(u)) == bottom(u)
    v = Universe([csym("a")], 0, 1)
    assert v.total_mask == 0b110
    with pytest.raises(AttributeError):
        v.no_such_attribute
