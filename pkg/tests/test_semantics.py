import random

import pytest
from hypothesis import given, settings, strategies as st

from crwl.algebra import (
    BoundedTermAlgebra, Universe, bottom, enumerate_algebras, eval_term, is_consistent, is_model,
    lfp,
)
from crwl.core import App, Renaming, Rule, csym, fsym, show_rule
from crwl.semantics import (
    COUNTEREXAMPLE, EQUIVALENT, INCONCLUSIVE, RELATIONS, build_witness_program, check_homomorphism,
    check_witness, deletion_semantics, distinguish, equiv, functions_of, model_gap, observable,
)

from gen import random_module

a, b, c, d = (csym(n) for n in "abcd")
A, B, C = (App(x, ()) for x in (a, b, c))
f, g, r1 = fsym("f"), fsym("g"), fsym("r", 1)
U_ABC = Universe([a, b, c], 1, 0)
U_CD = Universe([c, d], 0, 0)
U_AB = Universe([a, b], 0, 1)
U_A = Universe([a], 0, 1)


def rs(mods, name):
    return mods[name].rules


def test_observables(mods):
    p1, p2, q = rs(mods, "NoCompP1"), rs(mods, "NoCompP2"), rs(mods, "NoCompQ")
    assert observable(p1, U_ABC) == observable(p2, U_ABC)
    assert observable(frozenset(), U_ABC) == bottom(U_ABC)
    left, right = observable(p1 | q, U_ABC), observable(p2 | q, U_ABC)
    assert left.cone(r1, [B]) == 1
    assert U_ABC.cone_terms(right.cone(r1, [B])) == [U_ABC.terms[0], C]


def test_tsep_pair(mods):
    p, q = rs(mods, "TSepP"), rs(mods, "TSepQ")
    v = equiv(p, q, "t", U_CD)
    assert v.outcome == COUNTEREXAMPLE and v.witness.algebra == bottom(U_CD)
    for rel in ("m", "cm", "d", "lm"):
        assert equiv(p, q, rel, U_CD).outcome == EQUIVALENT
    assert distinguish(p, q, U_CD) is None


def test_deletion_pair(mods):
    p, q = rs(mods, "DelP"), rs(mods, "DelQ")
    assert equiv(p, q, "m", U_AB).equivalent and equiv(p, q, "cm", U_AB).equivalent
    v = equiv(p, q, "d", U_AB)
    assert v.outcome == COUNTEREXAMPLE
    assert v.witness.sigma == {f} and v.witness.algebra == bottom(U_AB)
    assert check_witness(p, q, v, U_AB)
    ctx = distinguish(p, q, U_AB, {f})
    assert ctx.rules == frozenset() and ctx.function == g and ctx.value == B
    assert distinguish(p, p, U_AB) is None


def test_abstraction_pair(mods):
    p, q = rs(mods, "AbsP"), rs(mods, "AbsQ")
    v = equiv(p, q, "m", U_A)
    assert v.outcome == COUNTEREXAMPLE and not is_consistent(v.witness.algebra)
    assert check_witness(p, q, v, U_A)
    assert equiv(p, q, "cm", U_A).equivalent


def test_sampling_never_claims_equivalence(mods):
    p, q = rs(mods, "DelP"), rs(mods, "DelQ")
    v = equiv(p, q, "cm", U_AB, samples=10)
    assert v.outcome == INCONCLUSIVE and not v.exhaustive


def test_deletion_semantics_examples(mods):
    p, q = rs(mods, "DelP"), rs(mods, "DelQ")
    sp, sq = deletion_semantics(p, U_AB), deletion_semantics(q, U_AB)
    assert bottom(U_AB) not in sp[g] and bottom(U_AB) in sq[g]
    empty = deletion_semantics(frozenset(), U_AB, functions=[f, g])
    every = [x for x in enumerate_algebras([f, g], U_AB) if is_consistent(x)]
    assert all(set(v) == set(every) for v in empty.values())
    alpha = frozenset(Rule(r.head, r.args, r.rhs, r.cond) for r in p)
    assert deletion_semantics(alpha, U_AB) == sp


def test_homomorphism(mods):
    u = Universe([a, b, c], 0, 0)
    rep = check_homomorphism(rs(mods, "NoCompP1") | rs(mods, "NoCompP2"), rs(mods, "NoCompQ"), u)
    assert rep.ok
    h = fsym("h")
    for rho in (Renaming.of({}), Renaming.of({f: h, g: f}), Renaming.of({f: g})):
        rep = check_homomorphism(rs(mods, "DelQ"), rs(mods, "DelP"), U_AB, {g}, rho)
        assert rep.ok, rep.lines()


def test_witness_examples():
    u = Universe([a, c], 0, 0)
    h = fsym("h", 1)
    alg = BoundedTermAlgebra(u, {g: [u.ideal(A)], f: [u.ideal(C)],
                                 h: [1 if t != A else u.ideal(C) for t in u.terms]})
    assert build_witness_program(alg, C, C) == frozenset()
    assert {show_rule(r) for r in build_witness_program(alg, App(f, ()), C)} == {"f -> c."}
    prog = build_witness_program(alg, App(h, (App(g, ()),)), C)
    assert {show_rule(r) for r in prog} == {"g -> a.", "h(a) -> c."}


# -- relation chain and projection checks ----------------------------------

PAIRS = [("TSepP", "TSepQ", U_CD), ("DelP", "DelQ", U_AB), ("AbsP", "AbsQ", U_A),
         ("NoCompP1", "NoCompP2", Universe([a, b, c], 0, 0))]


@pytest.mark.parametrize("p,q,u", PAIRS)
def test_relation_chain(mods, p, q, u):
    v = {rel: equiv(rs(mods, p), rs(mods, q), rel, u).equivalent for rel in RELATIONS}
    assert not v["t"] or v["d"]
    assert not v["d"] or v["cm"]
    assert not v["m"] or v["cm"]
    assert not v["cm"] or v["lm"]


U0 = Universe([a, b], 0, 0)
SMALL_FUNS = (fsym("f"), fsym("g", 1), fsym("h", 1))


def _brute(p, q, consistent):
    fs = sorted(functions_of(p | q))
    for x in enumerate_algebras(fs, U0, "consistent" if consistent else "all"):
        if is_model(p, x) != is_model(q, x):
            return x
    return None


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**9))
def test_projection_matches_brute_force(seed):
    rng = random.Random(seed)
    p = random_module(rng, funs=SMALL_FUNS, unary=False).rules
    q = random_module(rng, funs=SMALL_FUNS, unary=False).rules
    if rng.random() < 0.5:  # near misses are the interesting case
        q = p | frozenset(list(q)[:1])
    for consistent in (False, True):
        w, side, _, exhaustive = model_gap(p, q, U0, consistent)
        assert exhaustive
        assert (w is None) == (_brute(p, q, consistent) is None)
        if w is not None:
            x, y = (p, q) if side == "P" else (q, p)
            assert is_model(x, w) and not is_model(y, w)
            assert not consistent or is_consistent(w)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**9))
def test_witness_program_random(seed):
    from crwl.semantics import random_witness_triple
    from crwl.algebra import consistent_algebra, sample_algebras

    rng = random.Random(seed)
    u = Universe([a, b, csym("s", 1)], 1, 1)
    fs = [fsym("f"), fsym("g", 1), fsym("k", 2)]
    alg = consistent_algebra(next(iter(sample_algebras(fs, u, 1, seed=seed))))
    r, t = random_witness_triple(alg, fs, u.constructors, rng)
    prog = build_witness_program(alg, r, t)  # asserts its own postconditions
    assert (eval_term(lfp(prog, u), r) >> u.idx(t)) & 1
