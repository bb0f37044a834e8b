from hypothesis import given, settings, strategies as st

import pytest

from crwl.core import (
    BOT, App, Joinability, PreconditionError, Renaming, Rule, RuleError, Var,
    approx_le, canonical_rule, check_rule, csym, fsym, is_total, make_crr, meet_terms,
    rename_term, show_rule, show_term, substitute,
)

a, b, c, d = (csym(n) for n in "abcd")
s, pair = csym("s", 1), csym("c", 2)
A, B, C = App(a, ()), App(b, ()), App(c, ())
X, Y, Z, V, X1 = Var("X"), Var("Y"), Var("Z"), Var("V"), Var("X1")
f0, g0 = fsym("f"), fsym("g")


def test_approx_le_examples():
    assert approx_le(BOT, App(c, ())) and approx_le(BOT, App(s, (A,)))
    assert approx_le(App(s, (BOT,)), App(s, (A,)))
    assert not approx_le(A, B)
    assert approx_le(X, X) and not approx_le(X, Y)
    assert not approx_le(A, BOT)


def test_substitution_examples():
    k = fsym("k", 2)
    assert substitute(App(k, (X, Y)), {X: A}) == App(k, (A, Y))
    assert substitute(App(pair, (X, X)), {X: BOT}) == App(pair, (BOT, BOT))
    assert substitute(X, {}) == X


def test_rename_examples():
    isnat, isbase = fsym("isnat", 1), fsym("isbasetype", 1)
    assert rename_term(App(isnat, (X,)), {isnat: isbase}) == App(isbase, (X,))
    t = App(s, (App(f0, ()),))
    assert rename_term(t, {}) == t
    # 0-ary functions are renamed as well
    assert rename_term(t, {f0: g0}) == App(s, (App(g0, ()),))


def test_crr_worked_example():
    f3, bb, aa = fsym("f", 3), csym("b", 2), csym("a", 2)
    rule, theta = make_crr(f3, [BOT, App(bb, (X, Y)), X], App(aa, (X, Z)))
    assert show_rule(rule) == "f(V, b(X, Y), X1) -> a(X, Z) <= X1 >< X, Y >< Y, Z >< Z."
    assert theta(X1) == X and theta(V) is BOT
    check_rule(rule)


def test_crr_small_cases():
    f1 = fsym("f", 1)
    rule, _ = make_crr(f1, [X], C)
    assert rule.cond == (Joinability(X, X),)
    rule, theta = make_crr(f1, [C], App(d, ()))
    assert rule.cond == () and theta.as_dict() == {}
    with pytest.raises(PreconditionError):
        make_crr(f1, [C], BOT)


def test_check_rule_rejects():
    f1, f2 = fsym("f", 1), fsym("f", 2)
    with pytest.raises(RuleError):
        check_rule(Rule(f2, (X, X), A))
    with pytest.raises(RuleError):
        check_rule(Rule(f1, (BOT,), A))
    with pytest.raises(RuleError):
        check_rule(Rule(f1, (App(g0, ()),), A))


def test_canonical_rule_alpha():
    f1 = fsym("f", 1)
    r1 = Rule(f1, (X,), App(s, (X,)), (Joinability(Y, X),))
    r2 = Rule(f1, (Z,), App(s, (Z,)), (Joinability(V, Z),))
    assert canonical_rule(r1) == canonical_rule(r2)


def test_show_term_lists_and_bottom():
    nil, cons = csym("[]"), csym("|", 2)
    t = App(cons, (A, App(cons, (BOT, App(nil, ())))))
    assert show_term(t) == "[a, _|_]"
    assert show_term(App(cons, (A, X))) == "[a | X]"


# -- properties ---------------------------------------------------------------

POOL = [X, Y]


def cterms(depth: int = 3):
    leaf = st.sampled_from([BOT, A, B, X, Y])
    return st.recursive(
        leaf,
        lambda kids: st.one_of(st.builds(lambda t: App(s, (t,)), kids),
                               st.builds(lambda l, r: App(pair, (l, r)), kids, kids)),
        max_leaves=6,
    )


totals = st.recursive(st.sampled_from([A, B]),
                      lambda kids: st.builds(lambda t: App(s, (t,)), kids), max_leaves=3)


@given(cterms(), cterms(), cterms())
def test_approx_le_partial_order(p, q, r):
    assert approx_le(p, p)
    if approx_le(p, q) and approx_le(q, p):
        assert p == q
    if approx_le(p, q) and approx_le(q, r):
        assert approx_le(p, r)


@given(cterms(), cterms(), totals, totals)
def test_substitution_monotone(p, q, tx, ty):
    theta = {X: tx, Y: ty}
    if approx_le(p, q):
        assert approx_le(substitute(p, theta), substitute(q, theta))


@given(cterms(), cterms())
def test_meet_is_greatest_lower_bound(p, q):
    m = meet_terms(p, q)
    assert approx_le(m, p) and approx_le(m, q)


FUNS = [fsym("f"), fsym("g"), fsym("h"), fsym("k")]


def fterms():
    leaf = st.sampled_from([A, X] + [App(f, ()) for f in FUNS])
    return st.recursive(leaf, lambda kids: st.builds(lambda t: App(s, (t,)), kids), max_leaves=4)


renamings = st.dictionaries(st.sampled_from(FUNS), st.sampled_from(FUNS))


@given(fterms(), renamings, renamings)
def test_rename_compose(t, m1, m2):
    r1, r2 = Renaming.of(m1), Renaming.of(m2)
    assert rename_term(rename_term(t, r1.as_dict()), r2.as_dict()) == r2.compose(r1).term(t)


@given(fterms(), renamings, st.sampled_from([A, B, App(s, (A,))]))
def test_rename_commutes_with_substitution(t, m, v):
    rho = Renaming.of(m)
    assert rho.term(substitute(t, {X: v})) == substitute(rho.term(t), {X: v})


@settings(max_examples=200)
@given(st.lists(cterms(), min_size=1, max_size=3), cterms().filter(lambda t: t is not BOT))
def test_crr_invariants(args, rhs):
    k = fsym("f", len(args))
    rule, theta = make_crr(k, args, rhs)
    # patterns are linear and bottom-free; the rhs may keep partial subterms
    check_rule(Rule(rule.head, rule.args, A, rule.cond))
    assert theta(rule.lhs) == App(k, tuple(args))
    assert theta(rule.rhs) == rhs
    assert all(isinstance(j.lhs, Var) and isinstance(j.rhs, Var) for j in rule.cond)
    assert all(is_total(v) for v in rule.pattern_variables())
