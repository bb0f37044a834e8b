import pytest

from crwl.algebra import Universe, bottom, enumerate_algebras, lfp, restrict, sample_algebras, t_step, top
from crwl.core import App, SignatureError, csym, fsym, show_rule
from crwl.modulesys import FlattenEnv, flatten
from crwl.parser import parse_expr
from crwl.structured import iota, iota_module, star, star_hiding, u_step, visible_model

ORDLIST_EXPR = "OrdList + {isnat/1 -> isbasetype/1}(close(OrdNat))"


def structured(expr, mods):
    return flatten(parse_expr(expr), FlattenEnv(mods, strategy="structured")).module


def test_iota_ordlist_listing(mods):
    sm = structured(ORDLIST_EXPR, mods)
    assert len(sm.rules_v) == 3 and len(sm.rules_b) == 3 and len(sm.rules_h) == 7
    bridges = {show_rule(r) for r in sm.rules_b}
    assert bridges == {"isbasetype(X1) -> OrdNat.isnat(X1).",
                       "leq(X1, X2) -> OrdNat.leq(X1, X2).",
                       "geq(X1, X2) -> OrdNat.geq(X1, X2)."}
    assert "OrdNat.geq(X, Y) -> OrdNat.leq(Y, X)." in {show_rule(r) for r in sm.rules_h}
    assert sm.params == frozenset()


def test_iota_plain_and_deletion(mods):
    sm = iota(parse_expr("OrdNatList"), mods)
    assert not sm.rules_b and not sm.rules_h
    sig = {fsym("isnat", 1)}
    assert iota(parse_expr("OrdNatList \\ {isnat/1}"), mods) == sm.delete(sig)


def test_star_weekdays(mods):
    sm = star(iota_module(mods["WeekDays"]), "WD")
    assert {show_rule(r) for r in sm.rules_b} == {"next(X1) -> WD.next(X1).",
                                                  "before(X1) -> WD.before(X1)."}
    assert len(sm.rules_h) == 8 and not sm.rules_v and sm.params == frozenset()


def test_star_edge_cases(mods):
    empty = star(iota_module(mods["OrdList"]).delete({fsym("insert", 2)}), "E")
    assert not empty.rules_b and not empty.rules_h
    once = structured("close(WeekDays)", mods)
    twice = structured("close(close(WeekDays))", mods)
    labels_once = {s.label for r in once.rules_h for s in r.symbols() if s.is_labeled}
    labels_twice = {s.label for r in twice.rules_h for s in r.symbols() if s.is_labeled}
    assert labels_once == {"WeekDays"} and labels_twice == {"WeekDays", "close(WeekDays)"}
    base = iota_module(mods["WeekDays"])
    assert star_hiding(base, (), "L") == star(base, "L")


def test_labeled_symbols_are_protected(mods):
    sm = structured("close(WeekDays)", mods)
    with pytest.raises(SignatureError):
        sm.delete({fsym("next", 1, "WeekDays")})
    with pytest.raises(SignatureError):
        star_hiding(sm, {fsym("next", 1)}, "L")


def test_bst_hiding_listing(mods):
    sm = structured("closeH(LNat + BST, {nil/0, mktree/3})", mods)
    label = "LNat + BST"
    assert {c.name for c in sm.hidden_constructors} == {"nil", "mktree"}
    assert all(c.label == label for c in sm.hidden_constructors)
    assert {r.head.name for r in sm.rules_b} >= {"empty", "insert", "inorder"}
    text = sm.show()
    visible = [l for l in text.split("-- hidden")[0].splitlines() if not l.startswith("--")]
    assert not any("mktree" in l or "nil" in l for l in visible)
    assert "`LNat + BST`.mktree" in text


def _check_u(sm, flat_rules, u, algs):
    for a in algs:
        assert u_step(sm, a) == t_step(flat_rules, a)


def test_u_step_plain(mods):
    p = mods["DelP"]
    u = Universe([csym("a"), csym("b")], 0, 1)
    _check_u(iota_module(p), p.rules, u, enumerate_algebras(p.exports, u))


def test_u_step_weekdays_constant(mods):
    wd = mods["WeekDays"]
    u = Universe(wd.constructors, 0, 0)
    sm = structured("close(WeekDays)", mods)
    target = restrict(lfp(wd.rules, u), wd.exports)
    before = fsym("before", 1)
    for a in sample_algebras(wd.exports, u, 20, seed=0):
        out = u_step(sm, a)
        assert out == target
        assert u.cone_terms(out.cone(before, [App(csym("tu"), ())])) == [u.terms[0], App(csym("mo"), ())]


def test_u_step_ordlist_expression(mods):
    e = parse_expr(ORDLIST_EXPR)
    u = Universe([csym("zero"), csym("true"), csym("false"), csym("[]"), csym("|", 2)], 0, 0)
    sm = flatten(e, FlattenEnv(mods, strategy="structured")).module
    flat = flatten(e, FlattenEnv(mods, universe=u)).module
    fs = sm.exports | flat.exports
    algs = list(sample_algebras(fs, u, 15, seed=1)) + [bottom(u), top(fs, u)]
    _check_u(sm, flat.rules, u, algs)


def test_visible_model_reads_hidden_data_as_bottom(mods):
    sm = structured("closeH(LNat + BST, {nil/0, mktree/3}) + LSort", mods)
    flat = structured("LNat + BST + LSort", mods)
    nil, zero, true = App(csym("[]"), ()), App(csym("zero"), ()), App(csym("true"), ())
    uv = Universe(sm.visible_constructors, 0, 0)
    uf = Universe(flat.constructors, 0, 0)
    vm, fm = visible_model(sm, uv), lfp(flat.rules, uf)
    assert all(not f.is_labeled for f in vm.tables)
    lsort, isnat = fsym("lsort", 1), fsym("isnat", 1)
    assert uv.cone_terms(vm.cone(isnat, [zero])) == uf.cone_terms(fm.cone(isnat, [zero])) == [
        uv.terms[0], true]
    # the tree built by listTotree is hidden data, so the visible reduct cannot pass it on
    assert uv.cone_terms(vm.cone(lsort, [nil])) == [uv.terms[0]]
    assert nil in uf.cone_terms(fm.cone(lsort, [nil]))
    assert visible_model(sm, uv) == u_step(sm, vm)
