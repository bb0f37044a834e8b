import random

import pytest
from hypothesis import given, settings, strategies as st

from crwl.core import Joinability, Reduction, Var, csym, fsym, show_rule
from crwl.modulesys import Closure, Deletion, Isa, Module, Rename, Union_, show_expr
from crwl.parser import ParseError, load_modules, parse_expr, parse_goal, parse_module, parse_rules

from gen import random_module


def test_ordnatlist_signature(mods):
    m = mods["OrdNatList"]
    assert m.params == frozenset()
    assert m.exports == {fsym("isnat", 1), fsym("leq", 2), fsym("insert", 2)}
    assert len(m.rules) == 9
    assert m.constructors == {csym("zero"), csym("succ", 1), csym("true"), csym("false"),
                              csym("[]"), csym("|", 2)}


def test_null_module():
    sm = parse_module("M = <{},{},{ }>")
    assert sm.name == "M" and sm.module == Module()


def test_arity_conflict():
    with pytest.raises(ParseError):
        parse_module("M = <{},{f/1},{f(X,Y) -> X.}>")


@pytest.mark.parametrize("text", [
    "M = <{},{},{f(X,X) -> X.}>",       # non-linear
    "M = <{},{},{f(g(X)) -> X. g(a) -> b.}>",  # function in a pattern
    "M = <{},{},{X -> a.}>",              # variable head
    "M = <{},{},{f -> a <= f >< .}>",     # syntax
    "M = <{},{},{f -> _|_.}>",            # bottom in source
])
def test_rejected_sources(text):
    with pytest.raises(ParseError):
        parse_module(text)


def test_parse_error_position():
    with pytest.raises(ParseError) as e:
        parse_module("M = <{},{},{\n  f -> a\n  g -> b.}>")
    assert e.value.line == 3


def test_params_declared_and_inferred(mods):
    m = mods["OrdList"]
    assert m.params == {fsym("isbasetype", 1), fsym("leq", 2)}
    assert m.exports == {fsym("insert", 2)}
    money = mods["MoneyChange"]
    assert fsym("=<", 2) in money.params and fsym("-", 2) in money.params
    assert csym("10") in money.constructors


def test_expr_examples():
    e = parse_expr("OrdList + {isnat/1 -> isbasetype/1}(close(OrdNat))")
    assert isinstance(e, Union_) and isinstance(e.right, Rename)
    assert isinstance(e.right.expr, Closure) and e.right.expr.sig is None
    assert isinstance(parse_expr("Square isa Polygonal"), Isa)
    d = parse_expr("M \\ {}")
    assert isinstance(d, Deletion) and d.sig == frozenset()


@pytest.mark.parametrize("text", ["{f/1 -> g/2}(M)", "close(", "M + ", "M \\ {a}x"])
def test_expr_errors(text):
    with pytest.raises(ParseError):
        parse_expr(text)


@pytest.mark.parametrize("text", [
    "OrdList + {isnat/1 -> isbasetype/1}(close(OrdNat))",
    "closeH(LNat + BST, {nil/0, mktree/3}) + LSort",
    "inst(OrdList, OrdNat, {isbasetype/1 -> isnat/1, leq/2 -> geq/2})",
    "import(A, B, {f/1}, {f/1 -> g/1})",
    "abstract(OrdNatList, {isnat/1, leq/2})",
    "close(WeekDays, {next/1}) \\ {before/1}",
])
def test_expr_print_roundtrip(text):
    e = parse_expr(text)
    assert parse_expr(show_expr(e)) == e


def test_goal_examples(mods):
    m = mods["OrdNatList"]
    syms = m.functions | m.constructors
    g = parse_goal("leq(zero,succ(zero)) -> true", syms)
    assert isinstance(g, Reduction)
    money = mods["MoneyChange"]
    j = parse_goal("coin >< C", money.functions | money.constructors)
    assert isinstance(j, Joinability) and j.rhs == Var("C")
    with pytest.raises(ParseError):
        parse_goal("f(X -> Y)", syms)
    with pytest.raises(ParseError):
        parse_goal("nosuch(zero) -> true", syms)
    with pytest.raises(ParseError):
        parse_goal("leq(zero) -> true", syms)


def test_fixture_modules_all_load(mods):
    for name in ["OrdNatList", "OrdNat", "OrdList", "MoneyChange", "NewCoins", "WeekDays",
                 "Polygonal", "Square", "BST", "LSort", "LNat"]:
        assert name in mods


def test_duplicate_module_names(tmp_path):
    (tmp_path / "a.crwl").write_text("M = <{},{},{f -> a.}>")
    (tmp_path / "b.crwl").write_text("M = <{},{},{g -> a.}>")
    with pytest.raises(ParseError):
        load_modules([tmp_path])


def test_signature_inference_ignores_rule_order(mods):
    m = mods["OrdNatList"]
    text = "\n".join(show_rule(r) for r in reversed(m.sorted_rules()))
    again = parse_module("M = <{},{},{" + text + "}>").module
    assert again == m and again.params == m.params and again.exports == m.exports


def test_module_roundtrip_fixtures(mods):
    for name, m in mods.items():
        text = m.show(name)
        assert parse_module(text).module == m, name


@settings(max_examples=150)
@given(st.integers(0, 10**9))
def test_module_roundtrip_random(seed):
    m = random_module(random.Random(seed))
    back = parse_module(m.show("R")).module
    assert back == m


def test_structured_dump_roundtrip(mods):
    from crwl.modulesys import FlattenEnv, flatten
    sm = flatten(parse_expr("OrdList + {isnat/1 -> isbasetype/1}(close(OrdNat))"),
                 FlattenEnv(mods, strategy="structured")).module
    syms = {s for r in sm.rules for s in r.symbols()}
    lines = [l for l in sm.show().splitlines() if not l.startswith("--")]
    assert frozenset(parse_rules("\n".join(lines), syms)) == sm.rules
