"""Goal-oriented proof search (rules Bo, RR, DS, OR, Jo) over a bounded universe.

The prover is deliberately independent of the fixpoint engine: it works on
terms, not on bitsets, and explores proof trees top-down.  For a term ``e`` and
a depth budget ``b`` it computes the set of universe terms ``t`` such that
``e -> t`` has a derivation of depth at most ``b`` whose reductions all land
inside the universe.  That set is downward closed, so only its maximal
elements are kept.

Two facts keep the search finite:

* derivability is monotone in the instantiating substitution, so pattern
  variables only need the maximal bindings read off the argument values and
  extra variables only need the maximal universe terms;
* values grow with the budget and are drawn from finite sets, so once every
  subgoal met so far is unchanged over three consecutive budgets no deeper
  level can add anything (the goal is refuted at these bounds).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

from .algebra import CapExceeded, Universe
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
    Term,
    Var,
    approx_le,
    is_cterm,
    is_total,
    show_rule,
    show_statement,
    show_term,
    substitute,
)

TAGS = ("Bo", "RR", "DS", "OR", "Jo")


class DerivationError(CRWLError):
    """A derivation node that does not follow its rule."""


@dataclass(frozen=True)
class ProofBounds:
    max_proof_depth: int
    universe: Universe

    def __post_init__(self) -> None:
        if self.max_proof_depth < 1:
            raise ValueError("max_proof_depth must be at least 1")


@dataclass(frozen=True)
class Derivation:
    statement: Statement
    tag: str
    children: tuple = ()
    rule: Rule | None = None
    theta: CSubst | None = None

    @property
    def depth(self) -> int:
        return 1 + max((c.depth for c in self.children), default=0)

    def size(self) -> int:
        return 1 + sum(c.size() for c in self.children)

    def nodes(self) -> Iterator[Derivation]:
        yield self
        for c in self.children:
            yield from c.nodes()

    def lines(self, indent: int = 0) -> list[str]:
        pad = "  " * indent
        head = f"{pad}{self.tag}  {show_statement(self.statement)}"
        if self.tag == "OR" and self.rule is not None:
            head += f"    [{show_rule(self.rule)}  {self.theta}]"
        out = [head]
        for c in self.children:
            out += c.lines(indent + 1)
        return out

    def show(self) -> str:
        return "\n".join(self.lines())


@dataclass
class ProofResult:
    """``outcome`` is ``proven``, ``refuted`` or ``unknown``.

    ``refuted`` means the search saturated: no derivation exists whose terms
    stay inside the universe.  ``unknown`` means the depth cutoff was reached
    first.  ``bound`` names the bound that may be hiding a derivation.
    """

    goal: Statement
    outcome: str
    derivation: Derivation | None = None
    depth: int = 0
    bound: str | None = None

    def __bool__(self) -> bool:
        return self.outcome == "proven"


# ---------------------------------------------------------------------------
# antichains of maximal values
# ---------------------------------------------------------------------------


def _maximal(ts: Iterable[Term]) -> frozenset:
    items = list(set(ts))
    if len(items) <= 1:
        return frozenset(items)
    keep = []
    for t in items:
        if not any(s != t and approx_le(t, s) for s in items):
            keep.append(t)
    return frozenset(keep)


def _below(t: Term, values: frozenset) -> bool:
    return any(approx_le(t, m) for m in values)


def _match(pattern: Term, t: Term, theta: dict) -> bool:
    """Bind ``pattern`` (linear, total) against ``t`` so that pattern·θ = t."""
    if isinstance(pattern, Var):
        theta[pattern] = t
        return True
    if not isinstance(t, App) or t.sym != pattern.sym:
        return False
    return all(_match(p, a, theta) for p, a in zip(pattern.args, t.args))


# ---------------------------------------------------------------------------
# the prover
# ---------------------------------------------------------------------------


class Prover:
    """Proof search for one program over one universe.

    The memo table is shared between goals, so asking many questions of the
    same prover is much cheaper than building a fresh one each time.
    """

    def __init__(self, rules: Iterable[Rule], bounds: ProofBounds):
        self.rules = tuple(sorted(set(rules), key=show_rule))
        self.bounds = bounds
        self.universe = bounds.universe
        self.by_head: dict = {}
        for r in self.rules:
            self.by_head.setdefault(r.head, []).append(r)
        self._memo: dict[tuple[Term, int], frozenset] = {}
        self._goals: dict[Term, None] = {}
        self._stable_at: int | None = None
        self._max_terms: list[Term] | None = None
        # set when a value was cut down to fit the universe or an extra
        # variable was enumerated: a larger universe might prove more
        self.universe_binding = False

    # values ----------------------------------------------------------------

    def _maximal_universe_terms(self) -> list[Term]:
        if self._max_terms is None:
            u = self.universe
            try:
                u.terms
            except CapExceeded as e:
                raise CapExceeded("universe terms for extra variables", e.estimate, e.cap) from None
            self._max_terms = [u.terms[i] for i in u.maxima(u.full)]
        return self._max_terms

    def _trunc(self, t: Term) -> Term:
        out = self.universe.truncate(t)
        if out != t:
            self.universe_binding = True
        return out

    def values(self, e: Term, budget: int) -> frozenset:
        """Maximal ``t`` with ``e -> t`` derivable within ``budget`` levels."""
        if budget <= 0:
            return frozenset()
        key = (e, budget)
        got = self._memo.get(key)
        if got is not None:
            return got
        self._goals.setdefault(e)
        if e is BOT:
            out = frozenset([BOT])
        elif isinstance(e, Var):
            out = frozenset([self._trunc(e)])
        elif e.sym.is_constructor:
            out = self._ds(e, budget)
        else:
            out = self._or(e, budget)
        self._memo[key] = out
        return out

    def _ds(self, e: App, budget: int) -> frozenset:
        if not e.args:
            return frozenset([self._trunc(e)])
        kids = [self.values(a, budget - 1) for a in e.args]
        if any(not k for k in kids):
            return frozenset([BOT])
        return _maximal(self._trunc(App(e.sym, combo)) for combo in itertools.product(*kids))

    def _instances(self, rule: Rule, argvals: list[frozenset]) -> Iterator[dict]:
        """Maximal substitutions whose patterns fit under the argument values."""
        extras = [v for v in rule.variables() if v not in set(rule.pattern_variables())]
        for combo in itertools.product(*argvals):
            theta: dict = {}
            if not all(_match(p, t, theta) for p, t in zip(rule.args, combo)):
                continue
            if not extras:
                yield theta
                continue
            self.universe_binding = True
            pool = self._maximal_universe_terms()
            for pick in itertools.product(pool, repeat=len(extras)):
                full = dict(theta)
                full.update(zip(extras, pick))
                yield full

    def _or(self, e: App, budget: int) -> frozenset:
        found = [BOT]
        rules = self.by_head.get(e.sym, ())
        if not rules or budget < 2:
            return frozenset(found)
        argvals = [self.values(a, budget - 1) for a in e.args]
        if any(not v for v in argvals):
            return frozenset(found)
        for rule in rules:
            for theta in self._instances(rule, argvals):
                if all(self.joinable(substitute(j.lhs, theta), substitute(j.rhs, theta), budget - 1)
                       for j in rule.cond):
                    found.extend(self.values(substitute(rule.rhs, theta), budget - 1))
        return _maximal(found)

    def joinable(self, a: Term, b: Term, budget: int) -> bool:
        """``a >< b`` with a derivation of depth at most ``budget``."""
        va = self.values(a, budget - 1)
        if not va:
            return False
        vb = self.values(b, budget - 1)
        return any(is_total(t) and t in vb for t in va)

    def holds(self, goal: Statement, budget: int) -> bool:
        if isinstance(goal, Reduction):
            return _below(goal.rhs, self.values(goal.lhs, budget))
        return self.joinable(goal.lhs, goal.rhs, budget)

    # saturation ------------------------------------------------------------

    def _sweep(self, budget: int) -> bool:
        """Evaluate every known subgoal at ``budget``; report whether all are settled."""
        if budget < 3:
            for e in list(self._goals):
                self.values(e, budget)
            return False
        done: set = set()
        stable = True
        while True:
            todo = [e for e in self._goals if e not in done]
            if not todo:
                return stable
            for e in todo:
                done.add(e)
                v = self.values(e, budget)
                if v != self.values(e, budget - 1) or v != self.values(e, budget - 2):
                    stable = False

    def settle(self, terms: Iterable[Term] = ()) -> int | None:
        """Iterate budgets until no subgoal changes; the budget reached, or None at the cutoff."""
        for t in terms:
            self._goals.setdefault(t)
            self._stable_at = None
        if self._stable_at is not None:
            return self._stable_at
        for b in range(1, self.bounds.max_proof_depth + 1):
            if self._sweep(b):
                self._stable_at = b
                return b
        return None

    def final_values(self, e: Term) -> frozenset:
        b = self.settle([e])
        if b is None:
            raise PreconditionError("proof search did not saturate within the depth bound")
        return self.values(e, b)

    def prove(self, goal: Statement) -> ProofResult:
        _check_goal(goal)
        if isinstance(goal, Reduction) and not self.universe.contains(goal.rhs):
            return ProofResult(goal, "unknown", bound="universe")
        for t in _goal_terms(goal):
            if t not in self._goals:
                self._goals[t] = None
                self._stable_at = None
        for b in range(1, self.bounds.max_proof_depth + 1):
            if self.holds(goal, b):
                d = self.derive(goal, b)
                return ProofResult(goal, "proven", d, d.depth)
            if self._stable_at is None and self._sweep(b):
                self._stable_at = b
            if self._stable_at is not None and b >= self._stable_at:
                bound = "universe" if self.universe_binding else None
                return ProofResult(goal, "refuted", depth=b, bound=bound)
        return ProofResult(goal, "unknown", depth=self.bounds.max_proof_depth, bound="depth")

    # derivations -------------------------------------------------------------

    def derive(self, goal: Statement, budget: int) -> Derivation:
        for b in range(1, budget + 1):
            if self.holds(goal, b):
                break
        else:
            raise PreconditionError(f"{show_statement(goal)} is not derivable within {budget}")
        if isinstance(goal, Joinability):
            va, vb = self.values(goal.lhs, b - 1), self.values(goal.rhs, b - 1)
            u = min((t for t in va if is_total(t) and t in vb), key=show_term)
            return Derivation(goal, "Jo", (self.derive(Reduction(goal.lhs, u), b - 1),
                                           self.derive(Reduction(goal.rhs, u), b - 1)))
        e, t = goal.lhs, goal.rhs
        if t is BOT:
            return Derivation(goal, "Bo")
        if isinstance(e, Var) or (isinstance(e, App) and e.sym.is_constructor and not e.args):
            return Derivation(goal, "RR")
        if e.sym.is_constructor:
            kids = tuple(self.derive(Reduction(a, s), b - 1) for a, s in zip(e.args, t.args))
            return Derivation(goal, "DS", kids)
        argvals = [self.values(a, b - 1) for a in e.args]
        for rule in self.by_head.get(e.sym, ()):
            for theta in self._instances(rule, argvals):
                conds = [Joinability(substitute(j.lhs, theta), substitute(j.rhs, theta))
                         for j in rule.cond]
                if not all(self.joinable(c.lhs, c.rhs, b - 1) for c in conds):
                    continue
                body = substitute(rule.rhs, theta)
                if not _below(t, self.values(body, b - 1)):
                    continue
                kids = [self.derive(Reduction(a, substitute(p, theta)), b - 1)
                        for a, p in zip(e.args, rule.args)]
                kids += [self.derive(c, b - 1) for c in conds]
                kids.append(self.derive(Reduction(body, t), b - 1))
                return Derivation(goal, "OR", tuple(kids), rule, CSubst.of(theta))
        raise AssertionError("value recorded without a supporting rule")  # pragma: no cover


def _goal_terms(goal: Statement) -> tuple:
    return (goal.lhs,) if isinstance(goal, Reduction) else (goal.lhs, goal.rhs)


def _check_goal(goal: Statement) -> None:
    if isinstance(goal, Reduction):
        if not is_cterm(goal.rhs):
            raise PreconditionError("the right-hand side of a reduction goal must be a constructor term")
    elif not isinstance(goal, Joinability):
        raise TypeError(goal)


def gpc_prove(rules: Iterable[Rule], goal: Statement, bounds: ProofBounds) -> Derivation | None:
    res = Prover(rules, bounds).prove(goal)
    return res.derivation


# ---------------------------------------------------------------------------
# checking derivations node by node
# ---------------------------------------------------------------------------


def check_derivation(d: Derivation, rules: Iterable[Rule], universe: Universe | None = None) -> None:
    """Raise ``DerivationError`` unless every node is a correct rule application."""
    rules = set(rules)
    _check_node(d, rules, universe)


def _fail(d: Derivation, why: str) -> DerivationError:
    return DerivationError(f"{d.tag} node {show_statement(d.statement)}: {why}")


def _kid_stmts(d: Derivation) -> list[Statement]:
    return [c.statement for c in d.children]


def _check_node(d: Derivation, rules: set, universe: Universe | None) -> None:
    st = d.statement
    if d.tag not in TAGS:
        raise _fail(d, "unknown rule tag")
    if isinstance(st, Reduction):
        if not is_cterm(st.rhs):
            raise _fail(d, "right-hand side is not a constructor term")
        if universe is not None and not universe.contains(st.rhs):
            raise _fail(d, "value outside the universe")
    if d.tag == "Bo":
        if not (isinstance(st, Reduction) and st.rhs is BOT) or d.children:
            raise _fail(d, "Bo proves only e -> _|_")
    elif d.tag == "RR":
        ok = isinstance(st, Reduction) and st.lhs == st.rhs and (
            isinstance(st.lhs, Var) or (isinstance(st.lhs, App) and st.lhs.sym.is_constructor
                                        and not st.lhs.args))
        if not ok or d.children:
            raise _fail(d, "RR proves only X -> X and c -> c")
    elif d.tag == "DS":
        l, r = st.lhs, st.rhs
        if not (isinstance(st, Reduction) and isinstance(l, App) and isinstance(r, App)
                and l.sym.is_constructor and l.sym == r.sym):
            raise _fail(d, "DS needs the same constructor on both sides")
        if _kid_stmts(d) != [Reduction(a, b) for a, b in zip(l.args, r.args)]:
            raise _fail(d, "premises do not decompose the arguments")
    elif d.tag == "Jo":
        if not isinstance(st, Joinability) or len(d.children) != 2:
            raise _fail(d, "Jo needs two premises")
        a, b = _kid_stmts(d)
        if not (isinstance(a, Reduction) and isinstance(b, Reduction) and a.rhs == b.rhs):
            raise _fail(d, "premises must reduce to the same term")
        if (a.lhs, b.lhs) != (st.lhs, st.rhs) or not is_total(a.rhs):
            raise _fail(d, "common value must be total")
    else:
        _check_or(d, rules, universe)
    for c in d.children:
        _check_node(c, rules, universe)


def _check_or(d: Derivation, rules: set, universe: Universe | None) -> None:
    st, rule, theta = d.statement, d.rule, d.theta
    if not isinstance(st, Reduction) or not isinstance(st.lhs, App) or not st.lhs.sym.is_function:
        raise _fail(d, "OR applies to function calls")
    if st.rhs is BOT:
        raise _fail(d, "OR may not conclude _|_")
    if rule not in rules or rule.head != st.lhs.sym or theta is None:
        raise _fail(d, "rule is not part of the program")
    m: Mapping = theta.as_dict()
    if set(rule.variables()) - set(m):
        raise _fail(d, "substitution leaves rule variables unbound")
    for v in rule.variables():
        if not is_cterm(m[v]) or (universe is not None and not universe.contains(m[v])):
            raise _fail(d, f"binding of {v} is not a universe constructor term")
    want = [Reduction(a, substitute(p, m)) for a, p in zip(st.lhs.args, rule.args)]
    want += [Joinability(substitute(j.lhs, m), substitute(j.rhs, m)) for j in rule.cond]
    want.append(Reduction(substitute(rule.rhs, m), st.rhs))
    if _kid_stmts(d) != want:
        raise _fail(d, "premises do not match the rule instance")


# ---------------------------------------------------------------------------
# rule instances
# ---------------------------------------------------------------------------


def rule_instances(rule: Rule, universe: Universe, cap: int = 100_000) -> list[Rule]:
    """Every instance of ``rule`` by substitutions into the universe."""
    vs = rule.variables()
    count = len(universe.terms) ** len(vs)
    if count > cap:
        raise CapExceeded("rule instances", count, cap)
    return [rule.substitute(dict(zip(vs, pick)))
            for pick in itertools.product(universe.terms, repeat=len(vs))]
