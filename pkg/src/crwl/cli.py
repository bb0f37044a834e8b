"""The ``crwl`` command line.

Exit codes: 0 success (proven, equivalent), 1 negative answer or
counterexample, 2 inconclusive or a size cap was hit, 3 usage or input error.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import FIXTURES, __version__
from .algebra import DEFAULT_CAP, CapExceeded, Universe, eval_term, lfp, satisfies
from .calculus import ProofBounds, Prover, check_derivation
from .core import CRWLError, Reduction, csym, show_signature, show_statement, variables
from .modulesys import ClosureHiding, FlattenEnv, FlattenError, expr_constructors, flatten
from .parser import ParseError, load_modules, parse_expr, parse_goal, parse_modules
from .semantics import RELATIONS, equiv
from .structured import StructuredModule, visible_model

OK, NEGATIVE, INCONCLUSIVE, USAGE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with 2
        self.print_usage(sys.stderr)
        self.exit(USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    include: list = field(default_factory=list)
    depth: int = 1
    vars: int = 1
    universe_cap: int = 200_000
    algebra_cap: int = DEFAULT_CAP
    strategy: str = "structured"
    format: str = "text"
    fixtures: bool = True

    def __post_init__(self) -> None:
        if self.depth < 0 or self.vars < 0:
            raise UsageError("--depth and --vars must be non-negative")
        if self.universe_cap < 1 or self.algebra_cap < 1:
            raise UsageError("caps must be at least 1")


def _config(args) -> RunConfig:
    include = list(args.include or [])
    env = os.environ.get("CRWL_PATH")
    if env:
        include += [p for p in env.split(os.pathsep) if p]
    include = list(dict.fromkeys(os.path.realpath(p) for p in include))
    return RunConfig(include=include, depth=args.depth, vars=args.vars,
                     universe_cap=args.universe_cap, algebra_cap=args.cap,
                     strategy=getattr(args, "strategy", "structured") or "structured",
                     format=args.format, fixtures=not args.no_fixtures)


def _modules(cfg: RunConfig) -> dict:
    mods = load_modules([FIXTURES]) if cfg.fixtures else {}
    mods.update(load_modules(cfg.include))
    return mods


def _extra_constructors(text: str | None) -> frozenset:
    if not text:
        return frozenset()
    out = set()
    for item in text.split(","):
        name, _, arity = item.strip().partition("/")
        if not name or not arity.isdigit():
            raise UsageError(f"bad constructor {item.strip()!r}; write name/arity")
        out.add(csym(name, int(arity)))
    return frozenset(out)


def _universe(cfg: RunConfig, exprs, mods, extra=frozenset()) -> Universe:
    cons = set(extra)
    for e in exprs:
        cons |= expr_constructors(e, mods)
    return Universe(cons, cfg.depth, cfg.vars, cap=cfg.universe_cap)


def _plain(expr_text: str, cfg: RunConfig, mods, extra=frozenset()):
    """Flatten to a plain module (closures materialised) plus its universe."""
    e = parse_expr(expr_text)
    u = _universe(cfg, [e], mods, extra)
    res = flatten(e, FlattenEnv(mods, strategy="materialize", universe=u))
    return res, u


def _emit(cfg: RunConfig, lines) -> None:
    for line in lines:
        print(line)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_check(args, cfg: RunConfig) -> int:
    status = OK
    for name in args.files:
        try:
            mods = parse_modules(Path(name).read_text())
        except ParseError as e:
            print(f"{name}:{e}", file=sys.stderr)
            status = USAGE
            continue
        except OSError as e:
            print(f"{name}: {e.strerror}", file=sys.stderr)
            status = USAGE
            continue
        for sm in mods:
            m = sm.module
            if cfg.format == "lines":
                print(f"module\t{sm.name}\t{show_signature(m.params)}\t{show_signature(m.exports)}\t{len(m.rules)}")
            else:
                print(f"{name}: {sm.name}: params {show_signature(m.params)}, "
                      f"exports {show_signature(m.exports)}, {len(m.rules)} rules")
            undeclared = sm.declared_exports - m.exports
            if undeclared:
                print(f"{name}: {sm.name}: warning: declared but undefined {show_signature(undeclared)}",
                      file=sys.stderr)
    return status


def _show_module(m, cfg: RunConfig, name: str = "M") -> list[str]:
    if isinstance(m, StructuredModule):
        text = m.show()
        if cfg.format == "lines":
            return [f"{'section' if l.startswith('--') else 'rule'}\t{l.lstrip('- ') if l.startswith('--') else l}"
                    for l in text.splitlines()]
        return text.splitlines()
    if cfg.format == "lines":
        return ([f"params\t{show_signature(m.params)}", f"exports\t{show_signature(m.exports)}"]
                + [f"rule\t{r}" for r in m.sorted_rules()])
    return m.show(name).splitlines()


def cmd_flatten(args, cfg: RunConfig) -> int:
    mods = _modules(cfg)
    e = parse_expr(args.expr)
    if cfg.strategy == "materialize":
        u = _universe(cfg, [e], mods, _extra_constructors(args.constructors))
        res = flatten(e, FlattenEnv(mods, strategy="materialize", universe=u))
    else:
        res = flatten(e, FlattenEnv(mods, strategy="structured"))
    for w in res.warnings:
        print(f"warning: {w}", file=sys.stderr)
    _emit(cfg, _show_module(res.module, cfg, args.name))
    if args.provenance:
        for p in res.provenance:
            print(f"-- {p}", file=sys.stderr)
    return OK


def cmd_repr(args, cfg: RunConfig) -> int:
    mods = _modules(cfg)
    res = flatten(parse_expr(args.expr), FlattenEnv(mods, strategy="structured"))
    _emit(cfg, _show_module(res.module, cfg))
    return OK


def _hides(e) -> bool:
    if isinstance(e, ClosureHiding):
        return True
    return dataclasses.is_dataclass(e) and any(
        _hides(getattr(e, f.name)) for f in dataclasses.fields(e))


def cmd_model(args, cfg: RunConfig) -> int:
    mods = _modules(cfg)
    extra = _extra_constructors(args.constructors)
    e = parse_expr(args.expr)
    if _hides(e):
        # hidden constructors stay inside; the model is read through the visible reduct
        sm = flatten(e, FlattenEnv(mods, strategy="structured")).module
        u = Universe(sm.visible_constructors | extra, cfg.depth, cfg.vars, cap=cfg.universe_cap)
        m, fs = visible_model(sm, u), sm.exports
        title = "visible-reduct model"
    else:
        res, u = _plain(args.expr, cfg, mods, extra)
        m, fs = lfp(res.module.rules, u), res.module.exports
        title = "canonical model"
    lines = m.dump(fs, show_bottom=args.bottom)
    if cfg.format == "lines":
        _emit(cfg, [line.replace(" |-> ", "\t") for line in lines])
    else:
        print(f"-- {title} at depth {u.depth}, vars {u.vars} ({len(u)} terms)")
        _emit(cfg, lines)
    return OK


def _fixpoint_answer(m, goal, u: Universe) -> str:
    """``proven`` / ``refuted`` / ``unknown`` from the canonical model."""
    if isinstance(goal, Reduction):
        if not u.contains(goal.rhs):
            return "unknown"
        return "proven" if (eval_term(m, goal.lhs) >> u.idx(goal.rhs)) & 1 else "refuted"
    return "proven" if satisfies(m, goal) else "refuted"


def cmd_prove(args, cfg: RunConfig) -> int:
    mods = _modules(cfg)
    res, u = _plain(args.expr, cfg, mods, _extra_constructors(args.constructors))
    mod = res.module
    symbols = mod.functions | mod.constructors | u.constructors
    goal = parse_goal(args.goal, symbols)
    stray = {v for t in (goal.lhs, goal.rhs) for v in variables(t)} - set(u.pool)
    if stray:
        raise UsageError("goals are closed: only universe variables X1..Xv may occur")
    answers = {}
    if args.engine in ("fixpoint", "both"):
        try:
            answers["fixpoint"] = _fixpoint_answer(lfp(mod.rules, u), goal, u)
        except CapExceeded as e:
            if args.engine == "fixpoint":
                raise
            print(f"warning: fixpoint skipped: {e}", file=sys.stderr)
            answers["fixpoint"] = "unknown"
    result = None
    if args.engine in ("gpc", "both"):
        prover = Prover(mod.rules, ProofBounds(args.max_depth, u))
        result = prover.prove(goal)
        answers["gpc"] = result.outcome
        if result.derivation is not None:
            check_derivation(result.derivation, mod.rules, u)
    lines = [f"goal\t{show_statement(goal)}"]
    lines += [f"{k}\t{v}" for k, v in answers.items()]
    if result is not None:
        if result.outcome == "proven":
            lines.append(f"depth\t{result.depth}")
        elif result.bound:
            lines.append(f"bound\t{result.bound}")
    if cfg.format == "text":
        lines = [l.replace("\t", ": ", 1) for l in lines]
    _emit(cfg, lines)
    if args.trace and result is not None and result.derivation is not None:
        print(result.derivation.show())
    vals = set(answers.values())
    if "fixpoint" in answers and "gpc" in answers:
        decided = {v for v in vals if v != "unknown"}
        if len(decided) > 1:
            print("error: the fixpoint and GPC engines disagree", file=sys.stderr)
            return INCONCLUSIVE
    if "proven" in vals:
        return OK
    if "unknown" in vals:
        return INCONCLUSIVE
    return NEGATIVE


def cmd_equiv(args, cfg: RunConfig) -> int:
    if len(args.expr) != 2:
        raise UsageError("equiv needs exactly two -e expressions")
    mods = _modules(cfg)
    exprs = [parse_expr(x) for x in args.expr]
    u = _universe(cfg, exprs, mods, _extra_constructors(args.constructors))
    env = FlattenEnv(mods, strategy="materialize", universe=u)
    p, q = (flatten(e, env).module for e in exprs)
    samples = None if args.exhaustive else args.samples
    v = equiv(p.rules, q.rules, args.relation, u, samples=samples, cap=cfg.algebra_cap, seed=args.seed)
    if args.exhaustive and not v.exhaustive:
        raise CapExceeded("algebra count", -1, cfg.algebra_cap)
    lines = v.lines()
    if cfg.format == "text":
        lines = [l.replace("\t", ": ", 1) for l in lines]
    _emit(cfg, lines)
    return {"equivalent-at-bounds": OK, "counterexample": NEGATIVE}.get(v.outcome, INCONCLUSIVE)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-I", "--include", action="append", metavar="PATH",
                        help="directory or .crwl file with module definitions (repeatable; "
                             "CRWL_PATH is appended)")
    common.add_argument("--no-fixtures", action="store_true",
                        help="do not preload the bundled example modules")
    common.add_argument("--depth", type=int, default=1, help="universe term depth (default 1)")
    common.add_argument("--vars", type=int, default=1, help="universe variables X1..Xv (default 1)")
    common.add_argument("--universe-cap", type=int, default=200_000,
                        help="refuse universes with more terms than this (default 200000)")
    common.add_argument("--cap", type=int, default=DEFAULT_CAP,
                        help="refuse exhaustive algebra enumeration above this count (default 10^6)")
    common.add_argument("--format", choices=("text", "lines"), default="text",
                        help="'lines' prints tab-separated key/value records")

    p = _Parser(prog="crwl", description="Modules, bounded models and proofs for CRWL programs.")
    p.add_argument("--version", action="version", version=f"crwl {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("check", parents=[common], help="parse module files and report signatures")
    c.add_argument("files", nargs="+")
    c.set_defaults(func=cmd_check)

    def with_expr(sp, many=False):
        if many:
            sp.add_argument("-e", "--expr", action="append", required=True, help="module expression")
        else:
            sp.add_argument("-e", "--expr", required=True, help="module expression")
        sp.add_argument("-C", "--constructors", metavar="c/n,...",
                        help="extra constructors for the universe")

    f = sub.add_parser("flatten", parents=[common], help="evaluate a module expression")
    with_expr(f)
    f.add_argument("--strategy", choices=("structured", "materialize"), default="structured")
    f.add_argument("--name", default="M", help="name used when printing a plain module")
    f.add_argument("--provenance", action="store_true", help="list the applied operations on stderr")
    f.set_defaults(func=cmd_flatten)

    r = sub.add_parser("repr", parents=[common], help="print the structured representation")
    r.add_argument("-e", "--expr", required=True)
    r.set_defaults(func=cmd_repr)

    m = sub.add_parser("model", parents=[common], help="print the bounded canonical model")
    with_expr(m)
    m.add_argument("--bottom", action="store_true", help="also list entries that are only {_|_}")
    m.set_defaults(func=cmd_model)

    pr = sub.add_parser("prove", parents=[common], help="decide a reduction or joinability goal")
    with_expr(pr)
    pr.add_argument("-g", "--goal", required=True, help="goal 'e -> t' or 'a >< b'")
    pr.add_argument("--engine", choices=("fixpoint", "gpc", "both"), default="both")
    pr.add_argument("--max-depth", type=int, default=200, help="GPC proof-depth bound (default 200)")
    pr.add_argument("--trace", action="store_true", help="print the GPC derivation")
    pr.set_defaults(func=cmd_prove)

    q = sub.add_parser("equiv", parents=[common], help="compare two programs")
    with_expr(q, many=True)
    q.add_argument("--relation", choices=RELATIONS, default="cm")
    mode = q.add_mutually_exclusive_group()
    mode.add_argument("--exhaustive", action="store_true", help="fail instead of sampling above the cap")
    mode.add_argument("--samples", type=int, help="check N random algebras instead of enumerating")
    q.add_argument("--seed", type=int, default=0)
    q.set_defaults(func=cmd_equiv)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    sys.setrecursionlimit(max(sys.getrecursionlimit(), 20_000))
    try:
        cfg = _config(args)
        return args.func(args, cfg)
    except CapExceeded as e:
        print(f"error: {e}", file=sys.stderr)
        return INCONCLUSIVE
    except ParseError as e:
        where = f"{e.path}:" if getattr(e, "path", None) else ""
        print(f"error: {where}{e}", file=sys.stderr)
        return USAGE
    except (UsageError, FlattenError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE
    except CRWLError as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE
    except BrokenPipeError:
        # output closed early (e.g. piped into head); keep the interpreter quiet on exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return OK


if __name__ == "__main__":
    sys.exit(main())
