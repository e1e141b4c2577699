"""Concrete bounded interpreter: the analyzer's ground truth.

Executes procedures with a hard stack-height limit h (recursion beyond the
limit prunes the branch, so the collected pairs under-approximate exactly the
height-bounded relational semantics; base cases count as height 1).  Nondet
choices are enumerated over a finite range, so within a finite input grid the
relation is complete and max/min claims about value sets are meaningful.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, FrozenSet, Iterable, Iterator, List, Optional, Set, Tuple

from .frontend import ast as A
from .frontend.cfg import CallEdge, OpAssign, OpAssume, OpTick, Procedure, Program, WeightedEdge
from .logic import TransitionFormula, is_sat
from .logic.dims import POST, PRE, MulDim, ProgVar

State = Tuple[Tuple[str, int], ...]  # sorted (name, value) pairs


class BudgetExceeded(Exception):
    pass


@dataclass
class ExecContext:
    program: Program
    h: int
    nd_lo: int = -2
    nd_hi: int = 3
    budget: int = 2_000_000
    steps: int = 0
    violations: List[Tuple[str, str, dict]] = field(default_factory=list)

    def tick(self):
        self.steps += 1
        if self.steps > self.budget:
            raise BudgetExceeded()


@dataclass
class BoundedRelation:
    proc: str
    h: int
    pairs: Set[Tuple[State, State]]
    complete: bool
    violations: List[Tuple[str, str, dict]] = field(default_factory=list)


def _freeze(env: dict, names: Iterable[str]) -> State:
    return tuple(sorted((n, env[n]) for n in names))


def eval_expr(e, env: dict, ctx: ExecContext) -> Iterator[int]:
    if isinstance(e, A.Num):
        yield e.value
    elif isinstance(e, A.Var):
        yield env[e.name]
    elif isinstance(e, A.Bin):
        for l in eval_expr(e.lhs, env, ctx):
            for r in eval_expr(e.rhs, env, ctx):
                yield l + r if e.op == "+" else l - r if e.op == "-" else l * r
    elif isinstance(e, A.Div):
        for l in eval_expr(e.lhs, env, ctx):
            yield l // e.divisor
    elif isinstance(e, A.Nondet):
        if e.lo is None:
            yield from range(ctx.nd_lo, ctx.nd_hi + 1)
        else:
            for lo in eval_expr(e.lo, env, ctx):
                for hi in eval_expr(e.hi, env, ctx):
                    yield from range(lo, hi)  # lo <= v < hi
    else:
        raise TypeError(e)


def eval_cond(c, env: dict, ctx: ExecContext) -> Iterator[bool]:
    if isinstance(c, A.Star):
        yield True
        yield False
    elif isinstance(c, A.Not):
        for b in eval_cond(c.arg, env, ctx):
            yield not b
    elif isinstance(c, A.BoolOp):
        for l in eval_cond(c.lhs, env, ctx):
            for r in eval_cond(c.rhs, env, ctx):
                yield (l and r) if c.op == "&&" else (l or r)
    elif isinstance(c, A.Cmp):
        ops = {"==": lambda a, b: a == b, "!=": lambda a, b: a != b,
               "<": lambda a, b: a < b, "<=": lambda a, b: a <= b,
               ">": lambda a, b: a > b, ">=": lambda a, b: a >= b}
        for l in eval_expr(c.lhs, env, ctx):
            for r in eval_expr(c.rhs, env, ctx):
                yield ops[c.op](l, r)
    else:
        raise TypeError(c)


def _exec_ops(ops, env: dict, ctx: ExecContext) -> Iterator[dict]:
    if not ops:
        yield env
        return
    op, rest = ops[0], ops[1:]
    if isinstance(op, OpAssign):
        for v in eval_expr(op.expr, env, ctx):
            e2 = dict(env)
            e2[op.target] = v
            yield from _exec_ops(rest, e2, ctx)
    elif isinstance(op, OpTick):
        for v in eval_expr(op.expr, env, ctx):
            e2 = dict(env)
            e2["cost"] = env["cost"] + v
            yield from _exec_ops(rest, e2, ctx)
    elif isinstance(op, OpAssume):
        for truth in eval_cond(op.cond, env, ctx):
            if truth == op.positive:
                yield from _exec_ops(rest, env, ctx)
    else:
        raise TypeError(op)


def run_cfg(proc: Procedure, env: dict, depth: int, ctx: ExecContext) -> Iterator[dict]:
    """All exit states of proc started in env at the given stack depth."""

    def walk(v: int, st: dict) -> Iterator[dict]:
        ctx.tick()
        if v == proc.exit:
            yield st
            return
        for e in proc.cfg.out_edges(v):
            if isinstance(e, WeightedEdge):
                for st2 in _exec_ops(e.ops, st, ctx):
                    if e.dst == proc.error_exit:
                        ctx.violations.append((proc.name, e.assert_loc or "?", dict(st2)))
                        continue
                    yield from walk(e.dst, st2)
            else:
                if depth + 1 > ctx.h:
                    continue  # stack limit: prune the branch
                callee = ctx.program.procedures[e.callee]
                argvals = [list(eval_expr(a, st, ctx)) for a in e.args]
                for vals in itertools.product(*argvals):
                    sub = {g: st[g] for g in ctx.program.globals}
                    sub.update({p: v for p, v in zip(callee.params, vals)})
                    for lv in callee.locals:
                        sub[lv] = 0
                    sub["return"] = 0
                    for out in run_cfg(callee, sub, depth + 1, ctx):
                        st2 = dict(st)
                        for g in ctx.program.globals:
                            st2[g] = out[g]
                        if e.target:
                            st2[e.target] = out["return"]
                        yield from walk(e.dst, st2)

    yield from walk(proc.entry, env)


def initial_env(program: Program, proc: Procedure, assignment: Dict[str, int]) -> dict:
    env = {g: 0 for g in program.globals}
    env.update({p: 0 for p in proc.params})
    env.update({l: 0 for l in proc.locals})
    env["return"] = 0
    env.update(assignment)
    return env


def enumerate_relation(program: Program, proc_name: str, grid: Dict[str, List[int]],
                       h: int, nd_range: Tuple[int, int] = (-2, 3),
                       budget: int = 2_000_000) -> BoundedRelation:
    """Depth-limited exhaustive execution over the input grid; h=0 is empty."""
    proc = program.procedures[proc_name]
    ctx = ExecContext(program, h, nd_range[0], nd_range[1], budget)
    names = program.var_names(proc)
    pairs: Set[Tuple[State, State]] = set()
    complete = True
    if h >= 1:
        keys = sorted(grid)
        try:
            for combo in itertools.product(*(grid[k] for k in keys)):
                env = initial_env(program, proc, dict(zip(keys, combo)))
                pre = _freeze(env, names)
                for out in run_cfg(proc, env, 1, ctx):
                    pairs.add((pre, _freeze(out, names)))
        except BudgetExceeded:
            complete = False
    return BoundedRelation(proc_name, h, pairs, complete, ctx.violations)


def value_set(rel: BoundedRelation, term) -> Set[Fraction]:
    """Evaluate a relational expression on every pair."""
    out = set()
    for pre, post in rel.pairs:
        out.add(eval_rel_expr(term, dict(pre), dict(post)))
    return out


def eval_rel_expr(term, pre: dict, post: dict) -> Fraction:
    def dim_value(d):
        if isinstance(d, ProgVar):
            env = pre if d.vocab == PRE else post
            return Fraction(env[d.name])
        if isinstance(d, MulDim):
            v = Fraction(1)
            for f in d.factors:
                v *= dim_value(f)
            return v
        raise TypeError("relational expressions range over program variables: %s" % (d,))

    v = Fraction(term.const)
    for d, c in term.coeffs.items():
        v += c * dim_value(d)
    return v


def check_summary(summary: TransitionFormula, rel: BoundedRelation, program: Program) -> List[Tuple[State, State]]:
    """Pairs the summary fails to admit (empty list = no violations)."""
    from .logic import EQ, atom, const, f_atom, f_and, var

    proc = program.procedures[rel.proc]
    pre_names = set(program.globals) | set(proc.params)
    violations = []
    for pre, post in rel.pairs:
        pre_d, post_d = dict(pre), dict(post)
        ok_frame = all(pre_d[x] == post_d[x] for x in pre_d
                       if x not in summary.footprint and x in post_d)
        if not ok_frame:
            violations.append((pre, post))
            continue
        binds = []
        for x, v in pre_d.items():
            if x in pre_names:
                binds.append(f_atom(atom(var(x, PRE) - const(v), EQ)))
        for x, v in post_d.items():
            if x in summary.footprint:
                binds.append(f_atom(atom(var(x, POST) - const(v), EQ)))
        if is_sat(f_and([summary.tree] + binds)) is None:
            violations.append((pre, post))
    return violations


# ---------------------------------------------------------------------------
# Direct AST evaluation (independent of the CFG; used by round-trip tests)


def eval_proc_ast(program: Program, name: str, env: dict, depth: int, ctx: ExecContext) -> Iterator[dict]:
    decl = program.procedures[name].decl

    def run(stmts, st) -> Iterator[Tuple[dict, bool]]:
        """Yields (state, returned); `returned` short-circuits the block."""
        if not stmts:
            yield st, False
            return
        s, rest = stmts[0], list(stmts[1:])
        ctx.tick()
        if isinstance(s, A.Assign):
            for v in eval_expr(s.expr, st, ctx):
                yield from run(rest, {**st, s.target: v})
        elif isinstance(s, A.Tick):
            for v in eval_expr(s.expr, st, ctx):
                yield from run(rest, {**st, "cost": st["cost"] + v})
        elif isinstance(s, A.Assume):
            for t in eval_cond(s.cond, st, ctx):
                if t:
                    yield from run(rest, st)
        elif isinstance(s, A.Assert):
            for t in eval_cond(s.cond, st, ctx):
                if t:
                    yield from run(rest, st)
                else:
                    ctx.violations.append((name, "%s:%d" % (name, s.line), dict(st)))
        elif isinstance(s, A.Return):
            if s.expr is None:
                yield st, True
            else:
                for v in eval_expr(s.expr, st, ctx):
                    yield {**st, "return": v}, True
        elif isinstance(s, A.If):
            for t in eval_cond(s.cond, st, ctx):
                for st2, done in run(s.then if t else s.els, st):
                    if done:
                        yield st2, True
                    else:
                        yield from run(rest, st2)
        elif isinstance(s, A.While):
            for t in eval_cond(s.cond, st, ctx):
                if t:
                    for st2, done in run(s.body, st):
                        if done:
                            yield st2, True
                        else:
                            yield from run([s] + rest, st2)
                else:
                    yield from run(rest, st)
        elif isinstance(s, A.Call):
            if depth + 1 > ctx.h:
                return  # prune: stack limit
            callee = program.procedures[s.callee]
            argvals = [list(eval_expr(a, st, ctx)) for a in s.args]
            for vals in itertools.product(*argvals):
                sub = {g: st[g] for g in program.globals}
                sub.update(dict(zip(callee.params, vals)))
                for lv in callee.locals:
                    sub[lv] = 0
                sub["return"] = 0
                for out in eval_proc_ast(program, s.callee, sub, depth + 1, ctx):
                    st2 = dict(st)
                    for g in program.globals:
                        st2[g] = out[g]
                    if s.target:
                        st2[s.target] = out["return"]
                    yield from run(rest, st2)
        else:
            raise TypeError(s)

    for st, _done in run(decl.body, env):
        yield st
