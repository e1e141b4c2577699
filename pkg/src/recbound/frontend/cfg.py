"""Control-flow graphs and statement lowering.

Each statement becomes one edge.  A weighted edge carries both a small list
of executable ops (used by the concrete interpreter) and the transition
formula derived from those same ops, so the two semantics cannot drift.
Assignments produce an equality atom plus an implicit frame (footprints);
asserts produce a guarded edge into the error exit; integer division by a
positive literal c is lowered by floor semantics (c*q <= x <= c*q + c-1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

from ..logic import (
    EQ,
    Gensym,
    LinTerm,
    TransitionFormula,
    Tree,
    atom,
    const,
    dim_term,
    f_and,
    f_atom,
    f_or,
    mul_term,
    tf,
    var,
)
from ..logic.dims import POST, PRE
from . import ast as A
from .parser import ParseError, parse_ast


@dataclass(frozen=True)
class WeightedEdge:
    src: int
    dst: int
    formula: TransitionFormula
    ops: Tuple = ()
    assert_loc: Optional[str] = None  # set on edges into the error exit


@dataclass(frozen=True)
class CallEdge:
    src: int
    dst: int
    callee: str
    args: Tuple  # expression ASTs, caller vocabulary
    target: Optional[str]  # variable receiving the return value


@dataclass
class Cfg:
    vertices: Set[int]
    weighted: List[WeightedEdge]
    calls: List[CallEdge]

    def out_edges(self, v):
        for e in self.weighted:
            if e.src == v:
                yield e
        for e in self.calls:
            if e.src == v:
                yield e


@dataclass
class Procedure:
    name: str
    params: List[str]
    locals: List[str]
    cfg: Cfg
    entry: int
    exit: int
    error_exit: int
    decl: A.ProcDecl


@dataclass
class Program:
    globals: List[str]
    procedures: Dict[str, Procedure]
    ast: A.ProgramAst

    def var_names(self, proc: Procedure) -> List[str]:
        return list(self.globals) + list(proc.params) + list(proc.locals) + ["return"]


# ---------------------------------------------------------------------------
# Expression and condition lowering


def lower_expr(e, gs: Gensym):
    """(LinTerm over pre-vocabulary and fresh syms, side-condition atoms)."""
    if isinstance(e, A.Num):
        return const(e.value), []
    if isinstance(e, A.Var):
        return var(e.name, PRE), []
    if isinstance(e, A.Bin):
        lt, ls = lower_expr(e.lhs, gs)
        rt, rs = lower_expr(e.rhs, gs)
        if e.op == "+":
            return lt + rt, ls + rs
        if e.op == "-":
            return lt - rt, ls + rs
        return mul_term(lt, rt), ls + rs
    if isinstance(e, A.Div):
        num, side = lower_expr(e.lhs, gs)
        q = dim_term(gs("q"))
        c = e.divisor
        side = side + [atom(q.scale(c) - num), atom(num - q.scale(c) - const(c - 1))]
        return q, side
    if isinstance(e, A.Nondet):
        v = dim_term(gs("nd"))
        if e.lo is None:
            return v, []
        lt, ls = lower_expr(e.lo, gs)
        ht, hs = lower_expr(e.hi, gs)
        # lo <= v < hi over integers
        return v, ls + hs + [atom(lt - v), atom(v - ht + const(1))]
    raise TypeError(e)


def lower_cond(c, gs: Gensym, positive: bool = True) -> Tree:
    if isinstance(c, A.Star):
        return f_and([])  # true either way
    if isinstance(c, A.Not):
        return lower_cond(c.arg, gs, not positive)
    if isinstance(c, A.BoolOp):
        both = [lower_cond(c.lhs, gs, positive), lower_cond(c.rhs, gs, positive)]
        want_and = (c.op == "&&") == positive
        return f_and(both) if want_and else f_or(both)
    if isinstance(c, A.Cmp):
        lt, ls = lower_expr(c.lhs, gs)
        rt, rs = lower_expr(c.rhs, gs)
        side = f_and([f_atom(a) for a in ls + rs])
        t = lt - rt
        op = c.op if positive else {"==": "!=", "!=": "==", "<": ">=", "<=": ">", ">": "<=", ">=": "<"}[c.op]
        if op == "==":
            body = f_atom(atom(t, EQ))
        elif op == "!=":
            body = f_or([f_atom(atom(t + const(1))), f_atom(atom(-t + const(1)))])
        elif op == "<":
            body = f_atom(atom(t + const(1)))
        elif op == "<=":
            body = f_atom(atom(t))
        elif op == ">":
            body = f_atom(atom(-t + const(1)))
        else:
            body = f_atom(atom(-t))
        return f_and([side, body])
    raise TypeError(c)


# ---------------------------------------------------------------------------
# Ops: the executable content of a weighted edge


@dataclass(frozen=True)
class OpAssign:
    target: str
    expr: object


@dataclass(frozen=True)
class OpAssume:
    cond: object
    positive: bool


@dataclass(frozen=True)
class OpTick:
    expr: object


def formula_of_ops(ops: Sequence, gs: Gensym) -> TransitionFormula:
    parts: List[Tree] = []
    footprint = set()
    for op in ops:
        if isinstance(op, OpAssign):
            t, side = lower_expr(op.expr, gs)
            parts.extend(f_atom(a) for a in side)
            parts.append(f_atom(atom(var(op.target, POST) - t, EQ)))
            footprint.add(op.target)
        elif isinstance(op, OpTick):
            t, side = lower_expr(op.expr, gs)
            parts.extend(f_atom(a) for a in side)
            parts.append(f_atom(atom(var("cost", POST) - var("cost", PRE) - t, EQ)))
            footprint.add("cost")
        elif isinstance(op, OpAssume):
            parts.append(lower_cond(op.cond, gs, op.positive))
        else:
            raise TypeError(op)
    return tf(f_and(parts), footprint)


# ---------------------------------------------------------------------------
# Procedure lowering


class _Builder:
    def __init__(self, gs: Gensym):
        self.gs = gs
        self.n = 0
        self.weighted: List[WeightedEdge] = []
        self.calls: List[CallEdge] = []

    def vertex(self) -> int:
        self.n += 1
        return self.n - 1

    def edge(self, u, v, ops=(), assert_loc=None):
        self.weighted.append(WeightedEdge(u, v, formula_of_ops(ops, self.gs), tuple(ops), assert_loc))

    def lower_stmts(self, proc_name, stmts, u, exit_v, error_v) -> int:
        for s in stmts:
            if isinstance(s, A.Assign):
                v = self.vertex()
                self.edge(u, v, [OpAssign(s.target, s.expr)])
                u = v
            elif isinstance(s, A.Tick):
                v = self.vertex()
                self.edge(u, v, [OpTick(s.expr)])
                u = v
            elif isinstance(s, A.Assume):
                v = self.vertex()
                self.edge(u, v, [OpAssume(s.cond, True)])
                u = v
            elif isinstance(s, A.Assert):
                v = self.vertex()
                loc = "%s:%d" % (proc_name, s.line)
                self.weighted.append(
                    WeightedEdge(u, error_v, formula_of_ops([OpAssume(s.cond, False)], self.gs),
                                 (OpAssume(s.cond, False),), loc))
                self.edge(u, v, [OpAssume(s.cond, True)])
                u = v
            elif isinstance(s, A.Return):
                if s.expr is not None:
                    self.edge(u, exit_v, [OpAssign("return", s.expr)])
                else:
                    self.edge(u, exit_v)
                u = self.vertex()  # unreachable continuation, pruned later
            elif isinstance(s, A.If):
                t0, e0 = self.vertex(), self.vertex()
                self.edge(u, t0, [OpAssume(s.cond, True)])
                self.edge(u, e0, [OpAssume(s.cond, False)])
                t1 = self.lower_stmts(proc_name, s.then, t0, exit_v, error_v)
                e1 = self.lower_stmts(proc_name, s.els, e0, exit_v, error_v)
                join = self.vertex()
                self.edge(t1, join)
                self.edge(e1, join)
                u = join
            elif isinstance(s, A.While):
                head = self.vertex()
                self.edge(u, head)
                body0 = self.vertex()
                after = self.vertex()
                self.edge(head, body0, [OpAssume(s.cond, True)])
                self.edge(head, after, [OpAssume(s.cond, False)])
                body1 = self.lower_stmts(proc_name, s.body, body0, exit_v, error_v)
                self.edge(body1, head)
                u = after
            elif isinstance(s, A.Call):
                v = self.vertex()
                self.calls.append(CallEdge(u, v, s.callee, s.args, s.target))
                u = v
            else:
                raise TypeError(s)
        return u


def lower_procedure(prog_ast: A.ProgramAst, decl: A.ProcDecl, gs: Gensym) -> Procedure:
    b = _Builder(gs)
    entry = b.vertex()
    first = b.vertex()
    exit_v = b.vertex()
    error_v = b.vertex()
    b.edge(entry, first)
    last = b.lower_stmts(decl.name, decl.body, first, exit_v, error_v)
    b.edge(last, exit_v)  # implicit fallthrough
    cfg = Cfg(set(range(b.n)), b.weighted, b.calls)
    _prune_unreachable(cfg, entry)
    return Procedure(decl.name, list(decl.params), list(decl.locals), cfg, entry, exit_v, error_v, decl)


def _prune_unreachable(cfg: Cfg, entry: int):
    seen = {entry}
    work = [entry]
    while work:
        v = work.pop()
        for e in cfg.out_edges(v):
            if e.dst not in seen:
                seen.add(e.dst)
                work.append(e.dst)
    cfg.vertices = seen
    cfg.weighted = [e for e in cfg.weighted if e.src in seen and e.dst in seen]
    cfg.calls = [e for e in cfg.calls if e.src in seen and e.dst in seen]


def parse(source: str) -> Program:
    """Parse and lower to CFG form; raises ParseError with line/column."""
    prog_ast = parse_ast(source)
    gs = Gensym(prefix="$c")
    procedures = {}
    for name, decl in prog_ast.procedures.items():
        procedures[name] = lower_procedure(prog_ast, decl, gs)
    return Program(list(prog_ast.globals), procedures, prog_ast)
