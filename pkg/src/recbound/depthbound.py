"""Depth-bound analysis.

Builds a call-free over-approximating model of a recursive SCC with an
auxiliary depth counter: descending into a call binds the callee's parameters
to the argument values, havocs its other locals and increments the counter;
skipping a call havocs globals and `return` but keeps locals.  Exits happen
only through a base-case summary, so the final counter value is the depth at
which some base case runs, and the path summary from a procedure's start
vertex relates every achievable base-case depth to the pre-state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .frontend.cfg import CallEdge, Procedure, Program, WeightedEdge, lower_expr
from .intraproc import bind_call, eval_edges
from .logic import (
    EQ,
    Gensym,
    Polyhedron,
    TransitionFormula,
    atom,
    const,
    dim_term,
    f_and,
    f_atom,
    f_or,
    project_formula,
    substitute_tree,
    tf,
    tree_dims,
    var,
)
from .logic.dims import POST, PRE, ProgVar, Sym

DEPTH_VAR = "$D"
D_SYM = Sym("D")


@dataclass
class DepthBound:
    proc: str
    disjuncts: List[Polyhedron]  # over {Sym D} and the pre-vocabulary, D >= 1 entailed

    def tree(self, d_dim: Sym = D_SYM):
        branches = []
        for p in self.disjuncts:
            atoms = [f_atom(a) for a in p.atoms]
            branches.append(f_and(atoms))
        t = f_or(branches)
        if d_dim != D_SYM:
            t = substitute_tree(t, {D_SYM: dim_term(d_dim)})
        return t


@dataclass
class DepthModel:
    vertices: set
    pairs: List[Tuple[int, int]]
    formulas: List[TransitionFormula]
    starts: Dict[str, int]  # per-procedure start vertex
    exit: int


def build_depth_model(program: Program, scc: Sequence[str],
                      base_summaries: Mapping[str, TransitionFormula],
                      out_summaries: Mapping[str, TransitionFormula],
                      gensym: Gensym) -> DepthModel:
    members = sorted(scc)
    offset: Dict[str, int] = {}
    n = 0
    for name in members:
        offset[name] = n
        n += max(program.procedures[name].cfg.vertices) + 1
    starts = {}
    for name in members:
        starts[name] = n
        n += 1
    exit_v = n
    n += 1
    pairs: List[Tuple[int, int]] = []
    formulas: List[TransitionFormula] = []

    def add(u, v, formula):
        pairs.append((u, v))
        formulas.append(formula)

    for name in members:
        proc = program.procedures[name]
        off = offset[name]
        # start: D := 1
        add(starts[name], proc.entry + off,
            tf(f_atom(atom(var(DEPTH_VAR, POST) - const(1), EQ)), {DEPTH_VAR}))
        # exit through the base case
        add(proc.entry + off, exit_v, base_summaries[name])
        for e in proc.cfg.weighted:
            if e.dst == proc.error_exit:
                continue
            add(e.src + off, e.dst + off, e.formula)
        for e in proc.cfg.calls:
            if e.callee in offset:
                callee = program.procedures[e.callee]
                # descend: bind params, havoc other callee locals, D += 1
                parts = [f_atom(atom(var(DEPTH_VAR, POST) - var(DEPTH_VAR, PRE) - const(1), EQ))]
                fp = {DEPTH_VAR}
                for p, arg in zip(callee.params, e.args):
                    t, side = lower_expr(arg, gensym)
                    parts.extend(f_atom(a) for a in side)
                    parts.append(f_atom(atom(var(p, POST) - t, EQ)))
                    fp.add(p)
                fp.update(callee.locals)
                fp.add("return")
                add(e.src + offset[name], callee.entry + offset[e.callee],
                    tf(f_and(parts), fp))
                # skip: havoc globals and return, keep locals
                add(e.src + offset[name], e.dst + offset[name],
                    tf(f_and([]), set(program.globals) | {"return"}))
            else:
                callee = program.procedures[e.callee]
                add(e.src + offset[name], e.dst + offset[name],
                    bind_call(program, callee, out_summaries[e.callee], e, gensym))
    return DepthModel(set(range(n)), pairs, formulas, starts, exit_v)


def depth_summary(program: Program, model: DepthModel, proc_name: str,
                  gensym: Gensym, max_disjuncts: int = 24) -> DepthBound:
    """Path summary start -> exit, projected onto {D} and the pre-vocabulary."""
    proc = program.procedures[proc_name]
    s = eval_edges(model.pairs, model.formulas, model.vertices,
                   model.starts[proc_name], model.exit, gensym)
    tree = substitute_tree(s.tree, {ProgVar(DEPTH_VAR, POST): dim_term(D_SYM)})
    tree = f_and([tree, f_atom(atom(const(1) - dim_term(D_SYM)))])  # D >= 1
    keep = {D_SYM} | {ProgVar(x, PRE) for x in list(program.globals) + list(proc.params)}
    disjuncts = project_formula(tree, frozenset(keep), max_disjuncts=max_disjuncts)
    return DepthBound(proc_name, disjuncts)
