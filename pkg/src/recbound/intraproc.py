"""Intra-procedural summarization.

Path expressions (regular expressions over CFG edges, by state elimination)
are evaluated into transition formulas: sequence is relational composition,
choice is disjunction, and star is recurrence-style loop summarization.

A star over `body` is summarized as

    (K = 0 and identity)  or  (K >= 1 and closed forms for K-1 iterations
                               composed with one explicit copy of body)

so the body's own guard supplies both first-iteration facts (via the hull of
its pre-state) and last-iteration facts (via the explicit copy), which is what
pins down trip counts and logarithmic depth bounds after composition.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .frontend.cfg import CallEdge, Procedure, Program, WeightedEdge, lower_expr
from .logic import (
    EQ,
    Atom,
    Gensym,
    TransitionFormula,
    abstract_hull,
    atom,
    compose,
    const,
    dim_term,
    disjoin_all,
    exp_term,
    f_and,
    f_atom,
    false_tf,
    hull_multi,
    identity,
    mul_term,
    substitute_tree,
    tf,
    tree_dims,
    tree_entails_atom,
    var,
)
from .logic.dims import POST, PRE, BoundApp, ProgVar, Sym, dim_key, is_nonlin

log = logging.getLogger(__name__)

REC_FLAG = "$rec"


class UnresolvedCall(Exception):
    pass


# ---------------------------------------------------------------------------
# Path expressions


@dataclass(frozen=True)
class PathExpr:
    kind: str  # edge | seq | choice | star | eps | empty
    edge: int = -1
    parts: Tuple["PathExpr", ...] = ()


EPS = PathExpr("eps")
EMPTY = PathExpr("empty")


def p_edge(i: int) -> PathExpr:
    return PathExpr("edge", i)


def p_seq(a: PathExpr, b: PathExpr) -> PathExpr:
    if a.kind == "empty" or b.kind == "empty":
        return EMPTY
    if a.kind == "eps":
        return b
    if b.kind == "eps":
        return a
    return PathExpr("seq", parts=(a, b))


def p_choice(a: Optional[PathExpr], b: PathExpr) -> PathExpr:
    if a is None or a.kind == "empty":
        return b
    if b.kind == "empty":
        return a
    if a == b:
        return a
    return PathExpr("choice", parts=(a, b))


def p_star(a: Optional[PathExpr]) -> PathExpr:
    if a is None or a.kind == "empty" or a.kind == "eps":
        return EPS
    return PathExpr("star", parts=(a,))


def path_expr(edges: Sequence[Tuple[int, int]], vertices, source: int, target: int) -> PathExpr:
    """Regular expression denoting exactly the source->target paths."""
    emap: Dict[Tuple[int, int], PathExpr] = {}
    for i, (u, v) in enumerate(edges):
        emap[(u, v)] = p_choice(emap.get((u, v)), p_edge(i))
    for w in sorted(vertices):
        if w in (source, target):
            continue
        loop = p_star(emap.pop((w, w), None))
        ins = [(u, pe) for (u, v), pe in list(emap.items()) if v == w]
        outs = [(v, pe) for (u, v), pe in list(emap.items()) if u == w]
        for u, _ in ins:
            del emap[(u, w)]
        for v, _ in outs:
            del emap[(w, v)]
        for u, pin in ins:
            for v, pout in outs:
                emap[(u, v)] = p_choice(emap.get((u, v)), p_seq(p_seq(pin, loop), pout))
    if source == target:
        return p_star(emap.get((source, source)))
    ss = emap.get((source, source))
    st = emap.get((source, target))
    ts = emap.get((target, source))
    tt = emap.get((target, target))
    if st is None:
        return EMPTY
    tail = p_seq(st, p_star(tt))
    around = p_choice(ss, p_seq(tail, ts) if ts is not None else EMPTY)
    return p_seq(p_star(around), tail)


# ---------------------------------------------------------------------------
# Loop summarization


def _invariant_dims(body: TransitionFormula):
    """Dims whose value is the same at every iteration: unmodified pre-state
    variables and bounding-function symbols.  Plain Sym dims are per-iteration
    existentials (composition midpoints, inner loop counters) and must not
    appear in closed-form right-hand sides."""
    fp = body.footprint
    inv = set()
    for d in tree_dims(body.tree):
        if isinstance(d, ProgVar):
            if d.vocab == PRE and d.name not in fp:
                inv.add(d)
        elif isinstance(d, BoundApp):
            inv.add(d)
    return inv


def summarize_loop(body: TransitionFormula, gensym: Gensym) -> TransitionFormula:
    """Over-approximate any number of iterations of body."""
    if body.is_false():
        return identity()
    fp = sorted(body.footprint)
    inv = _invariant_dims(body)
    # hull of per-iteration deltas and of the body's pre-state
    deltas = {x: gensym("d_" + x) for x in fp}
    datoms = [f_atom(atom(dim_term(deltas[x]) - var(x, POST) + var(x, PRE), EQ)) for x in fp]
    dtree = f_and([body.tree] + datoms)
    keep_delta = frozenset(set(deltas.values()) | inv)
    keep_pre = frozenset({ProgVar(x, PRE) for x in fp} | inv)
    dh, pre_hull = hull_multi(tf(dtree), [keep_delta, keep_pre])
    rules: Dict[str, List[Tuple[str, object]]] = {x: [] for x in fp}
    for a in dh.atoms:
        touched = [x for x in fp if deltas[x] in a.term.coeffs]
        if len(touched) != 1:
            continue
        x = touched[0]
        c = a.term.coeff(deltas[x])
        t = (a.term - dim_term(deltas[x], c)).scale(Fraction(-1) / c)
        if a.rel == EQ:
            rules[x].append(("eq", t))
        elif a.rel in ("le", "lt"):
            rules[x].append(("le", t) if c > 0 else ("ge", t))
    for x in fp:
        if any(k == "eq" for k, _ in rules[x]):
            rules[x] = [r for r in rules[x] if r[0] == "eq"][:1]
            continue
        if not rules[x]:
            for c in (2, 3, 4):
                if tree_entails_atom(body.tree, atom(var(x, POST).scale(c) - var(x, PRE))) and \
                   tree_entails_atom(body.tree, atom(-var(x, PRE))):
                    rules[x].append(("halve", c))
                    break
    if log.isEnabledFor(logging.DEBUG):
        for x in fp:
            log.debug("star rule %s: %s", x, [(k, str(t)) for k, t in rules[x]])
    k_dim = gensym("K")
    k_term = dim_term(k_dim)
    j_term = k_term - const(1)  # iterations before the explicit last one
    mids = {x: dim_term(gensym("l_" + x)) for x in fp}
    parts = [f_atom(atom(const(1) - k_term))]  # K >= 1
    for x in fp:
        for kind, t in rules[x]:
            if kind == "eq":
                parts.append(f_atom(atom(mids[x] - var(x, PRE) - mul_term(j_term, t), EQ)))
            elif kind == "le":
                parts.append(f_atom(atom(mids[x] - var(x, PRE) - mul_term(j_term, t))))
            elif kind == "ge":
                parts.append(f_atom(atom(var(x, PRE) + mul_term(j_term, t) - mids[x])))
            else:  # halve with literal factor t: t^J * mid <= x
                parts.append(f_atom(atom(mul_term(exp_term(t, j_term), mids[x]) - var(x, PRE))))
    parts.extend(f_atom(a) for a in pre_hull.atoms)
    last = substitute_tree(body.tree, {ProgVar(x, PRE): mids[x] for x in fp})
    parts.append(last)
    many = tf(f_and(parts), fp)
    out = disjoin_all([identity(), many])
    return out


# ---------------------------------------------------------------------------
# Call binding and path summaries


def bind_call(program: Program, callee: Procedure, interp: TransitionFormula,
              edge: CallEdge, gensym: Gensym, mark_flag: bool = False) -> TransitionFormula:
    """Caller-side formula for a call edge given an interpretation of the callee."""
    if interp.is_false():
        return false_tf()
    globals_ = set(program.globals)
    mapping = {}
    side = []
    for p, arg in zip(callee.params, edge.args):
        a = gensym("a_" + p)
        mapping[ProgVar(p, PRE)] = dim_term(a)
        t, extra = lower_expr(arg, gensym)
        side.extend(extra)
        side.append(atom(dim_term(a) - t, EQ))
    ret = gensym("r")
    mapping[ProgVar("return", POST)] = dim_term(ret)
    # callee-local leftovers (param posts, locals, pre-return) become fresh syms
    for d in tree_dims(interp.tree):
        if isinstance(d, ProgVar) and d.name not in globals_ and d not in mapping:
            mapping[d] = dim_term(gensym("x_" + d.name))
    tree = substitute_tree(interp.tree, mapping)
    parts = [tree] + [f_atom(a) for a in side]
    fp = set(interp.footprint & globals_)
    if edge.target:
        parts.append(f_atom(atom(var(edge.target, POST) - dim_term(ret), EQ)))
        fp.add(edge.target)
    if mark_flag:
        parts.append(f_atom(atom(var(REC_FLAG, POST) - const(1), EQ)))
        fp.add(REC_FLAG)
    return tf(f_and(parts), fp)


def path_summary(program: Program, proc: Procedure, source: int, target: int,
                 call_interp: Mapping[str, TransitionFormula], gensym: Gensym,
                 flag_callees: frozenset = frozenset(),
                 assert_loc: Optional[str] = None) -> TransitionFormula:
    """Over-approximation of every source->target path relation.

    call_interp must cover every callee; error edges are kept only when the
    target is the error exit (restricted to assert_loc when given).
    """
    pairs = []
    formulas = []
    for e in proc.cfg.weighted:
        if e.dst == proc.error_exit and (target != proc.error_exit or
                                         (assert_loc is not None and e.assert_loc != assert_loc)):
            continue
        pairs.append((e.src, e.dst))
        formulas.append(e.formula)
    for e in proc.cfg.calls:
        if e.callee not in call_interp:
            raise UnresolvedCall(e.callee)
        callee = program.procedures[e.callee]
        formulas.append(bind_call(program, callee, call_interp[e.callee], e, gensym,
                                  mark_flag=e.callee in flag_callees))
        pairs.append((e.src, e.dst))
    return eval_edges(pairs, formulas, proc.cfg.vertices, source, target, gensym)


def eval_edges(pairs: Sequence[Tuple[int, int]], formulas: Sequence[TransitionFormula],
               vertices, source: int, target: int, gensym: Gensym) -> TransitionFormula:
    """Path-expression evaluation over an explicit edge list (shared DAG memoized)."""
    pe = path_expr(pairs, vertices, source, target)
    memo: Dict[int, TransitionFormula] = {}

    def ev(node: PathExpr) -> TransitionFormula:
        key = id(node)
        if key in memo:
            return memo[key]
        if node.kind == "edge":
            r = formulas[node.edge]
        elif node.kind == "eps":
            r = identity()
        elif node.kind == "empty":
            r = false_tf()
        elif node.kind == "seq":
            r = compose(ev(node.parts[0]), ev(node.parts[1]), gensym)
        elif node.kind == "choice":
            r = disjoin_all([ev(node.parts[0]), ev(node.parts[1])])
        else:
            r = summarize_loop(ev(node.parts[0]), gensym)
        memo[key] = r
        return r

    return ev(pe)


def summary(program: Program, proc: Procedure, call_interp: Mapping[str, TransitionFormula],
            gensym: Gensym, recursive_paths_only: frozenset = frozenset()) -> TransitionFormula:
    """Entry-to-exit summary; recursive_paths_only names in-SCC callees whose
    calls must occur on every admitted path (the upper-region restriction)."""
    s = path_summary(program, proc, proc.entry, proc.exit, call_interp, gensym,
                     flag_callees=recursive_paths_only)
    if recursive_paths_only:
        flag_post = ProgVar(REC_FLAG, POST)
        flag_pre = ProgVar(REC_FLAG, PRE)
        tree = f_and([s.tree, f_atom(atom(dim_term(flag_post) - const(1), EQ)),
                      f_atom(atom(dim_term(flag_pre), EQ))])
        tree = substitute_tree(tree, {flag_post: dim_term(gensym("rf")),
                                      flag_pre: dim_term(gensym("rf"))})
        s = tf(tree, s.footprint - {REC_FLAG})
    return s


def finalize_summary(program: Program, proc: Procedure, s: TransitionFormula,
                     gensym: Gensym) -> TransitionFormula:
    """Canonical caller-facing summary: globals pre/post, params pre, return post."""
    globals_ = set(program.globals)
    mapping = {}
    for d in tree_dims(s.tree):
        if not isinstance(d, ProgVar) or d.name in globals_:
            continue
        if d.name == "return" and d.vocab == POST:
            continue
        if d.name in proc.params and d.vocab == PRE:
            continue
        mapping[d] = dim_term(gensym("loc_" + d.name))
    tree = substitute_tree(s.tree, mapping) if mapping else s.tree
    return tf(tree, s.footprint & (globals_ | {"return"}))
