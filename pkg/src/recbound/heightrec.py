"""Height-based recurrence analysis.

The pipeline for one recursive SCC:
  1. summarize each member's base case (recursive calls interpreted as false)
     and abstract it over the caller-visible vocabulary; every inequation
     tau <= 0 of that hull donates a relational expression tau;
  2. build the hypothetical summary phi_call (tau_k <= b_k(h), b_k(h) >= 0)
     and re-summarize each member with phi_call interpreting in-SCC calls;
  3. conjoin b_k(h+1) = tau_k and abstract over the bound symbols: every
     resulting upper inequation on some b_k(h+1) is a candidate recurrence;
  4. filter candidates to a stratified system (clamping negative coefficients
     in standard mode, deterministic tie-breaks), solve with zero initial
     conditions at height 1, and assemble tau_k <= b_k(H) with the height H
     existential and constrained by the depth bound.

Two-region analysis reruns extraction for the upper region (no non-negativity
hypothesis, recursive paths only, no clamping), solves with symbolic initial
conditions, and links them to the lower-region solutions at height H - M.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, Set, Tuple

from .depthbound import DepthBound
from .frontend.cfg import Procedure, Program
from .intraproc import finalize_summary, summary
from .logic import (
    EQ,
    Atom,
    Gensym,
    LinTerm,
    TransitionFormula,
    atom,
    const,
    dim_term,
    exp_term,
    f_and,
    f_atom,
    f_or,
    false_tf,
    hull_multi,
    mul_term,
    tf,
    var,
)
from .logic.dims import POST, PRE, BoundApp, Dim, MulDim, ProgVar, Sym, dim_key, is_nonlin
from .recurrence import (
    ExpPoly,
    RecSolution,
    StratifiedRecurrence,
    Stratum,
    format_exppoly,
    format_recurrence,
    solve_stratified,
)

log = logging.getLogger(__name__)

BoundId = Tuple[int, int]


class EmptyBaseHull(Exception):
    pass


@dataclass
class RelExpr:
    proc_index: int
    term_index: int
    term: LinTerm  # over pre/post ProgVars (and Mul dims); <= 0 on base cases

    @property
    def bound_id(self) -> BoundId:
        return (self.proc_index, self.term_index)


@dataclass
class CandidateIneq:
    head: BoundId
    rhs: Dict[Tuple[BoundId, ...], Fraction]  # monomials over height-h bounds; () = const

    def __str__(self):
        parts = []
        for mono, c in sorted(self.rhs.items()):
            if not mono:
                parts.append(str(c))
            else:
                parts.append("%s*%s" % (c, "*".join("b%d_%d(h)" % m for m in mono)))
        return "b%d_%d(h+1) <= %s" % (self.head[0], self.head[1], " + ".join(parts) or "0")


@dataclass
class Extraction:
    members: List[str]                      # SCC members, sorted
    rel_exprs: Dict[int, List[RelExpr]]     # per proc index
    candidates: List[CandidateIneq]
    base_raw: Dict[str, TransitionFormula]       # Summary(P, false), proc vocabulary
    base_finalized: Dict[str, TransitionFormula]
    empty_base: List[str] = field(default_factory=list)


@dataclass
class BoundingFunctionSet:
    solved: Dict[BoundId, ExpPoly]
    failures: Dict[BoundId, str]
    recurrence: StratifiedRecurrence


@dataclass
class ProcedureSummary:
    proc: str
    recursive: bool
    mode: str  # intraproc | standard | twoRegion | havoc
    bounded_terms: List[Tuple[LinTerm, Optional[ExpPoly], str]]  # (tau, closed form, note)
    depth: Optional[DepthBound]
    height_symbol: Optional[str]
    as_formula: TransitionFormula


def _vocabulary(program: Program, proc: Procedure) -> Set[Dim]:
    dims: Set[Dim] = set()
    for g in program.globals:
        dims.add(ProgVar(g, PRE))
        dims.add(ProgVar(g, POST))
    for p in proc.params:
        dims.add(ProgVar(p, PRE))
    dims.add(ProgVar("return", POST))
    return dims


def _bound_dim(bid: BoundId, shifted: bool) -> BoundApp:
    return BoundApp(bid[0], bid[1], shifted)


def extract_candidates(program: Program, scc: Sequence[str],
                       out_summaries: Mapping[str, TransitionFormula],
                       gensym: Gensym, upper: bool = False,
                       base: Optional[Mapping[str, TransitionFormula]] = None,
                       rel_exprs: Optional[Dict[int, List[RelExpr]]] = None) -> Extraction:
    """Alg.-2-style candidate extraction, interleaved over the SCC members."""
    members = sorted(scc)
    in_false = {name: false_tf() for name in members}
    base_raw: Dict[str, TransitionFormula] = {}
    taus: Dict[int, List[RelExpr]] = {} if rel_exprs is None else dict(rel_exprs)
    empty: List[str] = []
    for i, name in enumerate(members):
        proc = program.procedures[name]
        if base is not None and name in base:
            beta = base[name]
        else:
            beta = summary(program, proc, {**out_summaries, **in_false}, gensym)
        base_raw[name] = beta
        if rel_exprs is not None:
            continue
        vocab = frozenset(_vocabulary(program, proc))
        w_base = hull_multi(beta, [vocab])[0]
        if w_base.is_bottom():
            empty.append(name)
            taus[i] = []
            continue
        terms: List[LinTerm] = []
        for a in w_base.atoms:
            terms.append(a.term)
            if a.rel == EQ:
                terms.append(-a.term)
        taus[i] = [RelExpr(i, k, t) for k, t in enumerate(terms)]
        if not terms:
            empty.append(name)
    # hypothetical summaries
    phi_call: Dict[str, TransitionFormula] = {}
    fp = set(program.globals) | {"return"}
    for i, name in enumerate(members):
        parts = []
        for rx in taus[i]:
            b = dim_term(_bound_dim(rx.bound_id, False))
            parts.append(f_atom(atom(rx.term - b)))
            if not upper:
                parts.append(f_atom(atom(-b)))
        phi_call[name] = tf(f_and(parts), fp)
    all_bound_dims = [_bound_dim(rx.bound_id, False) for i in taus for rx in taus[i]]
    nonneg = [] if upper else [atom(-dim_term(d)) for d in all_bound_dims]
    candidates: List[CandidateIneq] = []
    flag = frozenset(members) if upper else frozenset()
    for i, name in enumerate(members):
        if not taus[i]:
            continue
        proc = program.procedures[name]
        phi_rec = summary(program, proc, {**out_summaries, **phi_call}, gensym,
                          recursive_paths_only=flag)
        eqs = [f_atom(atom(dim_term(_bound_dim(rx.bound_id, True)) - rx.term, EQ))
               for rx in taus[i]]
        ext = f_and([phi_rec.tree] + eqs + [f_atom(a) for a in nonneg])
        hdims = frozenset(all_bound_dims)
        keeps = [frozenset({_bound_dim(rx.bound_id, True)}) | hdims for rx in taus[i]]
        hulls = hull_multi(tf(ext), keeps)
        for rx, hull in zip(taus[i], hulls):
            head = _bound_dim(rx.bound_id, True)
            for a in hull.atoms:
                cand = _to_candidate(a, head, rx.bound_id)
                if cand is not None:
                    candidates.append(cand)
    if log.isEnabledFor(logging.DEBUG):
        for i in taus:
            for rx in taus[i]:
                log.debug("tau %s: %s", rx.bound_id, rx.term)
        for c in candidates:
            log.debug("candidate %s", c)
    return Extraction(members, taus, candidates, base_raw,
                      {n: finalize_summary(program, program.procedures[n], b, gensym)
                       for n, b in base_raw.items()},
                      empty)


def _to_candidate(a: Atom, head: BoundApp, head_id: BoundId) -> Optional[CandidateIneq]:
    """Rewrite a hull atom as head <= polynomial over height-h bounds."""
    c_head = a.term.coeff(head)
    if not c_head:
        return None
    if a.rel != EQ and c_head < 0:
        return None  # lower bound on the head; not a recurrence candidate
    t = a.term.scale(Fraction(-1) / c_head) + dim_term(head)  # head <= t
    rhs: Dict[Tuple[BoundId, ...], Fraction] = {}
    if t.const:
        rhs[()] = t.const
    for d, c in t.coeffs.items():
        if isinstance(d, BoundApp) and not d.shifted:
            rhs[((d.proc, d.term),)] = rhs.get(((d.proc, d.term),), Fraction(0)) + c
        elif isinstance(d, MulDim) and all(isinstance(f, BoundApp) and not f.shifted for f in d.factors):
            mono = tuple(sorted((f.proc, f.term) for f in d.factors))
            rhs[mono] = rhs.get(mono, Fraction(0)) + c
        else:
            return None  # mentions something other than height-h bounds
    return CandidateIneq(head_id, rhs)


# ---------------------------------------------------------------------------
# Stratification (fixpoint filter with deterministic tie-breaking)


def stratify(cands: Sequence[CandidateIneq], clamp: bool = True) -> StratifiedRecurrence:
    parsed = []
    for cand in cands:
        rhs = dict(cand.rhs)
        if not any(c > 0 for m, c in rhs.items() if m):
            continue  # needs some positive non-constant coefficient
        if clamp:
            rhs = {m: max(Fraction(0), c) for m, c in rhs.items()}
            rhs = {m: c for m, c in rhs.items() if c or not m}
        parsed.append((cand.head, rhs))
    uses: List[Set[BoundId]] = []
    uses_nonlin: List[Set[BoundId]] = []
    for head, rhs in parsed:
        u, un = set(), set()
        for mono, c in rhs.items():
            counts = (c > 0) if clamp else (c != 0)
            if not mono or not counts:
                continue
            for b in set(mono):
                u.add(b)
                if len(mono) > 1:
                    un.add(b)
        uses.append(u)
        uses_nonlin.append(un)
    chosen: Dict[BoundId, Tuple[int, Dict]] = {}
    strata_order: List[List[BoundId]] = []
    placed: Set[BoundId] = set()
    remaining = set(range(len(parsed)))
    while True:
        v = {j for j in remaining if parsed[j][0] not in placed}
        while True:
            defined = {parsed[j][0] for j in v} | placed
            drop = set()
            for j in v:
                if any(b not in defined for b in uses[j]):
                    drop.add(j)
                elif any(b not in placed for b in uses_nonlin[j]):
                    drop.add(j)
            if not drop:
                break
            v -= drop
        if not v:
            break
        stratum_ids: List[BoundId] = []
        by_head: Dict[BoundId, List[int]] = {}
        for j in sorted(v):
            by_head.setdefault(parsed[j][0], []).append(j)
        for head in sorted(by_head):
            js = by_head[head]
            js.sort(key=lambda j: (len(parsed[j][1]),
                                   parsed[j][1].get((), Fraction(0)),
                                   sorted(parsed[j][1])))
            chosen[head] = (js[0], parsed[js[0]][1])
            stratum_ids.append(head)
            remaining -= set(js)
        placed.update(stratum_ids)
        strata_order.append(stratum_ids)
    strata: List[Stratum] = []
    for ids in strata_order:
        ids = sorted(ids)
        idset = set(ids)
        matrix = [[Fraction(0)] * len(ids) for _ in ids]
        inhom: Dict[BoundId, Dict[Tuple, Fraction]] = {}
        for r, head in enumerate(ids):
            _, rhs = chosen[head]
            for mono, c in rhs.items():
                if len(mono) == 1 and mono[0] in idset:
                    matrix[r][ids.index(mono[0])] += c
                else:
                    inhom.setdefault(head, {})[mono] = inhom.get(head, {}).get(mono, Fraction(0)) + c
        strata.append(Stratum(ids, matrix, inhom))
    return StratifiedRecurrence(strata)


def check_stratification(rec: StratifiedRecurrence) -> None:
    """Structural validator for the three stratification criteria."""
    seen: Set[BoundId] = set()
    below: Set[BoundId] = set()
    for st in rec.strata:
        for bid in st.ids:
            assert bid not in seen, "criterion 1: %s defined twice" % (bid,)
            seen.add(bid)
        for r, bid in enumerate(st.ids):
            for mono in st.inhom.get(bid, {}):
                for b in mono:
                    assert b in below, "criterion 3: %s not in a lower stratum" % (b,)
        below |= set(st.ids)
    all_defined = seen
    for st in rec.strata:
        for r, bid in enumerate(st.ids):
            for c, other in zip(st.matrix[r], st.ids):
                if c:
                    assert other in all_defined, "criterion 2"


def solve_bounds(rec: StratifiedRecurrence) -> BoundingFunctionSet:
    sol = solve_stratified(rec, {bid: Fraction(0) for bid in rec.all_ids()}, init_index=1)
    return BoundingFunctionSet(sol.solved, sol.failures, rec)


# ---------------------------------------------------------------------------
# Assembly


def exppoly_to_linterm(e: ExpPoly, h: Sym, sym_env: Optional[Mapping[str, LinTerm]] = None) -> LinTerm:
    """Closed form as a linear term over Exp/Mul dims in the height symbol.

    Negative bases are weakened to |c| * |b|^h (sound in an upper-bound
    position for h >= 0); symbolic coefficients require positive bases.
    """
    out = const(0)
    hterm = dim_term(h)
    for (b, d), c in sorted(e.terms.items()):
        base = hterm if d else None
        piece = const(1)
        for _ in range(d):
            piece = mul_term(piece, hterm)
        if c.is_const():
            coeff = c.as_const()
            if b < 0:
                coeff, b = abs(coeff), abs(b)
        else:
            if b < 0:
                raise ValueError("negative base with symbolic coefficient")
            coeff = None
        if b != 1:
            piece = mul_term(piece, exp_term(b, hterm))
        if coeff is not None:
            out = out + piece.scale(coeff)
        else:
            cterm = const(0)
            for mono, q in c.terms.items():
                part = const(q)
                for s, p in mono:
                    for _ in range(p):
                        part = mul_term(part, sym_env[s])
                cterm = cterm + part
            out = out + mul_term(piece, cterm)
    return out


def assemble_summary(program: Program, proc: Procedure, rel_exprs: Sequence[RelExpr],
                     bounds: BoundingFunctionSet, depth: Optional[DepthBound],
                     h_name: str, gensym: Gensym, recursive: bool = True) -> ProcedureSummary:
    """Standard-mode summary: exists H >= 1. depth(H) /\\ taus <= bounds(H)."""
    h = Sym(h_name)
    parts = [f_atom(atom(const(1) - dim_term(h)))]
    bounded = []
    for rx in rel_exprs:
        b = bounds.solved.get(rx.bound_id)
        if b is None:
            note = bounds.failures.get(rx.bound_id, "no stratified recurrence")
            bounded.append((rx.term, None, note))
            continue
        bounded.append((rx.term, b, ""))
        parts.append(f_atom(atom(rx.term - exppoly_to_linterm(b, h))))
    if depth is not None:
        parts.append(depth.tree(h))
    fp = frozenset(set(program.globals) | {"return"})
    formula = tf(f_and(parts), fp)
    return ProcedureSummary(proc.name, recursive, "standard", bounded, depth,
                            h_name, formula)


def havoc_summary(program: Program, proc: Procedure, note: str = "") -> ProcedureSummary:
    fp = frozenset(set(program.globals) | {"return"})
    return ProcedureSummary(proc.name, True, "havoc", [], None, None, tf(f_and([]), fp))


def standard_analysis(program: Program, scc: Sequence[str],
                      out_summaries: Mapping[str, TransitionFormula],
                      depths: Mapping[str, DepthBound], gensym: Gensym,
                      h_name: str) -> Tuple[Dict[str, ProcedureSummary], Extraction, BoundingFunctionSet]:
    ext = extract_candidates(program, scc, out_summaries, gensym)
    rec = stratify(ext.candidates, clamp=True)
    bounds = solve_bounds(rec)
    if log.isEnabledFor(logging.DEBUG):
        names = {bid: "b%d_%d" % bid for bid in rec.all_ids()}
        log.debug("recurrence:\n%s", format_recurrence(rec, names))
        for bid, e in bounds.solved.items():
            log.debug("closed form b%d_%d(h) = %s", bid[0], bid[1], format_exppoly(e))
    sums = {}
    for i, name in enumerate(ext.members):
        sums[name] = assemble_summary(program, program.procedures[name],
                                      ext.rel_exprs.get(i, []), bounds,
                                      depths.get(name), h_name, gensym)
    return sums, ext, bounds


# ---------------------------------------------------------------------------
# Two-region analysis


def two_region_analysis(program: Program, scc: Sequence[str],
                        out_summaries: Mapping[str, TransitionFormula],
                        depths: Mapping[str, DepthBound], gensym: Gensym,
                        h_name: str, std: Optional[Tuple[Extraction, BoundingFunctionSet]] = None
                        ) -> Dict[str, ProcedureSummary]:
    if std is None:
        ext = extract_candidates(program, scc, out_summaries, gensym)
        lower = solve_bounds(stratify(ext.candidates, clamp=True))
    else:
        ext, lower = std
    upper_ext = extract_candidates(program, scc, out_summaries, gensym, upper=True,
                                   base=ext.base_raw, rel_exprs=ext.rel_exprs)
    upper_rec = stratify(upper_ext.candidates, clamp=False)
    init = {bid: "cU_%d_%d" % bid for bid in upper_rec.all_ids()}
    upper_sol = solve_stratified(upper_rec, init, init_index=1)
    h = Sym(h_name)
    m = Sym(h_name + "m")
    lsym = Sym(h_name + "l")
    out: Dict[str, ProcedureSummary] = {}
    for i, name in enumerate(ext.members):
        proc = program.procedures[name]
        depth = depths.get(name)
        parts = [
            f_atom(atom(const(1) - dim_term(m))),            # M >= 1
            f_atom(atom(dim_term(m) - dim_term(h))),         # M <= H
            f_atom(atom(dim_term(lsym) - dim_term(h) + dim_term(m), EQ)),  # L = H - M
            f_atom(atom(-dim_term(lsym))),                   # L >= 0
        ]
        if depth is not None:
            parts.append(depth.tree(h))
            parts.append(depth.tree(m))
        bounded = []
        for rx in ext.rel_exprs.get(i, []):
            bl = lower.solved.get(rx.bound_id)
            bu = upper_sol.solved.get(rx.bound_id)
            note = ""
            if bl is not None:
                parts.append(f_atom(atom(rx.term - exppoly_to_linterm(bl, h))))
            if bl is not None and bu is not None:
                sym_env = {init[bid]: exppoly_to_linterm(lower.solved[bid], lsym)
                           for bid in lower.solved if bid in init}
                try:
                    linked = exppoly_to_linterm(bu.shift(), m, sym_env)
                    parts.append(f_atom(atom(rx.term - linked)))
                except (ValueError, KeyError):
                    note = "upper-region bound not linkable"
                    bu = None
            bounded.append((rx.term, bl, note))
        fp = frozenset(set(program.globals) | {"return"})
        out[name] = ProcedureSummary(name, True, "twoRegion", bounded, depth,
                                     h_name, tf(f_and(parts), fp))
    return out
