"""Pipeline orchestration, assertion checking, and asymptotic classification.

Analysis walks the call-graph condensation bottom-up: non-recursive SCCs get
plain intra-procedural summaries; recursive SCCs get height-based recurrence
summaries combined with a depth bound (plus the two-region variant on
request).  Assertion checking summarizes entry-to-error-exit paths with the
finished summaries interpreting every call; `verified` needs UNSAT.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .depthbound import D_SYM, DepthBound, build_depth_model, depth_summary
from .frontend.callgraph import CallGraph, build_call_graph, reject_missing_base_case
from .frontend.cfg import Procedure, Program
from .heightrec import (
    BoundingFunctionSet,
    Extraction,
    ProcedureSummary,
    assemble_summary,
    exppoly_to_linterm,
    extract_candidates,
    havoc_summary,
    solve_bounds,
    standard_analysis,
    stratify,
    two_region_analysis,
)
from .intraproc import finalize_summary, path_summary, summary
from .logic import (
    Gensym,
    LinTerm,
    ResourceLimit,
    TransitionFormula,
    const,
    dim_term,
    is_sat,
    log_term,
    set_hull_iters,
    subst_term,
    var,
)
from .logic.dims import (
    POST,
    PRE,
    Dim,
    ExpDim,
    LogDim,
    MulDim,
    ProgVar,
    Sym,
    from_key,
    is_nonlin,
)
from .recurrence import ExpPoly, format_exppoly

log = logging.getLogger(__name__)

DISCLAIMER = "bounds assume the analyzed program terminates"


@dataclass
class AnalyzeOptions:
    two_region: bool = False
    hull_iters: int = 64
    timeout: Optional[float] = None
    cost_proc: Optional[str] = None
    size_param: Optional[str] = None
    cost_args: Dict[str, int] = field(default_factory=dict)


@dataclass
class AnalysisResult:
    program: Program
    call_graph: CallGraph
    summaries: Dict[str, ProcedureSummary]
    diagnostics: List[str]
    timed_out: bool = False


class AnalysisTimeout(Exception):
    pass


def analyze_program(program: Program, options: AnalyzeOptions = AnalyzeOptions()) -> AnalysisResult:
    set_hull_iters(options.hull_iters)
    gensym = Gensym()
    cg = build_call_graph(program)
    start = time.monotonic()
    finished: Dict[str, TransitionFormula] = {}
    out: Dict[str, ProcedureSummary] = {}
    diagnostics: List[str] = []
    timed_out = False
    for idx, (scc, recursive) in enumerate(zip(cg.sccs, cg.recursive)):
        if options.timeout is not None and time.monotonic() - start > options.timeout:
            timed_out = True
            for name in scc:
                out[name] = havoc_summary(program, program.procedures[name])
                out[name].recursive = recursive
                finished[name] = out[name].as_formula
            diagnostics.append("timeout: %s summarized as havoc" % ", ".join(scc))
            continue
        try:
            if not recursive:
                name = scc[0]
                proc = program.procedures[name]
                s = finalize_summary(program, proc, summary(program, proc, finished, gensym), gensym)
                out[name] = ProcedureSummary(name, False, "intraproc", [], None, None, s)
                finished[name] = s
                continue
            diag = reject_missing_base_case(scc, program)
            if diag is not None:
                diagnostics.append(diag)
                for name in scc:
                    out[name] = havoc_summary(program, program.procedures[name])
                    finished[name] = out[name].as_formula
                continue
            h_name = "H%d" % idx
            ext = extract_candidates(program, scc, finished, gensym)
            for name in ext.empty_base:
                diagnostics.append("EmptyBaseHull: %s (havoc summary)" % name)
            bounds = solve_bounds(stratify(ext.candidates, clamp=True))
            for bid, why in bounds.failures.items():
                diagnostics.append("b%d_%d in {%s}: %s" % (bid[0], bid[1], ", ".join(scc), why))
            model = build_depth_model(program, scc, ext.base_finalized, finished, gensym)
            depths = {name: depth_summary(program, model, name, gensym) for name in sorted(scc)}
            if options.two_region:
                sums = two_region_analysis(program, scc, finished, depths, gensym,
                                           h_name, std=(ext, bounds))
            else:
                sums = {}
                for i, name in enumerate(ext.members):
                    sums[name] = assemble_summary(program, program.procedures[name],
                                                  ext.rel_exprs.get(i, []), bounds,
                                                  depths.get(name), h_name, gensym)
            for name, s in sums.items():
                out[name] = s
                finished[name] = s.as_formula
        except ResourceLimit as e:
            diagnostics.append("ResourceLimit in {%s}: %s" % (", ".join(scc), e))
            for name in scc:
                out[name] = havoc_summary(program, program.procedures[name])
                out[name].recursive = recursive
                finished[name] = out[name].as_formula
    return AnalysisResult(program, cg, out, diagnostics, timed_out)


# ---------------------------------------------------------------------------
# Assertion checking


def assert_locations(program: Program) -> List[Tuple[str, str]]:
    """(proc, location) pairs in source order."""
    locs = []
    for name, proc in program.procedures.items():
        found = sorted({e.assert_loc for e in proc.cfg.weighted
                        if e.dst == proc.error_exit and e.assert_loc},
                       key=lambda s: int(s.rsplit(":", 1)[1]))
        locs.extend((name, l) for l in found)
    return locs


def check_assertions(program: Program, result: AnalysisResult,
                     escalate: bool = True) -> List[Tuple[str, str]]:
    """(location, verdict) per assertion; over-approximate, so never 'falsified'."""
    gensym = Gensym(prefix="$a")
    interp = {name: s.as_formula for name, s in result.summaries.items()}
    verdicts = []
    escalated: Optional[AnalysisResult] = None
    for proc_name, loc in assert_locations(program):
        proc = program.procedures[proc_name]
        verdict = _one_assertion(program, proc, loc, interp, gensym)
        if verdict == "unknown" and escalate and any(
                s.mode == "standard" for s in result.summaries.values()):
            if escalated is None:
                escalated = analyze_program(program, AnalyzeOptions(two_region=True))
            interp2 = {n: s.as_formula for n, s in escalated.summaries.items()}
            verdict = _one_assertion(program, proc, loc, interp2, Gensym(prefix="$a2"))
        verdicts.append((loc, verdict))
    return verdicts


def _one_assertion(program, proc, loc, interp, gensym) -> str:
    try:
        err = path_summary(program, proc, proc.entry, proc.error_exit, interp,
                           gensym, assert_loc=loc)
        return "verified" if is_sat(err.tree) is None else "unknown"
    except ResourceLimit:
        return "unknown"


# ---------------------------------------------------------------------------
# Asymptotic classification


@dataclass(frozen=True)
class GrowthKey:
    """Comparable growth rate: exponential part base**slope, then n^alpha log^k."""

    exp_base: Fraction = Fraction(1)   # combined: base ** slope, kept as a pair
    exp_slope: Fraction = Fraction(0)
    poly_base: Fraction = Fraction(2)  # polynomial exponent alpha = mult*log2(poly_base)
    poly_mult: Fraction = Fraction(0)
    logs: int = 0

    def exp_active(self):
        return self.exp_slope != 0 and self.exp_base != 1

    @staticmethod
    def _cmp_pow(b1: Fraction, e1: Fraction, b2: Fraction, e2: Fraction) -> int:
        """compare b1**e1 vs b2**e2 for b > 0 exactly (cross powers)."""
        if e1 == 0 and e2 == 0:
            return 0
        den = e1.denominator * e2.denominator
        p1 = b1 ** int(e1 * den)
        p2 = b2 ** int(e2 * den)
        return -1 if p1 < p2 else (0 if p1 == p2 else 1)

    def compare(self, o: "GrowthKey") -> int:
        a, b = self, o
        ea = a.exp_base if a.exp_active() else Fraction(1)
        eb = b.exp_base if b.exp_active() else Fraction(1)
        c = self._cmp_pow(ea, a.exp_slope if a.exp_active() else Fraction(0),
                          eb, b.exp_slope if b.exp_active() else Fraction(0))
        if c:
            return c
        c = self._cmp_pow(a.poly_base, a.poly_mult, b.poly_base, b.poly_mult)
        if c:
            return c
        return (a.logs > b.logs) - (a.logs < b.logs)

    def combine(self, o: "GrowthKey") -> Optional["GrowthKey"]:
        """Product of growth rates."""
        if self.exp_active() and o.exp_active() and self.exp_base != o.exp_base:
            if self._cmp_pow(self.exp_base, Fraction(1), o.exp_base, Fraction(1)) == 0:
                pass
            else:
                # r1^an * r2^bn: fold exactly only when integral slopes
                if self.exp_slope.denominator == 1 and o.exp_slope.denominator == 1:
                    base = self.exp_base ** self.exp_slope.numerator * o.exp_base ** o.exp_slope.numerator
                    return GrowthKey(base, Fraction(1), Fraction(2),
                                     self._poly_as_mult() + o._poly_as_mult(), self.logs + o.logs)
                return None
        eb, es = (self.exp_base, self.exp_slope) if self.exp_active() else (o.exp_base, o.exp_slope)
        if self.exp_active() and o.exp_active():
            es = self.exp_slope + o.exp_slope
        poly = self._merge_poly(o)
        if poly is None:
            return None
        pb, pm = poly
        return GrowthKey(eb, es, pb, pm, self.logs + o.logs)

    def _poly_as_mult(self) -> Fraction:
        return self.poly_mult if self.poly_base == 2 else None

    def _merge_poly(self, o):
        if self.poly_mult == 0:
            return (o.poly_base, o.poly_mult)
        if o.poly_mult == 0:
            return (self.poly_base, self.poly_mult)
        if self.poly_base == o.poly_base:
            return (self.poly_base, self.poly_mult + o.poly_mult)
        # alpha1 + alpha2 = log2(b1^m1 * b2^m2) when slopes integral
        if self.poly_mult.denominator == 1 and o.poly_mult.denominator == 1:
            return (self.poly_base ** self.poly_mult.numerator *
                    o.poly_base ** o.poly_mult.numerator, Fraction(1))
        return None


K_CONST = GrowthKey()


def class_tag(key: Optional[GrowthKey]) -> str:
    """Canonical class string: O(1), O(n), O(n^2), O(n*log(n)), O(2^n),
    O(n*2^n), O(n^log2(3)), ... or 'unknown'."""
    if key is None:
        return "unknown"
    parts = []
    # polynomial part
    alpha_rat: Optional[Fraction] = None
    if key.poly_mult == 0:
        alpha_rat = Fraction(0)
    elif key.poly_base == 2:
        alpha_rat = key.poly_mult
    else:
        b, m = key.poly_base, key.poly_mult
        if m.denominator == 1:
            bb = b ** m.numerator
            k = GrowthKey._cmp_pow
            # integral alpha when bb is a power of two
            a = _exact_log2(bb)
            alpha_rat = a if a is not None else None
            if alpha_rat is None:
                parts.append("n^log2(%s)" % _fmt_frac(bb))
        else:
            parts.append("n^(%s*log2(%s))" % (m, _fmt_frac(b)))
    if alpha_rat is not None and alpha_rat != 0:
        if alpha_rat == 1:
            parts.append("n")
        elif alpha_rat.denominator == 1:
            parts.append("n^%d" % alpha_rat.numerator)
        else:
            parts.append("n^(%s)" % alpha_rat)
    if key.logs:
        parts.append("log(n)" if key.logs == 1 else "log(n)^%d" % key.logs)
    if key.exp_active():
        if key.exp_slope.denominator == 1:
            r = key.exp_base ** key.exp_slope.numerator
            parts.append("%s^n" % _fmt_frac(r))
        else:
            parts.append("%s^(%s*n)" % (_fmt_frac(key.exp_base), key.exp_slope))
    if not parts:
        return "O(1)"
    return "O(%s)" % "*".join(parts)


def _fmt_frac(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else "%d/%d" % (q.numerator, q.denominator)


def _exact_log2(q: Fraction) -> Optional[Fraction]:
    k = 0
    x = q
    while x > 1:
        x /= 2
        k += 1
    while x < 1:
        x *= 2
        k -= 1
    return Fraction(k) if x == 1 else None


def classify_term(expr: LinTerm, size: ProgVar) -> Optional[GrowthKey]:
    """Dominant growth of an upper-bound expression in one size variable."""
    best = K_CONST
    for d, c in expr.coeffs.items():
        if c <= 0:
            continue  # negative terms only shrink an upper bound
        k = _dim_growth(d, size)
        if k is None:
            return None
        if k.compare(best) > 0:
            best = k
    return best


def _dim_growth(d: Dim, size: ProgVar) -> Optional[GrowthKey]:
    if isinstance(d, ProgVar):
        if d == size:
            return GrowthKey(poly_mult=Fraction(1))
        return None
    if isinstance(d, Sym):
        return None
    if isinstance(d, LogDim):
        t = from_key(d.arg)
        if set(t.dims()) <= {size}:
            return GrowthKey(logs=1)
        return None
    if isinstance(d, MulDim):
        out = K_CONST
        for f in d.factors:
            k = _dim_growth(f, size)
            if k is None:
                return None
            out = out.combine(k)
            if out is None:
                return None
        return out
    if isinstance(d, ExpDim):
        t = from_key(d.expo)
        if t.is_const():
            return K_CONST
        if set(t.dims()) == {size}:
            return GrowthKey(exp_base=d.base, exp_slope=t.coeff(size))
        if len(t.coeffs) == 1:
            (inner, a), = t.coeffs.items()
            if isinstance(inner, LogDim) and set(from_key(inner.arg).dims()) <= {size}:
                # base^(a*log_b(n)) = n^(a*log_b(base)) ; express over log2
                if inner.base == 2:
                    return GrowthKey(poly_base=d.base, poly_mult=a)
                return None
        return None
    return None


# ---------------------------------------------------------------------------
# Cost-bound extraction


def depth_upper_exprs(depth: DepthBound, bind: Mapping[Dim, LinTerm]) -> Optional[List[List[LinTerm]]]:
    """Per disjunct, the candidate upper bounds on the depth symbol.

    Linear atoms give D <= t directly; exponential atoms c*b^D <= t give
    D <= log_b(t/c).  A disjunct with no upper bound makes the whole depth
    unbounded (None).
    """
    out = []
    for p in depth.disjuncts:
        cands: List[LinTerm] = []
        for a in p.atoms:
            t = subst_term(a.term, dict(bind))
            cd = t.coeff(D_SYM)
            if cd > 0 or (cd and a.rel == "eq"):
                if cd < 0:
                    t = -t
                    cd = -cd
                rest = (t - dim_term(D_SYM, cd)).scale(Fraction(-1) / cd)
                if not any(isinstance(x, Sym) for x in rest.dims()):
                    cands.append(rest)
                continue
            for dd, c in t.coeffs.items():
                if isinstance(dd, ExpDim) and c > 0:
                    e = from_key(dd.expo)
                    if set(e.coeffs) == {D_SYM}:
                        a_c = e.coeff(D_SYM)
                        rest = (t - dim_term(dd, c)).scale(Fraction(-1) / c)
                        if rest.coeffs and any(isinstance(x, Sym) for x in rest.dims()):
                            continue
                        if rest.is_const() and rest.const <= 0:
                            continue
                        try:
                            cands.append(log_term(dd.base, rest).scale(Fraction(1) / a_c)
                                         - const(e.const / a_c))
                        except ValueError:
                            continue
        if not cands:
            return None
        out.append(cands)
    return out


def cost_bound(result: AnalysisResult, options: AnalyzeOptions) -> Tuple[Optional[str], Optional[str]]:
    """(printed bound, class tag) for cost' - cost of the designated procedure."""
    program = result.program
    if "cost" not in program.globals or not options.cost_proc or not options.size_param:
        return None, None
    s = result.summaries.get(options.cost_proc)
    if s is None or s.depth is None:
        return None, None
    proc = program.procedures[options.cost_proc]
    size = ProgVar(options.size_param, PRE)
    bind: Dict[Dim, LinTerm] = {}
    for p, v in options.cost_args.items():
        bind[ProgVar(p, PRE)] = const(v)
    cpre, cpost = ProgVar("cost", PRE), ProgVar("cost", POST)
    dexprs = depth_upper_exprs(s.depth, bind)
    best: Optional[Tuple[GrowthKey, str]] = None
    for tau, closed, _note in s.bounded_terms:
        if closed is None:
            continue
        a = tau.coeff(cpost)
        if a <= 0 or tau.coeff(cpre) != -a:
            continue
        # cost' - cost <= closed(H)/a + correction, correction linear over params
        correction = (tau.scale(Fraction(-1) / a) + dim_term(cpost) - dim_term(cpre)).scale(-1)
        correction = subst_term(correction, bind)
        if any(isinstance(d, Sym) for d in correction.dims()):
            continue
        if dexprs is None:
            continue
        worst: Optional[Tuple[GrowthKey, LinTerm]] = None
        ok = True
        for cands in dexprs:
            bestd = None
            for dexpr in cands:
                dexpr = subst_term(dexpr, bind)
                h = Sym("$class_h")
                expr = exppoly_to_linterm(closed, h).scale(Fraction(1) / a) + correction
                expr = subst_term(expr, {h: dexpr})
                key = classify_term(expr, size)
                if key is None:
                    continue
                if bestd is None or key.compare(bestd[0]) < 0:
                    bestd = (key, expr)
            if bestd is None:
                ok = False
                break
            if worst is None or bestd[0].compare(worst[0]) > 0:
                worst = bestd
        if not ok or worst is None:
            continue
        if best is None or worst[0].compare(best[0]) < 0:
            best = (worst[0], str(worst[1]))
    if best is None:
        return None, None
    return best[1], class_tag(best[0])


# ---------------------------------------------------------------------------
# Reports


@dataclass
class AnalysisReport:
    procedures: List[dict]
    assertions: List[dict]
    cost: dict
    diagnostics: List[str]
    timing_ms: int
    disclaimer: str = DISCLAIMER

    def to_json(self) -> str:
        return json.dumps(
            {"procedures": self.procedures, "assertions": self.assertions,
             "cost": self.cost, "diagnostics": self.diagnostics,
             "timing_ms": self.timing_ms, "disclaimer": self.disclaimer},
            indent=2)

    @staticmethod
    def from_json(text: str) -> "AnalysisReport":
        d = json.loads(text)
        return AnalysisReport(d["procedures"], d["assertions"], d["cost"],
                              d["diagnostics"], d["timing_ms"], d["disclaimer"])

    def to_text(self) -> str:
        lines = []
        for p in self.procedures:
            lines.append("proc %s [%s%s]" % (p["name"], p["mode"],
                                             ", recursive" if p["recursive"] else ""))
            for b in p["bounds"]:
                rhs = b["closedForm"] if b["closedForm"] is not None else "(unsolved)"
                lines.append("  %s <= %s   [%s]" % (b["term"], rhs, b["heightSymbol"] or "-"))
            if p["depthBound"]:
                lines.append("  depth: %s" % p["depthBound"])
        for a in self.assertions:
            lines.append("assert %s: %s" % (a["location"], a["verdict"]))
        if self.cost["class"] is not None:
            lines.append("cost: %s in %s" % (self.cost["bound"], self.cost["class"]))
        for d in self.diagnostics:
            lines.append("note: %s" % d)
        lines.append("(%s)" % self.disclaimer)
        return "\n".join(lines)


def _print_depth(depth: Optional[DepthBound]) -> Optional[str]:
    if depth is None:
        return None
    uppers = depth_upper_exprs(depth, {})
    if uppers and all(len(u) >= 1 for u in uppers):
        picks = [min((str(e) for e in u), key=len) for u in uppers]
        uniq = sorted(set(picks), key=picks.index)
        if len(uniq) == 1:
            return "D <= %s" % uniq[0]
        return "D <= max(%s)" % ", ".join(uniq)
    return " or ".join("(%s)" % p for p in depth.disjuncts)


def build_report(result: AnalysisResult, verdicts: List[Tuple[str, str]],
                 options: AnalyzeOptions, elapsed_ms: int) -> AnalysisReport:
    procs = []
    for name in result.program.procedures:  # declaration order
        s = result.summaries[name]
        bounds = []
        for term, closed, note in s.bounded_terms:
            bounds.append({
                "term": str(term),
                "closedForm": format_exppoly(closed) if closed is not None else None,
                "heightSymbol": s.height_symbol,
            })
        procs.append({
            "name": name,
            "recursive": s.recursive,
            "bounds": bounds,
            "depthBound": _print_depth(s.depth),
            "mode": s.mode,
        })
    bound, tag = cost_bound(result, options)
    return AnalysisReport(
        procedures=procs,
        assertions=[{"location": l, "verdict": v} for l, v in verdicts],
        cost={"bound": bound, "class": tag},
        diagnostics=list(result.diagnostics),
        timing_ms=elapsed_ms,
    )
