"""Satisfiability and symbolic abstraction (lazy convex hull).

isSat enumerates DNF cubes depth-first; every cube is first *strengthened*
with sound consequences of the non-linear dimensions it mentions (products,
exponentials), then handed to the exact simplex.  The same strengthening runs
inside the hull loop, so entailment answers and hull atoms agree.

Strengthening rules (all are true facts about the intended semantics, so
conjoining them keeps UNSAT answers sound):
  - dims occurring inside a non-linear dim are rewritten through explicitly
    entailed equalities toward smaller dims (Mul(H,H) with H = n+1 becomes
    the expanded square over n);
  - Exp dims get sign/bound axioms from LP bounds on their exponents, and
    collapse to constants when the exponent is fixed;
  - Mul dims collapse when a factor is fixed, and otherwise get McCormick
    envelope bounds from LP bounds on their factors.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

from .dims import (
    Dim,
    ExpDim,
    LinTerm,
    LogDim,
    MulDim,
    base_dims,
    const,
    dim_key,
    dim_term,
    from_key,
    is_nonlin,
    mul_dims,
    subst_dim,
)
from .formula import (
    Atom,
    TransitionFormula,
    Tree,
    atom,
    eval_tree,
    f_and,
    f_atom,
    f_or,
    iter_cubes,
    negate_tree,
    select_cube,
    tree_dims,
)
from .polyhedron import Polyhedron, bottom, join, make_poly, project
from .sat import EQ, LE, LT, ResourceLimit, Simplex

CUBE_BUDGET = 60000
DEFAULT_HULL_ITERS = 64

_hull_iters = [DEFAULT_HULL_ITERS]


def set_hull_iters(n: int):
    _hull_iters[0] = n


# ---------------------------------------------------------------------------
# Cube strengthening


def _eq_subst_map(atoms: Sequence[Atom]) -> Dict[Dim, LinTerm]:
    """Triangular map d -> term-over-smaller-dims from explicit equalities."""
    mapping: Dict[Dim, LinTerm] = {}
    for a in sorted((a for a in atoms if a.rel == EQ), key=lambda a: a.key()):
        t = a.term
        if not t.coeffs:
            continue
        d = max(t.coeffs, key=dim_key)
        if is_nonlin(d) or d in mapping:
            continue
        c = t.coeff(d)
        mapping[d] = (t - dim_term(d, c)).scale(Fraction(-1) / c)
    # chase: values may mention mapped (strictly smaller) dims
    for _ in range(len(mapping)):
        changed = False
        for d, t in mapping.items():
            if any(x in mapping for x in t.dims()):
                out = const(t.const)
                for x, c in t.coeffs.items():
                    out = out + (mapping[x].scale(c) if x in mapping else dim_term(x, c))
                mapping[d] = out
                changed = True
        if not changed:
            break
    return mapping


def _rewrite_inner(atoms: List[Atom], mapping: Dict[Dim, LinTerm]) -> Tuple[List[Atom], bool]:
    """Apply mapping only *inside* non-linear dims."""
    if not mapping:
        return atoms, False
    out = []
    changed = False
    for a in atoms:
        t = const(a.term.const)
        touched = False
        for d, c in a.term.coeffs.items():
            if is_nonlin(d) and any(x in mapping for x in base_dims(d)):
                t = t + subst_dim(d, mapping).scale(c)
                touched = True
            else:
                t = t + dim_term(d, c)
        out.append(atom(t, a.rel) if touched else a)
        changed = changed or touched
    return out, changed


class _Bounds:
    """Cached LP sup/inf queries over one cube."""

    def __init__(self, atoms: Sequence[Atom]):
        self.sx = Simplex([(a.term, a.rel) for a in atoms])
        self.feasible = self.sx.check()
        self.cache = {}

    def _bound(self, term: LinTerm, hi: bool):
        key = (term.key(), hi)
        if key not in self.cache:
            status, val = self.sx.maximize(term if hi else term.scale(-1))
            if status == "unbounded":
                self.cache[key] = None
            else:
                self.cache[key] = val if hi else val.scale(-1)
        return self.cache[key]

    def sup(self, term):
        return self._bound(term, True)

    def inf(self, term):
        return self._bound(term, False)

    def fixed_value(self, term) -> Optional[Fraction]:
        s, i = self.sup(term), self.inf(term)
        if s is not None and i is not None and s == i and s.b == 0:
            return s.a
        return None


def _floor(q: Fraction) -> int:
    return q.numerator // q.denominator


def _ceil(q: Fraction) -> int:
    return -((-q.numerator) // q.denominator)


def strengthen_cube(cube: Iterable[Atom], rounds: int = 3) -> List[Atom]:
    atoms = list(cube)
    if not any(is_nonlin(d) for a in atoms for d in a.term.dims()):
        return atoms
    for _ in range(rounds):
        mapping = _eq_subst_map(atoms)
        atoms, rewrote = _rewrite_inner(atoms, mapping)
        nonlin = sorted({d for a in atoms for d in a.term.dims() if is_nonlin(d)}, key=dim_key)
        if not nonlin:
            return atoms
        lp = _Bounds(atoms)
        if not lp.feasible:
            return atoms
        derived: List[Atom] = []
        subst: Dict[Dim, LinTerm] = {}
        for d in nonlin:
            if isinstance(d, ExpDim):
                e = from_key(d.expo)
                v = lp.fixed_value(e)
                if v is not None and v.denominator == 1:
                    subst[d] = const(d.base ** v.numerator)
                    continue
                derived.append(atom(-dim_term(d), LE))  # exp > 0, closed form
                s, i = lp.sup(e), lp.inf(e)
                if d.base > 1:
                    if i is not None:
                        derived.append(atom(const(d.base ** _floor(i.a)) - dim_term(d), LE))
                    if s is not None:
                        derived.append(atom(dim_term(d) - const(d.base ** _ceil(s.a)), LE))
                else:
                    if s is not None:
                        derived.append(atom(const(d.base ** _ceil(s.a)) - dim_term(d), LE))
                    if i is not None:
                        derived.append(atom(dim_term(d) - const(d.base ** _floor(i.a)), LE))
            elif isinstance(d, MulDim):
                # collapse factors with LP-fixed values
                vals = {f: lp.fixed_value(dim_term(f)) for f in set(d.factors)}
                if any(v is not None for v in vals.values()):
                    coeff = Fraction(1)
                    acc = const(1)
                    for f in d.factors:
                        if vals[f] is not None:
                            coeff *= vals[f]
                        else:
                            nxt = const(0)
                            for dd, cc in acc.coeffs.items():
                                nxt = nxt + mul_dims(dd, f).scale(cc)
                            if acc.const:
                                nxt = nxt + dim_term(f, acc.const)
                            acc = nxt
                    subst[d] = acc.scale(coeff)
                    continue
                if len(d.factors) == 2:
                    fa, fb = d.factors
                    ta, tb = dim_term(fa), dim_term(fb)
                    la, ua = lp.inf(ta), lp.sup(ta)
                    lb, ub = lp.inf(tb), lp.sup(tb)
                    m = dim_term(d)
                    if la is not None and lb is not None:
                        derived.append(atom(ta.scale(lb.a) + tb.scale(la.a) - const(la.a * lb.a) - m, LE))
                    if ua is not None and ub is not None:
                        derived.append(atom(ta.scale(ub.a) + tb.scale(ua.a) - const(ua.a * ub.a) - m, LE))
                    if la is not None and ub is not None:
                        derived.append(atom(m - ta.scale(ub.a) - tb.scale(la.a) + const(la.a * ub.a), LE))
                    if ua is not None and lb is not None:
                        derived.append(atom(m - ta.scale(lb.a) - tb.scale(ua.a) + const(ua.a * lb.a), LE))
        if subst:
            atoms = [atom(_subst_top(a.term, subst), a.rel) for a in atoms]
            derived = [atom(_subst_top(a.term, subst), a.rel) for a in derived]
        seen = {a.key() for a in atoms}
        fresh = [a for a in derived if a.term.coeffs and a.key() not in seen]
        atoms.extend(fresh)
        if not subst and not fresh and not rewrote:
            break
    return atoms


def _subst_top(t: LinTerm, mapping: Dict[Dim, LinTerm]) -> LinTerm:
    out = const(t.const)
    for d, c in t.coeffs.items():
        out = out + (mapping[d].scale(c) if d in mapping else dim_term(d, c))
    return out


# ---------------------------------------------------------------------------
# Satisfiability


def iter_feasible_cubes(tree: Tree, extra: Sequence[Atom] = ()):
    """Yield (model, strengthened atoms) for every feasible DNF cube.

    Depth-first branch enumeration with LP pruning at every disjunction:
    the atoms collected so far are checked for feasibility before any branch
    is entered (plain-linear infeasibility of a prefix kills all extensions,
    so pruning cannot lose cubes).
    """
    budget = [CUBE_BUDGET]

    def search(pending: List[Tree], atoms: List[Atom]):
        ats = list(atoms)
        work = list(pending)
        while work:
            t = work.pop()
            if t.kind == "true":
                continue
            if t.kind == "false":
                return
            if t.kind == "atom":
                ats.append(t.a)
                continue
            if t.kind == "and":
                work.extend(t.children)
                continue
            # disjunction: prune, then branch
            budget[0] -= 1
            if budget[0] < 0:
                raise ResourceLimit("cube budget in isSat")
            if not Simplex([(a.term, a.rel) for a in ats]).check():
                return
            for c in t.children:
                yield from search(work + [c], ats)
            return
        final = strengthen_cube(ats)
        sx = Simplex([(a.term, a.rel) for a in final])
        if sx.check():
            yield sx.model([(a.term, a.rel) for a in final]), final

    yield from search([tree] + [f_atom(a) for a in extra], [])


def find_model(tree: Tree, extra: Sequence[Atom] = ()):
    """(model, strengthened cube) for tree /\\ extra, or None."""
    for hit in iter_feasible_cubes(tree, extra):
        return hit
    return None


def is_sat(f, extra: Sequence[Atom] = ()):
    """Model of f (dims outside the cube default to 0) or None for UNSAT."""
    tree = f.tree if isinstance(f, TransitionFormula) else f
    r = find_model(tree, extra)
    if r is None:
        return None
    env, _ = r
    full = dict(env)
    for d in tree_dims(tree):
        full.setdefault(d, Fraction(0))
    return full


def tree_entails_atom(tree: Tree, a: Atom) -> bool:
    for br_term, br_rel in _neg_branches(a):
        if find_model(tree, [Atom(br_term, br_rel)]) is not None:
            return False
    return True


def _neg_branches(a: Atom):
    if a.rel == LE:
        return [(-a.term, LT)]
    if a.rel == LT:
        return [(-a.term, LE)]
    return [(a.term, LT), (-a.term, LT)]


def tree_entails_tree(f: Tree, g: Tree) -> bool:
    """f |= g with every dim free; see tf_entails for existential symbols."""
    return find_model(f_and([f, negate_tree(g)])) is None


def tf_entails(f: TransitionFormula, g: TransitionFormula) -> bool:
    """Entailment of transition relations: frames explicit, g's symbols existential.

    Sym dims are existential witnesses (composition midpoints, heights), so the
    right-hand side is first projected onto its non-Sym vocabulary; projection
    of the DNF cube by cube is exact for the rational relaxation.
    """
    from .dims import Sym as _Sym
    from .formula import frame_atoms

    names = f.footprint | g.footprint
    ft = f_and([f.tree] + frame_atoms(names - f.footprint))
    gt = f_and([g.tree] + frame_atoms(names - g.footprint))
    gdims = tree_dims(gt)
    keep = {d for d in gdims if not is_nonlin(d) and not isinstance(d, _Sym)}
    if keep == {d for d in gdims if not is_nonlin(d)}:
        return tree_entails_tree(ft, gt)
    polys = project_formula(gt, frozenset(keep))
    negs = [negate_tree(_poly_tree(p)) for p in polys]
    return find_model(f_and([ft] + negs)) is None


def tf_equivalent(f: TransitionFormula, g: TransitionFormula) -> bool:
    return tf_entails(f, g) and tf_entails(g, f)


# ---------------------------------------------------------------------------
# Symbolic abstraction


def _keepx(atoms: Sequence[Atom], keep: FrozenSet[Dim]) -> FrozenSet[Dim]:
    extra = {
        d
        for a in atoms
        for d in a.term.dims()
        if is_nonlin(d) and set(base_dims(d)) <= keep
    }
    return frozenset(keep) | extra


def abstract_hull(f, keep, extra: Sequence[Atom] = (), max_iters: Optional[int] = None) -> Polyhedron:
    """Alg.-1-style loop: model, cube, project, join, exclude, repeat."""
    return hull_multi(f, [frozenset(keep)], extra, max_iters)[0]


def hull_multi(f, keeps: List[FrozenSet[Dim]], extra: Sequence[Atom] = (), max_iters: Optional[int] = None) -> List[Polyhedron]:
    """One model-guided loop refining several hulls (projections shared)."""
    tree = f.tree if isinstance(f, TransitionFormula) else f
    cap = max_iters if max_iters is not None else _hull_iters[0]
    keeps = [frozenset(k) for k in keeps]
    ps = [bottom(k) for k in keeps]
    union_keep = frozenset().union(*keeps) if keeps else frozenset()
    stable = [False] * len(keeps)
    iters = 0
    while not all(stable):
        idx = stable.index(False)
        r = find_model(f_and([tree, negate_tree(_poly_tree(ps[idx]))]), extra)
        if r is None:
            stable[idx] = True
            continue
        iters += 1
        if iters > cap:
            return [_entailed_weakening(tree, p, extra) for p in ps]
        _, cube = r
        kxu = _keepx(cube, union_keep)
        pre = project(make_poly(cube, kxu), kxu)
        for j, k in enumerate(keeps):
            q = project(pre, _keepx(cube, k))
            grown = join(ps[j], q)
            if grown.atoms != ps[j].atoms:
                ps[j] = grown
                stable[j] = False
    return ps


def _poly_tree(p: Polyhedron) -> Tree:
    if p.is_bottom():
        return f_atom(atom(const(1), LE))
    return f_and([f_atom(a) for a in p.atoms])


def _entailed_weakening(tree: Tree, p: Polyhedron, extra) -> Polyhedron:
    kept = [a for a in p.atoms if tree_entails_atom(f_and([tree] + [f_atom(e) for e in extra]), a)]
    return Polyhedron(tuple(kept), p.dims)


def project_formula(f, keep, extra: Sequence[Atom] = (), max_disjuncts: int = 24) -> List[Polyhedron]:
    """Disjunctive projection: a list of polyhedra covering f on keep.

    Unlike abstract_hull this keeps the disjunctive structure (needed for
    max-shaped depth bounds), joining only when the disjunct cap is hit.
    """
    tree = f.tree if isinstance(f, TransitionFormula) else f
    out: List[Polyhedron] = []
    while True:
        neg = [negate_tree(_poly_tree(p)) for p in out]
        r = find_model(f_and([tree] + neg), extra)
        if r is None:
            break
        env, cube = r
        kx = _keepx(cube, frozenset(keep))
        q = project(make_poly(cube, kx), kx)
        if len(out) >= max_disjuncts:
            return [abstract_hull(tree, keep, extra)]
        out.append(q)
    # absorb disjuncts contained in others
    from .polyhedron import entails_poly

    pruned = list(out)
    i = 0
    while i < len(pruned):
        p = pruned[i]
        absorbed = False
        for j, q in enumerate(pruned):
            if j == i:
                continue
            if entails_poly(p, q) and (j < i or not entails_poly(q, p)):
                absorbed = True
                break
        if absorbed:
            pruned.pop(i)
        else:
            i += 1
    return pruned or [bottom(keep)]
