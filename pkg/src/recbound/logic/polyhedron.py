"""Convex polyhedra over designated dimensions.

Projection is exact Fourier-Motzkin (equalities eliminated by substitution
first) with LP-based redundancy elimination; join is the standard lifted
combination encoding of the closed convex hull, followed by projection.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

from .dims import Dim, LinTerm, Sym, const, dim_key, dim_term, subst_term
from .formula import Atom, atom
from .sat import EQ, LE, LT, ResourceLimit, atoms_feasible

_FM_ATOM_CAP = 800


@dataclass(frozen=True)
class Polyhedron:
    atoms: Tuple[Atom, ...]
    dims: FrozenSet[Dim]

    def is_bottom(self) -> bool:
        return any(not a.term.coeffs and _const_false(a) for a in self.atoms)

    def __str__(self):
        if not self.atoms:
            return "top"
        return " & ".join(str(a) for a in self.atoms)


def _const_false(a: Atom) -> bool:
    c = a.term.const
    return not (c <= 0 if a.rel == LE else c < 0 if a.rel == LT else c == 0)


def bottom(dims=()) -> Polyhedron:
    return Polyhedron((Atom(const(1), LE),), frozenset(dims))


def top(dims=()) -> Polyhedron:
    return Polyhedron((), frozenset(dims))


def make_poly(atoms: Iterable[Atom], dims) -> Polyhedron:
    out = _normalize(list(atoms))
    if out is None:
        return bottom(dims)
    return Polyhedron(tuple(out), frozenset(dims))


def _normalize(atoms: List[Atom]) -> Optional[List[Atom]]:
    """Dedupe, fold constants, merge opposing inequalities into equalities, sort."""
    seen = {}
    for a in atoms:
        if not a.term.coeffs:
            if _const_false(a):
                return None
            continue
        seen.setdefault(a.key(), a)
    # t <= 0 and -t <= 0 become t = 0
    out: Dict[tuple, Atom] = {}
    for k, a in seen.items():
        if a.rel == LE:
            nk = atom(-a.term, LE).key()
            if nk in seen and nk != k:
                e = atom(a.term, EQ)
                out.setdefault(e.key(), e)
                continue
        out.setdefault(k, a)
    # drop inequalities implied by an equality on the same term
    final = []
    eq_keys = {tuple(k[1:]) for k in out if k[0] == EQ}
    for k, a in out.items():
        if a.rel in (LE, LT):
            if tuple(atom(a.term, EQ).key()[1:]) in eq_keys and a.rel == LE:
                continue
        final.append(a)
    final.sort(key=lambda a: a.key())
    return final


def poly_feasible(p: Polyhedron) -> bool:
    return atoms_feasible([(a.term, a.rel) for a in p.atoms])


def _negation_branches(a: Atom) -> List[Tuple[LinTerm, str]]:
    if a.rel == LE:
        return [(-a.term, LT)]
    if a.rel == LT:
        return [(-a.term, LE)]
    return [(a.term, LT), (-a.term, LT)]


def atoms_entail(atoms: List[Atom], a: Atom) -> bool:
    base = [(x.term, x.rel) for x in atoms]
    for br in _negation_branches(a):
        if atoms_feasible(base + [br]):
            return False
    return True


def entails_atom(p: Polyhedron, a: Atom) -> bool:
    return atoms_entail(list(p.atoms), a)


def entails_poly(p: Polyhedron, q: Polyhedron) -> bool:
    return all(entails_atom(p, a) for a in q.atoms)


def drop_redundant(atoms: List[Atom]) -> List[Atom]:
    atoms = list(atoms)
    i = 0
    while i < len(atoms):
        rest = atoms[:i] + atoms[i + 1:]
        if atoms_entail(rest, atoms[i]):
            atoms = rest
        else:
            i += 1
    return atoms


def project(p: Polyhedron, keep: FrozenSet[Dim]) -> Polyhedron:
    """Exact rational shadow of p on keep (NonLin dims treated as opaque)."""
    keep = frozenset(keep)
    if p.is_bottom():
        return bottom(keep)
    atoms = list(p.atoms)
    elim = sorted({d for a in atoms for d in a.term.dims()} - keep, key=dim_key)
    # substitution pass: use equalities to eliminate exactly
    for d in list(elim):
        eqs = [a for a in atoms if a.rel == EQ and d in a.term.coeffs]
        if not eqs:
            continue
        eqs.sort(key=lambda a: (len(a.term.coeffs), a.key()))
        e = eqs[0]
        c = e.term.coeff(d)
        rest = (e.term - dim_term(d, c)).scale(Fraction(-1) / c)
        mapping = {d: rest}
        atoms = [a for a in atoms if a is not e]
        atoms = [atom(subst_term(a.term, mapping), a.rel) for a in atoms]
        elim.remove(d)
        norm = _normalize(atoms)
        if norm is None:
            return bottom(keep)
        atoms = norm
    # Fourier-Motzkin on the rest
    while elim:
        counts = {}
        for d in elim:
            ups = downs = 0
            for a in atoms:
                c = a.term.coeff(d)
                if c > 0 or (c and a.rel == EQ):
                    ups += 1
                if c < 0 or (c and a.rel == EQ):
                    downs += 1
            counts[d] = ups * downs
        d = min(elim, key=lambda x: (counts[x], dim_key(x)))
        elim.remove(d)
        uppers, lowers, others = [], [], []
        for a in atoms:
            c = a.term.coeff(d)
            if not c:
                others.append(a)
                continue
            if a.rel == EQ:
                uppers.append((a.term, LE, c) if c > 0 else (-a.term, LE, -c))
                lowers.append((-a.term, LE, c) if c > 0 else (a.term, LE, -c))
            elif c > 0:
                uppers.append((a.term, a.rel, c))
            else:
                lowers.append((a.term, a.rel, -c))
        new = list(others)
        for ut, ur, uc in uppers:
            for lt_, lr, lc in lowers:
                # uc*d <= -u_rest ; lc*d >= l_rest  =>  combine
                comb = ut.scale(lc) + lt_.scale(uc)
                comb = comb - dim_term(d, comb.coeff(d))
                rel = LT if LT in (ur, lr) else LE
                new.append(atom(comb, rel))
        norm = _normalize(new)
        if norm is None:
            return bottom(keep)
        atoms = norm
        if len(atoms) > _FM_ATOM_CAP:
            # sound fallback: drop everything still mentioning a doomed dim
            atoms = [a for a in atoms if not (set(a.term.dims()) & set(elim))]
            elim = []
        elif len(atoms) > 40:
            atoms = drop_redundant(atoms)
    if not atoms_feasible([(a.term, a.rel) for a in atoms]):
        return bottom(keep)
    if len(atoms) > 8:
        atoms = drop_redundant(atoms)
    norm = _normalize(atoms)
    return Polyhedron(tuple(norm), keep)


_JCOUNT = [0]


def join(p: Polyhedron, q: Polyhedron) -> Polyhedron:
    """Smallest closed convex polyhedron containing both (lifted combination).

    Differing dim sets are allowed: a dim one operand does not mention is
    unconstrained there; the result ranges over the union.
    """
    if p.is_bottom():
        return q
    if q.is_bottom():
        return p
    dims = sorted(p.dims | q.dims | {d for a in p.atoms + q.atoms for d in a.term.dims()}, key=dim_key)
    _JCOUNT[0] += 1
    tag = _JCOUNT[0]
    lam = Sym("$hull_l%d" % tag)
    ys = {d: Sym("$hull_y%d_%d" % (tag, i)) for i, d in enumerate(dims)}
    lifted: List[Atom] = []
    # y in lam*P : A y <= lam*b   (strictness closed)
    for a in p.atoms:
        t = LinTerm({ys[d]: c for d, c in a.term.coeffs.items()})
        t = t + LinTerm({lam: a.term.const})
        lifted.append(atom(t, EQ if a.rel == EQ else LE))
    # (z - y) in (1-lam)*Q
    for a in q.atoms:
        t = LinTerm(dict(a.term.coeffs))
        t = t - LinTerm({ys[d]: c for d, c in a.term.coeffs.items()})
        t = t + const(a.term.const) - LinTerm({lam: a.term.const})
        lifted.append(atom(t, EQ if a.rel == EQ else LE))
    lifted.append(atom(LinTerm({lam: Fraction(-1)}), LE))           # lam >= 0
    lifted.append(atom(LinTerm({lam: Fraction(1)}, -1), LE))        # lam <= 1
    big = make_poly(lifted, set(dims) | set(ys.values()) | {lam})
    return project(big, p.dims | q.dims)


def join_all(ps: List[Polyhedron]) -> Polyhedron:
    if not ps:
        return bottom()
    out = ps[0]
    for r in ps[1:]:
        out = join(out, r)
    return out
