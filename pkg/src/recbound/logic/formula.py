"""Two-vocabulary transition formulas.

A formula is a negation-free And/Or tree over linear atoms, paired with a
footprint: the set of program variables it may modify.  Variables outside the
footprint are implicitly framed (pre = post), which keeps composition cheap
and summaries small.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import gcd
from typing import Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Tuple

from .dims import (
    POST,
    PRE,
    Dim,
    LinTerm,
    ProgVar,
    Sym,
    _rat_str,
    dim_key,
    dim_term,
    subst_term,
    var,
)
from .sat import EQ, LE, LT

__all__ = [
    "Atom", "Tree", "TransitionFormula", "TRUE", "FALSE",
    "atom", "f_atom", "f_and", "f_or", "tf", "identity", "false_tf",
    "compose", "disjoin", "substitute_tf", "negate_tree", "iter_cubes",
    "select_cube", "eval_tree", "tree_dims", "to_sexpr", "Gensym",
]


@dataclass(frozen=True)
class Atom:
    """term rel 0 with rel in {le, lt, eq}; canonical integer coefficients."""

    term: LinTerm
    rel: str

    def negate(self) -> "Tree":
        if self.rel == LE:
            return f_atom(atom(-self.term, LT))
        if self.rel == LT:
            return f_atom(atom(-self.term, LE))
        return f_or([f_atom(atom(self.term, LT)), f_atom(atom(-self.term, LT))])

    def key(self):
        return (self.rel, tuple((dim_key(d), c) for d, c in sorted(self.term.coeffs.items(), key=lambda it: dim_key(it[0]))), self.term.const)

    def __str__(self):
        op = {LE: "<=", LT: "<", EQ: "="}[self.rel]
        return "%s %s 0" % (self.term, op)


def atom(term: LinTerm, rel: str = LE) -> Atom:
    """Canonicalize: integer coprime coefficients; equalities sign-normalized."""
    if term.coeffs:
        den = 1
        for c in list(term.coeffs.values()) + [term.const]:
            den = den * c.denominator // gcd(den, c.denominator)
        num = 0
        for c in list(term.coeffs.values()) + [term.const]:
            num = gcd(num, abs(c.numerator * (den // c.denominator)))
        scale = Fraction(den, num or 1)
        term = term.scale(scale)
        if rel == EQ:
            lead = min(term.coeffs.items(), key=lambda it: dim_key(it[0]))[1]
            if lead < 0:
                term = -term
    return Atom(term, rel)


@dataclass(frozen=True)
class Tree:
    kind: str  # "true" | "false" | "atom" | "and" | "or"
    children: Tuple["Tree", ...] = ()
    a: Optional[Atom] = None


TRUE = Tree("true")
FALSE = Tree("false")


def f_atom(a: Atom) -> Tree:
    if not a.term.coeffs:
        c = a.term.const
        ok = c <= 0 if a.rel == LE else c < 0 if a.rel == LT else c == 0
        return TRUE if ok else FALSE
    return Tree("atom", a=a)


def f_and(children: Iterable[Tree]) -> Tree:
    flat: List[Tree] = []
    seen = set()
    for ch in children:
        if ch.kind == "true":
            continue
        if ch.kind == "false":
            return FALSE
        sub = ch.children if ch.kind == "and" else (ch,)
        for s in sub:
            if s.kind == "atom":
                k = s.a.key()
                if k in seen:
                    continue
                seen.add(k)
            flat.append(s)
    if not flat:
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return Tree("and", tuple(flat))


def f_or(children: Iterable[Tree]) -> Tree:
    flat: List[Tree] = []
    for ch in children:
        if ch.kind == "false":
            continue
        if ch.kind == "true":
            return TRUE
        if ch.kind == "or":
            flat.extend(ch.children)
        else:
            flat.append(ch)
    if not flat:
        return FALSE
    if len(flat) == 1:
        return flat[0]
    return Tree("or", tuple(flat))


def f_atoms(atoms: Iterable[Atom]) -> Tree:
    return f_and([f_atom(a) for a in atoms])


def negate_tree(t: Tree) -> Tree:
    if t.kind == "true":
        return FALSE
    if t.kind == "false":
        return TRUE
    if t.kind == "atom":
        return t.a.negate()
    if t.kind == "and":
        return f_or([negate_tree(c) for c in t.children])
    return f_and([negate_tree(c) for c in t.children])


def substitute_tree(t: Tree, mapping: Mapping[Dim, LinTerm]) -> Tree:
    if t.kind in ("true", "false"):
        return t
    if t.kind == "atom":
        return f_atom(atom(subst_term(t.a.term, mapping), t.a.rel))
    ctor = f_and if t.kind == "and" else f_or
    return ctor([substitute_tree(c, mapping) for c in t.children])


def tree_dims(t: Tree) -> set:
    out = set()

    def walk(n):
        if n.kind == "atom":
            out.update(n.a.term.dims())
        for c in n.children:
            walk(c)

    walk(t)
    return out


def iter_cubes(t: Tree) -> Iterator[List[Atom]]:
    """All DNF cubes (conjunctions of atoms), depth-first."""
    if t.kind == "true":
        yield []
    elif t.kind == "false":
        return
    elif t.kind == "atom":
        yield [t.a]
    elif t.kind == "or":
        for c in t.children:
            yield from iter_cubes(c)
    else:
        def product(i):
            if i == len(t.children):
                yield []
                return
            for head in iter_cubes(t.children[i]):
                for rest in product(i + 1):
                    yield head + rest

        yield from product(0)


def eval_tree(t: Tree, env: Mapping[Dim, Fraction]) -> bool:
    if t.kind == "true":
        return True
    if t.kind == "false":
        return False
    if t.kind == "atom":
        v = t.a.term.evaluate(env)
        return v <= 0 if t.a.rel == LE else v < 0 if t.a.rel == LT else v == 0
    if t.kind == "and":
        return all(eval_tree(c, env) for c in t.children)
    return any(eval_tree(c, env) for c in t.children)


def select_cube(t: Tree, env) -> List[Atom]:
    """The DNF cube satisfied by a model of t."""
    if t.kind == "true":
        return []
    if t.kind == "atom":
        return [t.a]
    if t.kind == "and":
        out = []
        for c in t.children:
            out.extend(select_cube(c, env))
        return out
    for c in t.children:
        if eval_tree(c, env):
            return select_cube(c, env)
    raise AssertionError("model does not satisfy formula")


# ---------------------------------------------------------------------------
# Transition formulas


@dataclass(frozen=True)
class TransitionFormula:
    tree: Tree
    footprint: FrozenSet[str]

    def is_false(self):
        return self.tree.kind == "false"

    def with_tree(self, extra: Tree) -> "TransitionFormula":
        """Conjoin extra constraints without touching the footprint."""
        return TransitionFormula(f_and([self.tree, extra]), self.footprint)

    def __str__(self):
        return to_sexpr(self.tree)


def tf(tree: Tree, footprint=()) -> TransitionFormula:
    return TransitionFormula(tree, frozenset(footprint))


def identity() -> TransitionFormula:
    return tf(TRUE)


def false_tf() -> TransitionFormula:
    return tf(FALSE)


class Gensym:
    """Deterministic fresh-symbol source; one per analysis run."""

    def __init__(self, prefix="$"):
        self.prefix = prefix
        self.n = 0

    def __call__(self, hint="t") -> Sym:
        self.n += 1
        return Sym("%s%s%d" % (self.prefix, hint, self.n))


def frame_atoms(names: Iterable[str]) -> List[Tree]:
    return [f_atom(atom(var(x, POST) - var(x, PRE), EQ)) for x in sorted(names)]


def disjoin(f: TransitionFormula, g: TransitionFormula) -> TransitionFormula:
    """Union of relations; footprints equalized with explicit frame equalities."""
    fp = f.footprint | g.footprint
    ft = f_and([f.tree] + frame_atoms(fp - f.footprint))
    gt = f_and([g.tree] + frame_atoms(fp - g.footprint))
    return TransitionFormula(f_or([ft, gt]), fp)


def disjoin_all(fs: List[TransitionFormula]) -> TransitionFormula:
    if not fs:
        return false_tf()
    out = fs[0]
    for g in fs[1:]:
        out = disjoin(out, g)
    return out


def compose(f: TransitionFormula, g: TransitionFormula, gensym: Gensym) -> TransitionFormula:
    """Relational composition; mid-state dims are fresh existential symbols."""
    if f.is_false() or g.is_false():
        return false_tf()
    mids = {x: dim_term(gensym("m_" + x)) for x in sorted(f.footprint)}
    fmap = {ProgVar(x, POST): mids[x] for x in mids}
    gmap = {ProgVar(x, PRE): mids[x] for x in mids}
    ftree = substitute_tree(f.tree, fmap) if fmap else f.tree
    gtree = substitute_tree(g.tree, gmap) if gmap else g.tree
    links = [f_atom(atom(var(x, POST) - mids[x], EQ)) for x in sorted(f.footprint - g.footprint)]
    return TransitionFormula(f_and([ftree, gtree] + links), f.footprint | g.footprint)


def substitute_tf(f: TransitionFormula, mapping: Mapping[Dim, LinTerm]) -> TransitionFormula:
    """Capture-avoiding dim replacement (dims are globally named; no binders)."""
    return TransitionFormula(substitute_tree(f.tree, mapping), f.footprint)


# ---------------------------------------------------------------------------
# Debug dumps


def _term_sexpr(t: LinTerm) -> str:
    parts = []
    for d, c in sorted(t.coeffs.items(), key=lambda it: dim_key(it[0])):
        ds = _dim_sexpr(d)
        parts.append(ds if c == 1 else "(* %s %s)" % (_rat_str(c), ds))
    if t.const or not parts:
        parts.append(_rat_str(t.const))
    return parts[0] if len(parts) == 1 else "(+ %s)" % " ".join(parts)


def _dim_sexpr(d: Dim) -> str:
    from .dims import ExpDim, LogDim, MulDim, from_key

    if isinstance(d, MulDim):
        return "(* %s)" % " ".join(_dim_sexpr(f) for f in d.factors)
    if isinstance(d, ExpDim):
        return "(exp %s %s)" % (_rat_str(d.base), _term_sexpr(from_key(d.expo)))
    if isinstance(d, LogDim):
        return "(log %s %s)" % (_rat_str(d.base), _term_sexpr(from_key(d.arg)))
    return str(d)


def to_sexpr(t: Tree) -> str:
    if t.kind == "true":
        return "true"
    if t.kind == "false":
        return "false"
    if t.kind == "atom":
        op = {LE: "<=", LT: "<", EQ: "="}[t.a.rel]
        return "(%s %s 0)" % (op, _term_sexpr(t.a.term))
    op = "and" if t.kind == "and" else "or"
    return "(%s %s)" % (op, " ".join(to_sexpr(c) for c in t.children))
