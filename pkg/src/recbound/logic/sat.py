"""Exact rational feasibility and optimization for conjunctions of linear atoms.

A general simplex in the style of Dutertre and de Moura: every distinct linear
form gets a slack variable, atoms become bounds on variables, and Bland's rule
guarantees termination.  Strict inequalities are handled symbolically with an
infinitesimal: values live in Q[eps] as pairs (a, b) meaning a + b*eps, ordered
lexicographically.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Dict, List, Optional, Tuple

from .dims import Dim, LinTerm, dim_key

LE, LT, EQ = "le", "lt", "eq"


class ResourceLimit(Exception):
    """Pivot or cube budget exceeded; callers must treat as 'possibly sat'."""


class DeltaRat:
    """a + b*eps with eps an infinitesimal positive rational."""

    __slots__ = ("a", "b")

    def __init__(self, a, b=0):
        self.a = a if isinstance(a, Fraction) else Fraction(a)
        self.b = b if isinstance(b, Fraction) else Fraction(b)

    def __add__(self, o):
        return DeltaRat(self.a + o.a, self.b + o.b)

    def __sub__(self, o):
        return DeltaRat(self.a - o.a, self.b - o.b)

    def scale(self, k: Fraction):
        return DeltaRat(self.a * k, self.b * k)

    def __eq__(self, o):
        return self.a == o.a and self.b == o.b

    def __lt__(self, o):
        return (self.a, self.b) < (o.a, o.b)

    def __le__(self, o):
        return (self.a, self.b) <= (o.a, o.b)

    def __repr__(self):
        return "%s+%seps" % (self.a, self.b)


ZERO = DeltaRat(0)

_MAX_PIVOTS = 200000


class Simplex:
    """Feasibility of a conjunction of atoms (LinTerm rel 0) over free rationals."""

    def __init__(self, atoms):
        self.dims: List[Dim] = sorted({d for t, _ in atoms for d in t.dims()}, key=dim_key)
        self.dim_index = {d: i for i, d in enumerate(self.dims)}
        n = len(self.dims)
        self.lo: List[Optional[DeltaRat]] = []
        self.hi: List[Optional[DeltaRat]] = []
        self.rows: Dict[int, Dict[int, Fraction]] = {}
        self.value: List[DeltaRat] = []
        self.nvars = n
        self.lo = [None] * n
        self.hi = [None] * n
        self.trivially_unsat = False
        form_slack: Dict[tuple, int] = {}
        for term, rel in atoms:
            if not term.coeffs:
                ok = term.const <= 0 if rel == LE else term.const < 0 if rel == LT else term.const == 0
                if not ok:
                    self.trivially_unsat = True
                continue
            bound = DeltaRat(-term.const, -1 if rel == LT else 0)
            if len(term.coeffs) == 1:
                (d, c), = term.coeffs.items()
                v = self.dim_index[d]
                self._add_bound(v, bound.scale(1 / c), upper=c > 0, eq=rel == EQ)
                continue
            key = tuple(sorted(((self.dim_index[d], c) for d, c in term.coeffs.items())))
            # canonical scaling so that x <= 3 and 2x <= 7 share a slack
            lead = key[0][1]
            skey = tuple((i, c / lead) for i, c in key)
            if skey not in form_slack:
                s = self.nvars
                self.nvars += 1
                self.lo.append(None)
                self.hi.append(None)
                form_slack[skey] = s
                self.rows[s] = {i: c for i, c in skey}
            s = form_slack[skey]
            self._add_bound(s, bound.scale(1 / lead), upper=lead > 0, eq=rel == EQ)

    def _add_bound(self, v: int, b: DeltaRat, upper: bool, eq: bool):
        sides = [(True, b), (False, b)] if eq else [(upper, b)]
        for up, val in sides:
            if up:
                if self.hi[v] is None or val < self.hi[v]:
                    self.hi[v] = val
            else:
                if self.lo[v] is None or self.lo[v] < val:
                    self.lo[v] = val

    def _init_values(self):
        self.value = []
        for v in range(self.nvars):
            if v in self.rows:
                self.value.append(ZERO)  # recomputed below
                continue
            x = ZERO
            if self.lo[v] is not None and x < self.lo[v]:
                x = self.lo[v]
            if self.hi[v] is not None and self.hi[v] < x:
                x = self.hi[v]
            self.value.append(x)
        for s, row in self.rows.items():
            self.value[s] = self._row_value(row)

    def _row_value(self, row):
        v = ZERO
        for i, c in row.items():
            v = v + self.value[i].scale(c)
        return v

    def check(self) -> bool:
        """True iff feasible; leaves a satisfying assignment in self.value."""
        if self.trivially_unsat:
            return False
        for v in range(self.nvars):
            if self.lo[v] is not None and self.hi[v] is not None and self.hi[v] < self.lo[v]:
                return False
        self._init_values()
        pivots = 0
        while True:
            pivots += 1
            if pivots > _MAX_PIVOTS:
                raise ResourceLimit("simplex pivot budget")
            broken = None
            for b in sorted(self.rows):
                if self.lo[b] is not None and self.value[b] < self.lo[b]:
                    broken, need_up = b, True
                    break
                if self.hi[b] is not None and self.hi[b] < self.value[b]:
                    broken, need_up = b, False
                    break
            if broken is None:
                return True
            row = self.rows[broken]
            target = self.lo[broken] if need_up else self.hi[broken]
            pivot_var = None
            for nb in sorted(row):
                c = row[nb]
                if need_up:
                    can = (c > 0 and self._can_increase(nb)) or (c < 0 and self._can_decrease(nb))
                else:
                    can = (c > 0 and self._can_decrease(nb)) or (c < 0 and self._can_increase(nb))
                if can:
                    pivot_var = nb
                    break
            if pivot_var is None:
                return False
            self._pivot_update(broken, pivot_var, target)

    def _can_increase(self, v):
        return self.hi[v] is None or self.value[v] < self.hi[v]

    def _can_decrease(self, v):
        return self.lo[v] is None or self.lo[v] < self.value[v]

    def _pivot_update(self, b: int, n: int, target: DeltaRat):
        row = self.rows.pop(b)
        a = row[n]
        theta = (target - self.value[b]).scale(1 / a)
        # solve for n: n = (b - sum_{i != n} row_i x_i) / a
        newrow = {b: Fraction(1) / a}
        for i, c in row.items():
            if i != n:
                newrow[i] = -c / a
        self.value[n] = self.value[n] + theta
        self.value[b] = target
        for s, r in list(self.rows.items()):
            if n in r:
                cn = r.pop(n)
                for i, c in newrow.items():
                    nc = r.get(i, Fraction(0)) + cn * c
                    if nc:
                        r[i] = nc
                    elif i in r:
                        del r[i]
                self.value[s] = self._row_value(r)
        self.rows[n] = newrow

    def model(self, atoms) -> Dict[Dim, Fraction]:
        """Concretize eps so that every original atom holds exactly."""
        eps = Fraction(1)
        for _ in range(200):
            env = {d: self.value[i].a + self.value[i].b * eps for d, i in self.dim_index.items()}
            if all(_atom_holds(t, r, env) for t, r in atoms):
                return env
            eps /= 16
        raise AssertionError("could not concretize infinitesimal")

    def maximize(self, term: LinTerm):
        """(status, DeltaRat | None): status in {'opt', 'unbounded'}; call after check()."""
        obj: Dict[int, Fraction] = {}
        for d, c in term.coeffs.items():
            i = self.dim_index.get(d)
            if i is None:
                return "unbounded", None  # free dim not mentioned by the atoms
            obj[i] = obj.get(i, Fraction(0)) + c
        pivots = 0
        while True:
            pivots += 1
            if pivots > _MAX_PIVOTS:
                raise ResourceLimit("simplex pivot budget")
            # express objective over nonbasic variables
            red: Dict[int, Fraction] = {}
            for i, c in obj.items():
                if i in self.rows:
                    for j, cj in self.rows[i].items():
                        red[j] = red.get(j, Fraction(0)) + c * cj
                else:
                    red[i] = red.get(i, Fraction(0)) + c
            entering = None
            for j in sorted(red):
                c = red[j]
                if not c:
                    continue
                if c > 0 and self._can_increase(j):
                    entering, up = j, True
                    break
                if c < 0 and self._can_decrease(j):
                    entering, up = j, False
                    break
            if entering is None:
                val = ZERO
                for i, c in obj.items():
                    val = val + self.value[i].scale(c)
                return "opt", val + DeltaRat(term.const)
            # ratio test: how far can entering move before some basic var hits a bound
            limit: Optional[DeltaRat] = None
            limit_row = None
            j = entering
            if up and self.hi[j] is not None:
                limit = self.hi[j] - self.value[j]
            if not up and self.lo[j] is not None:
                limit = self.value[j] - self.lo[j]
            for s in sorted(self.rows):
                r = self.rows[s]
                c = r.get(j)
                if not c:
                    continue
                grows = (c > 0) == up
                if grows:
                    if self.hi[s] is None:
                        continue
                    room = (self.hi[s] - self.value[s]).scale(1 / abs(c))
                else:
                    if self.lo[s] is None:
                        continue
                    room = (self.value[s] - self.lo[s]).scale(1 / abs(c))
                if limit is None or room < limit:
                    limit, limit_row = room, s
            if limit is None:
                return "unbounded", None
            delta = limit if up else ZERO - limit
            if limit_row is None:
                # entering hits its own bound
                self.value[j] = self.value[j] + delta
                for s, r in self.rows.items():
                    if j in r:
                        self.value[s] = self._row_value(r)
            else:
                newb = self.value[limit_row] + delta.scale(self.rows[limit_row][j])
                self._pivot_update(limit_row, j, newb)


def _atom_holds(term: LinTerm, rel: str, env) -> bool:
    v = term.evaluate(env)
    if rel == LE:
        return v <= 0
    if rel == LT:
        return v < 0
    return v == 0


def solve_atoms(atoms) -> Optional[Dict[Dim, Fraction]]:
    """Model of the conjunction, or None if infeasible. Atoms: [(LinTerm, rel)]."""
    sx = Simplex(atoms)
    if not sx.check():
        return None
    return sx.model(atoms)


def atoms_feasible(atoms) -> bool:
    sx = Simplex(atoms)
    return sx.check()


def bound_of(atoms, term: LinTerm, maximize: bool) -> Tuple[str, Optional[Fraction]]:
    """Exact sup/inf of a linear term over the conjunction.

    Returns ('unsat', None), ('unbounded', None) or ('opt', rational bound).
    The returned rational ignores the infinitesimal part (sound for closed use:
    the true sup over the closure equals the 'a' component).
    """
    sx = Simplex(atoms)
    if not sx.check():
        return "unsat", None
    status, val = sx.maximize(term if maximize else term.scale(-1))
    if status == "unbounded":
        return "unbounded", None
    a = val.a if maximize else -val.a
    return "opt", a
