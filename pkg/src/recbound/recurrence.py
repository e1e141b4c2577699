"""Exponential-polynomial closed forms and stratified recurrence solving.

A closed form is a finite sum of c * base^k * k^degree terms whose
coefficients live in Q[symbols] (plain rationals in the usual case; the
symbols carry symbolic initial conditions for upper-region solving and the
textbook system with named initial values).

Solving strategy per stratum: collect candidate bases (rational eigenvalues
of the coupling matrix plus the bases forced by lower strata), set up an
undetermined-coefficient ansatz wide enough for resonance, and solve the
resulting linear system exactly; the defining equations are then re-checked
by direct iteration, so a wrong ansatz can only yield NoClosedForm, never a
wrong closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import comb, gcd
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

Rat = Fraction
BoundId = Tuple[int, int]
Monomial = Tuple  # sorted tuple of BoundIds, repetition = power


def _rat(x) -> Rat:
    return x if isinstance(x, Fraction) else Fraction(x)


# ---------------------------------------------------------------------------
# Polynomials over named symbols (initial-condition parameters)

SymMono = Tuple[Tuple[str, int], ...]


class SymPoly:
    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[SymMono, Rat] = ()):
        t: Dict[SymMono, Rat] = {}
        items = terms.items() if isinstance(terms, Mapping) else terms
        for m, c in items:
            c = _rat(c)
            if c:
                t[m] = t.get(m, Fraction(0)) + c
                if not t[m]:
                    del t[m]
        self.terms = t

    @staticmethod
    def const(c) -> "SymPoly":
        return SymPoly({(): _rat(c)})

    @staticmethod
    def symbol(name: str) -> "SymPoly":
        return SymPoly({((name, 1),): Fraction(1)})

    def __add__(self, o):
        t = dict(self.terms)
        for m, c in o.terms.items():
            t[m] = t.get(m, Fraction(0)) + c
        return SymPoly(t)

    def __sub__(self, o):
        return self + o.scale(-1)

    def scale(self, k) -> "SymPoly":
        k = _rat(k)
        return SymPoly({m: c * k for m, c in self.terms.items()})

    def __mul__(self, o: "SymPoly") -> "SymPoly":
        t: Dict[SymMono, Rat] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in o.terms.items():
                pows: Dict[str, int] = {}
                for s, p in m1 + m2:
                    pows[s] = pows.get(s, 0) + p
                m = tuple(sorted(pows.items()))
                t[m] = t.get(m, Fraction(0)) + c1 * c2
        return SymPoly(t)

    def is_zero(self):
        return not self.terms

    def is_const(self):
        return not self.terms or set(self.terms) == {()}

    def as_const(self) -> Rat:
        if not self.is_const():
            raise ValueError("not a constant: %s" % self)
        return self.terms.get((), Fraction(0))

    def evaluate(self, env: Mapping[str, Rat]) -> Rat:
        v = Fraction(0)
        for m, c in self.terms.items():
            x = c
            for s, p in m:
                x *= env[s] ** p
            v += x
        return v

    def key(self):
        return tuple(sorted(self.terms.items()))

    def __eq__(self, o):
        return isinstance(o, SymPoly) and self.terms == o.terms

    def __hash__(self):
        return hash(self.key())

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        for m, c in sorted(self.terms.items()):
            body = "*".join(("%s^%d" % (s, p)) if p > 1 else s for s, p in m)
            if not body:
                parts.append(_fmt_rat(c))
            elif c == 1:
                parts.append(body)
            elif c == -1:
                parts.append("-" + body)
            else:
                parts.append("%s*%s" % (_fmt_rat(c), body))
        return " + ".join(parts).replace("+ -", "- ")

    __repr__ = __str__


def _fmt_rat(q: Rat) -> str:
    if q.denominator == 1:
        return str(q.numerator)
    return "(%d/%d)" % (q.numerator, q.denominator)


ZERO_POLY = SymPoly()
ONE_POLY = SymPoly.const(1)


# ---------------------------------------------------------------------------
# Exponential polynomials


class ExpPoly:
    """Sum of coeff * base^k * k^degree; coeffs in Q[symbols], bases nonzero."""

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[Tuple[Rat, int], SymPoly] = ()):
        t: Dict[Tuple[Rat, int], SymPoly] = {}
        items = terms.items() if isinstance(terms, Mapping) else terms
        for (b, d), c in items:
            b = _rat(b)
            if b == 0:
                raise ValueError("zero base")
            if not isinstance(c, SymPoly):
                c = SymPoly.const(c)
            if c.is_zero():
                continue
            key = (b, d)
            t[key] = t.get(key, ZERO_POLY) + c
            if t[key].is_zero():
                del t[key]
        self.terms = t

    @staticmethod
    def const(c) -> "ExpPoly":
        return ExpPoly({(Fraction(1), 0): SymPoly.const(c)})

    @staticmethod
    def k(degree: int = 1) -> "ExpPoly":
        return ExpPoly({(Fraction(1), degree): ONE_POLY})

    @staticmethod
    def exp(base, degree: int = 0, coeff=1) -> "ExpPoly":
        return ExpPoly({(_rat(base), degree): SymPoly.const(coeff)})

    def __add__(self, o):
        t = dict(self.terms)
        for key, c in o.terms.items():
            t[key] = t.get(key, ZERO_POLY) + c
        return ExpPoly(t)

    def __sub__(self, o):
        return self + o.scale(-1)

    def scale(self, k) -> "ExpPoly":
        k = k if isinstance(k, SymPoly) else SymPoly.const(k)
        return ExpPoly({key: c * k for key, c in self.terms.items()})

    def __mul__(self, o: "ExpPoly") -> "ExpPoly":
        t: Dict[Tuple[Rat, int], SymPoly] = {}
        for (b1, d1), c1 in self.terms.items():
            for (b2, d2), c2 in o.terms.items():
                key = (b1 * b2, d1 + d2)
                t[key] = t.get(key, ZERO_POLY) + c1 * c2
        return ExpPoly(t)

    def shift(self) -> "ExpPoly":
        """e(k) -> e(k+1), exactly."""
        t: Dict[Tuple[Rat, int], SymPoly] = {}
        for (b, d), c in self.terms.items():
            for j in range(d + 1):
                key = (b, j)
                t[key] = t.get(key, ZERO_POLY) + c.scale(b * comb(d, j))
        return ExpPoly(t)

    def evaluate(self, k: int, env: Mapping[str, Rat] = ()) -> Rat:
        env = dict(env)
        v = Fraction(0)
        for (b, d), c in self.terms.items():
            v += c.evaluate(env) * (b ** k) * (k ** d if d else 1)
        return v

    def is_zero(self):
        return not self.terms

    def is_rational(self) -> bool:
        return all(c.is_const() for c in self.terms.values())

    def symbols(self):
        out = set()
        for c in self.terms.values():
            for m in c.terms:
                out.update(s for s, _ in m)
        return out

    def subst_symbols(self, env: Mapping[str, "ExpPoly"]) -> "ExpPoly":
        """Replace initial-condition symbols by exponential polynomials."""
        out = ExpPoly()
        for (b, d), c in self.terms.items():
            for m, q in c.terms.items():
                piece = ExpPoly({(b, d): SymPoly.const(q)})
                for s, p in m:
                    for _ in range(p):
                        if s in env:
                            piece = piece * env[s]
                        else:
                            piece = piece.scale(SymPoly.symbol(s))
                out = out + piece
        return out

    def key(self):
        return tuple(sorted((b, d, c.key()) for (b, d), c in self.terms.items()))

    def __eq__(self, o):
        return isinstance(o, ExpPoly) and self.terms == o.terms

    def __hash__(self):
        return hash(self.key())

    def asymptotic_key(self) -> Tuple[Rat, int]:
        """(max |base|, max degree at that base); (0, 0) for the zero form."""
        if not self.terms:
            return (Fraction(0), 0)
        mb = max(abs(b) for b, _ in self.terms)
        md = max(d for b, d in self.terms if abs(b) == mb)
        return (mb, md)

    def __str__(self):
        return format_exppoly(self)

    __repr__ = __str__


def compare_asymptotic(a: ExpPoly, b: ExpPoly) -> int:
    """-1, 0, +1 by (max |base|, degree at max base)."""
    ka, kb = a.asymptotic_key(), b.asymptotic_key()
    return -1 if ka < kb else (0 if ka == kb else 1)


def format_exppoly(e: ExpPoly, var: str = "h") -> str:
    if not e.terms:
        return "0"
    keys = sorted(e.terms, key=lambda bd: (-abs(bd[0]), -bd[0], -bd[1]))
    parts = []
    for b, d in keys:
        c = e.terms[(b, d)]
        factors = []
        if b != 1:
            factors.append("%s^%s" % (_fmt_rat(b) if b > 0 else "(%s)" % _fmt_rat(b), var))
        if d == 1:
            factors.append(var)
        elif d > 1:
            factors.append("%s^%d" % (var, d))
        body = "*".join(factors)
        if not body:
            piece = str(c) if not c.is_const() else _fmt_rat(c.as_const())
        elif c == ONE_POLY:
            piece = body
        elif c.is_const() and c.as_const() == -1:
            piece = "-" + body
        elif c.is_const():
            piece = "%s*%s" % (_fmt_rat(c.as_const()), body)
        else:
            piece = "(%s)*%s" % (c, body)
        parts.append(piece)
    out = parts[0]
    for p in parts[1:]:
        out += (" - " + p[1:]) if p.startswith("-") else (" + " + p)
    return out


def eval_exppoly(e: ExpPoly, k: int) -> Rat:
    """Exact evaluation at a natural index (rational-coefficient forms)."""
    return e.evaluate(k)


# ---------------------------------------------------------------------------
# Stratified systems


@dataclass
class Stratum:
    ids: List[BoundId]
    matrix: List[List[Rat]]  # square, coupling within the stratum
    inhom: Dict[BoundId, Dict[Monomial, Rat]]  # polynomial over lower ids + const


@dataclass
class StratifiedRecurrence:
    strata: List[Stratum]

    def all_ids(self) -> List[BoundId]:
        return [i for s in self.strata for i in s.ids]


class NoClosedForm(Exception):
    pass


@dataclass
class RecSolution:
    solved: Dict[BoundId, ExpPoly]
    failures: Dict[BoundId, str]
    init_index: int


def _char_poly(m: List[List[Rat]]) -> List[Rat]:
    """Coefficients [1, c1, ..., cn] of det(tI - M) by Faddeev-LeVerrier."""
    n = len(m)
    coeffs = [Fraction(1)]
    aux = [row[:] for row in m]
    for k in range(1, n + 1):
        tr = sum(aux[i][i] for i in range(n))
        ck = -tr / k
        coeffs.append(ck)
        if k == n:
            break
        for i in range(n):
            aux[i][i] += ck
        aux = _mat_mul(m, aux)
    return coeffs


def _mat_mul(a, b):
    n = len(a)
    return [[sum(a[i][k] * b[k][j] for k in range(n)) for j in range(n)] for i in range(n)]


def _divisors(n: int) -> List[int]:
    n = abs(n)
    out = []
    d = 1
    while d * d <= n:
        if n % d == 0:
            out.append(d)
            if d != n // d:
                out.append(n // d)
        d += 1
    return sorted(out)


def rational_eigenvalues(m: List[List[Rat]]) -> Optional[Dict[Rat, int]]:
    """Eigenvalues with multiplicity; None when the spectrum is not rational.

    Zero eigenvalues are reported too (callers usually skip them in the
    ansatz: 0^k terms vanish for k >= 1).
    """
    coeffs = _char_poly(m)
    mult: Dict[Rat, int] = {}
    # strip zero roots
    while len(coeffs) > 1 and coeffs[-1] == 0:
        coeffs = coeffs[:-1]
        mult[Fraction(0)] = mult.get(Fraction(0), 0) + 1
    while len(coeffs) > 1:
        den = 1
        for c in coeffs:
            den = den * c.denominator // gcd(den, c.denominator)
        ints = [int(c * den) for c in coeffs]
        lead, constant = ints[0], ints[-1]
        root = None
        for p in _divisors(constant):
            for q in _divisors(lead):
                for cand in (Fraction(p, q), Fraction(-p, q)):
                    if _poly_eval(coeffs, cand) == 0:
                        root = cand
                        break
                if root is not None:
                    break
            if root is not None:
                break
        if root is None:
            return None
        coeffs = _deflate(coeffs, root)
        mult[root] = mult.get(root, 0) + 1
    return mult


def _poly_eval(coeffs: Sequence[Rat], x: Rat) -> Rat:
    v = Fraction(0)
    for c in coeffs:
        v = v * x + c
    return v


def _deflate(coeffs: Sequence[Rat], root: Rat) -> List[Rat]:
    out = [coeffs[0]]
    for c in coeffs[1:-1]:
        out.append(c + out[-1] * root)
    return out


def _gauss_solve(rows: List[List[Rat]], rhs: List[SymPoly]) -> Optional[List[SymPoly]]:
    """Solve A x = rhs with rational A and polynomial rhs; free vars become 0."""
    m, n = len(rows), len(rows[0]) if rows else 0
    a = [row[:] for row in rows]
    b = list(rhs)
    piv_col_of_row = []
    r = 0
    for col in range(n):
        piv = None
        for i in range(r, m):
            if a[i][col]:
                piv = i
                break
        if piv is None:
            continue
        a[r], a[piv] = a[piv], a[r]
        b[r], b[piv] = b[piv], b[r]
        inv = Fraction(1) / a[r][col]
        a[r] = [x * inv for x in a[r]]
        b[r] = b[r].scale(inv)
        for i in range(m):
            if i != r and a[i][col]:
                f = a[i][col]
                a[i] = [x - f * y for x, y in zip(a[i], a[r])]
                b[i] = b[i] - b[r].scale(f)
        piv_col_of_row.append(col)
        r += 1
        if r == m:
            break
    for i in range(r, m):
        if not any(a[i]) and not b[i].is_zero():
            return None
    # reduced echelon form with free variables fixed to zero
    x = [ZERO_POLY] * n
    for i, col in enumerate(piv_col_of_row):
        x[col] = b[i]
    return x


def solve_stratified(rec: StratifiedRecurrence, initial: Mapping[BoundId, Union[Rat, str]],
                     init_index: int = 1, check_span: int = 20) -> RecSolution:
    """Closed forms for every bound, stratum by stratum.

    `initial` maps each id to a rational (usually 0) or a symbol name.
    Solutions satisfy x(k+1) = C x(k) + p(k) for k >= init_index and
    x(init_index) = initial; IrrationalOrComplexEigenvalues in one stratum
    fails that stratum and everything above it.
    """
    solved: Dict[BoundId, ExpPoly] = {}
    failures: Dict[BoundId, str] = {}
    dead = False
    for stratum in rec.strata:
        if dead:
            for i in stratum.ids:
                failures[i] = "NoClosedForm: lower stratum failed"
            continue
        try:
            sols = _solve_stratum(stratum, solved, initial, init_index, check_span)
        except NoClosedForm as e:
            dead = True
            for i in stratum.ids:
                failures[i] = str(e)
            continue
        solved.update(sols)
    return RecSolution(solved, failures, init_index)


def _poly_of_lower(poly: Dict[Monomial, Rat], lower: Dict[BoundId, ExpPoly]) -> ExpPoly:
    out = ExpPoly()
    for mono, c in poly.items():
        piece = ExpPoly.const(c)
        for bid in mono:
            piece = piece * lower[bid]
        out = out + piece
    return out


def _solve_stratum(st: Stratum, lower: Dict[BoundId, ExpPoly], initial, init_index, check_span):
    n = len(st.ids)
    forcing = {bid: _poly_of_lower(st.inhom.get(bid, {}), lower) for bid in st.ids}
    eig = rational_eigenvalues(st.matrix) if n else {}
    if eig is None:
        raise NoClosedForm("IrrationalOrComplexEigenvalues")
    bases: Dict[Rat, int] = {}

    def bump(b: Rat, d: int):
        if b == 0:
            return
        bases[b] = max(bases.get(b, 0), d)

    bump(Fraction(1), 0)
    for b, mu in eig.items():
        bump(b, mu)  # mu - 1 needed; +1 slack
    for bid in st.ids:
        for (b, d) in forcing[bid].terms:
            bump(b, d + eig.get(b, 0) + 1)
    cols = []  # (seq index, base, degree)
    for i in range(n):
        for b in sorted(bases):
            for j in range(bases[b] + 1):
                cols.append((i, b, j))
    col_index = {c: k for k, c in enumerate(cols)}
    rows: List[List[Rat]] = []
    rhs: List[SymPoly] = []
    # defining equations, matched per (i, base, degree)
    for i in range(n):
        for b in sorted(bases):
            for t in range(bases[b] + 1):
                row = [Fraction(0)] * len(cols)
                for j in range(t, bases[b] + 1):
                    row[col_index[(i, b, j)]] += b * comb(j, t)
                for l in range(n):
                    if st.matrix[i][l]:
                        row[col_index[(l, b, t)]] -= st.matrix[i][l]
                rows.append(row)
                rhs.append(forcing[st.ids[i]].terms.get((b, t), ZERO_POLY))
    # initial conditions at init_index
    for i in range(n):
        row = [Fraction(0)] * len(cols)
        for b in sorted(bases):
            for j in range(bases[b] + 1):
                row[col_index[(i, b, j)]] += (b ** init_index) * (init_index ** j if j else 1)
        rows.append(row)
        iv = initial.get(st.ids[i], Fraction(0))
        rhs.append(SymPoly.symbol(iv) if isinstance(iv, str) else SymPoly.const(iv))
    sol = _gauss_solve(rows, rhs)
    if sol is None:
        raise NoClosedForm("NoClosedForm: inconsistent ansatz (non-exp-poly solution)")
    out: Dict[BoundId, ExpPoly] = {}
    for i, bid in enumerate(st.ids):
        terms = {}
        for b in sorted(bases):
            for j in range(bases[b] + 1):
                c = sol[col_index[(i, b, j)]]
                if not c.is_zero():
                    terms[(b, j)] = terms.get((b, j), ZERO_POLY) + c
        out[bid] = ExpPoly(terms)
    _verify_stratum(st, lower, out, initial, init_index, check_span)
    return out


def _verify_stratum(st, lower, out, initial, init_index, span):
    syms = set()
    for e in list(out.values()) + list(lower.values()):
        syms |= e.symbols()
    envs = [{s: Fraction(0) for s in syms}]
    if syms:
        envs.append({s: Fraction(2 * i + 1, 2) for i, s in enumerate(sorted(syms))})
    for env in envs:
        vals = {bid: [out[bid].evaluate(k, env) for k in range(init_index, init_index + span + 2)]
                for bid in st.ids}
        lowvals = {bid: [lower[bid].evaluate(k, env) for k in range(init_index, init_index + span + 2)]
                   for bid in lower}
        for i, bid in enumerate(st.ids):
            iv = initial.get(bid, Fraction(0))
            want0 = env.get(iv, None) if isinstance(iv, str) else _rat(iv)
            if want0 is None:
                want0 = SymPoly.symbol(iv).evaluate(env)
            if vals[bid][0] != want0:
                raise NoClosedForm("NoClosedForm: initial condition unsatisfiable")
            for step in range(span):
                acc = Fraction(0)
                for l, lid in enumerate(st.ids):
                    acc += st.matrix[i][l] * vals[lid][step]
                for mono, c in st.inhom.get(bid, {}).items():
                    x = c
                    for m in mono:
                        x *= lowvals[m][step]
                    acc += x
                if vals[bid][step + 1] != acc:
                    raise NoClosedForm("NoClosedForm: defining equation check failed")


def format_recurrence(rec: StratifiedRecurrence, names: Mapping[BoundId, str]) -> str:
    """One line per bound: `b1(h+1) = 0*b1(h) + 18*b2(h) + 17`."""
    lines = []
    for st in rec.strata:
        for i, bid in enumerate(st.ids):
            parts = ["%s*%s(h)" % (_fmt_rat(st.matrix[i][l]), names[st.ids[l]])
                     for l in range(len(st.ids))]
            for mono, c in sorted(st.inhom.get(bid, {}).items()):
                if not mono:
                    parts.append(_fmt_rat(c))
                else:
                    parts.append("%s*%s" % (_fmt_rat(c), "*".join("%s(h)" % names[m] for m in mono)))
            lines.append("%s(h+1) = %s" % (names[bid], " + ".join(parts) if parts else "0"))
    return "\n".join(lines)
