"""Dimensions and exact linear terms.

Everything the analyzer reasons about is a rational linear combination of
*dimensions*: program variables in two vocabularies (pre/post), auxiliary
symbols (height H, min-depth M, depth counter D, loop counters), applications
of unknown bounding functions b_{i,k}(h), and opaque non-linear terms
(products, exponentials, logarithms) that the linear core treats as extra
coordinates of the space.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import gcd
from typing import Dict, Iterable, Mapping, Tuple, Union

Rat = Fraction

PRE = "pre"
POST = "post"

RETURN_VAR = "return"


def _as_rat(x) -> Rat:
    return x if isinstance(x, Fraction) else Fraction(x)


@dataclass(frozen=True)
class ProgVar:
    name: str
    vocab: str  # PRE or POST

    def __str__(self):
        return self.name + ("'" if self.vocab == POST else "")


@dataclass(frozen=True)
class Sym:
    """Auxiliary symbolic dimension (existential at query time)."""

    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class BoundApp:
    """b_{proc,term}(h) or b_{proc,term}(h+1); an unknown bounding-function value."""

    proc: int
    term: int
    shifted: bool  # False: height h, True: height h+1

    def __str__(self):
        return "b%d_%d(%s)" % (self.proc, self.term, "h+1" if self.shifted else "h")


# A hashable canonical linear form used inside Exp/Log dims:
# (((dim, coeff), ...) sorted by dim order, constant).
LinKey = Tuple[Tuple[Tuple["Dim", Rat], ...], Rat]


@dataclass(frozen=True)
class ExpDim:
    """base ** (linear form); base > 0, base != 1, integer constant folded out."""

    base: Rat
    expo: LinKey

    def __str__(self):
        return "%s^(%s)" % (_rat_str(self.base), _key_str(self.expo))


@dataclass(frozen=True)
class LogDim:
    """log_base(linear form); base > 1."""

    base: Rat
    arg: LinKey

    def __str__(self):
        return "log%s(%s)" % (_rat_str(self.base), _key_str(self.arg))


@dataclass(frozen=True)
class MulDim:
    """Product of >= 2 non-Mul dims (sorted, repetition = power)."""

    factors: Tuple["Dim", ...]

    def __str__(self):
        return "(" + "*".join(str(f) for f in self.factors) + ")"


Dim = Union[ProgVar, Sym, BoundApp, ExpDim, LogDim, MulDim]


def _rat_str(q: Rat) -> str:
    return str(q.numerator) if q.denominator == 1 else "%d/%d" % (q.numerator, q.denominator)


def _key_str(key: LinKey) -> str:
    pairs, const = key
    parts = []
    for d, c in pairs:
        parts.append(("%s*%s" % (_rat_str(c), d)) if c != 1 else str(d))
    if const or not parts:
        parts.append(_rat_str(const))
    return " + ".join(parts)


def dim_key(d: Dim):
    """Total, deterministic order over dims: kind rank, then payload."""
    if isinstance(d, ProgVar):
        return (0, d.name, 0 if d.vocab == PRE else 1)
    if isinstance(d, Sym):
        return (1, d.name)
    if isinstance(d, BoundApp):
        return (2, d.proc, d.term, int(d.shifted))
    if isinstance(d, MulDim):
        return (3, tuple(dim_key(f) for f in d.factors))
    if isinstance(d, ExpDim):
        return (4, d.base, _linkey_key(d.expo))
    if isinstance(d, LogDim):
        return (5, d.base, _linkey_key(d.arg))
    raise TypeError(d)


def _linkey_key(key: LinKey):
    pairs, const = key
    return (tuple((dim_key(d), c) for d, c in pairs), const)


class LinTerm:
    """Immutable rational linear combination of dims plus a constant.

    No zero coefficients are stored; Fractions keep everything in lowest terms.
    """

    __slots__ = ("coeffs", "const", "_key")

    def __init__(self, coeffs: Mapping[Dim, Rat] = (), const=0):
        cs: Dict[Dim, Rat] = {}
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        for d, c in items:
            c = _as_rat(c)
            if c:
                cs[d] = cs.get(d, Fraction(0)) + c
                if not cs[d]:
                    del cs[d]
        self.coeffs = cs
        self.const = _as_rat(const)
        self._key = None

    def key(self) -> LinKey:
        if self._key is None:
            pairs = tuple(sorted(self.coeffs.items(), key=lambda it: dim_key(it[0])))
            self._key = (pairs, self.const)
        return self._key

    def __eq__(self, other):
        return isinstance(other, LinTerm) and self.key() == other.key()

    def __hash__(self):
        return hash(_linkey_key(self.key()))

    def __bool__(self):
        return bool(self.coeffs) or bool(self.const)

    def is_const(self) -> bool:
        return not self.coeffs

    def dims(self):
        return self.coeffs.keys()

    def __add__(self, other):
        if isinstance(other, (int, Fraction)):
            return LinTerm(self.coeffs, self.const + other)
        cs = dict(self.coeffs)
        for d, c in other.coeffs.items():
            cs[d] = cs.get(d, Fraction(0)) + c
            if not cs[d]:
                del cs[d]
        return LinTerm(cs, self.const + other.const)

    def __sub__(self, other):
        if isinstance(other, (int, Fraction)):
            return LinTerm(self.coeffs, self.const - other)
        return self + other.scale(-1)

    def scale(self, k) -> "LinTerm":
        k = _as_rat(k)
        if not k:
            return LinTerm()
        return LinTerm({d: c * k for d, c in self.coeffs.items()}, self.const * k)

    def __neg__(self):
        return self.scale(-1)

    def coeff(self, d: Dim) -> Rat:
        return self.coeffs.get(d, Fraction(0))

    def evaluate(self, env: Mapping[Dim, Rat]) -> Rat:
        v = self.const
        for d, c in self.coeffs.items():
            v += c * env[d]
        return v

    def __str__(self):
        pairs = sorted(self.coeffs.items(), key=lambda it: dim_key(it[0]))
        if not pairs:
            return _rat_str(self.const)
        parts = []
        for d, c in pairs:
            mag = abs(c)
            piece = str(d) if mag == 1 else "%s*%s" % (_rat_str(mag), d)
            if not parts:
                parts.append(piece if c > 0 else "-" + piece)
            else:
                parts.append(("+ " if c > 0 else "- ") + piece)
        if self.const:
            parts.append(("+ " if self.const > 0 else "- ") + _rat_str(abs(self.const)))
        return " ".join(parts)

    def __repr__(self):
        return "LinTerm(%s)" % self


def var(name: str, vocab: str = PRE) -> LinTerm:
    return LinTerm({ProgVar(name, vocab): Fraction(1)})


def sym(name: str) -> LinTerm:
    return LinTerm({Sym(name): Fraction(1)})


def const(c) -> LinTerm:
    return LinTerm((), c)


def dim_term(d: Dim, c=1) -> LinTerm:
    return LinTerm({d: _as_rat(c)})


def from_key(key: LinKey) -> LinTerm:
    pairs, c = key
    return LinTerm(dict(pairs), c)


def _int_content(coeffs: Iterable[Rat]) -> int:
    """Largest positive integer dividing every coefficient (0 if none integer-scalable)."""
    g = 0
    for c in coeffs:
        if c.denominator != 1:
            return 1
        g = gcd(g, abs(c.numerator))
    return g or 1


def exp_term(base, expo: LinTerm) -> LinTerm:
    """Canonical base**expo as a LinTerm (coefficient times an ExpDim, or a constant).

    Folds integer constants in the exponent into the coefficient, normalizes
    2^(2K) to 4^K and 2^(-K) to (1/2)^K.  Requires base > 0.
    """
    base = _as_rat(base)
    if base <= 0:
        raise ValueError("exp base must be positive: %s" % base)
    if base == 1:
        return const(1)
    if expo.is_const() and expo.const.denominator == 1:
        return const(base ** expo.const.numerator)
    # fold out the integer part of the constant
    n = expo.const.numerator // expo.const.denominator  # floor
    coeff = base ** n
    reduced = LinTerm(expo.coeffs, expo.const - n)
    if not reduced.const:
        # integer content of the coefficients moves into the base
        g = _int_content(reduced.coeffs.values())
        if g > 1:
            base = base ** g
            reduced = reduced.scale(Fraction(1, g))
        pairs = sorted(reduced.coeffs.items(), key=lambda it: dim_key(it[0]))
        if pairs and pairs[0][1] < 0:
            base = 1 / base
            reduced = reduced.scale(-1)
    return LinTerm({ExpDim(base, reduced.key()): coeff})


def log_term(base, arg: LinTerm) -> LinTerm:
    """Canonical log_base(arg); folds log_b(b^e) -> e and powers of the base."""
    base = _as_rat(base)
    if base <= 1:
        raise ValueError("log base must be > 1: %s" % base)
    # log_b of a single Exp dim with the same base
    if not arg.const and len(arg.coeffs) == 1:
        (d, c), = arg.coeffs.items()
        if isinstance(d, ExpDim) and d.base == base and c == 1:
            return from_key(d.expo)
    if arg.is_const():
        k = _exact_log(base, arg.const)
        if k is not None:
            return const(k)
        return LinTerm({LogDim(base, arg.key()): Fraction(1)})
    # factor out powers of the base common to every coefficient and the constant
    shift = 0
    work = arg
    while base.denominator == 1:
        scaled = work.scale(Fraction(1, base))
        ints = list(scaled.coeffs.values()) + [scaled.const]
        if all(v.denominator == 1 for v in ints):
            work = scaled
            shift += 1
        else:
            break
    return LinTerm({LogDim(base, work.key()): Fraction(1)}, shift)


def _exact_log(base: Rat, c: Rat):
    if c <= 0:
        return None
    k = 0
    x = c
    while x > 1:
        x = x / base
        k += 1
    while x < 1:
        x = x * base
        k -= 1
    return k if x == 1 else None


def mul_dims(d1: Dim, d2: Dim) -> LinTerm:
    """Product of two dims: exponential folds where possible, MulDim otherwise."""
    fs = []
    for d in (d1, d2):
        if isinstance(d, MulDim):
            fs.extend(d.factors)
        else:
            fs.append(d)
    coeff = Fraction(1)
    changed = True
    while changed:
        changed = False
        fs.sort(key=dim_key)
        for i in range(len(fs) - 1):
            a, b = fs[i], fs[i + 1]
            if not (isinstance(a, ExpDim) and isinstance(b, ExpDim)):
                continue
            if a.base == b.base:
                prod = exp_term(a.base, from_key(a.expo) + from_key(b.expo))
            elif a.expo == b.expo:
                prod = exp_term(a.base * b.base, from_key(a.expo))
            else:
                continue
            del fs[i:i + 2]
            if prod.is_const():
                coeff *= prod.const
            else:
                (fd, fc), = prod.coeffs.items()
                coeff *= fc
                fs.append(fd)
            changed = True
            break
    if not fs:
        return const(coeff)
    if len(fs) == 1:
        return dim_term(fs[0], coeff)
    return dim_term(MulDim(tuple(sorted(fs, key=dim_key))), coeff)


def mul_term(a: LinTerm, b: LinTerm) -> LinTerm:
    """Distributing product of two linear terms; dim products become Mul dims."""
    out = const(a.const * b.const)
    if b.const:
        out = out + LinTerm(a.coeffs).scale(b.const)
    if a.const:
        out = out + LinTerm(b.coeffs).scale(a.const)
    for d1, c1 in a.coeffs.items():
        for d2, c2 in b.coeffs.items():
            out = out + mul_dims(d1, d2).scale(c1 * c2)
    return out


def subst_dim(d: Dim, mapping: Mapping[Dim, LinTerm]) -> LinTerm:
    """Replace dims (recursively inside NonLin dims) by linear terms."""
    if d in mapping:
        return mapping[d]
    if isinstance(d, MulDim):
        t = const(1)
        for f in d.factors:
            t = mul_term(t, subst_dim(f, mapping))
        return t
    if isinstance(d, ExpDim):
        e = subst_term(from_key(d.expo), mapping)
        return exp_term(d.base, e)
    if isinstance(d, LogDim):
        a = subst_term(from_key(d.arg), mapping)
        return log_term(d.base, a)
    return dim_term(d)


def subst_term(t: LinTerm, mapping: Mapping[Dim, LinTerm]) -> LinTerm:
    if not mapping:
        return t
    out = const(t.const)
    for d, c in t.coeffs.items():
        out = out + subst_dim(d, mapping).scale(c)
    return out


def base_dims(d: Dim):
    """Atomic dims a NonLin dim is built from (itself, for atomic dims)."""
    if isinstance(d, MulDim):
        for f in d.factors:
            yield from base_dims(f)
    elif isinstance(d, ExpDim):
        for f, _ in d.expo[0]:
            yield from base_dims(f)
    elif isinstance(d, LogDim):
        for f, _ in d.arg[0]:
            yield from base_dims(f)
    else:
        yield d


def is_nonlin(d: Dim) -> bool:
    return isinstance(d, (MulDim, ExpDim, LogDim))
