"""AST for the mini-language.

Integer-only imperative language: global declarations and procedures with
assignments, if/while, assert/assume, tick, nondet, and calls as statements.
Booleans are integers 0/1; `return e` writes the distinguished variable
`return` and jumps to the procedure exit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple


@dataclass(frozen=True)
class Num:
    value: int


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Bin:
    op: str  # + - *
    lhs: "Expr"
    rhs: "Expr"


@dataclass(frozen=True)
class Div:
    lhs: "Expr"
    divisor: int  # positive literal; floor semantics


@dataclass(frozen=True)
class Nondet:
    lo: Optional["Expr"] = None  # nondet() or nondet(lo, hi): lo <= v < hi
    hi: Optional["Expr"] = None


Expr = (Num, Var, Bin, Div, Nondet)


@dataclass(frozen=True)
class Cmp:
    op: str  # == != < <= > >=
    lhs: "Expr"
    rhs: "Expr"


@dataclass(frozen=True)
class BoolOp:
    op: str  # && ||
    lhs: "Cond"
    rhs: "Cond"


@dataclass(frozen=True)
class Not:
    arg: "Cond"


@dataclass(frozen=True)
class Star:
    pass


Cond = (Cmp, BoolOp, Not, Star)


@dataclass
class Assign:
    target: str
    expr: object
    line: int = 0


@dataclass
class If:
    cond: object
    then: List
    els: List
    line: int = 0


@dataclass
class While:
    cond: object
    body: List
    line: int = 0


@dataclass
class Return:
    expr: Optional[object]
    line: int = 0


@dataclass
class Assert:
    cond: object
    line: int = 0


@dataclass
class Assume:
    cond: object
    line: int = 0


@dataclass
class Tick:
    expr: object
    line: int = 0


@dataclass
class Call:
    target: Optional[str]
    callee: str
    args: Tuple
    line: int = 0


@dataclass
class ProcDecl:
    name: str
    params: List[str]
    body: List
    line: int = 0
    locals: List[str] = field(default_factory=list)


@dataclass
class ProgramAst:
    globals: List[str]
    procedures: Dict[str, ProcDecl]  # insertion-ordered


def expr_vars(e) -> set:
    if isinstance(e, Num):
        return set()
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Bin):
        return expr_vars(e.lhs) | expr_vars(e.rhs)
    if isinstance(e, Div):
        return expr_vars(e.lhs)
    if isinstance(e, Nondet):
        out = set()
        if e.lo is not None:
            out |= expr_vars(e.lo) | expr_vars(e.hi)
        return out
    raise TypeError(e)


def cond_vars(c) -> set:
    if isinstance(c, Cmp):
        return expr_vars(c.lhs) | expr_vars(c.rhs)
    if isinstance(c, BoolOp):
        return cond_vars(c.lhs) | cond_vars(c.rhs)
    if isinstance(c, Not):
        return cond_vars(c.arg)
    if isinstance(c, Star):
        return set()
    raise TypeError(c)
