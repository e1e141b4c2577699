"""Lexer and recursive-descent parser for the mini-language.

Grammar (whitespace-insensitive, // comments):
    program    := (globalDecl | proc)*
    globalDecl := "int" IDENT ";"
    proc       := "proc" IDENT "(" [IDENT ("," IDENT)*] ")" block
    block      := "{" stmt* "}"
    stmt       := IDENT "=" expr ";" | "if" "(" cond ")" block ["else" block]
                | "while" "(" cond ")" block | "return" [expr] ";"
                | "assert" "(" cond ")" ";" | "assume" "(" cond ")" ";"
                | "tick" "(" expr ")" ";"
                | IDENT "=" IDENT "(" args ")" ";" | IDENT "(" args ")" ";"
    expr       := INT | IDENT | expr ("+"|"-"|"*") expr | expr "/" INT
                | "nondet" "(" [expr "," expr] ")" | "(" expr ")"
    cond       := expr REL expr | cond ("&&"|"||") cond | "!" cond | "*"
"""

from __future__ import annotations

from typing import List, Optional, Tuple

from . import ast as A

KEYWORDS = {"int", "proc", "if", "else", "while", "return", "assert", "assume", "tick", "nondet"}

PUNCT = ["&&", "||", "==", "!=", "<=", ">=", "(", ")", "{", "}", ",", ";", "=", "<", ">", "+", "-", "*", "/", "!"]


class ParseError(Exception):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__("%d:%d: %s" % (line, col, msg))
        self.line = line
        self.col = col


class Token:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind, text, line, col):
        self.kind = kind
        self.text = text
        self.line = line
        self.col = col

    def __repr__(self):
        return "%s(%r)" % (self.kind, self.text)


def tokenize(src: str) -> List[Token]:
    toks = []
    i, line, col = 0, 1, 1
    n = len(src)
    while i < n:
        c = src[i]
        if c == "\n":
            i, line, col = i + 1, line + 1, 1
            continue
        if c in " \t\r":
            i, col = i + 1, col + 1
            continue
        if src.startswith("//", i):
            while i < n and src[i] != "\n":
                i += 1
            continue
        if c.isdigit():
            j = i
            while j < n and src[j].isdigit():
                j += 1
            toks.append(Token("int", src[i:j], line, col))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            text = src[i:j]
            toks.append(Token("kw" if text in KEYWORDS else "ident", text, line, col))
            col += j - i
            i = j
            continue
        for p in PUNCT:
            if src.startswith(p, i):
                toks.append(Token("punct", p, line, col))
                i += len(p)
                col += len(p)
                break
        else:
            raise ParseError("unexpected character %r" % c, line, col)
    toks.append(Token("eof", "", line, col))
    return toks


class Parser:
    def __init__(self, src: str):
        self.toks = tokenize(src)
        self.pos = 0

    def peek(self) -> Token:
        return self.toks[self.pos]

    def next(self) -> Token:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def err(self, msg):
        t = self.peek()
        raise ParseError(msg, t.line, t.col)

    def expect(self, text) -> Token:
        t = self.peek()
        if t.text != text:
            self.err("expected %r, found %r" % (text, t.text or "end of input"))
        return self.next()

    def expect_ident(self) -> Token:
        t = self.peek()
        if t.kind != "ident":
            self.err("expected identifier, found %r" % (t.text or "end of input"))
        return self.next()

    # ---- grammar ----

    def program(self) -> A.ProgramAst:
        globals_, procs = [], {}
        while self.peek().kind != "eof":
            t = self.peek()
            if t.text == "int":
                self.next()
                name = self.expect_ident().text
                self.expect(";")
                if name in globals_:
                    self.err("duplicate global %r" % name)
                globals_.append(name)
            elif t.text == "proc":
                p = self.proc()
                if p.name in procs:
                    raise ParseError("duplicate procedure %r" % p.name, p.line, 1)
                procs[p.name] = p
            else:
                self.err("expected 'int' or 'proc'")
        return A.ProgramAst(globals_, procs)

    def proc(self) -> A.ProcDecl:
        t = self.expect("proc")
        name = self.expect_ident().text
        self.expect("(")
        params = []
        if self.peek().text != ")":
            params.append(self.expect_ident().text)
            while self.peek().text == ",":
                self.next()
                params.append(self.expect_ident().text)
        self.expect(")")
        body = self.block()
        return A.ProcDecl(name, params, body, t.line)

    def block(self) -> list:
        self.expect("{")
        stmts = []
        while self.peek().text != "}":
            stmts.append(self.stmt())
        self.expect("}")
        return stmts

    def stmt(self):
        t = self.peek()
        if t.text == "if":
            self.next()
            self.expect("(")
            c = self.cond()
            self.expect(")")
            then = self.block()
            els = []
            if self.peek().text == "else":
                self.next()
                els = self.block()
            return A.If(c, then, els, t.line)
        if t.text == "while":
            self.next()
            self.expect("(")
            c = self.cond()
            self.expect(")")
            return A.While(c, self.block(), t.line)
        if t.text == "return":
            self.next()
            e = None
            if self.peek().text != ";":
                e = self.expr()
            self.expect(";")
            return A.Return(e, t.line)
        if t.text in ("assert", "assume"):
            self.next()
            self.expect("(")
            c = self.cond()
            self.expect(")")
            self.expect(";")
            return (A.Assert if t.text == "assert" else A.Assume)(c, t.line)
        if t.text == "tick":
            self.next()
            self.expect("(")
            e = self.expr()
            self.expect(")")
            self.expect(";")
            return A.Tick(e, t.line)
        if t.kind == "ident":
            name = self.next().text
            if self.peek().text == "(":
                args = self.call_args()
                self.expect(";")
                return A.Call(None, name, args, t.line)
            self.expect("=")
            if self.peek().kind == "ident" and self.toks[self.pos + 1].text == "(":
                callee = self.next().text
                args = self.call_args()
                self.expect(";")
                return A.Call(name, callee, args, t.line)
            e = self.expr()
            self.expect(";")
            return A.Assign(name, e, t.line)
        self.err("expected statement")

    def call_args(self) -> tuple:
        self.expect("(")
        args = []
        if self.peek().text != ")":
            args.append(self.expr())
            while self.peek().text == ",":
                self.next()
                args.append(self.expr())
        self.expect(")")
        return tuple(args)

    # expressions: + - over * /
    def expr(self):
        e = self.term()
        while self.peek().text in ("+", "-"):
            op = self.next().text
            e = A.Bin(op, e, self.term())
        return e

    def term(self):
        e = self.factor()
        while self.peek().text in ("*", "/"):
            op = self.next().text
            if op == "/":
                t = self.peek()
                if t.kind != "int":
                    self.err("division requires a literal divisor")
                d = int(self.next().text)
                if d <= 0:
                    raise ParseError("division requires a positive literal divisor", t.line, t.col)
                e = A.Div(e, d)
            else:
                e = A.Bin(op, e, self.factor())
        return e

    def factor(self):
        t = self.peek()
        if t.kind == "int":
            self.next()
            return A.Num(int(t.text))
        if t.text == "-":
            self.next()
            return A.Bin("-", A.Num(0), self.factor())
        if t.text == "nondet":
            self.next()
            self.expect("(")
            if self.peek().text == ")":
                self.next()
                return A.Nondet()
            lo = self.expr()
            self.expect(",")
            hi = self.expr()
            self.expect(")")
            return A.Nondet(lo, hi)
        if t.text == "(":
            self.next()
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "ident":
            self.next()
            return A.Var(t.text)
        self.err("expected expression")

    # conditions: ! over && over ||
    def cond(self):
        c = self.cand()
        while self.peek().text == "||":
            self.next()
            c = A.BoolOp("||", c, self.cand())
        return c

    def cand(self):
        c = self.cnot()
        while self.peek().text == "&&":
            self.next()
            c = A.BoolOp("&&", c, self.cnot())
        return c

    def cnot(self):
        if self.peek().text == "!":
            self.next()
            return A.Not(self.cnot())
        if self.peek().text == "(":
            # could be a parenthesized condition or expression; try condition
            save = self.pos
            self.next()
            try:
                c = self.cond()
                self.expect(")")
                return c
            except ParseError:
                self.pos = save
        if self.peek().text == "*" :
            self.next()
            return A.Star()
        lhs = self.expr()
        t = self.peek()
        if t.text not in ("==", "!=", "<", "<=", ">", ">="):
            self.err("expected comparison operator")
        self.next()
        return A.Cmp(t.text, lhs, self.expr())


def parse_ast(src: str) -> A.ProgramAst:
    prog = Parser(src).program()
    _validate(prog)
    return prog


def _validate(prog: A.ProgramAst):
    names = set(prog.globals)
    for p in prog.procedures.values():
        declared = set(prog.globals) | set(p.params)
        assigned = set()
        _collect_assigned(p.body, assigned)
        p.locals = sorted((assigned - declared) - {"return"})
        scope = declared | set(p.locals) | {"return"}
        _check_stmts(prog, p, p.body, scope)


def _collect_assigned(stmts, out):
    for s in stmts:
        if isinstance(s, A.Assign):
            out.add(s.target)
        elif isinstance(s, A.Call) and s.target:
            out.add(s.target)
        elif isinstance(s, A.If):
            _collect_assigned(s.then, out)
            _collect_assigned(s.els, out)
        elif isinstance(s, A.While):
            _collect_assigned(s.body, out)


def _check_stmts(prog, proc, stmts, scope):
    for s in stmts:
        if isinstance(s, A.Assign):
            _check_vars(A.expr_vars(s.expr), scope, s.line)
        elif isinstance(s, A.Call):
            if s.callee not in prog.procedures:
                raise ParseError("call to undeclared procedure %r" % s.callee, s.line, 1)
            want = len(prog.procedures[s.callee].params)
            if len(s.args) != want:
                raise ParseError(
                    "%s expects %d argument(s), got %d" % (s.callee, want, len(s.args)), s.line, 1)
            for a in s.args:
                _check_vars(A.expr_vars(a), scope, s.line)
        elif isinstance(s, (A.Assert, A.Assume)):
            _check_vars(A.cond_vars(s.cond), scope, s.line)
        elif isinstance(s, A.Tick):
            if "cost" not in prog.globals:
                raise ParseError("tick requires a global named 'cost'", s.line, 1)
            _check_vars(A.expr_vars(s.expr), scope, s.line)
        elif isinstance(s, A.Return):
            if s.expr is not None:
                _check_vars(A.expr_vars(s.expr), scope, s.line)
        elif isinstance(s, A.If):
            _check_vars(A.cond_vars(s.cond), scope, s.line)
            _check_stmts(prog, proc, s.then, scope)
            _check_stmts(prog, proc, s.els, scope)
        elif isinstance(s, A.While):
            _check_vars(A.cond_vars(s.cond), scope, s.line)
            _check_stmts(prog, proc, s.body, scope)


def _check_vars(names, scope, line):
    for v in names:
        if v not in scope:
            raise ParseError("undeclared identifier %r" % v, line, 1)
