"""Recursive-descent parser for the .fpi surface syntax.

See docs/lang.md for the grammar.  The parser enforces the accepted
fragment, not just well-formedness: non-nested counted loops with unit
step, integer-only names, prenex single-block quantification in specs.
Errors carry file:line:col.
"""

from __future__ import annotations

from .errors import FpiSyntaxError, GrammarViolation, SpecViolation
from .lang import (
    PARAM,
    PREV_SUFFIX,
    ArrStore,
    Assign,
    Ast,
    Bin,
    BoolLit,
    BoolOp,
    Cmp,
    For,
    Forall,
    Formula,
    Expr,
    If,
    IteExpr,
    Name,
    Not,
    Num,
    Read,
    Stmt,
    f_and,
    f_not,
    formula_reads,
    expr_reads,
    walk_stmts,
)

_KEYWORDS = {"int", "if", "else", "for", "assume", "assert", "forall", "in", "true", "false"}
_TWO_CHAR = {"==", "!=", "<=", ">=", "&&", "||", ".."}
_ONE_CHAR = set("=<>+-*/^()[]{};,:!")


class _Tok:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind: str, text: str, line: int, col: int):
        self.kind = kind  # ident | num | punct | kw | eof
        self.text = text
        self.line = line
        self.col = col

    def __repr__(self):  # pragma: no cover - debug aid
        return f"{self.kind}:{self.text}@{self.line}:{self.col}"


def _lex(src: str, filename: str) -> list[_Tok]:
    toks: list[_Tok] = []
    i, line, col = 0, 1, 1
    n = len(src)
    while i < n:
        c = src[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if src.startswith("//", i):
            while i < n and src[i] != "\n":
                i += 1
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            word = src[i:j]
            toks.append(_Tok("kw" if word in _KEYWORDS else "ident", word, line, col))
            col += j - i
            i = j
            continue
        if c.isdigit():
            j = i
            while j < n and src[j].isdigit():
                j += 1
            toks.append(_Tok("num", src[i:j], line, col))
            col += j - i
            i = j
            continue
        two = src[i : i + 2]
        if two in _TWO_CHAR:
            toks.append(_Tok("punct", two, line, col))
            i += 2
            col += 2
            continue
        if c in _ONE_CHAR:
            toks.append(_Tok("punct", c, line, col))
            i += 1
            col += 1
            continue
        raise FpiSyntaxError(f"stray character {c!r}", filename, line, col)
    toks.append(_Tok("eof", "", line, col))
    return toks


class _Parser:
    def __init__(self, src: str, filename: str):
        self.filename = filename
        self.toks = _lex(src, filename)
        self.pos = 0
        self.next_sid = 1
        self.scalars: list[str] = []
        self.arrays: list[str] = []
        self.counters: list[str] = []
        self.positions: dict[int, tuple[int, int]] = {}

    # -- token helpers -----------------------------------------------------

    def peek(self) -> _Tok:
        return self.toks[self.pos]

    def take(self) -> _Tok:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def at(self, text: str) -> bool:
        t = self.peek()
        return t.text == text and t.kind in ("punct", "kw")

    def eat(self, text: str) -> _Tok:
        t = self.peek()
        if t.text != text or t.kind not in ("punct", "kw"):
            self.fail(f"expected {text!r}, found {t.text!r}" if t.kind != "eof" else f"expected {text!r}, found end of input")
        return self.take()

    def fail(self, msg: str, tok: _Tok | None = None, cls=FpiSyntaxError):
        t = tok or self.peek()
        raise cls(msg, self.filename, t.line, t.col)

    def alloc_sid(self, tok: _Tok) -> int:
        sid = self.next_sid
        self.next_sid += 1
        self.positions[sid] = (tok.line, tok.col)
        return sid

    # -- declarations ------------------------------------------------------

    def check_fresh(self, tok: _Tok):
        name = tok.text
        if name == PARAM:
            self.fail(f"{PARAM} is the reserved size parameter and cannot be declared", tok, GrammarViolation)
        if name.endswith(PREV_SUFFIX):
            self.fail(f"identifier {name!r} uses the reserved suffix {PREV_SUFFIX!r}", tok, GrammarViolation)
        if name in self.scalars or name in self.arrays or name in self.counters:
            self.fail(f"{name!r} is already declared", tok, GrammarViolation)

    def parse_decls(self):
        while self.at("int"):
            self.take()
            while True:
                t = self.peek()
                if t.kind != "ident":
                    self.fail("expected an identifier in declaration")
                self.take()
                self.check_fresh(t)
                if self.at("["):
                    self.take()
                    sz = self.peek()
                    if not (sz.kind == "ident" and sz.text == PARAM):
                        self.fail(f"arrays must be declared with length {PARAM}", sz, GrammarViolation)
                    self.take()
                    self.eat("]")
                    self.arrays.append(t.text)
                else:
                    self.scalars.append(t.text)
                if self.at(","):
                    self.take()
                    continue
                break
            self.eat(";")

    # -- expressions -------------------------------------------------------

    def parse_expr(self) -> Expr:
        return self.parse_add()

    def parse_add(self) -> Expr:
        e = self.parse_mul()
        while self.at("+") or self.at("-"):
            op = self.take().text
            e = Bin(op, e, self.parse_mul())
        return e

    def parse_mul(self) -> Expr:
        e = self.parse_pow()
        while self.at("*") or self.at("/"):
            op = self.take().text
            e = Bin(op, e, self.parse_pow())
        return e

    def parse_pow(self) -> Expr:
        e = self.parse_atom()
        if self.at("^"):
            self.take()
            return Bin("^", e, self.parse_pow())  # right associative
        return e

    def parse_atom(self) -> Expr:
        t = self.peek()
        if t.kind == "num":
            self.take()
            return Num(int(t.text))
        if self.at("-"):
            self.take()
            inner = self.parse_atom()
            if isinstance(inner, Num):
                return Num(-inner.value)
            return Bin("-", Num(0), inner)
        if self.at("("):
            self.take()
            e = self.parse_expr()
            self.eat(")")
            return e
        if t.kind == "ident":
            self.take()
            if t.text == "ite" and self.at("("):
                self.take()
                cond = self.parse_formula(False)
                self.eat(",")
                then = self.parse_expr()
                self.eat(",")
                orelse = self.parse_expr()
                self.eat(")")
                return IteExpr(cond, then, orelse)
            if self.at("["):
                self.take()
                idx = self.parse_expr()
                self.eat("]")
                return Read(t.text, idx)
            return Name(t.text)
        self.fail(f"expected an expression, found {t.text!r}" if t.kind != "eof" else "expected an expression, found end of input")

    # -- formulas ----------------------------------------------------------

    _RELOPS = ("==", "!=", "<=", ">=", "<", ">")

    def parse_formula(self, allow_forall: bool) -> Formula:
        return self.parse_or(allow_forall)

    def parse_or(self, allow_forall: bool) -> Formula:
        f = self.parse_and(allow_forall)
        args = [f]
        while self.at("||"):
            self.take()
            args.append(self.parse_and(False))
        return args[0] if len(args) == 1 else BoolOp("or", tuple(args))

    def parse_and(self, allow_forall: bool) -> Formula:
        args = [self.parse_funit(allow_forall)]
        while self.at("&&"):
            self.take()
            args.append(self.parse_funit(allow_forall))
        return args[0] if len(args) == 1 else BoolOp("and", tuple(args))

    def parse_funit(self, allow_forall: bool) -> Formula:
        t = self.peek()
        if self.at("forall"):
            if not allow_forall:
                self.fail("quantifiers are only allowed at the top level of assume/assert", t, SpecViolation)
            return self.parse_forall()
        if self.at("!"):
            self.take()
            return f_not(self.parse_funit(False))
        if self.at("true"):
            self.take()
            return BoolLit(True)
        if self.at("false"):
            self.take()
            return BoolLit(False)
        if self.at("("):
            # Ambiguous: parenthesized formula or parenthesized arithmetic.
            save = self.pos
            self.take()
            try:
                inner = self.parse_formula(allow_forall)
                self.eat(")")
            except FpiSyntaxError:
                self.pos = save
            else:
                nxt = self.peek()
                if not (nxt.kind == "punct" and nxt.text in self._RELOPS + ("+", "-", "*", "/", "^", "[")):
                    return inner
                self.pos = save
        return self.parse_cmp()

    def parse_cmp(self) -> Formula:
        left = self.parse_expr()
        t = self.peek()
        if t.kind == "punct" and t.text in self._RELOPS:
            self.take()
            right = self.parse_expr()
            return Cmp(t.text, left, right)
        self.fail(f"expected a comparison operator, found {t.text!r}")

    def parse_forall(self) -> Formula:
        self.eat("forall")
        ranges: list[tuple[str, Expr, Expr]] = []
        while True:
            t = self.peek()
            if t.kind != "ident":
                self.fail("expected a quantified index variable")
            self.take()
            self.eat("in")
            lo = self.parse_expr()
            self.eat("..")
            hi = self.parse_expr()
            ranges.append((t.text, lo, hi))
            if self.at(","):
                self.take()
                continue
            break
        self.eat(":")
        body = self.parse_formula(False)
        for var, lo, hi in reversed(ranges):
            body = Forall(var, lo, hi, body)
        return body

    # -- statements ----------------------------------------------------------

    def parse_block(self, in_loop: bool) -> tuple[Stmt, ...]:
        self.eat("{")
        out: list[Stmt] = []
        while not self.at("}"):
            out.append(self.parse_stmt(in_loop))
        self.eat("}")
        return tuple(out)

    def parse_stmt(self, in_loop: bool) -> Stmt:
        t = self.peek()
        if self.at("for"):
            if in_loop:
                # covers both loops in loops and loops under branches:
                # the fragment has loops at the top level only
                self.fail("nested loops are outside the accepted fragment", t, GrammarViolation)
            return self.parse_for()
        if self.at("if"):
            self.take()
            self.eat("(")
            cond = self.parse_formula(False)
            self.eat(")")
            then = self.parse_block(True)
            orelse: tuple[Stmt, ...] = ()
            if self.at("else"):
                self.take()
                orelse = self.parse_block(True)
            return If(self.alloc_sid(t), cond, then, orelse)
        if t.kind == "ident":
            self.take()
            if self.at("["):
                self.take()
                idx = self.parse_expr()
                self.eat("]")
                self.eat("=")
                val = self.parse_expr()
                self.eat(";")
                return ArrStore(self.alloc_sid(t), t.text, idx, val)
            self.eat("=")
            val = self.parse_expr()
            self.eat(";")
            return Assign(self.alloc_sid(t), t.text, val)
        self.fail(f"expected a statement, found {t.text!r}" if t.kind != "eof" else "expected a statement, found end of input")

    def parse_for(self) -> Stmt:
        t = self.eat("for")
        self.eat("(")
        ct = self.peek()
        if ct.kind != "ident":
            self.fail("expected a loop counter identifier")
        self.take()
        counter = ct.text
        self.eat("=")
        zero = self.peek()
        if not (zero.kind == "num" and zero.text == "0"):
            self.fail("loop counters must start at 0", zero, GrammarViolation)
        self.take()
        self.eat(";")
        c2 = self.take()
        if c2.text != counter:
            self.fail(f"loop condition must test the counter {counter!r}", c2, GrammarViolation)
        self.eat("<")
        bound = self.parse_expr()
        self.eat(";")
        c3 = self.take()
        if c3.text != counter:
            self.fail(f"loop step must update the counter {counter!r}", c3, GrammarViolation)
        self.eat("=")
        c4 = self.take()
        plus = self.take()
        one = self.take()
        if c4.text != counter or plus.text != "+" or not (one.kind == "num" and one.text == "1"):
            self.fail(f"loop step must be {counter} = {counter} + 1", c4, GrammarViolation)
        self.eat(")")
        # register the counter before parsing the body so uses resolve
        if counter == PARAM or counter.endswith(PREV_SUFFIX):
            self.fail(f"{counter!r} cannot be used as a loop counter", ct, GrammarViolation)
        if counter in self.counters:
            self.fail(f"loop counter {counter!r} is already used by another loop", ct, GrammarViolation)
        if counter in self.scalars or counter in self.arrays:
            self.fail(f"loop counter {counter!r} collides with a declared name", ct, GrammarViolation)
        self.counters.append(counter)
        body = self.parse_block(True)
        return For(self.alloc_sid(t), counter, bound, body)

    # -- program -------------------------------------------------------------

    def parse_program(self) -> Ast:
        self.parse_decls()
        self.eat("assume")
        self.eat("(")
        pre = self.parse_formula(True)
        self.eat(")")
        self.eat(";")
        body: list[Stmt] = []
        while not self.at("assert"):
            if self.peek().kind == "eof":
                self.fail("expected assert(...) to close the program")
            body.append(self.parse_stmt(False))
        self.eat("assert")
        self.eat("(")
        post = self.parse_formula(True)
        self.eat(")")
        self.eat(";")
        if self.peek().kind != "eof":
            self.fail("trailing input after assert(...)")
        ast = Ast(
            scalars=tuple(self.scalars),
            arrays=tuple(self.arrays),
            counters=tuple(self.counters),
            pre=pre,
            post=post,
            body=tuple(body),
            filename=self.filename,
            positions=self.positions,
        )
        _validate(ast, self)
        return ast


def _validate(ast: Ast, p: _Parser):
    # statement-level checks with positions
    for st in walk_stmts(ast.body):
        line, col = p.positions.get(st.sid, (0, 0))
        if isinstance(st, Assign):
            if st.target == PARAM:
                raise GrammarViolation(f"cannot assign to the size parameter {PARAM}", p.filename, line, col)
            if st.target in ast.counters:
                raise GrammarViolation(f"cannot assign to loop counter {st.target!r}", p.filename, line, col)
            if st.target in ast.arrays:
                raise GrammarViolation(f"{st.target!r} is an array; use {st.target}[...] = ...", p.filename, line, col)
            if st.target not in ast.scalars:
                raise GrammarViolation(f"assignment to undeclared name {st.target!r}", p.filename, line, col)
            _check_names(st.value, ast, p, line, col)
        elif isinstance(st, ArrStore):
            if st.array not in ast.arrays:
                raise GrammarViolation(f"{st.array!r} is not a declared array", p.filename, line, col)
            _check_names(st.index, ast, p, line, col)
            _check_names(st.value, ast, p, line, col)
        elif isinstance(st, If):
            for nm in formula_reads(st.cond):
                _check_name(nm, ast, p, line, col)
        elif isinstance(st, For):
            for nm in expr_reads(st.bound):
                if nm != PARAM:
                    raise GrammarViolation(
                        f"loop bound may only involve {PARAM} and constants, found {nm!r}",
                        p.filename,
                        line,
                        col,
                    )

    for f, label in ((ast.pre, "assume"), (ast.post, "assert")):
        _check_spec_formula(f, ast, p, label, top=True)


def _check_name(nm: str, ast: Ast, p: _Parser, line: int, col: int, extra: set[str] = frozenset()):
    if nm in extra:
        return
    if nm not in ast.declared():
        raise FpiSyntaxError(f"undeclared name {nm!r}", p.filename, line, col)


def _check_names(e: Expr, ast: Ast, p: _Parser, line: int, col: int, extra: set[str] = frozenset()):
    for nm in expr_reads(e):
        _check_name(nm, ast, p, line, col, extra)
    _check_array_use(e, ast, p, line, col)


def _check_formula_arrays(f: Formula, ast: Ast, p: _Parser, line: int, col: int):
    if isinstance(f, Cmp):
        _check_array_use(f.left, ast, p, line, col)
        _check_array_use(f.right, ast, p, line, col)
    elif isinstance(f, BoolOp):
        for a in f.args:
            _check_formula_arrays(a, ast, p, line, col)
    elif isinstance(f, Not):
        _check_formula_arrays(f.arg, ast, p, line, col)
    elif isinstance(f, Forall):
        _check_array_use(f.lo, ast, p, line, col)
        _check_array_use(f.hi, ast, p, line, col)
        _check_formula_arrays(f.body, ast, p, line, col)


def _check_array_use(e: Expr, ast: Ast, p: _Parser, line: int, col: int):
    if isinstance(e, Read):
        if e.array not in ast.arrays:
            raise FpiSyntaxError(f"{e.array!r} is not a declared array", p.filename, line, col)
        _check_array_use(e.index, ast, p, line, col)
    elif isinstance(e, Bin):
        _check_array_use(e.left, ast, p, line, col)
        _check_array_use(e.right, ast, p, line, col)
    elif isinstance(e, Name):
        if e.id in ast.arrays:
            raise FpiSyntaxError(f"array {e.id!r} used without a subscript", p.filename, line, col)
    elif isinstance(e, IteExpr):
        _check_formula_arrays(e.cond, ast, p, line, col)
        _check_array_use(e.then, ast, p, line, col)
        _check_array_use(e.orelse, ast, p, line, col)


def _check_spec_formula(f: Formula, ast: Ast, p: _Parser, label: str, top: bool, bound: set[str] = frozenset()):
    """Prenex single-block discipline: Forall may appear only at the top of
    the spec formula or under top-level conjunctions, never below Or/Not,
    and quantified bodies are quantifier-free."""
    if isinstance(f, Forall):
        if not top:
            raise SpecViolation(f"quantifier in {label} must be prenex (top level or under &&)", p.filename, 0, 0)
        if f.var in ast.declared() or f.var.endswith(PREV_SUFFIX):
            raise SpecViolation(f"quantified variable {f.var!r} shadows a declared name", p.filename, 0, 0)
        for e in (f.lo, f.hi):
            _check_names(e, ast, p, 0, 0, extra=bound)
        _check_spec_formula(f.body, ast, p, label, top=True, bound=bound | {f.var})
        if isinstance(f.body, Forall):
            pass  # nested ranges from the multi-variable sugar are fine
        return
    if isinstance(f, BoolOp):
        for a in f.args:
            _check_spec_formula(a, ast, p, label, top=top and f.op == "and", bound=bound)
        return
    if isinstance(f, Not):
        _check_spec_formula(f.arg, ast, p, label, top=False, bound=bound)
        return
    if isinstance(f, Cmp):
        _check_names(f.left, ast, p, 0, 0, extra=bound)
        _check_names(f.right, ast, p, 0, 0, extra=bound)
        return
    if isinstance(f, BoolLit):
        return
    raise TypeError(f)


def parse(src: str, filename: str = "<input>") -> Ast:
    return _Parser(src, filename).parse_program()


def parse_file(path: str) -> Ast:
    with open(path, "r", encoding="utf-8") as fh:
        return parse(fh.read(), filename=path)


def expected_verdict(src: str) -> str | None:
    """Read the `// expect: verified|counterexample|unknown` sidecar line."""
    for line in src.splitlines():
        s = line.strip()
        if s.startswith("//") and "expect:" in s:
            value = s.split("expect:", 1)[1].strip().lower()
            if value in ("verified", "counterexample", "unknown"):
                return value
    return None
