"""Core syntax: integer expressions, formulas, statements, programs.

Everything is a frozen dataclass so structural sharing is safe across the
transformation pipeline.  Smart constructors (`f_and`, `f_or`, `f_not`)
flatten and constant-fold so downstream code never sees `true && phi`.

The program parameter is the reserved name ``N``.  Version suffixes used by
difference programs (``_Nm1``) are ordinary identifier text here; the parser
refuses user identifiers that collide with them.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Union

PARAM = "N"
PREV_SUFFIX = "_Nm1"

# ---------------------------------------------------------------------------
# integer expressions


@dataclass(frozen=True, slots=True)
class Num:
    value: int


@dataclass(frozen=True, slots=True)
class Name:
    id: str


@dataclass(frozen=True, slots=True)
class Read:
    array: str
    index: "Expr"


@dataclass(frozen=True, slots=True)
class Bin:
    op: str  # one of + - * / ^
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True, slots=True)
class IteExpr:
    """Conditional expression.  Not part of the surface syntax; produced by
    the array-write rule of weakest preconditions."""

    cond: "Formula"
    then: "Expr"
    orelse: "Expr"


Expr = Union[Num, Name, Read, Bin, IteExpr]

ZERO = Num(0)
ONE = Num(1)
N = Name(PARAM)


def e_add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    if isinstance(b, Num) and b.value == 0:
        return a
    if isinstance(a, Num) and a.value == 0:
        return b
    return Bin("+", a, b)


def e_sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    if isinstance(b, Num) and b.value == 0:
        return a
    return Bin("-", a, b)


def e_mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    if isinstance(b, Num) and b.value == 1:
        return a
    if isinstance(a, Num) and a.value == 1:
        return b
    return Bin("*", a, b)


# ---------------------------------------------------------------------------
# formulas


@dataclass(frozen=True, slots=True)
class BoolLit:
    value: bool


@dataclass(frozen=True, slots=True)
class Cmp:
    op: str  # == != < <= > >=
    left: Expr
    right: Expr


@dataclass(frozen=True, slots=True)
class BoolOp:
    op: str  # and | or
    args: tuple["Formula", ...]


@dataclass(frozen=True, slots=True)
class Not:
    arg: "Formula"


@dataclass(frozen=True, slots=True)
class Forall:
    """forall var in lo..hi : body   (both range ends inclusive)."""

    var: str
    lo: Expr
    hi: Expr
    body: "Formula"


Formula = Union[BoolLit, Cmp, BoolOp, Not, Forall]

TRUE = BoolLit(True)
FALSE = BoolLit(False)


def f_and(*parts: Formula) -> Formula:
    out: list[Formula] = []
    for p in parts:
        if isinstance(p, BoolLit):
            if not p.value:
                return FALSE
            continue
        if isinstance(p, BoolOp) and p.op == "and":
            out.extend(p.args)
        else:
            out.append(p)
    if not out:
        return TRUE
    if len(out) == 1:
        return out[0]
    return BoolOp("and", tuple(out))


def f_or(*parts: Formula) -> Formula:
    out: list[Formula] = []
    for p in parts:
        if isinstance(p, BoolLit):
            if p.value:
                return TRUE
            continue
        if isinstance(p, BoolOp) and p.op == "or":
            out.extend(p.args)
        else:
            out.append(p)
    if not out:
        return FALSE
    if len(out) == 1:
        return out[0]
    return BoolOp("or", tuple(out))


def f_not(p: Formula) -> Formula:
    if isinstance(p, BoolLit):
        return BoolLit(not p.value)
    if isinstance(p, Not):
        return p.arg
    return Not(p)


def f_implies(a: Formula, b: Formula) -> Formula:
    return f_or(f_not(a), b)


def conjuncts(f: Formula) -> tuple[Formula, ...]:
    if isinstance(f, BoolOp) and f.op == "and":
        return f.args
    if isinstance(f, BoolLit) and f.value:
        return ()
    return (f,)


# ---------------------------------------------------------------------------
# statements and programs


@dataclass(frozen=True, slots=True)
class Assign:
    sid: int
    target: str
    value: Expr


@dataclass(frozen=True, slots=True)
class ArrStore:
    sid: int
    array: str
    index: Expr
    value: Expr


@dataclass(frozen=True, slots=True)
class If:
    sid: int
    cond: Formula  # quantifier-free
    then: tuple["Stmt", ...]
    orelse: tuple["Stmt", ...]


@dataclass(frozen=True, slots=True)
class For:
    sid: int
    counter: str
    bound: Expr  # the loop runs counter = 0 .. bound-1
    body: tuple["Stmt", ...]


Stmt = Union[Assign, ArrStore, If, For]


@dataclass(frozen=True)
class Ast:
    scalars: tuple[str, ...]
    arrays: tuple[str, ...]
    counters: tuple[str, ...]
    pre: Formula
    post: Formula
    body: tuple[Stmt, ...]
    filename: str = "<input>"
    positions: dict = field(default_factory=dict, compare=False, repr=False)

    def declared(self) -> set[str]:
        return set(self.scalars) | set(self.arrays) | set(self.counters) | {PARAM}


def walk_stmts(body: tuple[Stmt, ...]) -> Iterator[Stmt]:
    for st in body:
        yield st
        if isinstance(st, If):
            yield from walk_stmts(st.then)
            yield from walk_stmts(st.orelse)
        elif isinstance(st, For):
            yield from walk_stmts(st.body)


def loops_of(body: tuple[Stmt, ...]) -> list[For]:
    return [st for st in walk_stmts(body) if isinstance(st, For)]


def max_sid(body: tuple[Stmt, ...]) -> int:
    return max((st.sid for st in walk_stmts(body)), default=0)


def written_names(body: tuple[Stmt, ...]) -> set[str]:
    """Names assigned anywhere (loop counters excluded)."""
    out: set[str] = set()
    for st in walk_stmts(body):
        if isinstance(st, Assign):
            out.add(st.target)
        elif isinstance(st, ArrStore):
            out.add(st.array)
    return out


# ---------------------------------------------------------------------------
# traversal / substitution


def expr_reads(e: Expr) -> set[str]:
    """Every name occurring in e (array names included)."""
    match e:
        case Num():
            return set()
        case Name(id=x):
            return {x}
        case Read(array=a, index=i):
            return {a} | expr_reads(i)
        case Bin(left=l, right=r):
            return expr_reads(l) | expr_reads(r)
        case IteExpr(cond=c, then=t, orelse=o):
            return formula_reads(c) | expr_reads(t) | expr_reads(o)
    raise TypeError(e)


def formula_reads(f: Formula) -> set[str]:
    match f:
        case BoolLit():
            return set()
        case Cmp(left=l, right=r):
            return expr_reads(l) | expr_reads(r)
        case BoolOp(args=args):
            out: set[str] = set()
            for a in args:
                out |= formula_reads(a)
            return out
        case Not(arg=a):
            return formula_reads(a)
        case Forall(var=v, lo=lo, hi=hi, body=b):
            return expr_reads(lo) | expr_reads(hi) | (formula_reads(b) - {v})
    raise TypeError(f)


def stmt_reads(st: Stmt) -> set[str]:
    match st:
        case Assign(value=v):
            return expr_reads(v)
        case ArrStore(index=i, value=v):
            return expr_reads(i) | expr_reads(v)
        case If(cond=c, then=t, orelse=o):
            out = formula_reads(c)
            for s in t + o:
                out |= stmt_reads(s)
            return out
        case For(bound=b, body=body):
            out = expr_reads(b)
            for s in body:
                out |= stmt_reads(s)
            return out
    raise TypeError(st)


def subst_expr(e: Expr, env: dict[str, Expr]) -> Expr:
    match e:
        case Num():
            return e
        case Name(id=x):
            return env.get(x, e)
        case Read(array=a, index=i):
            return Read(a, subst_expr(i, env))
        case Bin(op=op, left=l, right=r):
            return Bin(op, subst_expr(l, env), subst_expr(r, env))
        case IteExpr(cond=c, then=t, orelse=o):
            return IteExpr(subst_formula(c, env), subst_expr(t, env), subst_expr(o, env))
    raise TypeError(e)


def subst_formula(f: Formula, env: dict[str, Expr]) -> Formula:
    match f:
        case BoolLit():
            return f
        case Cmp(op=op, left=l, right=r):
            return Cmp(op, subst_expr(l, env), subst_expr(r, env))
        case BoolOp(op=op, args=args):
            return BoolOp(op, tuple(subst_formula(a, env) for a in args))
        case Not(arg=a):
            return f_not(subst_formula(a, env))
        case Forall(var=v, lo=lo, hi=hi, body=b):
            inner = {k: e for k, e in env.items() if k != v}
            return Forall(v, subst_expr(lo, env), subst_expr(hi, env), subst_formula(b, inner))
    raise TypeError(f)


def rename_arrays_expr(e: Expr, ren: dict[str, str]) -> Expr:
    match e:
        case Num() | Name():
            return e
        case Read(array=a, index=i):
            return Read(ren.get(a, a), rename_arrays_expr(i, ren))
        case Bin(op=op, left=l, right=r):
            return Bin(op, rename_arrays_expr(l, ren), rename_arrays_expr(r, ren))
        case IteExpr(cond=c, then=t, orelse=o):
            return IteExpr(
                rename_arrays_formula(c, ren),
                rename_arrays_expr(t, ren),
                rename_arrays_expr(o, ren),
            )
    raise TypeError(e)


def rename_arrays_formula(f: Formula, ren: dict[str, str]) -> Formula:
    match f:
        case BoolLit():
            return f
        case Cmp(op=op, left=l, right=r):
            return Cmp(op, rename_arrays_expr(l, ren), rename_arrays_expr(r, ren))
        case BoolOp(op=op, args=args):
            return BoolOp(op, tuple(rename_arrays_formula(a, ren) for a in args))
        case Not(arg=a):
            return f_not(rename_arrays_formula(a, ren))
        case Forall(var=v, lo=lo, hi=hi, body=b):
            return Forall(
                v,
                rename_arrays_expr(lo, ren),
                rename_arrays_expr(hi, ren),
                rename_arrays_formula(b, ren),
            )
    raise TypeError(f)


def subst_stmt(st: Stmt, env: dict[str, Expr]) -> Stmt:
    """Substitute scalar names inside one statement (ids preserved)."""
    match st:
        case Assign(sid=sid, target=t, value=v):
            return Assign(sid, t, subst_expr(v, env))
        case ArrStore(sid=sid, array=a, index=i, value=v):
            return ArrStore(sid, a, subst_expr(i, env), subst_expr(v, env))
        case If(sid=sid, cond=c, then=t, orelse=o):
            return If(
                sid,
                subst_formula(c, env),
                tuple(subst_stmt(s, env) for s in t),
                tuple(subst_stmt(s, env) for s in o),
            )
        case For(sid=sid, counter=c, bound=b, body=body):
            inner = {k: v for k, v in env.items() if k != c}
            return For(sid, c, subst_expr(b, env), tuple(subst_stmt(s, inner) for s in body))
    raise TypeError(st)


def instantiate(ast: Ast, n: int) -> Ast:
    """Substitute the concrete size n for the parameter N everywhere.

    Quantified formulas stay quantified; their ranges become concrete.
    """
    env = {PARAM: Num(n)}
    return replace(
        ast,
        pre=subst_formula(ast.pre, env),
        post=subst_formula(ast.post, env),
        body=tuple(subst_stmt(s, env) for s in ast.body),
    )


# ---------------------------------------------------------------------------
# pretty printing (emits the surface syntax back; round-trips through parse)

_PREC = {"||": 0, "&&": 1, "cmp": 3, "+": 4, "-": 4, "*": 5, "/": 5, "^": 6}


def expr_to_str(e: Expr, parent_prec: int = 0, right: bool = False) -> str:
    match e:
        case Num(value=v):
            # negative literals get parens whenever they sit inside an operator
            return f"({v})" if v < 0 and parent_prec > 0 else str(v)
        case Name(id=x):
            return x
        case Read(array=a, index=i):
            return f"{a}[{expr_to_str(i)}]"
        case Bin(op=op, left=l, right=r):
            prec = _PREC[op]
            ls = expr_to_str(l, prec, False)
            rs = expr_to_str(r, prec + (0 if op in "+*" else 1), True)
            s = f"{ls} {op} {rs}"
            if prec < parent_prec or (prec == parent_prec and right):
                return f"({s})"
            return s
        case IteExpr(cond=c, then=t, orelse=o):
            return f"ite({formula_to_str(c)}, {expr_to_str(t)}, {expr_to_str(o)})"
    raise TypeError(e)


def formula_to_str(f: Formula, parent_prec: int = -1) -> str:
    match f:
        case BoolLit(value=v):
            return "true" if v else "false"
        case Cmp(op=op, left=l, right=r):
            return f"{expr_to_str(l, _PREC['cmp'])} {op} {expr_to_str(r, _PREC['cmp'])}"
        case BoolOp(op=op, args=args):
            sym = "&&" if op == "and" else "||"
            prec = _PREC[sym]
            s = f" {sym} ".join(formula_to_str(a, prec) for a in args)
            return f"({s})" if prec < parent_prec else s
        case Not(arg=a):
            return f"!({formula_to_str(a)})"
        case Forall(var=v, lo=lo, hi=hi, body=b):
            ranges = [f"{v} in {expr_to_str(lo)}..{expr_to_str(hi)}"]
            while isinstance(b, Forall):
                ranges.append(f"{b.var} in {expr_to_str(b.lo)}..{expr_to_str(b.hi)}")
                b = b.body
            s = f"forall {', '.join(ranges)} : {formula_to_str(b)}"
            return f"({s})" if parent_prec >= 0 else s
    raise TypeError(f)


def _stmt_lines(st: Stmt, indent: str) -> list[str]:
    match st:
        case Assign(target=t, value=v):
            return [f"{indent}{t} = {expr_to_str(v)};"]
        case ArrStore(array=a, index=i, value=v):
            return [f"{indent}{a}[{expr_to_str(i)}] = {expr_to_str(v)};"]
        case If(cond=c, then=t, orelse=o):
            out = [f"{indent}if ({formula_to_str(c)}) {{"]
            for s in t:
                out.extend(_stmt_lines(s, indent + "  "))
            if o:
                out.append(f"{indent}}} else {{")
                for s in o:
                    out.extend(_stmt_lines(s, indent + "  "))
            out.append(f"{indent}}}")
            return out
        case For(counter=c, bound=b, body=body):
            out = [f"{indent}for ({c} = 0; {c} < {expr_to_str(b)}; {c} = {c} + 1) {{"]
            for s in body:
                out.extend(_stmt_lines(s, indent + "  "))
            out.append(f"{indent}}}")
            return out
    raise TypeError(st)


def to_source(ast: Ast, header: str | None = None) -> str:
    lines: list[str] = []
    if header:
        lines.extend(f"// {h}" for h in header.splitlines())
    if ast.arrays:
        lines.append("int " + ", ".join(f"{a}[N]" for a in ast.arrays) + ";")
    if ast.scalars:
        lines.append("int " + ", ".join(ast.scalars) + ";")
    lines.append(f"assume({formula_to_str(ast.pre)});")
    for st in ast.body:
        lines.extend(_stmt_lines(st, ""))
    lines.append(f"assert({formula_to_str(ast.post)});")
    return "\n".join(lines) + "\n"
