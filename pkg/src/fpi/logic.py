"""Formula algebra for the induction engine.

Three jobs live here.  `syntactic_diff` derives the difference
pre-condition dphi(N) from phi(N), with True as the universal fallback.
`cond_2a_ok` decides whether a candidate dphi only reads state the
size-(N-1) program leaves untouched, at the granularity of individual
array cells.  `loop_free_wp` pushes a post-condition backwards through
the loop-free part of a difference program, which is how strengthening
formulas are discovered.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from .errors import NoProgress, UnhandledOperator
from .lang import (
    PARAM,
    ArrStore,
    Assign,
    Ast,
    Bin,
    BoolLit,
    BoolOp,
    Cmp,
    Expr,
    For,
    Forall,
    Formula,
    If,
    IteExpr,
    Name,
    Not,
    Num,
    Read,
    Stmt,
    TRUE,
    conjuncts,
    expr_reads,
    f_and,
    f_implies,
    f_not,
    f_or,
    formula_reads,
    rename_arrays_formula,
    subst_expr,
    subst_formula,
)
from .poly import Poly, from_expr, simplify_expr
from .transform import DiffProgram

ValidCb = Callable[[Formula], str]  # "proved" | "falsified" | "unknown"
SatCb = Callable[[Formula], str]  # "sat" | "unsat" | "unknown"

_N_MINUS_1 = Bin("-", Name(PARAM), Num(1))


@dataclass(frozen=True, slots=True)
class Validity:
    status: str  # Valid | Invalid | Unknown
    model: Optional[dict] = None


def is_valid(solver, f: Formula, *, assumptions: Formula = TRUE, n_min: int = 1, origin: str = "valid") -> Validity:
    """Tri-state validity of assumptions -> f with N symbolic, N >= n_min."""
    from .smt import check_triple_loop_free

    v = check_triple_loop_free(
        solver,
        f_and(assumptions, Cmp(">=", Name(PARAM), Num(n_min))),
        (),
        f,
        origin=origin,
    )
    if v.status == "Proved":
        return Validity("Valid")
    if v.status == "Falsified":
        return Validity("Invalid", model=v.model)
    return Validity("Unknown")


# ---------------------------------------------------------------------------
# formula simplification


def _resolve_expr(e: Expr) -> Expr:
    """Fold conditional terms with decidable conditions, recursively."""
    match e:
        case Num() | Name():
            return e
        case Read(array=a, index=i):
            return Read(a, _resolve_expr(i))
        case Bin(op=op, left=l, right=r):
            return Bin(op, _resolve_expr(l), _resolve_expr(r))
        case IteExpr(cond=c, then=t, orelse=o):
            cf = simplify_formula(c)
            if isinstance(cf, BoolLit):
                return _resolve_expr(t) if cf.value else _resolve_expr(o)
            return IteExpr(cf, _resolve_expr(t), _resolve_expr(o))
    raise TypeError(e)


def _simp_side(e: Expr) -> Expr:
    e = _resolve_expr(e)
    try:
        return simplify_expr(e)
    except UnhandledOperator:
        return e


def _cmp_truth(op: str, k: int) -> bool:
    return {
        "==": k == 0,
        "!=": k != 0,
        "<": k < 0,
        "<=": k <= 0,
        ">": k > 0,
        ">=": k >= 0,
    }[op]


def simplify_formula(f: Formula) -> Formula:
    match f:
        case BoolLit():
            return f
        case Cmp(op=op, left=l, right=r):
            l2, r2 = _simp_side(l), _simp_side(r)
            try:
                d = from_expr(Bin("-", l2, r2))
                if d.is_const():
                    return BoolLit(_cmp_truth(op, d.const_value()))
            except UnhandledOperator:
                pass
            return Cmp(op, l2, r2)
        case BoolOp(op=op, args=args):
            parts = [simplify_formula(a) for a in args]
            return f_and(*parts) if op == "and" else f_or(*parts)
        case Not(arg=a):
            return f_not(simplify_formula(a))
        case Forall(var=v, lo=lo, hi=hi, body=b):
            lo2, hi2 = _simp_side(lo), _simp_side(hi)
            body2 = simplify_formula(b)
            if isinstance(body2, BoolLit) and body2.value:
                return TRUE
            try:
                width = from_expr(Bin("-", hi2, lo2))
                if width.is_const() and width.const_value() < 0:
                    return TRUE
            except UnhandledOperator:
                pass
            return Forall(v, lo2, hi2, body2)
    raise TypeError(f)


# ---------------------------------------------------------------------------
# contextual folding under a parameter lower bound

_PARAM_ATOM = ("v", PARAM)
_Range = tuple[Optional[Poly], Optional[Poly]]


def _poly_of(e: Expr) -> Optional[Poly]:
    try:
        return from_expr(e)
    except UnhandledOperator:
        return None


def _poly_bound(p: Poly, n_ge: int, env: dict[str, _Range], lo_side: bool, depth: int = 8) -> Optional[int]:
    """Provable lower (lo_side) or upper bound of p, or None.

    Quantified variables are eliminated by substituting the range end
    their coefficient sign calls for, so relations like i <= hi(N) are
    kept rather than widened to an unbounded box.
    """
    for _ in range(depth):
        parts = p.linear_parts()
        if parts is None:
            return None
        coeffs, const = parts
        target = None
        for atom, c in coeffs.items():
            if atom == _PARAM_ATOM:
                continue
            if len(atom) == 2 and atom[0] == "v" and atom[1] in env:
                target = (atom, c)
                break
        if target is None:
            n_coeff = coeffs.pop(_PARAM_ATOM, 0)
            if coeffs:
                return None
            if n_coeff == 0:
                return const
            # parameter only bounded below, so one direction stays open
            if (n_coeff > 0) != lo_side:
                return None
            return n_coeff * n_ge + const
        atom, c = target
        lo_p, hi_p = env[atom[1]]
        end = lo_p if (c > 0) == lo_side else hi_p
        if end is None or atom in end.atoms():
            return None
        p = p + Poly.atom(atom) * Poly.const(-c) + end * Poly.const(c)
    return None


def _fold_cmp(op: str, l: Expr, r: Expr, n_ge: int, env: dict[str, _Range]) -> Formula:
    d = _poly_of(Bin("-", l, r))
    if d is None:
        return Cmp(op, l, r)
    mn = _poly_bound(d, n_ge, env, True)
    mx = _poly_bound(d, n_ge, env, False)
    if mn is not None and mn == mx:
        return BoolLit(_cmp_truth(op, mn))
    pos = mn is not None and mn > 0
    neg = mx is not None and mx < 0
    nonneg = mn is not None and mn >= 0
    nonpos = mx is not None and mx <= 0
    if op in ("==", "!=") and (pos or neg):
        return BoolLit(op == "!=")
    if op == "<" and (neg or nonneg):
        return BoolLit(neg)
    if op == "<=" and (nonpos or pos):
        return BoolLit(nonpos)
    if op == ">" and (pos or nonpos):
        return BoolLit(pos)
    if op == ">=" and (nonneg or neg):
        return BoolLit(nonneg)
    return Cmp(op, l, r)


def _fold_expr(e: Expr, n_ge: int, env: dict[str, _Range]) -> Expr:
    match e:
        case Num() | Name():
            return e
        case Read(array=a, index=i):
            return Read(a, _fold_expr(i, n_ge, env))
        case Bin(op=op, left=l, right=r):
            return Bin(op, _fold_expr(l, n_ge, env), _fold_expr(r, n_ge, env))
        case IteExpr(cond=c, then=t, orelse=o):
            cf = _fold_f(c, n_ge, env)
            if isinstance(cf, BoolLit):
                return _fold_expr(t if cf.value else o, n_ge, env)
            t2, o2 = _fold_expr(t, n_ge, env), _fold_expr(o, n_ge, env)
            if t2 == o2:
                return t2
            return IteExpr(cf, t2, o2)
    raise TypeError(e)


def _fold_side(e: Expr, n_ge: int, env: dict[str, _Range]) -> Expr:
    e = _fold_expr(e, n_ge, env)
    try:
        return simplify_expr(e)
    except UnhandledOperator:
        return e


def _fold_f(f: Formula, n_ge: int, env: dict[str, _Range]) -> Formula:
    match f:
        case BoolLit():
            return f
        case Cmp(op=op, left=l, right=r):
            return _fold_cmp(op, _fold_side(l, n_ge, env), _fold_side(r, n_ge, env), n_ge, env)
        case BoolOp(op=op, args=args):
            parts = [_fold_f(a, n_ge, env) for a in args]
            return f_and(*parts) if op == "and" else f_or(*parts)
        case Not(arg=a):
            return f_not(_fold_f(a, n_ge, env))
        case Forall(var=v, lo=lo, hi=hi, body=b):
            lo2, hi2 = _fold_side(lo, n_ge, env), _fold_side(hi, n_ge, env)
            lo_p, hi_p = _poly_of(lo2), _poly_of(hi2)
            if lo_p is not None and hi_p is not None:
                width = _poly_bound(hi_p - lo_p, n_ge, env, False)
                if width is not None and width < 0:
                    return TRUE
            body2 = _fold_f(b, n_ge, {**env, v: (lo_p, hi_p)})
            if isinstance(body2, BoolLit) and body2.value:
                return TRUE
            return Forall(v, lo2, hi2, body2)
    raise TypeError(f)


def fold_formula(f: Formula, n_ge: int = 2) -> Formula:
    """Simplify f assuming the parameter is at least n_ge.

    Beyond the context-free rules of simplify_formula, comparisons fold
    whenever the sign of the difference polynomial is provable from the
    parameter bound together with enclosing quantifier ranges (a body may
    be rewritten freely at indices outside its range).  The verifier runs
    this on candidate strengthening formulas to stop peel guards and
    out-of-range conditional branches from compounding across iterations.
    """
    return _fold_f(f, n_ge, {})


# ---------------------------------------------------------------------------
# difference pre-conditions


def _growth_one_instance(f: Forall) -> Optional[tuple[Formula, bool]]:
    """Instance at the one new index when the range grows by exactly 1.

    Returns (instance, structural) where structural means the implication
    phi(N) -> phi(N-1) and instance holds by construction (range ends and
    body free of the parameter), so no solver call is needed.
    """
    if f.var == PARAM or PARAM in expr_reads(f.lo):
        return None
    try:
        hi = from_expr(f.hi)
        him1 = from_expr(subst_expr(f.hi, {PARAM: _N_MINUS_1}))
    except UnhandledOperator:
        return None
    d = hi - him1
    if not d.is_const() or d.const_value() != 1:
        return None
    inst = subst_formula(f.body, {f.var: f.hi})
    structural = PARAM not in formula_reads(f.body)
    return simplify_formula(inst), structural


def syntactic_diff(phi: Formula, valid_cb: ValidCb) -> Formula:
    """Difference pre-condition dphi(N), or True when none can be justified.

    A universally quantified conjunct whose range grows by one yields its
    instance at the new index; other conjuncts propose themselves.  Every
    non-structural candidate must pass the validity check
    phi(N) -> phi(N-1) and dphi(N); failing conjuncts fall back to True.
    """
    out: list[Formula] = []
    for part in conjuncts(simplify_formula(phi)):
        cand: Formula
        structural = False
        if isinstance(part, Forall):
            got = _growth_one_instance(part)
            if got is None:
                cand = TRUE
            else:
                cand, structural = got
        elif isinstance(part, (Cmp, Not, BoolOp)):
            cand = part
        else:
            cand = TRUE
        if isinstance(cand, BoolLit):
            continue
        if not structural:
            prev = subst_formula(part, {PARAM: _N_MINUS_1})
            goal = f_implies(part, f_and(prev, cand))
            if valid_cb(goal) != "proved":
                continue
        out.append(cand)
    return f_and(*out)


# -- Theorem condition 2(a): dphi must not read state P_{N-1} modifies


def _array_reads_f(f: Formula, ctx: tuple[Formula, ...] = ()) -> list[tuple[str, Expr, tuple[Formula, ...]]]:
    """(array, index, range constraints) for every array read in f."""
    out: list[tuple[str, Expr, tuple[Formula, ...]]] = []

    def fe(e: Expr, ctx: tuple[Formula, ...]) -> None:
        match e:
            case Num() | Name():
                pass
            case Read(array=a, index=i):
                out.append((a, i, ctx))
                fe(i, ctx)
            case Bin(left=l, right=r):
                fe(l, ctx)
                fe(r, ctx)
            case IteExpr(cond=c, then=t, orelse=o):
                ff(c, ctx)
                fe(t, ctx)
                fe(o, ctx)

    def ff(g: Formula, ctx: tuple[Formula, ...]) -> None:
        match g:
            case BoolLit():
                pass
            case Cmp(left=l, right=r):
                fe(l, ctx)
                fe(r, ctx)
            case BoolOp(args=args):
                for a in args:
                    ff(a, ctx)
            case Not(arg=a):
                ff(a, ctx)
            case Forall(var=v, lo=lo, hi=hi, body=b):
                fe(lo, ctx)
                fe(hi, ctx)
                ff(b, ctx + (Cmp("<=", lo, Name(v)), Cmp("<=", Name(v), hi)))

    ff(f, ctx)
    return out


def _prev_writes(
    body: tuple[Stmt, ...],
) -> tuple[set[str], list[tuple[str, Expr, tuple[Formula, ...]]]]:
    """Scalar names and (array, index, context) cells written by P_{N-1}.

    Branch guards are dropped from the context, over-approximating the
    write set, which is the safe direction here.
    """
    scalars: set[str] = set()
    cells: list[tuple[str, Expr, tuple[Formula, ...]]] = []

    def walk(sts: tuple[Stmt, ...], ctx: tuple[Formula, ...]) -> None:
        for st in sts:
            match st:
                case Assign(target=t):
                    scalars.add(t)
                case ArrStore(array=a, index=i):
                    cells.append((a, subst_expr(i, {PARAM: _N_MINUS_1}), ctx))
                case If(then=t, orelse=o):
                    walk(t, ctx)
                    walk(o, ctx)
                case For(counter=c, bound=b, body=inner):
                    scalars.add(c)
                    bound = subst_expr(b, {PARAM: _N_MINUS_1})
                    walk(
                        inner,
                        ctx
                        + (
                            Cmp("<=", Num(0), Name(c)),
                            Cmp("<", Name(c), bound),
                        ),
                    )

    walk(body, ())
    return scalars, cells


def cond_2a_ok(dphi: Formula, prog: Ast, sat_cb: SatCb) -> bool:
    """True when dphi reads nothing the size-(N-1) program writes.

    Scalars are checked by name.  Array reads are checked per cell: the
    read index must be unsatisfiable as any write index under the write's
    loop-range constraints with N >= 2.
    """
    if isinstance(dphi, BoolLit):
        return True
    written_scalars, written_cells = _prev_writes(prog.body)
    reads = formula_reads(dphi)
    if reads & written_scalars:
        return False
    for a, ridx, rctx in _array_reads_f(dphi):
        hits = [w for w in written_cells if w[0] == a]
        if not hits:
            continue
        for _, widx, wctx in hits:
            overlap = f_and(
                *rctx,
                *wctx,
                Cmp("==", ridx, widx),
                Cmp(">=", Name(PARAM), Num(2)),
            )
            if sat_cb(overlap) != "unsat":
                return False
    return True


# ---------------------------------------------------------------------------
# loop-free weakest preconditions


def _fresh_var(base: str, taken: set[str]) -> str:
    i = 0
    cand = base
    while cand in taken:
        i += 1
        cand = f"{base}{i}"
    return cand


def _wp_store_expr(e: Expr, a: str, idx: Expr, val: Expr) -> Expr:
    match e:
        case Num() | Name():
            return e
        case Read(array=arr, index=i):
            i2 = _wp_store_expr(i, a, idx, val)
            if arr != a:
                return Read(arr, i2)
            return IteExpr(Cmp("==", i2, idx), val, Read(arr, i2))
        case Bin(op=op, left=l, right=r):
            return Bin(op, _wp_store_expr(l, a, idx, val), _wp_store_expr(r, a, idx, val))
        case IteExpr(cond=c, then=t, orelse=o):
            return IteExpr(
                _wp_store_formula(c, a, idx, val),
                _wp_store_expr(t, a, idx, val),
                _wp_store_expr(o, a, idx, val),
            )
    raise TypeError(e)


def _wp_store_formula(f: Formula, a: str, idx: Expr, val: Expr) -> Formula:
    match f:
        case BoolLit():
            return f
        case Cmp(op=op, left=l, right=r):
            return Cmp(op, _wp_store_expr(l, a, idx, val), _wp_store_expr(r, a, idx, val))
        case BoolOp(op=op, args=args):
            return BoolOp(op, tuple(_wp_store_formula(g, a, idx, val) for g in args))
        case Not(arg=g):
            return f_not(_wp_store_formula(g, a, idx, val))
        case Forall(var=v, lo=lo, hi=hi, body=b):
            # the store's index/value come from program code; a clashing
            # bound variable must step aside before they move underneath
            if v in (expr_reads(idx) | expr_reads(val)):
                v2 = _fresh_var(v, formula_reads(b) | expr_reads(idx) | expr_reads(val))
                b = subst_formula(b, {v: Name(v2)})
                v = v2
            return Forall(
                v,
                _wp_store_expr(lo, a, idx, val),
                _wp_store_expr(hi, a, idx, val),
                _wp_store_formula(b, a, idx, val),
            )
    raise TypeError(f)


def _loop_writes(loop: For) -> set[str]:
    out = {loop.counter}

    def walk(sts: tuple[Stmt, ...]) -> None:
        for st in sts:
            match st:
                case Assign(target=t):
                    out.add(t)
                case ArrStore(array=a):
                    out.add(a)
                case If(then=t, orelse=o):
                    walk(t)
                    walk(o)
                case For(counter=c, body=b):
                    out.add(c)
                    walk(b)

    walk(loop.body)
    return out


def _wp_block(sts: tuple[Stmt, ...], f: Formula) -> Formula:
    for st in reversed(sts):
        f = _wp_stmt(st, f)
    return f


def _wp_stmt(st: Stmt, f: Formula) -> Formula:
    match st:
        case Assign(target=t, value=v):
            return subst_formula(f, {t: v})
        case ArrStore(array=a, index=i, value=v):
            return _wp_store_formula(f, a, i, v)
        case If(cond=c, then=then, orelse=orelse):
            ft = _wp_block(then, f)
            fe = _wp_block(orelse, f)
            if ft == fe:
                return ft
            return f_and(f_implies(c, ft), f_implies(f_not(c), fe))
        case For() as loop:
            if _loop_writes(loop) & formula_reads(f):
                raise NoProgress(
                    "weakest pre-condition blocked: a surviving loop writes state the formula reads"
                )
            return f
    raise TypeError(st)


def loop_free_wp(post: Formula, dp: DiffProgram) -> Formula:
    """Weakest pre-condition of post across dp's body, loops skipped.

    post is over the doubled vocabulary (the state after dp).  The result
    is over the _Nm1 names, i.e. the state after P_{N-1}; output arrays
    are folded back onto the arrays that seed them.  A surviving loop
    whose writes the formula reads stops progress.
    """
    f = _wp_block(dp.ast.body, post)
    if dp.array_aliases:
        f = rename_arrays_formula(f, dict(dp.array_aliases))
    return simplify_formula(f)
