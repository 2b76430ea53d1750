"""Peeling, affected-variable analysis, and difference-program generation.

The inductive step reasons about a program much smaller than P_N: peel the
trailing iterations off every loop so each loop body runs exactly as often
as it does in P_{N-1}, work out which definitions can differ between the
two runs, and rewrite the program so it only computes those differences.

Vocabulary convention: for every original name x, `x_Nm1` holds the value
x has after a run of P_{N-1} and `x_N` the value after P_N.  The
difference program dP_N reads _Nm1 names as inputs and writes _N names;
every written name starts out equal to its _Nm1 counterpart (scalars get
an explicit seed assignment, arrays are aliased via
DiffProgram.array_aliases so no O(N) copy is materialized).  Names dP_N
never writes keep the _Nm1 suffix outright, which is how deleted loops
delegate their effect to the P_{N-1} prefix of the composition.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from .cfg import Cfg, build_cfg
from .errors import (
    BranchNotStable,
    NonConstantPeel,
    TransformError,
    UnhandledOperator,
)
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
    N,
    Name,
    Not,
    Num,
    ONE,
    Read,
    Stmt,
    TRUE,
    e_sub,
    expr_reads,
    expr_to_str,
    f_and,
    f_not,
    f_or,
    formula_reads,
    max_sid,
    subst_expr,
    subst_formula,
    subst_stmt,
    walk_stmts,
    written_names,
)
from .interp import Store, run
from .pdg import SatCheck, construct_pdg, refine_pdg
from .poly import Poly, from_expr, simplify_expr, to_expr

SUF_N = "_N"
SUF_NM1 = "_Nm1"

_N_MINUS_1 = e_sub(N, ONE)


# ---------------------------------------------------------------------------
# renaming over the doubled vocabulary


def rename_expr(e: Expr, ren: dict[str, str]) -> Expr:
    """Rename scalar and array identifiers; loop counters and N pass through."""
    match e:
        case Num():
            return e
        case Name(id=x):
            return Name(ren[x]) if x in ren else e
        case Read(array=a, index=i):
            return Read(ren.get(a, a), rename_expr(i, ren))
        case Bin(op=op, left=l, right=r):
            return Bin(op, rename_expr(l, ren), rename_expr(r, ren))
        case IteExpr(cond=c, then=t, orelse=o):
            return IteExpr(rename_formula(c, ren), rename_expr(t, ren), rename_expr(o, ren))
    raise TypeError(e)


def rename_formula(f: Formula, ren: dict[str, str]) -> Formula:
    match f:
        case BoolLit():
            return f
        case Cmp(op=op, left=l, right=r):
            return Cmp(op, rename_expr(l, ren), rename_expr(r, ren))
        case BoolOp(op=op, args=args):
            return BoolOp(op, tuple(rename_formula(a, ren) for a in args))
        case Not(arg=a):
            return Not(rename_formula(a, ren))
        case Forall(var=v, lo=lo, hi=hi, body=b):
            # quantifier variables live in their own namespace
            inner = {k: rep for k, rep in ren.items() if k != v}
            return Forall(v, rename_expr(lo, ren), rename_expr(hi, ren), rename_formula(b, inner))
    raise TypeError(f)


def rename_stmt(st: Stmt, ren: dict[str, str]) -> Stmt:
    if isinstance(st, Assign):
        return Assign(st.sid, ren.get(st.target, st.target), rename_expr(st.value, ren))
    if isinstance(st, ArrStore):
        return ArrStore(
            st.sid, ren.get(st.array, st.array), rename_expr(st.index, ren), rename_expr(st.value, ren)
        )
    if isinstance(st, If):
        return If(
            st.sid,
            rename_formula(st.cond, ren),
            tuple(rename_stmt(s, ren) for s in st.then),
            tuple(rename_stmt(s, ren) for s in st.orelse),
        )
    if isinstance(st, For):
        return For(st.sid, st.counter, rename_expr(st.bound, ren), tuple(rename_stmt(s, ren) for s in st.body))
    raise TypeError(st)


# ---------------------------------------------------------------------------
# loop peeling


@dataclass(frozen=True)
class PeeledProgram:
    """P_N with every loop cut back to the P_{N-1} trip count; the removed
    trailing iterations follow the loop as straight-line copies."""

    cfg: Cfg
    peel_nodes: frozenset[int]

    @property
    def ast(self) -> Ast:
        return self.cfg.ast


def _fresh_sids(st: Stmt, next_sid: int) -> tuple[Stmt, int, set[int]]:
    made: set[int] = set()

    def walk(s: Stmt) -> Stmt:
        nonlocal next_sid
        sid = next_sid
        next_sid += 1
        made.add(sid)
        if isinstance(s, Assign):
            return Assign(sid, s.target, s.value)
        if isinstance(s, ArrStore):
            return ArrStore(sid, s.array, s.index, s.value)
        if isinstance(s, If):
            return If(sid, s.cond, tuple(walk(x) for x in s.then), tuple(walk(x) for x in s.orelse))
        raise TransformError(f"cannot peel statement of kind {type(s).__name__}")

    out = walk(st)
    return out, next_sid, made


def peel_all_loops(cfg: Cfg) -> PeeledProgram:
    """Rewrite every loop bound k(N) to k(N-1) and unroll the difference.

    The number of peeled copies k(N)-k(N-1) must normalize to a nonnegative
    integer; anything else aborts the induction.
    """
    ast = cfg.ast
    next_sid = max_sid(ast.body) + 1
    body: list[Stmt] = []
    peel: set[int] = set()
    for st in ast.body:
        if not isinstance(st, For):
            body.append(st)
            continue
        k = from_expr(st.bound)
        km1 = from_expr(subst_expr(st.bound, {PARAM: _N_MINUS_1}))
        count = (k - km1).const_value()
        if count is None or count < 0:
            raise NonConstantPeel(
                "failed to peel non-constant number of iterations: "
                f"trip count {expr_to_str(st.bound)} changes by a non-constant amount"
            )
        body.append(replace(st, bound=to_expr(km1)))
        for j in range(count):
            at = to_expr(km1 + Poly.const(j))
            for inner in st.body:
                cp = subst_stmt(inner, {st.counter: at})
                cp, next_sid, made = _fresh_sids(cp, next_sid)
                peel.update(made)
                body.append(cp)
    peeled_ast = replace(ast, body=tuple(body))
    return PeeledProgram(build_cfg(peeled_ast), frozenset(peel))


# ---------------------------------------------------------------------------
# affected-variable analysis


@dataclass(frozen=True)
class AffectedSet:
    """Names whose final value may differ between P_{N-1} and the first
    k(N-1) iterations of P_N, plus the defining nodes that witness it."""

    names: frozenset[str]
    nodes: frozenset[int]

    def __contains__(self, name: str) -> bool:
        return name in self.names


def _raw_reads(st: Stmt) -> set[str]:
    if isinstance(st, Assign):
        return expr_reads(st.value)
    if isinstance(st, ArrStore):
        return expr_reads(st.index) | expr_reads(st.value)
    if isinstance(st, If):
        return formula_reads(st.cond)
    return set()


def compute_affected(cfg: Cfg, peel_nodes: frozenset[int], sat_check: SatCheck) -> AffectedSet:
    """Least fixed point of the propagation rules over the refined PDG.

    Seeds with {N}.  A definition is affected when it reads an affected
    name (N included), when a reaching definition of one of its reads is a
    peeled node or an affected node, or when it is control-dependent on a
    predicate so marked.  Loop exit conditions do not count as reads: both
    runs execute the kept loop exactly k(N-1) times.
    """
    pdg = refine_pdg(construct_pdg(cfg), cfg, sat_check)
    stmts = cfg.stmts
    work = sorted(pdg.v - peel_nodes)
    reads = {sid: _raw_reads(stmts[sid]) for sid in work}
    into = {sid: [w for w, r, _nm in pdg.de if r == sid] for sid in work}
    parents = {sid: [p for p, c in pdg.ce if c == sid] for sid in work}

    names: set[str] = {PARAM}
    nodes: set[int] = set()
    changed = True
    while changed:
        changed = False
        for sid in work:
            if sid in nodes:
                continue
            hit = bool(reads[sid] & names)
            hit = hit or any(w in peel_nodes or w in nodes for w in into[sid])
            hit = hit or any(p in nodes for p in parents[sid])
            if not hit:
                continue
            nodes.add(sid)
            changed = True
            st = stmts[sid]
            if isinstance(st, Assign):
                names.add(st.target)
            elif isinstance(st, ArrStore):
                names.add(st.array)
    return AffectedSet(frozenset(names), frozenset(nodes))


# ---------------------------------------------------------------------------
# difference program


@dataclass(frozen=True)
class DiffProgram:
    """dP_N over the doubled vocabulary, plus the bookkeeping the engine
    needs to phrase obligations about it."""

    cfg: Cfg
    assumptions: tuple[Formula, ...]
    array_aliases: dict[str, str] = field(compare=False)  # A_N -> A_Nm1 seed
    written: frozenset[str]  # original names dP_N writes
    affected: AffectedSet
    peeled: PeeledProgram

    @property
    def ast(self) -> Ast:
        return self.cfg.ast

    @property
    def loop_count(self) -> int:
        return len(self.cfg.loops)

    def final_name(self, name: str) -> str:
        """Diff-land name holding x's value after P_N."""
        return name + (SUF_N if name in self.written else SUF_NM1)

    def hyp_name(self, name: str) -> str:
        """Diff-land name holding x's value after P_{N-1}."""
        return name + SUF_NM1

    def final_rename(self) -> dict[str, str]:
        orig = self.peeled.ast
        return {x: self.final_name(x) for x in (*orig.scalars, *orig.arrays)}

    def hyp_rename(self) -> dict[str, str]:
        orig = self.peeled.ast
        return {x: self.hyp_name(x) for x in (*orig.scalars, *orig.arrays)}


def branch_diff(cond: Formula, affected: AffectedSet, loop: For, sat_check: SatCheck) -> Formula:
    """Keep a loop-body branch condition only if it provably evaluates the
    same way at sizes N and N-1; the returned copy reads the stable _Nm1
    names."""
    bad = sorted(formula_reads(cond) & affected.names)
    if bad:
        raise BranchNotStable(
            f"branch condition {_fmt(cond)} may not evaluate to same value: reads affected {bad}"
        )
    shifted = subst_formula(cond, {PARAM: _N_MINUS_1})
    differs = f_or(f_and(cond, f_not(shifted)), f_and(f_not(cond), shifted))
    guard = f_and(
        Cmp(">", N, ONE),
        Cmp("<=", Num(0), Name(loop.counter)),
        Cmp("<", Name(loop.counter), loop.bound),
        differs,
    )
    if sat_check(guard) != "unsat":
        raise BranchNotStable(
            f"branch condition {_fmt(cond)} may not evaluate to same value across N and N-1"
        )
    ren = {x: x + SUF_NM1 for x in formula_reads(cond)}
    ren.pop(loop.counter, None)
    ren.pop(PARAM, None)
    return rename_formula(cond, ren)


def _fmt(f: Formula) -> str:
    from .lang import formula_to_str

    return formula_to_str(f)


class _DiffBuilder:
    def __init__(self, peeled: PeeledProgram, affected: AffectedSet, sat_check: SatCheck):
        self.past = peeled.ast
        self.peel_nodes = peeled.peel_nodes
        self.aff = affected
        self.sat_check = sat_check
        self.assumptions: list[Formula] = []
        # recognition of already-emitted difference facts:
        # array name -> (counter it was indexed by, delta over N / constants)
        self.facts: dict[str, tuple[str, Expr]] = {}
        self.written: frozenset[str] = frozenset()
        self.cur: dict[str, str] = {}
        self.old: dict[str, str] = {}
        # names written by statements already emitted, for peel-read routing
        self.done_scalars: set[str] = set()
        self.done_cells: dict[str, list[Optional[Poly]]] = {}  # None = symbolic range

    # -- version helpers ----------------------------------------------------

    def _cur_expr(self, e: Expr) -> Expr:
        return rename_expr(e, self.cur)

    def _old_expr(self, e: Expr) -> Expr:
        return subst_expr(rename_expr(e, self.old), {PARAM: _N_MINUS_1})

    def _resolver(self, node):
        """Fold B_N[i] into B_Nm1[i] + delta when dP_N already computes B
        that way, so operand differences collapse to closed forms."""
        if not isinstance(node, Read):
            return None
        base = node.array
        if not base.endswith(SUF_N):
            return None
        fact = self.facts.get(base[: -len(SUF_N)])
        if fact is None:
            return None
        counter, delta = fact
        inst = subst_expr(delta, {counter: node.index})
        return from_expr(Bin("+", Read(base[: -len(SUF_N)] + SUF_NM1, node.index), inst))

    def _delta(self, r: Expr) -> Expr:
        return simplify_expr(Bin("-", self._cur_expr(r), self._old_expr(r)), self._resolver)

    def _ratio(self, r: Expr) -> Expr:
        return simplify_expr(Bin("/", self._cur_expr(r), self._old_expr(r)), self._resolver)

    # -- statement rewriting inside kept loops -------------------------------

    def assignment_diff(self, st: Assign | ArrStore, loop: For) -> Stmt:
        value = st.value
        if isinstance(st, ArrStore):
            idx_bad = sorted(expr_reads(st.index) & self.aff.names)
            if idx_bad:
                raise UnhandledOperator(
                    f"store subscript {expr_to_str(st.index)} depends on affected {idx_bad}"
                )
            idx = self._cur_expr(st.index)
            w_new: Expr = Read(st.array + SUF_N, idx)
            w_old: Expr = Read(st.array + SUF_NM1, idx)
        else:
            w_new = Name(st.target + SUF_N)
            w_old = Name(st.target + SUF_NM1)

        if isinstance(value, Bin) and value.op in "+-*/":
            op, r1, r2 = value.op, value.left, value.right
        else:
            op, r1, r2 = "+", value, None

        if op in "+-":
            d1 = self._delta(r1)
            rhs = d1 if r2 is None else Bin(op, d1, self._delta(r2))
            new_value: Expr = Bin("+", w_old, rhs)
        else:
            q1 = self._ratio(r1)
            q2 = self._ratio(r2) if r2 is not None else None
            rhs = q1 if q2 is None else Bin(op, q1, q2)
            new_value = Bin("*", w_old, rhs)
            self._nonzero(r1, r2)

        if isinstance(st, ArrStore):
            return ArrStore(st.sid, st.array + SUF_N, idx, new_value)
        return Assign(st.sid, st.target + SUF_N, new_value)

    def aggregate_assignment_diff(self, st: Assign, loop: For) -> Stmt:
        """w := w op r accumulated over the loop: the seed w_N := w_Nm1 is
        already in place, the body folds in only the per-iteration change."""
        value = st.value
        assert isinstance(value, Bin)
        op = value.op
        r1 = value.right if isinstance(value.left, Name) and value.left.id == st.target else value.left
        if op in "+-":
            change = self._delta(r1)
        else:
            change = self._ratio(r1)
            self._nonzero(r1, None)
        return Assign(st.sid, st.target + SUF_N, Bin(op, Name(st.target + SUF_N), change))

    def _nonzero(self, r1: Expr, r2: Optional[Expr]) -> None:
        term = self._old_expr(r1)
        if r2 is not None:
            term = Bin("*", term, self._old_expr(r2))
        cond = Cmp("!=", term, Num(0))
        if cond not in self.assumptions:
            self.assumptions.append(cond)

    def diff_loop_stmt(self, st: Stmt, loop: For) -> Stmt:
        if isinstance(st, If):
            cond = branch_diff(st.cond, self.aff, loop, self.sat_check)
            return If(
                st.sid,
                cond,
                tuple(self.diff_loop_stmt(s, loop) for s in st.then),
                tuple(self.diff_loop_stmt(s, loop) for s in st.orelse),
            )
        if isinstance(st, Assign):
            v = st.value
            if isinstance(v, Bin) and v.op in "+-*/":
                left_is_w = isinstance(v.left, Name) and v.left.id == st.target
                right_is_w = isinstance(v.right, Name) and v.right.id == st.target
                if left_is_w and st.target not in expr_reads(v.right):
                    return self.aggregate_assignment_diff(st, loop)
                if right_is_w and v.op in "+*" and st.target not in expr_reads(v.left):
                    flipped = replace(st, value=Bin(v.op, v.right, v.left))
                    return self.aggregate_assignment_diff(flipped, loop)
                if left_is_w or right_is_w:
                    raise UnhandledOperator(
                        f"specified operator not handled: {st.target} = "
                        f"{expr_to_str(v)} is not an aggregate update"
                    )
            return self.assignment_diff(st, loop)
        if isinstance(st, ArrStore):
            if st.array in expr_reads(st.value) and not self._self_read_ok(st):
                raise UnhandledOperator(
                    f"store to {st.array} reads the same array at a subscript that may "
                    "not be written yet"
                )
            return self.assignment_diff(st, loop)
        raise TransformError(f"cannot rewrite statement of kind {type(st).__name__}")

    def _self_read_ok(self, st: ArrStore) -> bool:
        # reads of the stored array must hit the cell being written or an
        # earlier one; later cells still hold values from the previous size
        widx = from_expr(st.index)

        def reads_of(e: Expr) -> list[Expr]:
            out = []

            def visit(x: Expr) -> None:
                if isinstance(x, Read):
                    if x.array == st.array:
                        out.append(x.index)
                    visit(x.index)
                elif isinstance(x, Bin):
                    visit(x.left)
                    visit(x.right)
                elif isinstance(x, IteExpr):
                    visit(x.then)
                    visit(x.orelse)

            visit(e)
            return out

        for ridx in reads_of(st.value):
            gap = (widx - from_expr(ridx)).const_value()
            if gap is None or gap < 0:
                return False
        return True

    # -- peel and top-level replay -------------------------------------------

    def _replay_name(self, name: str, idx: Optional[Poly]) -> str:
        if name not in self.written:
            return name + SUF_NM1
        if name in self.done_scalars:
            return name + SUF_N
        cells = self.done_cells.get(name)
        if cells is not None:
            if idx is None:
                return name + SUF_N
            for w in cells:
                if w is None:
                    return name + SUF_N
                gap = (idx - w).const_value()
                if gap is None or gap == 0:
                    return name + SUF_N
            return name + SUF_NM1
        return name + SUF_NM1

    def _replay_expr(self, e: Expr) -> Expr:
        match e:
            case Num():
                return e
            case Name(id=x):
                if x == PARAM or x not in self.cur:
                    return e
                return Name(self._replay_name(x, None))
            case Read(array=a, index=i):
                ri = self._replay_expr(i)
                if a not in self.cur:
                    return Read(a, ri)
                try:
                    ip: Optional[Poly] = from_expr(i)
                except UnhandledOperator:
                    ip = None
                return Read(self._replay_name(a, ip), ri)
            case Bin(op=op, left=l, right=r):
                return Bin(op, self._replay_expr(l), self._replay_expr(r))
            case IteExpr(cond=c, then=t, orelse=o):
                return IteExpr(self._replay_formula(c), self._replay_expr(t), self._replay_expr(o))
        raise TypeError(e)

    def _replay_formula(self, f: Formula) -> Formula:
        match f:
            case BoolLit():
                return f
            case Cmp(op=op, left=l, right=r):
                return Cmp(op, self._replay_expr(l), self._replay_expr(r))
            case BoolOp(op=op, args=args):
                return BoolOp(op, tuple(self._replay_formula(a) for a in args))
            case Not(arg=a):
                return Not(self._replay_formula(a))
            case Forall(var=v, lo=lo, hi=hi, body=b):
                return Forall(v, self._replay_expr(lo), self._replay_expr(hi), self._replay_formula(b))
        raise TypeError(f)

    def replay_stmt(self, st: Stmt) -> Stmt:
        if isinstance(st, Assign):
            out: Stmt = Assign(st.sid, st.target + SUF_N, self._replay_expr(st.value))
            self._note_write(st.target, None, scalar=True)
            return out
        if isinstance(st, ArrStore):
            value = self._replay_expr(st.value)
            idx = self._replay_expr(st.index)
            self._note_write(st.array, self._idx_poly(st.index), scalar=False)
            return ArrStore(st.sid, st.array + SUF_N, idx, value)
        if isinstance(st, If):
            cond = self._replay_formula(st.cond)
            entry_scalars = set(self.done_scalars)
            entry_cells = {k: list(v) for k, v in self.done_cells.items()}
            then = tuple(self.replay_stmt(s) for s in st.then)
            mid_scalars, mid_cells = self.done_scalars, self.done_cells
            self.done_scalars = entry_scalars
            self.done_cells = entry_cells
            orelse = tuple(self.replay_stmt(s) for s in st.orelse)
            self.done_scalars |= mid_scalars
            for k, v in mid_cells.items():
                self.done_cells.setdefault(k, []).extend(v)
            return If(st.sid, cond, then, orelse)
        raise TransformError(f"cannot replay statement of kind {type(st).__name__}")

    @staticmethod
    def _idx_poly(e: Optional[Expr]) -> Optional[Poly]:
        if e is None:
            return None
        try:
            return from_expr(e)
        except UnhandledOperator:
            return None

    def _note_write(self, name: str, idx: Optional[Poly], scalar: bool) -> None:
        if scalar:
            self.done_scalars.add(name)
        else:
            self.done_cells.setdefault(name, []).append(idx)


def _any_affected(st: Stmt, nodes: frozenset[int]) -> bool:
    return any(s.sid in nodes for s in walk_stmts((st,)))


def _check_counter_scope(ast: Ast) -> None:
    counters = set(ast.counters)
    if not counters:
        return
    for st in ast.body:
        if isinstance(st, For):
            foreign = counters - {st.counter}
            for inner in walk_stmts(st.body):
                bad = _raw_reads(inner) & foreign
                if bad:
                    raise TransformError(f"loop counter {sorted(bad)} read outside its loop")
                if isinstance(inner, For):
                    raise TransformError("nested loops are outside the accepted fragment")
        else:
            for inner in walk_stmts((st,)):
                bad = _raw_reads(inner) & counters
                if bad:
                    raise TransformError(f"loop counter {sorted(bad)} read outside its loop")


def program_diff(cfg: Cfg, sat_check: SatCheck) -> DiffProgram:
    """Build dP_N: peel, analyze, then keep only difference-relevant code.

    Loops with no affected definition are deleted outright; loops with one
    are kept (at trip count k(N-1)) with every statement rewritten to a
    difference form; peeled iterations and affected top-level statements
    are replayed over the doubled vocabulary.
    """
    peeled = peel_all_loops(cfg)
    aff = compute_affected(peeled.cfg, peeled.peel_nodes, sat_check)
    past = peeled.ast
    _check_counter_scope(past)

    plan: list[tuple[str, Stmt]] = []
    for st in past.body:
        if isinstance(st, For):
            if any(s.sid in aff.nodes for s in walk_stmts(st.body)):
                plan.append(("loop", st))
        elif st.sid in peeled.peel_nodes or any(
            sid in peeled.peel_nodes for sid in (s.sid for s in walk_stmts((st,)))
        ):
            plan.append(("replay", st))
        elif _any_affected(st, aff.nodes):
            plan.append(("replay", st))

    written: set[str] = set()
    for kind, st in plan:
        written |= written_names((st,))

    builder = _DiffBuilder(peeled, aff, sat_check)
    builder.written = frozenset(written)
    all_names = (*past.scalars, *past.arrays)
    builder.cur = {x: x + (SUF_N if x in written else SUF_NM1) for x in all_names}
    builder.old = {x: x + SUF_NM1 for x in all_names}

    next_sid = max_sid(past.body) + 1
    body: list[Stmt] = []
    for s in sorted(written & set(past.scalars)):
        body.append(Assign(next_sid, s + SUF_N, Name(s + SUF_NM1)))
        next_sid += 1

    for kind, st in plan:
        if kind == "loop":
            assert isinstance(st, For)
            bound_bad = sorted(expr_reads(st.bound) & (aff.names - {PARAM}))
            if bound_bad:
                raise UnhandledOperator(f"loop bound reads affected {bound_bad}")
            new_body = tuple(builder.diff_loop_stmt(s, st) for s in st.body)
            bound = rename_expr(st.bound, builder.old)
            body.append(For(st.sid, st.counter, bound, new_body))
            for arr, idx in _loop_facts(st, new_body):
                builder.facts[arr] = idx
            for name in written_names(st.body):
                if name in past.scalars:
                    builder._note_write(name, None, scalar=True)
                else:
                    builder._note_write(name, None, scalar=False)
        else:
            body.append(builder.replay_stmt(st))

    scalars = tuple(sorted({s + SUF_NM1 for s in past.scalars} | {s + SUF_N for s in written & set(past.scalars)}))
    arrays = tuple(sorted({a + SUF_NM1 for a in past.arrays} | {a + SUF_N for a in written & set(past.arrays)}))
    counters = tuple(l.counter for l in (st for k, st in plan if k == "loop") if isinstance(l, For))
    diff_ast = Ast(
        scalars=scalars,
        arrays=arrays,
        counters=counters,
        pre=TRUE,
        post=TRUE,
        body=tuple(body),
        filename=past.filename,
    )
    aliases = {a + SUF_N: a + SUF_NM1 for a in sorted(written & set(past.arrays))}
    return DiffProgram(
        cfg=build_cfg(diff_ast),
        assumptions=tuple(builder.assumptions),
        array_aliases=aliases,
        written=frozenset(written),
        affected=aff,
        peeled=peeled,
    )


def _loop_facts(loop: For, diff_body: tuple[Stmt, ...]) -> list[tuple[str, tuple[str, Expr]]]:
    """Difference facts this loop establishes for every cell it covers:
    unconditional stores A_N[c] = A_Nm1[c] + delta with delta over N and
    constants only."""
    out = []
    stores = [s for s in diff_body if isinstance(s, ArrStore)]
    if len(stores) != len(diff_body):
        return []
    multi = {s.array for s in stores if sum(1 for t in stores if t.array == s.array) > 1}
    for s in stores:
        base = s.array[: -len(SUF_N)] if s.array.endswith(SUF_N) else None
        if base is None or s.array in multi:
            continue
        if s.index != Name(loop.counter):
            continue
        v = s.value
        if not (isinstance(v, Bin) and v.op == "+" and v.left == Read(base + SUF_NM1, s.index)):
            continue
        if expr_reads(v.right) <= {PARAM}:
            out.append((base, (loop.counter, v.right)))
    return out


# ---------------------------------------------------------------------------
# simplification and acceleration


def _is_copy(st: Stmt, aliases: dict[str, str]) -> bool:
    if isinstance(st, Assign):
        v = st.value
        if not isinstance(v, Name):
            return False
        twin = st.target[: -len(SUF_N)] + SUF_NM1 if st.target.endswith(SUF_N) else None
        return v.id == st.target or v.id == twin
    if isinstance(st, ArrStore):
        v = st.value
        if not isinstance(v, Read) or v.index != st.index:
            return False
        return v.array == st.array or aliases.get(st.array) == v.array
    return False


def _clean_stmt(st: Stmt) -> Stmt:
    def clean(e: Expr) -> Expr:
        try:
            return simplify_expr(e)
        except UnhandledOperator:
            return e

    if isinstance(st, Assign):
        return replace(st, value=clean(st.value))
    if isinstance(st, ArrStore):
        return replace(st, index=clean(st.index), value=clean(st.value))
    if isinstance(st, If):
        return If(
            st.sid,
            st.cond,
            tuple(_clean_stmt(s) for s in st.then),
            tuple(_clean_stmt(s) for s in st.orelse),
        )
    return st


def _accelerate(loop: For, body: tuple[Stmt, ...]) -> Optional[Stmt]:
    if len(body) != 1 or not isinstance(body[0], Assign):
        return None
    st = body[0]
    v = st.value
    if not isinstance(v, Bin):
        return None
    if isinstance(v.left, Name) and v.left.id == st.target:
        op, e = v.op, v.right
    elif isinstance(v.right, Name) and v.right.id == st.target and v.op in "+*":
        op, e = v.op, v.left
    else:
        return None
    if expr_reads(e) & ({loop.counter} | {st.target}):
        return None
    if op in "+-":
        try:
            total = simplify_expr(Bin("*", loop.bound, e))
        except UnhandledOperator:
            return None
        return Assign(st.sid, st.target, Bin(op, Name(st.target), total))
    if op in "*/" and isinstance(e, Num):
        return Assign(st.sid, st.target, Bin(op, Name(st.target), Bin("^", e, loop.bound)))
    return None


def simplify_diff(dp: DiffProgram) -> DiffProgram:
    """Clean +0/*1 residue, drop loops that only copy values across the
    vocabulary, and accelerate single-accumulator loops to closed form.
    Never increases the loop count."""
    body: list[Stmt] = []
    for st in dp.ast.body:
        if not isinstance(st, For):
            body.append(_clean_stmt(st))
            continue
        nb = tuple(_clean_stmt(s) for s in st.body)
        if all(_is_copy(s, dp.array_aliases) for s in nb):
            continue
        acc = _accelerate(st, nb)
        if acc is not None:
            body.append(acc)
            continue
        body.append(replace(st, body=nb))
    counters = tuple(st.counter for st in body if isinstance(st, For))
    new_ast = replace(dp.ast, body=tuple(body), counters=counters)
    return replace(dp, cfg=build_cfg(new_ast))


# ---------------------------------------------------------------------------
# interpreter-level composition, for differential checking


def truncated_store(store, n: int):
    """Restrict a size-n input store to the size n-1 run of P_{N-1}."""
    return Store(
        n - 1,
        dict(store.scalars),
        {a: list(c[: n - 1]) for a, c in store.arrays.items()},
    )


def composed_store(out_prev, dp: DiffProgram, input_store, pad: int = 0):
    """Doubled store for running dP_n after a P_{n-1} run.

    Unwritten input arrays keep their full size-n contents (the new cell is
    a fresh input).  Written arrays carry the P_{n-1} result as _Nm1,
    extended by the untouched input tail cell, and the seeded _N version
    starts as a copy of that.
    """
    n = input_store.n
    scalars = {s + SUF_NM1: v for s, v in out_prev.scalars.items()}
    arrays: dict[str, list[int]] = {}
    for a, cells in out_prev.arrays.items():
        if a + SUF_N in dp.array_aliases:
            grown = list(cells)
            src = input_store.arrays.get(a)
            while len(grown) < n:
                grown.append(src[len(grown)] if src else pad)
            arrays[a + SUF_NM1] = grown
        else:
            arrays[a + SUF_NM1] = list(input_store.arrays[a])
    for a_n, a_nm1 in dp.array_aliases.items():
        arrays[a_n] = list(arrays.get(a_nm1, [pad] * n))
    for s in dp.ast.scalars:
        if s.endswith(SUF_NM1) and s not in scalars:
            scalars[s] = 0
    return Store(n, scalars, arrays)


def run_composed(ast: Ast, dp: DiffProgram, input_store, pad: int = 0):
    """Run P_{n-1};dP_n on a size-n input and map the result back to the
    original vocabulary.  Returns (final values by original name, doubled
    final store)."""
    n = input_store.n
    out_prev = run(ast, truncated_store(input_store, n))
    doubled = composed_store(out_prev, dp, input_store, pad)
    out = run(dp.ast, doubled)
    final: dict[str, object] = {}
    for s in ast.scalars:
        final[s] = out.scalars[dp.final_name(s)]
    for a in ast.arrays:
        final[a] = out.arrays[dp.final_name(a)]
    return final, out
