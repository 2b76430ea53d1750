"""Program dependence graph over the statement nodes of a CFG.

Data edges come from reaching definitions: scalar writes kill earlier
definitions of the same name, array writes are weak (an element store leaves
every other element visible), and the CFG start node stands in for the
program inputs.  Control edges connect each branch predicate to the
statements directly under it; loop headers contribute no control edges
because the counter machinery is handled by iteration-range guards during
refinement instead.

Refinement (`refine_pdg`) drops an array data edge when the writer and
reader subscripts cannot coincide for any iteration pair within their loops'
ranges, with the program parameter N symbolic and at least 1.  The
satisfiability callback may answer "unknown"; the edge is then kept, so
refinement only ever removes edges it can justify.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from .cfg import Cfg
from .lang import (
    Assign,
    ArrStore,
    Bin,
    BoolOp,
    Cmp,
    Expr,
    For,
    Formula,
    If,
    N,
    Name,
    Not,
    Num,
    Read,
    Stmt,
    ZERO,
    expr_reads,
    f_and,
    f_or,
    formula_reads,
    subst_expr,
    walk_stmts,
)

SatCheck = Callable[[Formula], str]  # returns "sat" | "unsat" | "unknown"


@dataclass(frozen=True)
class Pdg:
    v: frozenset[int]
    de: frozenset[tuple[int, int, str]]  # (writer, reader, carried name)
    ce: frozenset[tuple[int, int]]  # (predicate, dependent statement)
    defs: dict
    uses: dict
    input_node: int

    def de_pairs(self) -> frozenset[tuple[int, int]]:
        return frozenset((s, d) for s, d, _ in self.de)


def _node_defs(st: Stmt) -> set[str]:
    if isinstance(st, Assign):
        return {st.target}
    if isinstance(st, ArrStore):
        return {st.array}
    return set()


def _node_uses(st: Stmt) -> set[str]:
    if isinstance(st, Assign):
        return expr_reads(st.value)
    if isinstance(st, ArrStore):
        return expr_reads(st.index) | expr_reads(st.value)
    if isinstance(st, If):
        return formula_reads(st.cond)
    return set()


def construct_pdg(cfg: Cfg) -> Pdg:
    ast = cfg.ast
    counters = set(ast.counters)
    tracked = (set(ast.scalars) | set(ast.arrays)) - counters

    nodes = [
        sid
        for sid, st in cfg.stmts.items()
        if isinstance(st, (Assign, ArrStore, If))
    ]
    defs = {sid: _node_defs(cfg.stmts[sid]) & tracked for sid in nodes}
    uses = {
        sid: {u for u in _node_uses(cfg.stmts[sid]) if u in tracked}
        for sid in nodes
    }

    preds: dict[int, list[int]] = {n: [] for n in cfg.locs}
    for s, d, _lab in cfg.edges:
        preds[d].append(s)

    scalars = set(ast.scalars)
    gen: dict[int, set[tuple[str, int]]] = {n: set() for n in cfg.locs}
    kill_names: dict[int, set[str]] = {n: set() for n in cfg.locs}
    for sid in nodes:
        for name in defs[sid]:
            gen[sid].add((name, sid))
            if name in scalars:
                kill_names[sid].add(name)
    gen[cfg.start] = {(name, cfg.start) for name in sorted(tracked)}

    out: dict[int, set[tuple[str, int]]] = {n: set() for n in cfg.locs}
    inn: dict[int, set[tuple[str, int]]] = {n: set() for n in cfg.locs}
    work = list(cfg.locs)
    while work:
        n = work.pop()
        new_in = set()
        for p in preds[n]:
            new_in |= out[p]
        inn[n] = new_in
        new_out = gen[n] | {
            (name, d) for name, d in new_in if name not in kill_names[n]
        }
        if new_out != out[n]:
            out[n] = new_out
            for s, d, _lab in cfg.edges:
                if s == n:
                    work.append(d)

    de: set[tuple[int, int, str]] = set()
    for sid in nodes:
        for name in uses[sid]:
            for dname, dnode in inn[sid]:
                if dname == name:
                    de.add((dnode, sid, name))

    ce: set[tuple[int, int]] = set()
    for st in walk_stmts(ast.body):
        if isinstance(st, If):
            for child in st.then + st.orelse:
                ce.add((st.sid, child.sid))

    return Pdg(
        v=frozenset(nodes),
        de=frozenset(de),
        ce=frozenset(ce),
        defs=defs,
        uses=uses,
        input_node=cfg.start,
    )


# ---------------------------------------------------------------------------
# refinement


def _enclosing_loop(ast) -> dict[int, For]:
    env: dict[int, For] = {}
    for top in ast.body:
        if isinstance(top, For):
            for st in walk_stmts(top.body):
                env[st.sid] = top
    return env


def _range_guard(loop: Optional[For], counter_name: str) -> Formula:
    if loop is None:
        return f_and()
    c = Name(counter_name)
    return f_and(
        Cmp("<=", ZERO, c),
        Cmp("<", c, subst_expr(loop.bound, {loop.counter: c})),
    )


def _reads_of(e_list: list[Expr], array: str) -> list[Expr]:
    found: list[Expr] = []

    def visit(e: Expr) -> None:
        match e:
            case Num() | Name():
                pass
            case Read(array=a, index=i):
                if a == array:
                    found.append(i)
                visit(i)
            case Bin(left=l, right=r):
                visit(l)
                visit(r)
            case _:
                raise TypeError(e)

    for e in e_list:
        visit(e)
    return found


def _use_exprs(st: Stmt) -> list[Expr]:
    if isinstance(st, Assign):
        return [st.value]
    if isinstance(st, ArrStore):
        return [st.index, st.value]
    if isinstance(st, If):
        out: list[Expr] = []

        def visit_f(f: Formula) -> None:
            if isinstance(f, Cmp):
                out.extend([f.left, f.right])
            elif isinstance(f, BoolOp):
                for a in f.args:
                    visit_f(a)
            elif isinstance(f, Not):
                visit_f(f.arg)

        visit_f(st.cond)
        return out
    return []


def overlap_formula(cfg: Cfg, writer: int, reader: int, array: str) -> Optional[Formula]:
    """The satisfiability query deciding whether the edge survives, or None
    when the pair is not refinable (input defs, missing subscripts)."""
    wst = cfg.stmts.get(writer)
    rst = cfg.stmts.get(reader)
    if not isinstance(wst, ArrStore) or rst is None:
        return None
    enclosing = _enclosing_loop(cfg.ast)
    wloop = enclosing.get(writer)
    rloop = enclosing.get(reader)

    taken = cfg.ast.declared()
    iw, ir = "iw", "ir"
    while iw in taken:
        iw += "_"
    while ir in taken or ir == iw:
        ir += "_"

    wsub = wst.index
    if wloop is not None:
        wsub = subst_expr(wsub, {wloop.counter: Name(iw)})
    rsubs = _reads_of(_use_exprs(rst), array)
    if not rsubs:
        return None
    if rloop is not None:
        rsubs = [subst_expr(e, {rloop.counter: Name(ir)}) for e in rsubs]

    eqs = f_or(*[Cmp("==", wsub, rs) for rs in rsubs])
    return f_and(
        Cmp(">=", N, Num(1)),
        _range_guard(wloop, iw),
        _range_guard(rloop, ir),
        eqs,
    )


def refine_pdg(pdg: Pdg, cfg: Cfg, sat_check: SatCheck) -> Pdg:
    arrays = set(cfg.ast.arrays)
    kept: set[tuple[int, int, str]] = set()
    for edge in pdg.de:
        writer, reader, name = edge
        if name not in arrays:
            kept.add(edge)
            continue
        f = overlap_formula(cfg, writer, reader, name)
        if f is None:
            kept.add(edge)
            continue
        if sat_check(f) != "unsat":
            kept.add(edge)
    return Pdg(
        v=pdg.v,
        de=frozenset(kept),
        ce=pdg.ce,
        defs=pdg.defs,
        uses=pdg.uses,
        input_node=pdg.input_node,
    )


def pdg_to_dot(pdg: Pdg, cfg: Cfg) -> str:
    out = ["digraph pdg {"]
    for n in sorted(pdg.v):
        label = cfg.mu.get(n, "?").replace('"', '\\"')
        out.append(f'  n{n} [label="{n}: {label}"];')
    out.append(f'  n{pdg.input_node} [label="input"];')
    for s, d, name in sorted(pdg.de):
        out.append(f'  n{s} -> n{d} [label="{name}"];')
    for s, d in sorted(pdg.ce):
        out.append(f'  n{s} -> n{d} [style=dashed];')
    out.append("}")
    return "\n".join(out)
