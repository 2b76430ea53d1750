"""Control-flow graph construction and SSA renaming.

The CFG is a thin graph view over the structured program: statement nodes
keep their statement ids, and synthetic nodes (start, end, loop init /
increment, nop join points) get fresh ids above the statement range.  Loop
structure is recovered syntactically because the grammar normalizes every
loop to `counter = 0; counter < bound; counter = counter + 1`, so the trip
count is exactly the bound expression.

SSA renaming rewrites the program itself and rebuilds the graph:

* scalars get one version per straight-line write; a loop keeps writing the
  version that is current at its entry, which keeps loop-carried reads well
  defined without phi nodes (multiple writes to one version are only ever
  inside a loop);
* arrays get one version per writing region (a straight-line store or a
  whole loop): the first region writes the input version in place, every
  later region gets a fresh version initialized element-wise from the
  previous one by a generated copy loop;
* branch joins use if-conversion: both branches finish by assigning the
  same version, a plain copy standing in where one branch does not write.

A single-writer program therefore renames to itself up to version-0
suffixes.

Statement ids survive renaming, so dependence information computed on the
SSA graph can be read back on the original statements.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from .errors import SsaUnsupported
from .lang import (
    PARAM,
    Assign,
    ArrStore,
    Ast,
    Bin,
    Expr,
    For,
    Formula,
    If,
    Name,
    Num,
    Read,
    Stmt,
    expr_to_str,
    formula_to_str,
    max_sid,
    rename_arrays_formula,
    subst_formula,
    walk_stmts,
    written_names,
)

TT, FF, UN = "tt", "ff", "U"


@dataclass(frozen=True)
class Loop:
    head: int  # node id of the condition `counter < bound` (== the For sid)
    counter: str
    trip_count: Expr
    body_nodes: frozenset[int]
    incoming_edge: tuple[int, int]
    back_edge: tuple[int, int]
    exit_edge: tuple[int, int]


@dataclass(frozen=True)
class Cfg:
    ast: Ast
    start: int
    end: int
    locs: tuple[int, ...]
    edges: tuple[tuple[int, int, str], ...]
    mu: dict[int, str] = field(compare=False)
    loops: tuple[Loop, ...] = ()
    stmts: dict[int, Stmt] = field(default_factory=dict, compare=False, repr=False)

    def succ(self, node: int) -> list[tuple[int, str]]:
        return [(d, lab) for s, d, lab in self.edges if s == node]


class _Builder:
    def __init__(self, ast: Ast):
        self.ast = ast
        self.next_id = max_sid(ast.body) + 1
        self.mu: dict[int, str] = {}
        self.edges: list[tuple[int, int, str]] = []
        self.loops: list[Loop] = []
        self.stmts: dict[int, Stmt] = {}

    def fresh(self, label: str) -> int:
        nid = self.next_id
        self.next_id += 1
        self.mu[nid] = label
        return nid

    def edge(self, src: int, dst: int, lab: str = UN) -> None:
        self.edges.append((src, dst, lab))

    def chain(self, body: tuple[Stmt, ...], entry: int) -> int:
        """Wire `body` after node `entry`; return the last node."""
        cur = entry
        for st in body:
            self.stmts[st.sid] = st
            if isinstance(st, Assign):
                self.mu[st.sid] = f"{st.target} = {expr_to_str(st.value)}"
                self.edge(cur, st.sid)
                cur = st.sid
            elif isinstance(st, ArrStore):
                self.mu[st.sid] = (
                    f"{st.array}[{expr_to_str(st.index)}] = {expr_to_str(st.value)}"
                )
                self.edge(cur, st.sid)
                cur = st.sid
            elif isinstance(st, If):
                self.mu[st.sid] = formula_to_str(st.cond)
                self.edge(cur, st.sid)
                join = self.fresh("nop")
                t_last = self.chain(st.then, st.sid)
                # relabel the first then-edge as the true edge
                self._relabel_first_edge(st.sid, st.then, TT, join)
                e_last = self.chain(st.orelse, st.sid)
                self._relabel_first_edge(st.sid, st.orelse, FF, join)
                if st.then:
                    self.edge(t_last, join)
                if st.orelse:
                    self.edge(e_last, join)
                cur = join
            elif isinstance(st, For):
                init = self.fresh(f"{st.counter} = 0")
                head = st.sid
                self.mu[head] = f"{st.counter} < {expr_to_str(st.bound)}"
                incr = self.fresh(f"{st.counter} = {st.counter} + 1")
                exit_nop = self.fresh("nop")
                self.edge(cur, init)
                self.edge(init, head)
                body_last = self.chain(st.body, head)
                self._relabel_first_edge(head, st.body, TT, incr)
                self.edge(body_last if st.body else head, incr)
                self.edge(incr, head)
                self.edge(head, exit_nop, FF)
                body_ids = {incr} | {s.sid for s in walk_stmts(st.body)}
                # nop join nodes inside the body belong to it as well
                body_ids |= self._nested_ids(st.body)
                self.loops.append(
                    Loop(
                        head=head,
                        counter=st.counter,
                        trip_count=st.bound,
                        body_nodes=frozenset(body_ids),
                        incoming_edge=(init, head),
                        back_edge=(incr, head),
                        exit_edge=(head, exit_nop),
                    )
                )
                cur = exit_nop
            else:
                raise TypeError(st)
        return cur

    def _relabel_first_edge(
        self, src: int, branch: tuple[Stmt, ...], lab: str, join: int
    ) -> None:
        if branch:
            first = branch[0].sid
            for i, (s, d, l) in enumerate(self.edges):
                if s == src and d == first and l == UN:
                    self.edges[i] = (s, d, lab)
                    return
            raise AssertionError("branch entry edge missing")
        self.edge(src, join, lab)

    def _nested_ids(self, body: tuple[Stmt, ...]) -> set[int]:
        out: set[int] = set()
        for st in walk_stmts(body):
            for s, d, lab in self.edges:
                if s == st.sid and d in self.mu and self.mu[d] == "nop":
                    out.add(d)
        return out


def build_cfg(ast: Ast) -> Cfg:
    b = _Builder(ast)
    start = b.fresh("start")
    last = b.chain(ast.body, start)
    end = b.fresh("end")
    b.edge(last, end)
    locs = tuple(sorted(set(b.mu)))
    return Cfg(
        ast=ast,
        start=start,
        end=end,
        locs=locs,
        edges=tuple(b.edges),
        mu=b.mu,
        loops=tuple(b.loops),
        stmts=b.stmts,
    )


def cfg_to_dot(cfg: Cfg) -> str:
    out = ["digraph cfg {"]
    for n in cfg.locs:
        label = cfg.mu.get(n, "?").replace('"', '\\"')
        out.append(f'  n{n} [label="{n}: {label}"];')
    for s, d, lab in cfg.edges:
        out.append(f'  n{s} -> n{d} [label="{lab}"];')
    out.append("}")
    return "\n".join(out)


# ---------------------------------------------------------------------------
# SSA renaming


class _NameGen:
    def __init__(self, taken: set[str]):
        self.taken = set(taken)

    def version(self, base: str, k: int) -> str:
        cand = f"{base}{k}"
        while cand in self.taken:
            cand = cand + "_"
        self.taken.add(cand)
        return cand

    def counter(self, k: int) -> str:
        cand = f"c{k}"
        while cand in self.taken:
            cand = cand + "_"
        self.taken.add(cand)
        return cand


class _SsaState:
    def __init__(self, ast: Ast):
        declared = set(ast.scalars) | set(ast.arrays) | set(ast.counters) | {PARAM}
        self.gen = _NameGen(declared)
        self.version: dict[str, int] = {}
        self.cur: dict[str, str] = {}
        self.scalars: list[str] = []
        self.arrays: list[str] = []
        self.counters: list[str] = list(ast.counters)
        self.next_sid = max_sid(ast.body) + 1
        self.copy_counter_ix = 0
        for x in ast.scalars:
            self.cur[x] = self.gen.version(x, 0)
            self.version[x] = 0
            self.scalars.append(self.cur[x])
        for a in ast.arrays:
            self.cur[a] = self.gen.version(a, 0)
            self.version[a] = 0
            self.arrays.append(self.cur[a])
        self.is_array = {a: True for a in ast.arrays}
        self.is_array.update({x: False for x in ast.scalars})
        # arrays whose current version has already been written by a region
        self.dirty: set[str] = set()

    def bump(self, name: str) -> str:
        self.version[name] += 1
        v = self.gen.version(name, self.version[name])
        self.cur[name] = v
        (self.arrays if self.is_array[name] else self.scalars).append(v)
        return v

    def sid(self) -> int:
        s = self.next_sid
        self.next_sid += 1
        return s

    def fresh_counter(self) -> str:
        self.copy_counter_ix += 1
        c = self.gen.counter(self.copy_counter_ix)
        self.counters.append(c)
        return c


def _rx(e: Expr, cur: dict[str, str]) -> Expr:
    """Rewrite an expression over the current versions."""
    match e:
        case Num():
            return e
        case Name(id=x):
            return Name(cur.get(x, x))
        case Read(array=a, index=i):
            return Read(cur.get(a, a), _rx(i, cur))
        case Bin(op=op, left=l, right=r):
            return Bin(op, _rx(l, cur), _rx(r, cur))
    raise TypeError(e)


def _rf(f: Formula, cur: dict[str, str]) -> Formula:
    env = {orig: Name(v) for orig, v in cur.items()}
    arr = {orig: v for orig, v in cur.items()}
    return rename_arrays_formula(subst_formula(f, env), arr)


def _array_copy_loop(st_sid: int, counter: str, dst: str, src: str) -> For:
    body = (ArrStore(st_sid + 1, dst, Name(counter), Read(src, Name(counter))),)
    return For(st_sid, counter, Name(PARAM), body)


class _SsaRewriter:
    def __init__(self, ast: Ast):
        self.ast = ast
        self.st = _SsaState(ast)

    # -- straight-line region -------------------------------------------

    def rewrite_top(self, body: tuple[Stmt, ...]) -> list[Stmt]:
        out: list[Stmt] = []
        for s in body:
            arrs = sorted(
                a for a in written_names((s,)) if self.st.is_array.get(a, False)
            )
            out.extend(self._array_region_entry(arrs))
            out.extend(self.rewrite_stmt(s))
        return out

    def rewrite_stmt(self, s: Stmt) -> list[Stmt]:
        st = self.st
        if isinstance(s, Assign):
            value = _rx(s.value, st.cur)
            return [Assign(s.sid, st.bump(s.target), value)]
        if isinstance(s, ArrStore):
            index = _rx(s.index, st.cur)
            value = _rx(s.value, st.cur)
            return [ArrStore(s.sid, st.cur[s.array], index, value)]
        if isinstance(s, If):
            return self.rewrite_if(s, in_loop=False)
        if isinstance(s, For):
            return self.rewrite_for(s)
        raise TypeError(s)

    def _array_region_entry(self, written_arrays: list[str]) -> list[Stmt]:
        """Open a writing region for each array: the first region writes the
        current (input) version in place, later ones bump it and copy the
        previous version element-wise.  Called for top-level statements only,
        so generated copy loops never sit under a branch."""
        st = self.st
        pre: list[Stmt] = []
        for a in written_arrays:
            if a in st.dirty:
                prevname = st.cur[a]
                new = st.bump(a)
                c = st.fresh_counter()
                pre.append(_array_copy_loop(st.sid(), c, new, prevname))
                st.next_sid += 1
            else:
                st.dirty.add(a)
        return pre

    # -- branches ----------------------------------------------------------

    def rewrite_if(self, s: If, in_loop: bool) -> list[Stmt]:
        st = self.st
        cond = _rf(s.cond, st.cur)
        if in_loop:
            # loop bodies reuse the loop's versions on both sides, so the
            # branches already join on the same names
            then = self.rewrite_loop_body(s.then)
            orelse = self.rewrite_loop_body(s.orelse)
            return [If(s.sid, cond, tuple(then), tuple(orelse))]

        written = sorted(
            w
            for w in written_names(s.then) | written_names(s.orelse)
            if not st.is_array[w]
        )
        entry = dict(st.cur)
        then_out: list[Stmt] = []
        for sub in s.then:
            then_out.extend(self.rewrite_stmt(sub))
        after_then = dict(st.cur)
        st.cur.update({w: entry[w] for w in written})
        else_out: list[Stmt] = []
        for sub in s.orelse:
            else_out.extend(self.rewrite_stmt(sub))
        after_else = dict(st.cur)
        # join: a final version per written scalar, assigned on both sides
        for w in written:
            join = st.bump(w)
            then_out.append(Assign(st.sid(), join, Name(after_then[w])))
            else_out.append(Assign(st.sid(), join, Name(after_else[w])))
        return [If(s.sid, cond, tuple(then_out), tuple(else_out))]

    # -- loops ---------------------------------------------------------------

    def rewrite_for(self, s: For) -> list[Stmt]:
        stores_per_array: dict[str, int] = {}
        for sub in walk_stmts(s.body):
            if isinstance(sub, ArrStore):
                stores_per_array[sub.array] = stores_per_array.get(sub.array, 0) + 1
        for a, cnt in stores_per_array.items():
            if cnt > 1 and not _stores_exclusive(s.body, a):
                raise SsaUnsupported(
                    f"array {a} written more than once per iteration of loop "
                    f"over {s.counter}"
                )
        # scalars written by the loop keep their entry version; the array
        # writing region was opened by rewrite_top
        body = self.rewrite_loop_body(s.body)
        return [For(s.sid, s.counter, s.bound, tuple(body))]

    def rewrite_loop_body(self, body: tuple[Stmt, ...]) -> list[Stmt]:
        st = self.st
        out: list[Stmt] = []
        for s in body:
            if isinstance(s, Assign):
                out.append(Assign(s.sid, st.cur[s.target], _rx(s.value, st.cur)))
            elif isinstance(s, ArrStore):
                out.append(
                    ArrStore(
                        s.sid, st.cur[s.array], _rx(s.index, st.cur), _rx(s.value, st.cur)
                    )
                )
            elif isinstance(s, If):
                out.extend(self.rewrite_if(s, in_loop=True))
            else:
                raise TypeError(s)
        return out


def _stores_exclusive(body: tuple[Stmt, ...], array: str) -> bool:
    """True when at most one store to `array` can run per iteration: every
    pair of stores sits in opposite branches of some if."""

    def count_max(stmts: tuple[Stmt, ...]) -> int:
        total = 0
        for s in stmts:
            if isinstance(s, ArrStore) and s.array == array:
                total += 1
            elif isinstance(s, If):
                total += max(count_max(s.then), count_max(s.orelse))
            elif isinstance(s, For):
                total += count_max(s.body)
        return total

    return count_max(body) <= 1


def ssa_rename(cfg: Cfg) -> tuple[Cfg, dict[str, str]]:
    """Rename cfg's program into SSA form.

    Returns the new graph and the original->final name map.  The
    pre-condition is rewritten over input versions, the post-condition over
    final versions.
    """
    ast = cfg.ast
    rw = _SsaRewriter(ast)
    input_cur = dict(rw.st.cur)
    body = tuple(rw.rewrite_top(ast.body))
    final_map = dict(rw.st.cur)
    pre = _rf(ast.pre, input_cur)
    post = _rf(ast.post, final_map)
    new_ast = Ast(
        scalars=tuple(rw.st.scalars),
        arrays=tuple(rw.st.arrays),
        counters=tuple(rw.st.counters),
        pre=pre,
        post=post,
        body=body,
        filename=ast.filename,
        positions=dict(ast.positions),
    )
    return build_cfg(new_ast), final_map
