"""Reference interpreter and differential-testing harness.

This is the ground truth the rest of the pipeline is checked against, so it
is written as plainly as possible: a direct recursive evaluator over the
AST, no caching, no sharing with the algebraic simplifier.

Semantics that other components must match bit-for-bit:
  * unbounded Python integers,
  * division truncates toward zero and traps on zero divisors,
  * exponentiation traps on negative exponents,
  * array reads/writes trap outside [0, n).
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .errors import DivByZero, NegativeExponent, OutOfBounds
from .lang import (
    PARAM,
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
)


@dataclass
class Store:
    n: int
    scalars: dict[str, int] = field(default_factory=dict)
    arrays: dict[str, list[int]] = field(default_factory=dict)

    def copy(self) -> "Store":
        return Store(self.n, dict(self.scalars), {k: list(v) for k, v in self.arrays.items()})

    def to_json(self) -> dict:
        return {"n": self.n, "scalars": dict(self.scalars), "arrays": {k: list(v) for k, v in self.arrays.items()}}

    @staticmethod
    def from_json(obj: dict, n: int | None = None) -> "Store":
        return Store(
            n if n is not None else int(obj.get("n", 0)),
            {k: int(v) for k, v in obj.get("scalars", {}).items()},
            {k: [int(x) for x in v] for k, v in obj.get("arrays", {}).items()},
        )


def idiv(a: int, b: int, sid: int | None = None) -> int:
    if b == 0:
        raise DivByZero("division by zero", sid)
    q = abs(a) // abs(b)
    return -q if (a < 0) != (b < 0) else q


@dataclass
class RunTrace:
    """Optional instrumentation collected during a run."""

    flows: set[tuple[int, int]] = field(default_factory=set)  # (writer sid, reader sid), 0 = input
    snapshot_req: dict[int, int] = field(default_factory=dict)  # loop sid -> iteration count k
    snapshots: dict[int, Store] = field(default_factory=dict)  # loop sid -> store after k iterations

    # last-writer bookkeeping
    _scalar_w: dict[str, int] = field(default_factory=dict)
    _array_w: dict[str, dict[int, int]] = field(default_factory=dict)


class _Exec:
    def __init__(self, ast: Ast, store: Store, trace: RunTrace | None):
        self.ast = ast
        self.store = store
        self.trace = trace
        if ast.declared() and store.n < 0:
            raise ValueError("store size must be non-negative")
        for a in ast.arrays:
            store.arrays.setdefault(a, [0] * store.n)
            if len(store.arrays[a]) != store.n:
                raise ValueError(f"array {a!r} has length {len(store.arrays[a])}, expected {store.n}")
        for s in ast.scalars:
            store.scalars.setdefault(s, 0)

    def read_scalar(self, name: str, sid: int) -> int:
        if self.trace is not None:
            self.trace.flows.add((self.trace._scalar_w.get(name, 0), sid))
        if name == PARAM:
            return self.store.n
        if name in self.store.scalars:
            return self.store.scalars[name]
        raise OutOfBounds(f"read of unset name {name!r}", sid)

    def eval(self, e: Expr, env: dict[str, int], sid: int) -> int:
        match e:
            case Num(value=v):
                return v
            case Name(id=x):
                if x in env:
                    return env[x]
                if x == PARAM:
                    return self.store.n
                return self.read_scalar(x, sid)
            case Read(array=a, index=ie):
                i = self.eval(ie, env, sid)
                cells = self.store.arrays.get(a)
                if cells is None or not (0 <= i < len(cells)):
                    raise OutOfBounds(f"{a}[{i}] is out of bounds for size {self.store.n}", sid)
                if self.trace is not None:
                    self.trace.flows.add((self.trace._array_w.get(a, {}).get(i, 0), sid))
                return cells[i]
            case Bin(op=op, left=l, right=r):
                lv = self.eval(l, env, sid)
                rv = self.eval(r, env, sid)
                if op == "+":
                    return lv + rv
                if op == "-":
                    return lv - rv
                if op == "*":
                    return lv * rv
                if op == "/":
                    return idiv(lv, rv, sid)
                if op == "^":
                    if rv < 0:
                        raise NegativeExponent(f"exponent {rv} is negative", sid)
                    return lv**rv
                raise TypeError(op)
            case IteExpr(cond=c, then=t, orelse=o):
                # lazy: only the taken branch is evaluated
                if self.holds(c, env, sid):
                    return self.eval(t, env, sid)
                return self.eval(o, env, sid)
        raise TypeError(e)

    def holds(self, f: Formula, env: dict[str, int], sid: int) -> bool:
        match f:
            case BoolLit(value=v):
                return v
            case Cmp(op=op, left=l, right=r):
                lv = self.eval(l, env, sid)
                rv = self.eval(r, env, sid)
                return {
                    "==": lv == rv,
                    "!=": lv != rv,
                    "<": lv < rv,
                    "<=": lv <= rv,
                    ">": lv > rv,
                    ">=": lv >= rv,
                }[op]
            case BoolOp(op=op, args=args):
                if op == "and":
                    return all(self.holds(a, env, sid) for a in args)
                return any(self.holds(a, env, sid) for a in args)
            case Not(arg=a):
                return not self.holds(a, env, sid)
            case Forall(var=v, lo=lo, hi=hi, body=b):
                lo_v = self.eval(lo, env, sid)
                hi_v = self.eval(hi, env, sid)
                for i in range(lo_v, hi_v + 1):
                    if not self.holds(b, {**env, v: i}, sid):
                        return False
                return True
        raise TypeError(f)

    def exec_block(self, body: tuple[Stmt, ...], env: dict[str, int]):
        for st in body:
            self.exec_stmt(st, env)

    def exec_stmt(self, st: Stmt, env: dict[str, int]):
        match st:
            case Assign(sid=sid, target=t, value=v):
                val = self.eval(v, env, sid)
                self.store.scalars[t] = val
                if self.trace is not None:
                    self.trace._scalar_w[t] = sid
            case ArrStore(sid=sid, array=a, index=ie, value=v):
                i = self.eval(ie, env, sid)
                val = self.eval(v, env, sid)
                cells = self.store.arrays.get(a)
                if cells is None or not (0 <= i < len(cells)):
                    raise OutOfBounds(f"{a}[{i}] is out of bounds for size {self.store.n}", sid)
                cells[i] = val
                if self.trace is not None:
                    self.trace._array_w.setdefault(a, {})[i] = sid
            case If(sid=sid, cond=c, then=t, orelse=o):
                if self.holds(c, env, sid):
                    self.exec_block(t, env)
                else:
                    self.exec_block(o, env)
            case For(sid=sid, counter=c, bound=be, body=body):
                bound = self.eval(be, env, sid)
                want = self.trace.snapshot_req.get(sid) if self.trace is not None else None
                k = 0
                if want == 0:
                    self.trace.snapshots[sid] = self.store.copy()
                while k < bound:
                    self.store.scalars[c] = k
                    self.exec_block(body, env)
                    k += 1
                    if want == k:
                        self.trace.snapshots[sid] = self.store.copy()
                self.store.scalars[c] = max(bound, 0)
        return


def run(ast: Ast, store: Store, trace: RunTrace | None = None) -> Store:
    """Execute the program on a copy of `store` and return the final store.

    The input store provides values for input names; declared names that are
    missing default to 0 (arrays to all-zero of length n).
    """
    out = store.copy()
    ex = _Exec(ast, out, trace)
    ex.exec_block(ast.body, {})
    return out


def eval_formula(f: Formula, store: Store) -> bool:
    ast = Ast((), (), (), BoolLit(True), BoolLit(True), ())
    return _Exec(ast, store.copy(), None).holds(f, {}, 0)


def eval_expr_in(e: Expr, store: Store) -> int:
    ast = Ast((), (), (), BoolLit(True), BoolLit(True), ())
    return _Exec(ast, store.copy(), None).eval(e, {}, 0)


# ---------------------------------------------------------------------------
# randomized differential testing


def _sample(rng: random.Random) -> int:
    if rng.random() < 0.25:
        return rng.choice((-1, 0, 1))
    return rng.randint(-16, 16)


def random_store(names_scalar: set[str], names_array: set[str], n: int, rng: random.Random) -> Store:
    return Store(
        n,
        {s: _sample(rng) for s in sorted(names_scalar)},
        {a: [_sample(rng) for _ in range(n)] for a in sorted(names_array)},
    )


@dataclass
class DiffFailure:
    trial: int
    name: str
    left: object
    right: object
    store: Store


@dataclass
class DiffReport:
    n: int
    seed: int
    trials: int
    ran: int = 0
    skipped: int = 0
    failures: list[DiffFailure] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures and self.ran > 0


def differential_check(
    p1: Ast,
    p2: Ast,
    n: int,
    trials: int = 20,
    obs: set[str] | None = None,
    seed: int = 0,
    pre: Formula | None = None,
    assumptions: tuple[Formula, ...] = (),
) -> DiffReport:
    """Run p1 and p2 on identical random stores and compare the observed
    names exactly.  Trials whose store violates `pre`, violates an entry of
    `assumptions` (evaluated on p2's final store), or that trap at runtime
    are skipped and counted."""
    rng = random.Random(seed)
    rep = DiffReport(n=n, seed=seed, trials=trials)
    scalar_names = set(p1.scalars) | set(p2.scalars)
    array_names = set(p1.arrays) | set(p2.arrays)
    if obs is None:
        obs = (set(p1.scalars) & set(p2.scalars)) | (set(p1.arrays) & set(p2.arrays))
    for t in range(trials):
        store = random_store(scalar_names, array_names, n, rng)
        if pre is not None and not eval_formula(pre, store):
            rep.skipped += 1
            continue
        try:
            out1 = run(p1, store)
            out2 = run(p2, store)
        except (OutOfBounds, DivByZero, NegativeExponent):
            rep.skipped += 1
            continue
        if assumptions and not all(eval_formula(a, out2) for a in assumptions):
            rep.skipped += 1
            continue
        rep.ran += 1
        for name in sorted(obs):
            v1 = out1.arrays.get(name, out1.scalars.get(name))
            v2 = out2.arrays.get(name, out2.scalars.get(name))
            if v1 != v2:
                rep.failures.append(DiffFailure(t, name, v1, v2, store))
                break
    return rep
