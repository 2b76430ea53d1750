"""SMT-LIB 2 encoding and the external-solver driver.

Loop-free Hoare triples, satisfiability probes, and validity checks are
discharged through an external solver process speaking SMT-LIB 2 over
stdin/stdout.  Arrays are encoded with the theory of arrays (store/select
chains), including in fully concrete base cases.  Quantified hypotheses
are emitted as plain, pattern-free quantified assertions; the solver is
responsible for instantiation.

Divisions are lowered to fresh integer constants constrained by
truncation-toward-zero axioms, guarded so a zero divisor leaves the
quotient unconstrained; every lowered division also contributes a
`divisor != 0` hypothesis, and every array access inside program code
contributes an index-in-bounds hypothesis.  This matches the interpreter,
which has no final state (and therefore no post-state obligation) for a
run that traps.
"""

from __future__ import annotations

import hashlib
import os
import re
import shutil
import subprocess
import sys
import time
from dataclasses import dataclass, field, replace

from .errors import EncodingUnsupported, SolverFailure
from .interp import Store, eval_formula, eval_expr_in, run
from .lang import (
    PARAM,
    Assign,
    ArrStore,
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
    f_and,
    formula_reads,
    instantiate,
    subst_formula,
    subst_stmt,
)

DEFAULT_TIMEOUT_MS = 10_000
_POW_CAP = 64


# ---------------------------------------------------------------------------
# solver process


def resolve_solver_cmd(explicit: str | None = None) -> list[str]:
    """Pick the solver command line.

    Order: explicit path, FPI_SOLVER from the environment, z3 on PATH,
    then the bundled fallback solver.  External solvers must read the
    script from stdin (z3 gets `-in` for that).
    """
    path = explicit or os.environ.get("FPI_SOLVER")
    if path:
        return [path, "-in"] if os.path.basename(path).startswith("z3") else [path]
    z3 = shutil.which("z3")
    if z3:
        return [z3, "-in"]
    return [sys.executable, "-m", "fpi.minismt"]


class Solver:
    """One external solver with a per-query timeout and a script cache."""

    def __init__(
        self,
        cmd: list[str] | None = None,
        timeout_ms: int = DEFAULT_TIMEOUT_MS,
        emit_dir: str | None = None,
    ) -> None:
        self.cmd = list(cmd) if cmd else resolve_solver_cmd()
        self.timeout_ms = timeout_ms
        self.emit_dir = emit_dir
        self._cache: dict[str, tuple[str, str]] = {}
        self._seq = 0
        self.last_error = ""
        self.stats = {
            "queries": 0,
            "cache_hits": 0,
            "sat": 0,
            "unsat": 0,
            "unknown": 0,
            "crashes": 0,
            "time_ms": 0.0,
        }

    def _full_cmd(self) -> list[str]:
        if self.cmd[-1].endswith("fpi.minismt"):
            return self.cmd + ["--timeout", str(self.timeout_ms)]
        if os.path.basename(self.cmd[0]).startswith("z3"):
            secs = max(1, (self.timeout_ms + 999) // 1000)
            return self.cmd + [f"-T:{secs}"]
        return self.cmd

    def _emit(self, script: str, origin: str) -> None:
        if not self.emit_dir:
            return
        os.makedirs(self.emit_dir, exist_ok=True)
        tag = re.sub(r"[^A-Za-z0-9_.-]+", "-", origin) or "query"
        path = os.path.join(self.emit_dir, f"{self._seq:04d}_{tag}.smt2")
        with open(path, "w") as fh:
            fh.write(script)

    def check(self, script: str, origin: str = "query") -> tuple[str, str]:
        """Run one script; return (status, model text).

        Status is "sat", "unsat", or "unknown"; crashes, timeouts, and
        unrecognizable output all come back as "unknown".
        """
        key = hashlib.sha256(("\x00".join(self.cmd) + script).encode()).hexdigest()
        self._seq += 1
        self._emit(script, origin)
        if key in self._cache:
            self.stats["cache_hits"] += 1
            return self._cache[key]
        self.stats["queries"] += 1
        t0 = time.monotonic()
        try:
            proc = subprocess.run(
                self._full_cmd(),
                input=script.encode(),
                capture_output=True,
                timeout=self.timeout_ms / 1000.0 + 2.0,
            )
            out = proc.stdout.decode(errors="replace")
            err = proc.stderr.decode(errors="replace")
        except (subprocess.TimeoutExpired, OSError) as exc:
            self.stats["unknown"] += 1
            self.stats["time_ms"] += (time.monotonic() - t0) * 1000.0
            self.last_error = str(exc)
            return "unknown", ""
        self.stats["time_ms"] += (time.monotonic() - t0) * 1000.0
        status, model = "", ""
        lines = out.splitlines()
        for i, line in enumerate(lines):
            if line.strip() in ("sat", "unsat", "unknown"):
                status = line.strip()
                model = "\n".join(lines[i + 1:])
                break
        if not status:
            self.stats["crashes"] += 1
            self.stats["unknown"] += 1
            self.last_error = (err or out)[:2000]
            return "unknown", ""
        self.stats[status] += 1
        result = (status, model)
        self._cache[key] = result
        return result


# ---------------------------------------------------------------------------
# encoding

_CMP = {"==": "=", "<": "<", "<=": "<=", ">": ">", ">=": ">="}


def _split_names(names: set[str], arrays_hint: set[str]) -> tuple[set[str], set[str]]:
    arr = names & arrays_hint
    return names - arr, arr


def _array_names_f(f: Formula) -> set[str]:
    out: set[str] = set()

    def fe(e: Expr) -> None:
        match e:
            case Read(array=a, index=i):
                out.add(a)
                fe(i)
            case Bin(left=l, right=r):
                fe(l)
                fe(r)
            case IteExpr(cond=c, then=t, orelse=o):
                ff(c)
                fe(t)
                fe(o)
            case _:
                pass

    def ff(g: Formula) -> None:
        match g:
            case Cmp(left=l, right=r):
                fe(l)
                fe(r)
            case BoolOp(args=args):
                for a in args:
                    ff(a)
            case Not(arg=a):
                ff(a)
            case Forall(lo=lo, hi=hi, body=b):
                fe(lo)
                fe(hi)
                ff(b)
            case _:
                pass

    ff(f)
    return out


def _array_names_st(st: Stmt) -> set[str]:
    match st:
        case Assign(value=v):
            return _array_names_f(Cmp("==", v, Num(0)))
        case ArrStore(array=a, index=i, value=v):
            return {a} | _array_names_f(Cmp("==", i, v))
        case If(cond=c, then=t, orelse=o):
            out = _array_names_f(c)
            for s in t + o:
                out |= _array_names_st(s)
            return out
        case For(body=body):  # pragma: no cover - callers reject loops first
            out: set[str] = set()
            for s in body:
                out |= _array_names_st(s)
            return out
    raise TypeError(st)


class Encoder:
    """Translates formulas and loop-free code to SMT-LIB 2 text.

    One encoder instance builds one script: declarations are collected
    on the fly, auxiliary definitions (division quotients, sequenced
    assignments) become equality assertions, and definedness conditions
    (nonzero divisors, in-bounds program indices) are gathered so the
    caller can assert them as hypotheses.
    """

    def __init__(self, arrays: set[str]) -> None:
        self.arrays = set(arrays)
        self.decl_scalars: dict[str, None] = {}
        self.decl_arrays: dict[str, None] = {}
        self.defs: list[str] = []
        self.side: list[str] = []  # definedness hypotheses
        self._fresh = 0
        self._in_program = False
        self._guards: list[str] = []

    def _record_side(self, cond: str) -> None:
        # a side condition raised under branch guards only binds when the
        # guarded path actually executes
        if self._guards:
            g = self._guards[0] if len(self._guards) == 1 else "(and " + " ".join(self._guards) + ")"
            self.side.append(f"(=> {g} {cond})")
        else:
            self.side.append(cond)

    # -- symbols

    def _sym(self, base: str) -> str:
        self._fresh += 1
        return f"{base}!{self._fresh}"

    def declare(self, name: str) -> str:
        if name in self.arrays:
            self.decl_arrays[name] = None
        else:
            self.decl_scalars[name] = None
        return name

    def _env0(self) -> tuple[dict[str, str], dict[str, str]]:
        return {}, {}

    def _scalar(self, name: str, env: dict[str, str]) -> str:
        if name in env:
            return env[name]
        return self.declare(name)

    def _array(self, name: str, env: dict[str, str]) -> str:
        if name in env:
            return env[name]
        return self.declare(name)

    # -- terms

    def term(self, e: Expr, senv: dict[str, str], aenv: dict[str, str]) -> str:
        match e:
            case Num(value=v):
                return str(v) if v >= 0 else f"(- {-v})"
            case Name(id=x):
                if x in self.arrays:
                    raise EncodingUnsupported(f"array {x} used as a scalar")
                return self._scalar(x, senv)
            case Read(array=a, index=i):
                it = self.term(i, senv, aenv)
                if self._in_program:
                    self._record_side(f"(and (<= 0 {it}) (< {it} {self._scalar(PARAM, senv)}))")
                return f"(select {self._array(a, aenv)} {it})"
            case Bin(op=op, left=l, right=r):
                lt = self.term(l, senv, aenv)
                rt = self.term(r, senv, aenv)
                if op in ("+", "-", "*"):
                    return f"({op} {lt} {rt})"
                if op == "/":
                    return self._division(lt, rt)
                if op == "^":
                    return self._power(lt, r, rt)
                raise EncodingUnsupported(f"operator {op}")
            case IteExpr(cond=c, then=t, orelse=o):
                return f"(ite {self.formula(c, senv, aenv)} {self.term(t, senv, aenv)} {self.term(o, senv, aenv)})"
        raise TypeError(e)

    def _division(self, lt: str, rt: str) -> str:
        a = self._sym("dvd")
        b = self._sym("dvs")
        q = self._sym("quo")
        for s in (a, b, q):
            self.decl_scalars[s] = None
        self.defs.append(f"(assert (= {a} {lt}))")
        self.defs.append(f"(assert (= {b} {rt}))")
        r = f"(- {a} (* {b} {q}))"
        # truncation toward zero, guarded so b = 0 constrains nothing
        self.defs.append(
            f"(assert (=> (> {b} 0) (and"
            f" (=> (>= {a} 0) (and (<= 0 {r}) (< {r} {b})))"
            f" (=> (< {a} 0) (and (< (- 0 {b}) {r}) (<= {r} 0))))))"
        )
        self.defs.append(
            f"(assert (=> (< {b} 0) (and"
            f" (=> (>= {a} 0) (and (<= 0 {r}) (< {r} (- 0 {b}))))"
            f" (=> (< {a} 0) (and (< {b} {r}) (<= {r} 0))))))"
        )
        self._record_side(f"(not (= {b} 0))")
        return q

    def _power(self, base_t: str, exp: Expr, exp_t: str) -> str:
        if not isinstance(exp, Num):
            raise EncodingUnsupported("non-constant exponent")
        k = exp.value
        if k < 0 or k > _POW_CAP:
            raise EncodingUnsupported(f"exponent {k} out of range")
        if k == 0:
            return "1"
        if k == 1:
            return base_t
        return "(* " + " ".join([base_t] * k) + ")"

    # -- formulas

    def formula(self, f: Formula, senv: dict[str, str], aenv: dict[str, str]) -> str:
        match f:
            case BoolLit(value=v):
                return "true" if v else "false"
            case Cmp(op=op, left=l, right=r):
                lt = self.term(l, senv, aenv)
                rt = self.term(r, senv, aenv)
                if op == "!=":
                    return f"(not (= {lt} {rt}))"
                return f"({_CMP[op]} {lt} {rt})"
            case BoolOp(op=op, args=args):
                if not args:
                    return "true" if op == "and" else "false"
                return f"({op} " + " ".join(self.formula(a, senv, aenv) for a in args) + ")"
            case Not(arg=a):
                return f"(not {self.formula(a, senv, aenv)})"
            case Forall(var=v, lo=lo, hi=hi, body=b):
                qv = self._sym("q" + v)
                lot = self.term(lo, senv, aenv)
                hit = self.term(hi, senv, aenv)
                senv2 = dict(senv)
                senv2[v] = qv
                bt = self.formula(b, senv2, aenv)
                return f"(forall (({qv} Int)) (=> (and (<= {lot} {qv}) (<= {qv} {hit})) {bt}))"
        raise TypeError(f)

    # -- loop-free program execution

    def exec_block(
        self, stmts: tuple[Stmt, ...] | list[Stmt], senv: dict[str, str], aenv: dict[str, str]
    ) -> None:
        self._in_program = True
        try:
            for st in stmts:
                self._exec(st, senv, aenv)
        finally:
            self._in_program = False

    def _exec(self, st: Stmt, senv: dict[str, str], aenv: dict[str, str]) -> None:
        match st:
            case Assign(target=t, value=v):
                vt = self.term(v, senv, aenv)
                sym = self._sym(t)
                self.decl_scalars[sym] = None
                self.defs.append(f"(assert (= {sym} {vt}))")
                senv[t] = sym
            case ArrStore(array=a, index=i, value=v):
                it = self.term(i, senv, aenv)
                vt = self.term(v, senv, aenv)
                self._record_side(f"(and (<= 0 {it}) (< {it} {self._scalar(PARAM, senv)}))")
                aenv[a] = f"(store {self._array(a, aenv)} {it} {vt})"
            case If(cond=c, then=then, orelse=orelse):
                lit = _try_const_formula(c)
                if lit is not None:
                    for s in then if lit else orelse:
                        self._exec(s, senv, aenv)
                    return
                ct = self.formula(c, senv, aenv)
                s1, a1 = dict(senv), dict(aenv)
                self._guards.append(ct)
                for s in then:
                    self._exec(s, s1, a1)
                s2, a2 = dict(senv), dict(aenv)
                self._guards[-1] = f"(not {ct})"
                for s in orelse:
                    self._exec(s, s2, a2)
                self._guards.pop()
                for name in sorted(set(s1) | set(s2)):
                    t1 = s1.get(name, self._scalar(name, {}))
                    t2 = s2.get(name, self._scalar(name, {}))
                    if t1 == t2:
                        senv[name] = t1
                        continue
                    sym = self._sym(name)
                    self.decl_scalars[sym] = None
                    self.defs.append(f"(assert (= {sym} (ite {ct} {t1} {t2})))")
                    senv[name] = sym
                for name in sorted(set(a1) | set(a2)):
                    t1 = a1.get(name, self._array(name, {}))
                    t2 = a2.get(name, self._array(name, {}))
                    aenv[name] = t1 if t1 == t2 else f"(ite {ct} {t1} {t2})"
            case For():
                raise EncodingUnsupported("loop in loop-free encoding")
            case _:
                raise TypeError(st)

    # -- script assembly

    def script(self, assertions: list[str]) -> str:
        lines = ["(set-logic ALL)"]
        for s in self.decl_scalars:
            lines.append(f"(declare-const {s} Int)")
        for a in self.decl_arrays:
            lines.append(f"(declare-const {a} (Array Int Int))")
        lines.extend(self.defs)
        lines.extend(assertions)
        lines.append("(check-sat)")
        lines.append("(get-model)")
        return "\n".join(lines) + "\n"


def _try_const_formula(f: Formula) -> bool | None:
    if formula_reads(f):
        return None
    try:
        return eval_formula(f, Store(0))
    except Exception:
        return None


# ---------------------------------------------------------------------------
# query layer


@dataclass(frozen=True)
class Verdict:
    status: str  # Proved | Falsified | Unknown
    model: dict | None = None
    reason: str | None = None


def _all_arrays(formulas: list[Formula], stmts: list[Stmt]) -> set[str]:
    out: set[str] = set()
    for f in formulas:
        out |= _array_names_f(f)
    for st in stmts:
        out |= _array_names_st(st)
    return out


def check_triple_loop_free(
    solver: Solver,
    pre: Formula,
    body: tuple[Stmt, ...] | list[Stmt],
    post: Formula,
    *,
    arrays: set[str] | None = None,
    array_aliases: dict[str, str] | None = None,
    n_constraint: Formula | None = None,
    origin: str = "triple",
) -> Verdict:
    """Decide {pre} body {post} for loop-free bodies.

    Unsat of pre && path && !post means Proved; sat yields Falsified with
    the parsed input model; everything else is Unknown.  An entry a -> b
    in array_aliases makes array a start out equal to array b, so seeded
    output arrays need no element-wise copy code.
    """
    hyps = [pre] + ([n_constraint] if n_constraint is not None else [])
    arrs = set(arrays or set()) | _all_arrays(hyps + [post], list(body))
    aliases = dict(array_aliases or {})
    arrs |= set(aliases) | set(aliases.values())
    enc = Encoder(arrs)
    enc.declare(PARAM)
    senv, aenv = enc._env0()
    for a_new, a_old in sorted(aliases.items()):
        aenv[a_new] = enc._array(a_old, aenv)
    assertions = [f"(assert {enc.formula(h, senv, aenv)})" for h in hyps]
    enc.exec_block(body, senv, aenv)
    neg = f"(assert (not {enc.formula(post, senv, aenv)}))"
    side = [f"(assert {s})" for s in dict.fromkeys(enc.side)]
    script = enc.script(side + assertions + [neg])
    status, model_text = solver.check(script, origin)
    if status == "unsat":
        return Verdict("Proved")
    if status == "sat":
        try:
            model = parse_model(model_text)
        except SolverFailure:
            return Verdict("Unknown", reason="SolverUnknown")
        return Verdict("Falsified", model=_input_model(model, enc))
    return Verdict("Unknown", reason="SolverUnknown")


def _input_model(model: dict, enc: Encoder) -> dict:
    """Keep model entries for declared input symbols only."""
    scalars = {k: v for k, v in model["scalars"].items() if "!" not in k}
    arrays = {k: v for k, v in model["arrays"].items() if "!" not in k}
    for k in enc.decl_scalars:
        if "!" not in k:
            scalars.setdefault(k, 0)
    for k in enc.decl_arrays:
        if "!" not in k:
            arrays.setdefault(k, ({}, 0))
    return {"scalars": scalars, "arrays": arrays}


def is_sat(solver: Solver, f: Formula, *, arrays: set[str] | None = None, origin: str = "sat") -> str:
    arrs = set(arrays or set()) | _array_names_f(f)
    enc = Encoder(arrs)
    senv, aenv = enc._env0()
    a = f"(assert {enc.formula(f, senv, aenv)})"
    side = [f"(assert {s})" for s in dict.fromkeys(enc.side)]
    status, _ = solver.check(enc.script(side + [a]), origin)
    return status


def is_valid(
    solver: Solver,
    f: Formula,
    *,
    hypotheses: list[Formula] | None = None,
    arrays: set[str] | None = None,
    origin: str = "valid",
) -> str:
    """"proved" when hypotheses && !f is unsat, else "falsified"/"unknown"."""
    hyps = list(hypotheses or [])
    arrs = set(arrays or set()) | _array_names_f(f)
    for h in hyps:
        arrs |= _array_names_f(h)
    enc = Encoder(arrs)
    senv, aenv = enc._env0()
    assertions = [f"(assert {enc.formula(h, senv, aenv)})" for h in hyps]
    assertions.append(f"(assert (not {enc.formula(f, senv, aenv)}))")
    side = [f"(assert {s})" for s in dict.fromkeys(enc.side)]
    status, _ = solver.check(enc.script(side + assertions), origin)
    return {"unsat": "proved", "sat": "falsified"}.get(status, "unknown")


def sat_check(solver: Solver, origin: str = "pdg-refine"):
    """Adapter matching the dependence-refinement callback signature."""

    def cb(f: Formula) -> str:
        try:
            return is_sat(solver, f, origin=origin)
        except EncodingUnsupported:
            return "unknown"

    return cb


# ---------------------------------------------------------------------------
# base cases: instantiate, unroll, expand, check, replay


def _const_int(e: Expr) -> int:
    return eval_expr_in(e, Store(0))


def unroll_program(stmts: tuple[Stmt, ...], n: int) -> list[Stmt]:
    """Expand every loop of a concrete-size program into straight-line code."""
    out: list[Stmt] = []
    for st in stmts:
        match st:
            case For(counter=c, bound=b, body=body):
                for j in range(_const_int(b)):
                    env = {c: Num(j)}
                    for s in body:
                        out.append(subst_stmt(s, env))
            case If(sid=sid, cond=cond, then=t, orelse=o):
                out.append(If(sid, cond, tuple(unroll_program(t, n)), tuple(unroll_program(o, n))))
            case _:
                out.append(st)
    return out


def expand_quantifiers(f: Formula) -> Formula:
    """Replace range-bounded quantifiers with explicit conjunctions.

    Only usable once ranges are concrete (after instantiation).
    """
    match f:
        case Forall(var=v, lo=lo, hi=hi, body=b):
            lo_v, hi_v = _const_int(lo), _const_int(hi)
            eb = expand_quantifiers(b)
            return f_and(*[subst_formula(eb, {v: Num(k)}) for k in range(lo_v, hi_v + 1)])
        case BoolOp(op=op, args=args):
            return BoolOp(op, tuple(expand_quantifiers(a) for a in args))
        case Not(arg=a):
            return Not(expand_quantifiers(a))
        case _:
            return f


def model_to_store(model: dict, ast: Ast, n: int) -> Store:
    """Build an interpreter input store from a parsed solver model."""
    scalars = {}
    for s in sorted(ast.scalars):
        scalars[s] = int(model["scalars"].get(s, 0))
    arrays = {}
    for a in sorted(ast.arrays):
        cells, default = model["arrays"].get(a, ({}, 0))
        arrays[a] = [int(cells.get(i, default)) for i in range(n)]
    return Store(n, scalars, arrays)


def _instantiated(ast: Ast, n: int, pre: Formula | None, post: Formula | None) -> Ast:
    """Instantiate N := n, with optional pre/post overrides (parameterized in N)."""
    sub: dict[str, Expr] = {PARAM: Num(n)}
    inst = instantiate(ast, n)
    if pre is not None:
        inst = replace(inst, pre=subst_formula(pre, sub))
    if post is not None:
        inst = replace(inst, post=subst_formula(post, sub))
    return inst


def replay_counterexample(
    ast: Ast, n: int, model: dict, *, pre: Formula | None = None, post: Formula | None = None
) -> bool:
    """True when the model drives an actual pre-respecting run to a post violation."""
    inst = _instantiated(ast, n, pre, post)
    store = model_to_store(model, ast, n)
    if not eval_formula(inst.pre, store):
        return False
    out = run(inst, store.copy())
    return not eval_formula(inst.post, out)


def check_base_case_at(
    solver: Solver,
    ast: Ast,
    n: int,
    *,
    pre: Formula | None = None,
    post: Formula | None = None,
    origin: str | None = None,
) -> Verdict:
    """Check {pre(n)} P_n {post(n)} concretely via unrolling.

    pre/post default to the program's own contract; overrides are
    parameterized formulas instantiated at N := n.  A Falsified verdict
    is replayed in the interpreter before being returned; a model that
    does not replay is a solver soundness bug and raises instead of
    being trusted.
    """
    inst = _instantiated(ast, n, pre, post)
    body = unroll_program(inst.body, n)
    v = check_triple_loop_free(
        solver,
        expand_quantifiers(inst.pre),
        body,
        expand_quantifiers(inst.post),
        arrays=set(ast.arrays),
        n_constraint=Cmp("==", Name(PARAM), Num(n)),
        origin=origin or f"base-n{n}",
    )
    if v.status != "Falsified":
        return v
    assert v.model is not None
    witness = model_to_store(v.model, ast, n)
    if not replay_counterexample(ast, n, v.model, pre=pre, post=post):
        raise SolverFailure(f"countermodel for n={n} failed to replay in the interpreter")
    return Verdict("Falsified", model={"N": n, **witness.to_json()})


def check_base_case(
    solver: Solver,
    ast: Ast,
    m: int,
    *,
    pre: Formula | None = None,
    post: Formula | None = None,
    origin: str | None = None,
) -> Verdict:
    """Check {pre(n)} P_n {post(n)} for every n in 1..m.

    Returns the first non-Proved verdict (its model carries the failing
    n), or Proved when all sizes pass.
    """
    for n in range(1, m + 1):
        v = check_base_case_at(solver, ast, n, pre=pre, post=post, origin=origin)
        if v.status != "Proved":
            return v
    return Verdict("Proved")


# ---------------------------------------------------------------------------
# model parsing (store chains, const arrays, lambda/as-array function bodies)

_TOKEN = re.compile(r"\(|\)|[^\s()]+")


def _sexps(text: str) -> list:
    toks = _TOKEN.findall(text)
    pos = 0

    def rec() -> object:
        nonlocal pos
        tok = toks[pos]
        pos += 1
        if tok == "(":
            items = []
            while pos < len(toks) and toks[pos] != ")":
                items.append(rec())
            if pos >= len(toks):
                raise SolverFailure("unbalanced model output")
            pos += 1
            return items
        if tok == ")":
            raise SolverFailure("unbalanced model output")
        return tok

    out = []
    while pos < len(toks):
        out.append(rec())
    return out


def _int_of(t: object, env: dict[str, int] | None = None) -> int:
    if isinstance(t, str):
        if env and t in env:
            return env[t]
        return int(t)
    if isinstance(t, list) and t and t[0] == "-" and len(t) == 2:
        return -_int_of(t[1], env)
    if isinstance(t, list) and t and t[0] in ("+", "-", "*") and len(t) == 3:
        a, b = _int_of(t[1], env), _int_of(t[2], env)
        return {"+": a + b, "-": a - b, "*": a * b}[t[0]]
    raise SolverFailure(f"unparseable integer in model: {t!r}")


def _fun_cells(body: object, var: str) -> tuple[dict[int, int], int]:
    """Interpret an (ite (= var k) v rest) chain as cells plus default."""
    cells: dict[int, int] = {}
    t = body
    while isinstance(t, list) and t and t[0] == "ite":
        _, cond, val, rest = t
        key = None
        if isinstance(cond, list) and len(cond) == 3 and cond[0] == "=":
            lhs, rhs = cond[1], cond[2]
            if lhs == var:
                key = _int_of(rhs)
            elif rhs == var:
                key = _int_of(lhs)
        if key is None:
            raise SolverFailure(f"unparseable array function body: {t!r}")
        cells.setdefault(key, _int_of(val))
        t = rest
    return cells, _int_of(t)


def _array_value(t: object, funs: dict[str, tuple[str, object]]) -> tuple[dict[int, int], int]:
    if isinstance(t, list) and t:
        if t[0] == "store" and len(t) == 4:
            cells, default = _array_value(t[1], funs)
            cells = dict(cells)
            cells[_int_of(t[2])] = _int_of(t[3])
            return cells, default
        if isinstance(t[0], list) and t[0][:2] == ["as", "const"]:
            return {}, _int_of(t[1])
        if t[0] == "lambda" and len(t) == 3:
            var = t[1][0][0]
            return _fun_cells(t[2], var)
        if t[0] == "_" and len(t) == 3 and t[1] == "as-array":
            name = t[2]
            if name not in funs:
                raise SolverFailure(f"as-array references unknown function {name}")
            var, body = funs[name]
            return _fun_cells(body, var)
    raise SolverFailure(f"unparseable array value in model: {t!r}")


def parse_model(text: str) -> dict:
    """Parse (get-model) output into scalar and array values.

    Returns {"scalars": {name: int}, "arrays": {name: (cells, default)}}.
    Tolerates both bare define-fun lists and a wrapping (model ...) form.
    """
    top = _sexps(text)
    if len(top) == 1 and isinstance(top[0], list):
        inner = top[0]
        top = inner[1:] if inner and inner[0] == "model" else inner
    scalars: dict[str, int] = {}
    arrays_raw: dict[str, object] = {}
    funs: dict[str, tuple[str, object]] = {}
    for entry in top:
        if not (isinstance(entry, list) and len(entry) >= 5 and entry[0] == "define-fun"):
            continue
        _, name, params, sort, body = entry[0], entry[1], entry[2], entry[3], entry[4]
        if params:
            # interpreted function (z3 as-array helper)
            funs[name] = (params[0][0], body)
        elif sort == "Int":
            scalars[name] = _int_of(body)
        else:
            arrays_raw[name] = body
    arrays = {name: _array_value(body, funs) for name, body in arrays_raw.items()}
    return {"scalars": scalars, "arrays": arrays}
