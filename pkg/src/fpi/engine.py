"""The induction loop over the program-size parameter.

Given a program with its contract, the engine checks small instances
directly, builds the difference program, derives the difference
pre-condition, and then searches for a strengthening of the inductive
obligation via weakest preconditions.  When that search stalls on a
difference program that still has loops, the engine recurses on the
difference program itself.

A Verified verdict carries an audit trail with one witness per proof
obligation family:

  1   the difference program exists and is trip-count aligned,
  2a  the difference pre-condition reads nothing the smaller run writes,
  2b  phi(N) entails phi(N-1) together with dphi(N),
  3a  concrete bases {phi(n)} P_n {psi(n)} for n = 1..M,
  3b  the strengthened base {phi(M)} P_M {psi(M) and c_Pre(M)},
  3c  the inductive step for N > M.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from .cfg import build_cfg, ssa_rename
from .errors import NoProgress, SolverFailure, TransformError
from .lang import (
    PARAM,
    Ast,
    Bin,
    BoolLit,
    Cmp,
    Formula,
    Name,
    Num,
    TRUE,
    conjuncts,
    f_and,
    f_implies,
    formula_reads,
    formula_to_str,
    subst_formula,
)
from .logic import cond_2a_ok, fold_formula, loop_free_wp, simplify_formula, syntactic_diff
from .smt import Solver, check_base_case, check_triple_loop_free, is_valid, sat_check
from .transform import SUF_NM1, DiffProgram, program_diff, rename_formula, simplify_diff

_N = Name(PARAM)
_N_MINUS_1 = Bin("-", _N, Num(1))
_N_PLUS_1 = Bin("+", _N, Num(1))

ITER_CAP = 16
DEPTH_CAP = 4
BASE_CAP = 3


@dataclass(frozen=True, slots=True)
class ProofState:
    """Snapshot of the strengthening search at one iteration."""

    i: int
    pre_i: Formula  # Pre_i(N)
    c_pre_i: Formula  # cumulative conjunction c_Pre_i(N)
    dphi: Formula  # current difference pre-condition dphi(N)
    depth: int


@dataclass(frozen=True, slots=True)
class ToolVerdict:
    status: str  # Verified | Counterexample | Unknown
    reason: Optional[str] = None
    model: Optional[dict] = None
    trace: tuple[dict, ...] = ()
    stats: dict = field(default_factory=dict, compare=False)

    @property
    def exit_code(self) -> int:
        return {"Verified": 0, "Counterexample": 1, "Unknown": 2}[self.status]


def _strip_prev(dp: DiffProgram) -> dict[str, str]:
    """Rename map from the dP vocabulary's _Nm1 names back to plain names."""
    out: dict[str, str] = {}
    for x in (*dp.ast.scalars, *dp.ast.arrays):
        if x.endswith(SUF_NM1):
            out[x] = x[: -len(SUF_NM1)]
    return out


class _Task:
    """One verification task; recursion spawns nested tasks on dP_N."""

    def __init__(self, engine: "Engine", ast: Ast, depth: int):
        self.e = engine
        self.ast = ast
        self.depth = depth
        self.M = engine.base_bound

    # -- logging

    def _log(self, condition: str, **kw) -> None:
        entry = {"condition": condition, "depth": self.depth}
        entry.update(kw)
        self.e.trace.append(entry)

    # -- formula plumbing between the plain and doubled vocabularies

    def _at_prev(self, f: Formula) -> Formula:
        """f(N-1) over the hypothesis names (state after P_{N-1})."""
        return rename_formula(subst_formula(f, {PARAM: _N_MINUS_1}), self.dp.hyp_rename())

    def _hyp_now(self, f: Formula) -> Formula:
        """f(N) over the hypothesis names (difference pre-conditions)."""
        return rename_formula(f, self.dp.hyp_rename())

    def _at_final(self, f: Formula) -> Formula:
        """f(N) over the conclusion names (state after P_N)."""
        return rename_formula(f, self.dp.final_rename())

    def _shift(self, wp: Formula) -> Formula:
        """WP result (over _Nm1 names, parameter N) as Pre_i(N) in plain names.

        The shifted formula is folded under N >= 2.  Any strengthening
        candidate is admissible (the base and inductive checks decide its
        fate), and without the fold each iteration keeps the peel guards
        of the one before, doubling the formula every round.
        """
        plain = rename_formula(wp, _strip_prev(self.dp))
        return fold_formula(subst_formula(plain, {PARAM: _N_PLUS_1}))

    # -- obligations

    def _inductive(self, c_pre: Formula, dphi: Formula, extra_post: Formula = TRUE, origin: str = "step"):
        """{c_pre(N-1) and psi(N-1) and dphi(N)} dP_N {c_pre(N) and psi(N) and extra}."""
        psi = self.psi
        hyp = f_and(
            self._at_prev(c_pre),
            self._at_prev(psi),
            self._hyp_now(dphi),
            *self.dp.assumptions,
        )
        concl = f_and(self._at_final(c_pre), self._at_final(psi), self._at_final(extra_post))
        self.e.obligations += 1
        return check_triple_loop_free(
            self.e.solver,
            hyp,
            self.dp.ast.body,
            concl,
            array_aliases=self.dp.array_aliases,
            n_constraint=Cmp(">", _N, Num(self.M)),
            origin=f"{origin}-d{self.depth}",
        )

    def _base_plain(self, upto: int, origin: str):
        self.e.obligations += 1
        return check_base_case(self.e.solver, self.ast, upto, origin=origin)

    def _base_strengthened(self, c_pre: Formula, origin: str):
        """{phi(n)} P_n {psi(n) and c_pre(n)} for n = 1..M, over the renamed program."""
        self.e.obligations += 1
        return check_base_case(
            self.e.solver,
            self.ssa_ast,
            self.M,
            post=f_and(self.ssa_ast.post, c_pre),
            origin=origin,
        )

    def _valid(self, f: Formula, origin: str) -> str:
        self.e.obligations += 1
        return is_valid(
            self.e.solver,
            f,
            hypotheses=[Cmp(">=", _N, Num(2))],
            origin=f"{origin}-d{self.depth}",
        )

    # -- pipeline

    def run(self) -> ToolVerdict:
        # concrete bases, condition 3(a)
        try:
            v = self._base_plain(self.M, origin=f"base-d{self.depth}")
        except SolverFailure as ex:
            return ToolVerdict("Unknown", reason="SolverUnknown", stats={"error": str(ex)})
        if v.status == "Falsified":
            self._log("3a", check="concrete base cases", upto=self.M, verdict="Falsified")
            return ToolVerdict("Counterexample", model=v.model)
        if v.status != "Proved":
            self._log("3a", check="concrete base cases", upto=self.M, verdict=v.status)
            return ToolVerdict("Unknown", reason="BaseCheckFailed")
        self._log("3a", check="concrete base cases", upto=self.M, verdict="Proved")

        # the difference program, condition 1
        scfg, _ = ssa_rename(build_cfg(self.ast))
        self.ssa_ast = scfg.ast
        self.psi = scfg.ast.post
        self.phi = scfg.ast.pre
        sat_cb = sat_check(self.e.solver)
        try:
            self.dp = simplify_diff(program_diff(scfg, sat_cb))
        except TransformError as ex:
            return ToolVerdict("Unknown", reason=ex.reason, stats={"error": str(ex)})
        self.parent_loops = len(scfg.loops)
        self._log(
            "1",
            check="difference program construction",
            method="trailing-iteration peeling and statement differencing",
            loops=self.dp.loop_count,
            assumptions=[formula_to_str(a) for a in self.dp.assumptions],
        )

        # the difference pre-condition, conditions 2(a) and 2(b)
        valid_cb = lambda f: self._valid(f, "sdiff")
        dphi = syntactic_diff(self.phi, valid_cb)
        if not isinstance(dphi, BoolLit) and not cond_2a_ok(dphi, self.ssa_ast, sat_cb):
            dphi = TRUE
        ok_2a = cond_2a_ok(dphi, self.ssa_ast, sat_cb)
        self._log(
            "2a",
            check="dphi reads nothing P_{N-1} writes",
            dphi=formula_to_str(dphi),
            verdict="Proved" if ok_2a else "Falsified",
        )
        if not ok_2a:
            return ToolVerdict("Unknown", reason="SolverUnknown")
        prev_phi = subst_formula(self.phi, {PARAM: _N_MINUS_1})
        v2b = self._valid(f_implies(self.phi, f_and(prev_phi, dphi)), "cond2b")
        self._log(
            "2b",
            check="phi(N) entails phi(N-1) and dphi(N)",
            verdict="Proved" if v2b == "proved" else v2b,
        )
        if v2b != "proved":
            return ToolVerdict("Unknown", reason="SolverUnknown")

        # strengthening fix point
        if self.e.decompose:
            return self._search_decompose(dphi)
        return self._search(dphi)

    # -- the plain strengthening loop

    def _search(self, dphi: Formula) -> ToolVerdict:
        psi = self.psi
        i = 0
        pre_i: Formula = psi
        c_pre: Formula = TRUE
        seen = {simplify_formula(pre_i)}
        last_base: Optional[str] = None
        while True:
            v = self._inductive(c_pre, dphi, origin=f"step-i{i}")
            if v.status == "Proved":
                self._log(
                    "3b",
                    check="strengthened base {phi(M)} P_M {psi(M) and c_Pre(M)}",
                    m=self.M,
                    verdict=last_base or "Proved",
                    note=None if last_base else "c_Pre is True; covered by the concrete bases",
                )
                self._log("3c", check="inductive step for N > M", m=self.M, iteration=i, verdict="Proved")
                return self._verified(i)
            i += 1
            if i >= self.e.iter_cap:
                return ToolVerdict("Unknown", reason="NoProgressWP", stats={"iterations": i})
            try:
                wp = loop_free_wp(self._at_final(pre_i), self.dp)
            except NoProgress:
                return self._recurse(c_pre, dphi, i)
            nxt = self._shift(wp)
            if isinstance(nxt, BoolLit) or nxt in seen:
                return self._recurse(c_pre, dphi, i)
            seen.add(nxt)
            pre_i = nxt
            c_pre = simplify_formula(f_and(c_pre, nxt))
            bv = self._base_strengthened(c_pre, origin=f"sbase-i{i}-d{self.depth}")
            while bv.status != "Proved" and self.M < self.e.base_cap:
                self.M += 1
                pv = self._base_plain(self.M, origin=f"base-m{self.M}-d{self.depth}")
                if pv.status == "Falsified":
                    self._log("3a", check="concrete base cases", upto=self.M, verdict="Falsified")
                    return ToolVerdict("Counterexample", model=pv.model)
                if pv.status != "Proved":
                    return ToolVerdict("Unknown", reason="BaseCheckFailed")
                bv = self._base_strengthened(c_pre, origin=f"sbase-i{i}-m{self.M}-d{self.depth}")
            if bv.status != "Proved":
                return ToolVerdict(
                    "Unknown",
                    reason="BaseCheckFailed",
                    stats={"iterations": i, "base_bound": self.M},
                )
            last_base = "Proved"

    def _verified(self, iterations: int) -> ToolVerdict:
        return ToolVerdict(
            "Verified",
            trace=tuple(self.e.trace),
            stats={
                "iterations": iterations,
                "depth": self.depth,
                "base_bound": self.M,
                "obligations": self.e.obligations,
            },
        )

    # -- recursion on the difference program

    def _recurse(self, c_pre: Formula, dphi: Formula, i: int) -> ToolVerdict:
        if self.depth + 1 >= self.e.depth_cap:
            return ToolVerdict("Unknown", reason="DepthExceeded", stats={"depth": self.depth + 1})
        if self.dp.loop_count >= self.parent_loops:
            return ToolVerdict(
                "Unknown",
                reason="DepthExceeded",
                stats={"note": "difference program does not have fewer loops"},
            )
        hyp = f_and(
            self._at_prev(c_pre),
            self._at_prev(self.psi),
            self._hyp_now(dphi),
            *self.dp.assumptions,
        )
        concl = f_and(self._at_final(c_pre), self._at_final(self.psi))
        child_ast = replace(self.dp.ast, pre=hyp, post=concl)
        child = _Task(self.e, child_ast, self.depth + 1)
        verdict = child.run()
        if verdict.status == "Verified":
            self._log(
                "3b",
                check="strengthened base {phi(M)} P_M {psi(M) and c_Pre(M)}",
                m=self.M,
                verdict="Proved",
                note="established before recursing" if i > 1 else "c_Pre is True; covered by the concrete bases",
            )
            self._log(
                "3c",
                check="inductive step for N > M",
                m=self.M,
                iteration=i,
                verdict="Proved",
                method="recursive full-program induction on dP_N",
            )
            return self._verified(i)
        reason = verdict.reason if verdict.status == "Unknown" else "NoProgressWP"
        return ToolVerdict("Unknown", reason=reason, stats={"child": verdict.status})

    # -- decomposition search (opt-in)

    def _decompositions(self, pre_nm1: Formula):
        """Candidate pairs (pre_part(N), dphi_part(N)), most conservative first.

        pre_nm1 is Pre_i in its parameter-N form; parts are split on
        top-level conjuncts by whether they read any written name.
        """
        yield pre_nm1, TRUE
        parts = conjuncts(pre_nm1)
        if len(parts) >= 2:
            written = set(self.dp.written)
            w = [p for p in parts if formula_reads(p) & written]
            u = [p for p in parts if not (formula_reads(p) & written)]
            if w and u:
                yield f_and(*w), subst_formula(f_and(*u), {PARAM: _N_MINUS_1})
        yield TRUE, subst_formula(pre_nm1, {PARAM: _N_MINUS_1})

    def _search_decompose(self, dphi: Formula) -> ToolVerdict:
        psi = self.psi
        v = self._inductive(TRUE, dphi, origin="step-i0")
        if v.status == "Proved":
            self._log("3b", check="strengthened base {phi(M)} P_M {psi(M) and c_Pre(M)}",
                      m=self.M, verdict="Proved", note="c_Pre is True; covered by the concrete bases")
            self._log("3c", check="inductive step for N > M", m=self.M, iteration=0, verdict="Proved")
            return self._verified(0)
        try:
            wp = loop_free_wp(self._at_final(psi), self.dp)
        except NoProgress:
            return self._recurse(TRUE, dphi, 1)
        pre_1 = self._shift(wp)
        st = ProofState(i=1, pre_i=pre_1, c_pre_i=TRUE, dphi=dphi, depth=self.depth)
        ok = self._decompose_verify(st)
        if ok is True:
            return self._verified(st.i)
        if isinstance(ok, ToolVerdict):
            return ok
        return ToolVerdict("Unknown", reason="NoProgressWP", stats={"note": "decompositions exhausted"})

    def _decompose_verify(self, st: ProofState):
        """Backtracking search over decompositions of Pre_i; True, False,
        or a ToolVerdict for an abort that must surface unchanged."""
        if st.i >= self.e.iter_cap:
            return False
        sat_cb = sat_check(self.e.solver)
        for pre_part, dphi_part in self._decompositions(st.pre_i):
            # (a) the decomposition recovers Pre_i
            prev_pre = subst_formula(st.pre_i, {PARAM: _N_MINUS_1})
            prev_part = subst_formula(pre_part, {PARAM: _N_MINUS_1})
            if self._valid(f_implies(f_and(dphi_part, prev_part), prev_pre), "dec-a") != "proved":
                continue
            # (b) phi still entails the strengthened difference pre-condition
            prev_phi = subst_formula(self.phi, {PARAM: _N_MINUS_1})
            goal_b = f_implies(self.phi, f_and(prev_phi, dphi_part, st.dphi))
            if self._valid(goal_b, "dec-b") != "proved":
                continue
            # (c) P_{N-1} writes nothing dphi_part reads
            if not cond_2a_ok(dphi_part, self.ssa_ast, sat_cb):
                continue
            hyp_extra = f_and(subst_formula(st.pre_i, {PARAM: _N_MINUS_1}))
            v = check_triple_loop_free(
                self.e.solver,
                f_and(
                    self._at_prev(st.c_pre_i),
                    self._at_prev(self.psi),
                    rename_formula(hyp_extra, self.dp.hyp_rename()),
                    self._hyp_now(f_and(dphi_part, st.dphi)),
                    *self.dp.assumptions,
                ),
                self.dp.ast.body,
                f_and(self._at_final(st.c_pre_i), self._at_final(self.psi), self._at_final(pre_part)),
                array_aliases=self.dp.array_aliases,
                n_constraint=Cmp(">", _N, Num(self.M)),
                origin=f"dec-step-i{st.i}",
            )
            self.e.obligations += 1
            if v.status == "Proved":
                self._log("3b", check="strengthened base {phi(M)} P_M {psi(M) and c_Pre(M)}",
                          m=self.M, verdict="Proved", note="decomposition branch base-validated")
                self._log("3c", check="inductive step for N > M", m=self.M, iteration=st.i,
                          verdict="Proved", method="decomposed strengthening")
                return True
            c_pre2 = simplify_formula(f_and(st.c_pre_i, pre_part))
            try:
                wp = loop_free_wp(self._at_final(pre_part), self.dp)
            except NoProgress:
                continue
            pre_next = self._shift(wp)
            bv = self._base_strengthened(f_and(c_pre2, pre_next), origin=f"dec-sbase-i{st.i + 1}")
            if bv.status != "Proved":
                # an over-strong candidate, not a program bug; try the next split
                continue
            st2 = ProofState(
                i=st.i + 1,
                pre_i=pre_next,
                c_pre_i=c_pre2,
                dphi=simplify_formula(f_and(dphi_part, st.dphi)),
                depth=st.depth,
            )
            got = self._decompose_verify(st2)
            if got is True or isinstance(got, ToolVerdict):
                return got
            # backtrack: st is immutable, so dphi and c_Pre are restored for free
        return False


class Engine:
    """Configuration plus the mutable bits shared across recursion."""

    def __init__(
        self,
        solver: Solver,
        *,
        base_bound: int = 1,
        base_cap: int = BASE_CAP,
        iter_cap: int = ITER_CAP,
        depth_cap: int = DEPTH_CAP,
        decompose: bool = False,
    ):
        if base_bound < 1:
            raise ValueError("base bound must be at least 1")
        self.solver = solver
        self.base_bound = base_bound
        self.base_cap = max(base_cap, base_bound)
        self.iter_cap = iter_cap
        self.depth_cap = depth_cap
        self.decompose = decompose
        self.trace: list[dict] = []
        self.obligations = 0

    def verify(self, ast: Ast) -> ToolVerdict:
        self.trace = []
        self.obligations = 0
        task = _Task(self, ast, depth=0)
        try:
            v = task.run()
        except SolverFailure as ex:
            return ToolVerdict("Unknown", reason="SolverUnknown", stats={"error": str(ex)})
        if v.status != "Verified":
            v = replace(v, trace=tuple(self.trace))
        stats = dict(v.stats)
        stats.setdefault("obligations", self.obligations)
        stats.setdefault("base_bound", task.M)
        return replace(v, stats=stats)


def fpi_verify(ast: Ast, solver: Solver, **kw) -> ToolVerdict:
    """Prove {phi(N)} P_N {psi(N)} for all N > 0, or find a concrete refutation."""
    return Engine(solver, **kw).verify(ast)
