"""Baseline SMT-LIB 2 solver for the query fragment the encoder emits.

This is the fallback backend used when no external solver is installed.  It
reads an SMT-LIB script (integer constants, `(Array Int Int)` constants,
`assert`, `check-sat`, `get-model`) and decides satisfiability of the
quantifier-light fragment the verification pipeline produces:

* boolean structure: and / or / not / => / ite / distinct;
* atoms: =, <, <=, >, >= over integer terms built from + - * constants,
  declared constants, and `select` over store chains;
* bounded universal quantifiers (`forall` guarded by an integer range):
  positive occurrences are instantiated at ground index terms, negative
  occurrences are skolemized.

The solver is sound by construction and incomplete by design:

* "unsat" is reported only after Fourier-Motzkin elimination (plus
  monomial-bound augmentation for the nonlinear part) derives a
  contradiction in every branch;
* "sat" is reported only with a concrete model that has been re-checked
  against every original assertion, quantifiers included;
* everything else (caps, timeouts, unsupported operators) is "unknown".

Branching is a DNF split over the boolean structure.  Equalities with a
unit-coefficient variable are eliminated by substitution first, which keeps
the arithmetic core small for the definitional chains produced by program
encodings.
"""

from __future__ import annotations

import argparse
import sys
import time
from typing import Iterator, Optional, Union

from .poly import Atom, Poly, ZERO, map_atoms, subst_atom

Sexp = Union[int, str, list]

BRANCH_CAP = 4096
INSTANCE_CAP = 64
FM_CONSTRAINT_CAP = 600
ENUM_NODE_CAP = 200_000
ENUM_WINDOW = 12


class Unsupported(Exception):
    pass


# ---------------------------------------------------------------------------
# sexp reader


def tokenize(text: str) -> Iterator[str]:
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c in " \t\r\n":
            i += 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c in "()":
            yield c
            i += 1
        elif c == "|":
            j = text.index("|", i + 1)
            yield text[i : j + 1]
            i = j + 1
        elif c == '"':
            j = text.index('"', i + 1)
            yield text[i : j + 1]
            i = j + 1
        else:
            j = i
            while j < n and text[j] not in " \t\r\n();|":
                j += 1
            yield text[i:j]
            i = j


def parse_sexps(text: str) -> list[Sexp]:
    out: list[Sexp] = []
    stack: list[list] = []
    for tok in tokenize(text):
        if tok == "(":
            stack.append([])
        elif tok == ")":
            done = stack.pop()
            if stack:
                stack[-1].append(done)
            else:
                out.append(done)
        else:
            atom: Sexp = int(tok) if tok.lstrip("-").isdigit() and tok not in ("-",) else tok
            if stack:
                stack[-1].append(atom)
            else:
                out.append(atom)
    if stack:
        raise Unsupported("unbalanced parentheses")
    return out


# ---------------------------------------------------------------------------
# formula tree: ("and", ...) / ("or", ...) / ("lit", kind, Poly) with lit
# kinds "ge" (poly >= 0) and "eq" (poly == 0); ("forall", vars, body) nodes
# survive NNF for positive quantifiers until instantiation drops them


class _Ctx:
    def __init__(self) -> None:
        self.ints: set[str] = set()
        self.arrays: set[str] = set()
        self.defs: dict[str, Sexp] = {}
        self.sk_count = 0
        self.deadline = float("inf")

    def fresh_sk(self) -> str:
        self.sk_count += 1
        name = f"sk!{self.sk_count}"
        while name in self.ints:
            self.sk_count += 1
            name = f"sk!{self.sk_count}"
        self.ints.add(name)
        return name

    def check_time(self) -> None:
        if time.monotonic() > self.deadline:
            raise TimeoutError


def _subst(e: Sexp, env: dict[str, Sexp]) -> Sexp:
    if isinstance(e, str):
        return env.get(e, e)
    if isinstance(e, list):
        if e and e[0] == "forall":
            inner = {v for v, _s in e[1]}
            env2 = {k: v for k, v in env.items() if k not in inner}
            return ["forall", e[1], _subst(e[2], env2)]
        return [_subst(x, env) for x in e]
    return e


_REL = {"=", "<", "<=", ">", ">="}


def _nnf(e: Sexp, pos: bool, ctx: _Ctx) -> Sexp:
    """Normalize to and/or over rel-atoms and positive foralls; negative
    foralls are skolemized away."""
    if e is True or e == "true":
        return ["and"] if pos else ["or"]
    if e is False or e == "false":
        return ["or"] if pos else ["and"]
    if isinstance(e, str):
        raise Unsupported(f"boolean symbol {e}")
    if not isinstance(e, list) or not e:
        raise Unsupported(f"formula {e!r}")
    head = e[0]
    if head == "not":
        return _nnf(e[1], not pos, ctx)
    if head == "and" or head == "or":
        flip = (head == "and") == pos
        parts = [_nnf(x, pos, ctx) for x in e[1:]]
        return ["and" if flip else "or"] + parts
    if head == "=>":
        # (=> a b c) == a -> (b -> c)
        cur = e[-1]
        for hyp in reversed(e[1:-1]):
            cur = ["or", ["not", hyp], cur]
        return _nnf(cur, pos, ctx)
    if head == "ite":
        c, a, b = e[1], e[2], e[3]
        return _nnf(["or", ["and", c, a], ["and", ["not", c], b]], pos, ctx)
    if head == "distinct":
        if len(e) != 3:
            raise Unsupported("n-ary distinct")
        return _nnf(["not", ["=", e[1], e[2]]], pos, ctx)
    if head == "forall":
        if pos:
            return ["forall", e[1], e[2]]
        env = {v: ctx.fresh_sk() for v, _s in e[1]}
        return _nnf(_subst(e[2], env), False, ctx)
    if head == "exists":
        return _nnf(["not", ["forall", e[1], ["not", e[2]]]], not pos, ctx)
    if head in _REL:
        if len(e) != 3:
            raise Unsupported(f"n-ary {head}")
        op = head if pos else {"=": "!=", "<": ">=", "<=": ">", ">": "<=", ">=": "<"}[head]
        return ["rel", op, e[1], e[2]]
    raise Unsupported(f"operator {head}")


# ---------------------------------------------------------------------------
# term-level rewriting: select-over-store and ite lifting


def _find_ite(e: Sexp) -> Optional[list]:
    if isinstance(e, list):
        if e and e[0] == "ite":
            inner = _find_ite(e[2]) or _find_ite(e[3])
            return inner or e
        for x in e:
            hit = _find_ite(x)
            if hit is not None:
                return hit
    return None


def _take_branch(e: Sexp, cond: Sexp, then: bool) -> Sexp:
    """Resolve every ite guarded by (a structural copy of) cond at once; the
    encoder repeats one branch condition across many merged values, so
    splitting per distinct condition keeps the fanout linear in branches."""
    if isinstance(e, list):
        if len(e) == 4 and e[0] == "ite" and e[1] == cond:
            return _take_branch(e[2] if then else e[3], cond, then)
        return [_take_branch(x, cond, then) for x in e]
    return e


def _rw_select_store(e: Sexp) -> Sexp:
    if isinstance(e, list):
        e = [_rw_select_store(x) for x in e]
        if (
            len(e) == 3
            and e[0] == "select"
            and isinstance(e[1], list)
            and len(e[1]) == 4
            and e[1][0] == "store"
        ):
            _, base, i, v = e[1]
            j = e[2]
            if isinstance(i, int) and isinstance(j, int):
                return v if i == j else _rw_select_store(["select", base, j])
            return ["ite", ["=", i, j], v, _rw_select_store(["select", base, j])]
    return e


def _lower_atoms(tree: Sexp, ctx: _Ctx) -> Sexp:
    """Rewrite rel-atoms into polynomial literals, splitting term-ites and
    inequations into disjunctions."""
    ctx.check_time()
    if isinstance(tree, list) and tree and tree[0] in ("and", "or"):
        return [tree[0]] + [_lower_atoms(x, ctx) for x in tree[1:]]
    if isinstance(tree, list) and tree and tree[0] == "forall":
        return tree
    if isinstance(tree, list) and tree and tree[0] == "lit":
        return tree
    if not (isinstance(tree, list) and tree and tree[0] == "rel"):
        raise Unsupported(f"formula node {tree!r}")
    _, op, lhs, rhs = tree
    lhs = _rw_select_store(lhs)
    rhs = _rw_select_store(rhs)
    ite = _find_ite(lhs) or _find_ite(rhs)
    if ite is not None:
        cond = ite[1]
        then_atom = ["rel", op, _take_branch(lhs, cond, True), _take_branch(rhs, cond, True)]
        else_atom = ["rel", op, _take_branch(lhs, cond, False), _take_branch(rhs, cond, False)]
        cl = _lower_atoms(_nnf(cond, True, ctx), ctx)
        if isinstance(cl, list) and cl and cl[0] == "lit":
            cv = _lit_consistent_const(cl[1], cl[2])
            if cv is not None:
                # concrete condition: no case split needed
                return _lower_atoms(then_atom if cv else else_atom, ctx)
        split = [
            "or",
            ["and", cl, then_atom],
            ["and", _nnf(cond, False, ctx), else_atom],
        ]
        return _lower_atoms(split, ctx)
    l = _to_poly(lhs, ctx)
    r = _to_poly(rhs, ctx)
    d = l - r
    if op == "=":
        return ["lit", "eq", d]
    if op == "!=":
        # d != 0  <=>  d - 1 >= 0  or  -d - 1 >= 0
        return [
            "or",
            ["lit", "ge", d - Poly.const(1)],
            ["lit", "ge", (-d) - Poly.const(1)],
        ]
    if op == "<=":
        return ["lit", "ge", r - l]
    if op == "<":
        return ["lit", "ge", r - l - Poly.const(1)]
    if op == ">=":
        return ["lit", "ge", d]
    if op == ">":
        return ["lit", "ge", d - Poly.const(1)]
    raise Unsupported(op)


def _to_poly(e: Sexp, ctx: _Ctx) -> Poly:
    if isinstance(e, int):
        return Poly.const(e)
    if isinstance(e, str):
        if e in ctx.defs:
            return _to_poly(ctx.defs[e], ctx)
        if e in ctx.arrays:
            raise Unsupported(f"array {e} used as integer")
        return Poly.var(e)
    if isinstance(e, list) and e:
        head = e[0]
        if head == "+":
            out = ZERO
            for x in e[1:]:
                out = out + _to_poly(x, ctx)
            return out
        if head == "-":
            if len(e) == 2:
                return -_to_poly(e[1], ctx)
            out = _to_poly(e[1], ctx)
            for x in e[2:]:
                out = out - _to_poly(x, ctx)
            return out
        if head == "*":
            out = Poly.const(1)
            for x in e[1:]:
                out = out * _to_poly(x, ctx)
            return out
        if head == "select":
            arr = e[1]
            if isinstance(arr, str) and arr in ctx.defs:
                arr = ctx.defs[arr]
            if not isinstance(arr, str):
                raise Unsupported("select over a compound array term")
            return Poly.atom(("r", arr, _to_poly(e[2], ctx)))
    raise Unsupported(f"term {e!r}")


# ---------------------------------------------------------------------------
# quantifier instantiation


def _select_indexes(tree: Sexp, per_array: dict[str, set[Poly]], ctx: _Ctx) -> None:
    if isinstance(tree, list):
        if tree and tree[0] == "lit":
            for atom in tree[2].atoms():
                _collect_r(atom, per_array)
            return
        for x in tree:
            _select_indexes(x, per_array, ctx)


def _collect_r(atom: Atom, per_array: dict[str, set[Poly]]) -> None:
    if atom[0] == "r":
        per_array.setdefault(atom[1], set()).add(atom[2])
        for sub in atom[2].atoms():
            _collect_r(sub, per_array)


def _poly_to_sexp(p: Poly) -> Sexp:
    parts: list[Sexp] = []
    for mono, c in p.terms:
        factors: list[Sexp] = [] if abs(c) == 1 and mono else [abs(c)]
        for atom, power in mono:
            for _ in range(power):
                factors.append(_atom_to_sexp(atom))
        term: Sexp = factors[0] if len(factors) == 1 else ["*"] + factors
        if not mono:
            term = abs(c)
        parts.append(["-", term] if c < 0 else term)
    if not parts:
        return 0
    return parts[0] if len(parts) == 1 else ["+"] + parts


def _atom_to_sexp(atom: Atom) -> Sexp:
    if atom[0] == "v":
        return atom[1]
    if atom[0] == "r":
        return ["select", atom[1], _poly_to_sexp(atom[2])]
    raise Unsupported(f"atom {atom!r}")


def _guard_bounds(body: Sexp, var: str) -> list[Sexp]:
    """Extract candidate ground range end-points of a guarded forall body
    ((=> (and (<= lo v) (<= v hi)) ...))."""
    cands: list[Sexp] = []
    if isinstance(body, list) and body and body[0] == "=>":
        guard = body[1]
        parts = guard[1:] if isinstance(guard, list) and guard and guard[0] == "and" else [guard]
        for g in parts:
            if isinstance(g, list) and len(g) == 3 and g[0] in ("<=", "<", ">=", ">"):
                for side in (g[1], g[2]):
                    if side != var and not _mentions(side, var):
                        cands.append(side)
    return cands


def _mentions(e: Sexp, var: str) -> bool:
    if isinstance(e, str):
        return e == var
    if isinstance(e, list):
        return any(_mentions(x, var) for x in e)
    return False


def _var_offsets(body: Sexp, var: str, per_array_vars: dict[str, list[Poly]], ctx: _Ctx):
    """Find arrays indexed by (var + const) inside the quantifier body and
    yield solved instantiation terms for each ground index candidate."""
    hits: list[tuple[str, int]] = []

    def scan(e: Sexp) -> None:
        if isinstance(e, list):
            if len(e) == 3 and e[0] == "select" and isinstance(e[1], str):
                try:
                    idx = _to_poly(e[2], ctx)
                except Unsupported:
                    return
                rest = subst_atom(idx, ("v", var), ZERO)
                coeff = idx - rest
                if coeff == Poly.var(var) and rest.is_const():
                    hits.append((e[1], rest.const_value() or 0))
            for x in e:
                scan(x)

    scan(body)
    out: list[Poly] = []
    for arr, off in hits:
        for g in per_array_vars.get(arr, []):
            out.append(g - Poly.const(off))
    return out


def _instantiate(tree: Sexp, ctx: _Ctx) -> Sexp:
    """Ground positive foralls at plausible index terms, then drop them from
    the solving tree (the originals are re-checked against any model)."""
    foralls: list[Sexp] = []

    def strip(t: Sexp) -> Sexp:
        if isinstance(t, list) and t and t[0] in ("and", "or"):
            return [t[0]] + [strip(x) for x in t[1:]]
        if isinstance(t, list) and t and t[0] == "forall":
            foralls.append(t)
            return ["and"]
        return t

    base = strip(tree)
    if not foralls:
        return base
    instances: list[Sexp] = []
    for _round in range(2):
        per_array: dict[str, set[Poly]] = {}
        _select_indexes(base, per_array, ctx)
        for inst in instances:
            lowered = _lower_atoms(_nnf(inst, True, ctx), ctx)
            _select_indexes(lowered, per_array, ctx)
        per_array_lists = {a: sorted(s, key=lambda p: str(p.terms)) for a, s in per_array.items()}
        for fa in foralls:
            varlist = [v for v, _s in fa[1]]
            if len(varlist) != 1:
                continue
            var = fa[1][0][0]
            body = fa[2]
            cand_polys = _var_offsets(body, var, per_array_lists, ctx)
            cand_sexps = [_poly_to_sexp(p) for p in cand_polys]
            cand_sexps.extend(_guard_bounds(body, var))
            seen: set[str] = {repr(i) for i in instances}
            for cand in cand_sexps:
                inst = _subst(body, {var: cand})
                key = repr(inst)
                if key not in seen and len(instances) < INSTANCE_CAP:
                    seen.add(key)
                    instances.append(inst)
    lowered_insts = [_lower_atoms(_nnf(i, True, ctx), ctx) for i in instances]
    return ["and", base] + lowered_insts


# ---------------------------------------------------------------------------
# theory: conjunctions of polynomial literals

Lit = tuple  # ("ge" | "eq", Poly)


def _unit_atom(p: Poly) -> Optional[tuple[Atom, int, Poly]]:
    """If p == c*a + rest with c = +-1 and the atom a absent from rest,
    return (a, c, rest).  Scalar atoms are preferred over array cells."""
    lp = p.linear_parts()
    if lp is None:
        return None
    coeffs, _const = lp
    for wanted in ("v", "r"):
        for atom, c in coeffs.items():
            if atom[0] == wanted and abs(c) == 1:
                rest = p - Poly.atom(atom).scale(c)
                if atom not in rest.atoms_deep():
                    return (atom, c, rest)
    return None


def _substitute_eqs(lits: list[Lit], ctx: _Ctx) -> tuple[list[Lit], list[tuple[Atom, Poly]]]:
    """Eliminate equalities with unit variables; returns residual literals
    and the substitution chain (applied in order)."""
    chain: list[tuple[Atom, Poly]] = []
    work = list(lits)
    for _ in range(2 * len(lits) + 16):
        ctx.check_time()
        pick = None
        for i, (kind, p) in enumerate(work):
            if kind != "eq":
                continue
            u = _unit_atom(p)
            if u is not None:
                pick = (i, u)
                break
        if pick is None:
            break
        i, (atom, c, rest) = pick
        # c*a + rest == 0  =>  a = -c*rest
        rep = rest.scale(-c)
        chain.append((atom, rep))
        nxt: list[Lit] = []
        for j, (kind, p) in enumerate(work):
            if j == i:
                continue
            if atom in p.atoms_deep():
                p = map_atoms(p, lambda a: rep if a == atom else None)
            nxt.append((kind, p))
        work = nxt
    return work, chain


def _lit_consistent_const(kind: str, p: Poly) -> Optional[bool]:
    v = p.const_value()
    if v is None:
        return None
    return v == 0 if kind == "eq" else v >= 0


def _unit_bounds(ineqs: list[Poly]) -> dict[Atom, tuple[Optional[int], Optional[int]]]:
    bounds: dict[Atom, tuple[Optional[int], Optional[int]]] = {}
    for p in ineqs:
        lp = p.linear_parts()
        if lp is None:
            continue
        coeffs, const = lp
        if len(coeffs) != 1:
            continue
        (atom, c), = coeffs.items()
        lo, hi = bounds.get(atom, (None, None))
        if c > 0:
            # c*a + const >= 0  =>  a >= ceil(-const / c)
            cand = _ceil_div(-const, c)
            lo = cand if lo is None else max(lo, cand)
        else:
            # c*a + const >= 0, c < 0  =>  a <= floor(const / -c)
            cand = _floor_div(const, -c)
            hi = cand if hi is None else min(hi, cand)
        bounds[atom] = (lo, hi)
    return bounds


def _ceil_div(a: int, b: int) -> int:
    return -((-a) // b)


def _floor_div(a: int, b: int) -> int:
    return a // b


def _augment_nonlinear(ineqs: list[Poly]) -> list[Poly]:
    """Add linear couplings for nonlinear monomials whose factors have known
    nonnegative lower bounds: from x >= c >= 0, the monomial x^k * m gains
    x^k * m >= c^(k-1) * x * (lower bound of m) and a constant floor."""
    bounds = _unit_bounds(ineqs)
    monos: set[tuple] = set()
    for p in ineqs:
        for mono, _c in p.terms:
            if sum(pw for _a, pw in mono) >= 2:
                monos.add(mono)
    out = list(ineqs)
    for mono in monos:
        mono_poly = Poly([(mono, 1)])
        if all(pw % 2 == 0 for _a, pw in mono):
            out.append(mono_poly)  # even powers: mono >= 0
        lows: list[tuple[Atom, int, int]] = []
        ok = True
        for atom, pw in mono:
            lo, _hi = bounds.get(atom, (None, None))
            if lo is None or lo < 0:
                ok = False
                break
            lows.append((atom, pw, lo))
        if not ok:
            continue
        floor = 1
        for _a, pw, lo in lows:
            floor *= lo**pw
        out.append(mono_poly - Poly.const(floor))
        # linear coupling per factor: mono >= (prod of other lower bounds) * atom
        for i, (atom, pw, lo) in enumerate(lows):
            k = lo ** (pw - 1)
            for j, (_a2, pw2, lo2) in enumerate(lows):
                if j != i:
                    k *= lo2**pw2
            out.append(mono_poly - Poly.atom(atom).scale(k))
        # upper couplings when every factor is boxed in [lo, hi] with lo >= 0
        highs: list[int] = []
        for atom, pw in mono:
            _lo, hi = bounds.get(atom, (None, None))
            if hi is None:
                break
            highs.append(hi**pw)
        else:
            ceil = 1
            for h in highs:
                ceil *= h
            out.append(Poly.const(ceil) - mono_poly)
            for i, (atom, pw, lo) in enumerate(lows):
                k = 1
                for j, ((a2, pw2), h2) in enumerate(zip(mono, highs)):
                    if j != i:
                        k *= h2
                _lo_i, hi_i = bounds.get(atom, (None, None))
                k *= hi_i ** (pw - 1)
                out.append(Poly.atom(atom).scale(k) - mono_poly)
    return out


def _fm_unsat(ineqs: list[Poly], ctx: _Ctx) -> bool:
    """Fourier-Motzkin over monomials-as-variables; True means definitely
    unsatisfiable over the rationals (hence over the integers)."""
    system: list[dict] = []
    for p in ineqs:
        row = {mono: c for mono, c in p.terms}
        system.append(row)
    variables = sorted(
        {m for row in system for m in row if m != ()},
        key=lambda m: sum(1 for row in system if m in row),
    )
    for var in variables:
        ctx.check_time()
        pos = [r for r in system if r.get(var, 0) > 0]
        neg = [r for r in system if r.get(var, 0) < 0]
        rest = [r for r in system if r.get(var, 0) == 0]
        if len(pos) * len(neg) + len(rest) > FM_CONSTRAINT_CAP:
            return False
        new = rest
        for rp in pos:
            a = rp[var]
            for rn in neg:
                b = -rn[var]
                combo: dict = {}
                for m, c in rp.items():
                    combo[m] = combo.get(m, 0) + c * b
                for m, c in rn.items():
                    combo[m] = combo.get(m, 0) + c * a
                combo = {m: c for m, c in combo.items() if c != 0 and m != var}
                combo.pop(var, None)
                if not combo or all(m == () for m in combo):
                    if combo.get((), 0) < 0:
                        return True
                    continue
                new.append(combo)
        system = new
    for row in system:
        nonconst = {m: c for m, c in row.items() if m != ()}
        if not nonconst and row.get((), 0) < 0:
            return True
    return False


# ---------------------------------------------------------------------------
# model search


class _Model:
    def __init__(self) -> None:
        self.atom_values: dict[Atom, int] = {}

    def eval_poly(self, p: Poly) -> int:
        total = 0
        for mono, c in p.terms:
            v = c
            for atom, pw in mono:
                v *= self.eval_atom(atom) ** pw
            total += v
        return total

    def eval_atom(self, atom: Atom) -> int:
        if atom in self.atom_values:
            return self.atom_values[atom]
        if atom[0] == "r":
            # congruence: identical array + concrete index share a value
            idx = self.eval_poly(atom[2])
            key = ("r", atom[1], Poly.const(idx))
            if key in self.atom_values:
                v = self.atom_values[key]
            else:
                v = 0
                self.atom_values[key] = v
            self.atom_values[atom] = v
            return v
        v = 0
        self.atom_values[atom] = v
        return v


def _atom_closure(atom: Atom) -> set[Atom]:
    out = {atom}
    if atom[0] == "r":
        out |= atom[2].atoms_deep()
    elif atom[0] in ("d", "p"):
        out |= atom[1].atoms_deep()
        out |= atom[2].atoms_deep()
    return out


def _search_model(
    lits: list[Lit], ctx: _Ctx
) -> Optional[dict[Atom, int]]:
    """Bounded backtracking search for an integer model of the literals."""
    atoms: set[Atom] = set()
    for _k, p in lits:
        for a in p.atoms():
            atoms |= _atom_closure(a)
    base_atoms = sorted(atoms, key=lambda a: repr(a))
    ineqs = [p for k, p in lits if k == "ge"]
    bounds = _unit_bounds(ineqs)

    order = sorted(
        base_atoms,
        key=lambda a: (
            0 if a in bounds and None not in bounds[a] else 1,
            repr(a),
        ),
    )

    ranges: list[tuple[Atom, list[int]]] = []
    for a in order:
        lo, hi = bounds.get(a, (None, None))
        if lo is not None and hi is not None:
            if hi - lo > 4 * ENUM_WINDOW:
                hi = lo + 4 * ENUM_WINDOW
            vals = list(range(lo, hi + 1))
        elif lo is not None:
            vals = list(range(lo, lo + 2 * ENUM_WINDOW + 1))
        elif hi is not None:
            vals = list(range(hi, hi - 2 * ENUM_WINDOW - 1, -1))
        else:
            vals = [0]
            for k in range(1, ENUM_WINDOW + 1):
                vals.extend([k, -k])
        ranges.append((a, vals))

    budget = [ENUM_NODE_CAP]
    assignment: dict[Atom, int] = {}

    def atom_ready(p: Poly) -> bool:
        return all(
            all(b in assignment for b in _atom_closure(a)) for a in p.atoms()
        )

    def eval_p(p: Poly) -> int:
        total = 0
        for mono, c in p.terms:
            v = c
            for atom, pw in mono:
                v *= _eval_atom(atom) ** pw
            total += v
        return total

    def _eval_atom(a: Atom) -> int:
        if a[0] == "r":
            idx = eval_p(a[2])
            key = ("r", a[1], Poly.const(idx))
            if key in assignment:
                return assignment[key]
            return assignment[a]
        return assignment[a]

    def consistent() -> bool:
        for kind, p in lits:
            if not atom_ready(p):
                continue
            v = eval_p(p)
            if kind == "eq" and v != 0:
                return False
            if kind == "ge" and v < 0:
                return False
        return True

    def congruent(a: Atom) -> bool:
        if a[0] != "r":
            return True
        if not all(b in assignment for b in _atom_closure(a) if b != a):
            return True
        idx = eval_p(a[2])
        key = ("r", a[1], Poly.const(idx))
        for other, val in assignment.items():
            if other[0] == "r" and other[1] == a[1] and other != a:
                if all(b in assignment for b in _atom_closure(other) if b != other):
                    if eval_p(other[2]) == idx and val != assignment[a]:
                        return False
        key_hit = assignment.get(key)
        if key_hit is not None and key_hit != assignment[a]:
            return False
        return True

    def rec(i: int) -> bool:
        ctx.check_time()
        if budget[0] <= 0:
            raise TimeoutError
        if i == len(ranges):
            return consistent()
        atom, vals = ranges[i]
        if atom in assignment:
            return rec(i + 1)
        for v in vals:
            budget[0] -= 1
            if budget[0] <= 0:
                raise TimeoutError
            assignment[atom] = v
            if consistent() and congruent(atom):
                if rec(i + 1):
                    return True
            del assignment[atom]
        return False

    try:
        if rec(0):
            return dict(assignment)
    except TimeoutError:
        raise
    return None


def _expand_eqs(lits: list[Lit]) -> list[Poly]:
    out: list[Poly] = []
    for kind, p in lits:
        if kind == "eq":
            out.append(p)
            out.append(-p)
        else:
            out.append(p)
    return out


def _propagate(
    lits: list[Lit], ctx: _Ctx
) -> Optional[tuple[list[Lit], list[tuple[Atom, Poly]], list[Poly]]]:
    """Rounds of equality substitution, constant folding, and integer bound
    tightening.  None means the literals are contradictory; otherwise the
    propagated literals, the substitution chain, and tightened bound facts."""
    work = list(lits)
    chain: list[tuple[Atom, Poly]] = []
    tight: list[Poly] = []
    for _round in range(6):
        work, c2 = _substitute_eqs(work, ctx)
        chain.extend(c2)
        residual: list[Lit] = []
        for kind, p in work:
            ok = _lit_consistent_const(kind, p)
            if ok is False:
                return None
            if ok is True:
                continue
            residual.append((kind, p))
        work = residual
        # integer tightening: single-atom bounds round toward the feasible
        # side, so an empty domain refutes outright and an exact pin lets
        # the atom be substituted away (folding its powers and products)
        bounds = _unit_bounds(_expand_eqs(work))
        tight = []
        pins: dict[Atom, int] = {}
        for atom, (lo, hi) in bounds.items():
            if lo is not None and hi is not None:
                if lo > hi:
                    return None
                if lo == hi:
                    pins[atom] = lo
                    continue
            if lo is not None:
                tight.append(Poly.atom(atom) - Poly.const(lo))
            if hi is not None:
                tight.append(Poly.const(hi) - Poly.atom(atom))
        if not pins:
            break
        for atom, val in pins.items():
            chain.append((atom, Poly.const(val)))

        def sub(p: Poly) -> Poly:
            if not (pins.keys() & p.atoms_deep()):
                return p
            return map_atoms(p, lambda a: Poly.const(pins[a]) if a in pins else None)

        work = [(k, sub(p)) for k, p in work]
    return work, chain, tight


def _theory_check(lits: list[Lit], ctx: _Ctx) -> tuple[str, Optional[dict[Atom, int]]]:
    prop = _propagate(lits, ctx)
    if prop is None:
        return "unsat", None
    work, chain, tight = prop
    flat: list[Lit] = []
    for kind, p in work:
        if kind == "eq":
            flat.append(("ge", p))
            flat.append(("ge", -p))
        else:
            flat.append((kind, p))
    ineqs = [p for _k, p in flat]
    if _fm_unsat(_augment_nonlinear(ineqs + tight), ctx):
        return "unsat", None
    try:
        model = _search_model(flat, ctx)
    except TimeoutError:
        return "unknown", None
    if model is None:
        return "unknown", None
    # back-substitute the eliminated equalities, newest first resolves
    # in reverse order of elimination
    helper = _Model()
    helper.atom_values.update(model)
    for atom, rep in reversed(chain):
        helper.atom_values[atom] = helper.eval_poly(rep)
    return "sat", dict(helper.atom_values)


# ---------------------------------------------------------------------------
# global pre-pass: substitute unconditional equalities once, fold constants


_TRUE_LIT: Sexp = ["lit", "ge", ZERO]
_FALSE_LIT: Sexp = ["lit", "ge", Poly.const(-1)]


def _global_simplify(tree: Sexp, ctx: _Ctx) -> tuple[Sexp, list[tuple[Atom, Poly]]]:
    """Apply the substitution chain of top-level equalities to the whole
    tree and prune branches that fold to constants.  Keeps DNF splitting
    from re-deriving the same substitutions in every branch."""
    glits: list[Lit] = []

    def gather(t: Sexp) -> None:
        if isinstance(t, list) and t and t[0] == "and":
            for x in t[1:]:
                gather(x)
        elif isinstance(t, list) and t and t[0] == "lit":
            glits.append((t[1], t[2]))

    gather(tree)
    _residual, chain = _substitute_eqs(glits, ctx)
    if not chain:
        return tree, []

    def rw(t: Sexp) -> Sexp:
        ctx.check_time()
        if isinstance(t, list) and t and t[0] in ("and", "or"):
            kids = [rw(x) for x in t[1:]]
            out = [t[0]]
            for k in kids:
                if k is _TRUE_LIT:
                    if t[0] == "or":
                        return _TRUE_LIT
                    continue
                if k is _FALSE_LIT:
                    if t[0] == "and":
                        return _FALSE_LIT
                    continue
                out.append(k)
            if len(out) == 1:
                return _TRUE_LIT if t[0] == "and" else _FALSE_LIT
            if len(out) == 2:
                return out[1]
            return out
        if isinstance(t, list) and t and t[0] == "lit":
            p = t[2]
            for atom, rep in chain:
                if atom in p.atoms_deep():
                    p = map_atoms(p, lambda a, _r=rep, _at=atom: _r if a == _at else None)
            ok = _lit_consistent_const(t[1], p)
            if ok is True:
                return _TRUE_LIT
            if ok is False:
                return _FALSE_LIT
            return ["lit", t[1], p]
        return t

    return rw(tree), chain


def _extend_model(model: dict[Atom, int], chain: list[tuple[Atom, Poly]]) -> dict[Atom, int]:
    helper = _Model()
    helper.atom_values.update(model)
    for atom, rep in reversed(chain):
        if atom not in helper.atom_values:
            helper.atom_values[atom] = helper.eval_poly(rep)
    return dict(helper.atom_values)


# ---------------------------------------------------------------------------
# DNF-splitting search over the boolean structure


def _split(tree: Sexp, lits: list[Lit], ctx: _Ctx, budget: list[int]):
    """Yield literal conjunctions (DNF leaves)."""
    ctx.check_time()
    if budget[0] <= 0:
        raise TimeoutError
    if isinstance(tree, list) and tree and tree[0] == "lit":
        yield lits + [(tree[1], tree[2])]
        return
    if isinstance(tree, list) and tree and tree[0] == "and":
        parts = tree[1:]
        ors = [p for p in parts if isinstance(p, list) and p and p[0] == "or"]
        plain: list[Lit] = list(lits)
        nested_ands = []
        for p in parts:
            if isinstance(p, list) and p and p[0] == "lit":
                plain.append((p[1], p[2]))
            elif isinstance(p, list) and p and p[0] == "and":
                nested_ands.append(p)
            elif isinstance(p, list) and p and p[0] == "or":
                pass
            else:
                raise Unsupported(f"node {p!r}")
        if nested_ands:
            merged: list = ["and"] + [x for a in nested_ands for x in a[1:]] + ors
            yield from _split(merged, plain, ctx, budget)
            return
        if not ors:
            yield plain
            return
        # prune before fanning out: a contradiction in the literals collected
        # so far refutes every alternative below this node
        if plain and _propagate(plain, ctx) is None:
            return
        ors.sort(key=len)
        first, rest = ors[0], ors[1:]
        for alt in first[1:]:
            budget[0] -= 1
            sub: list = ["and", alt] + rest
            yield from _split(sub, plain, ctx, budget)
        return
    if isinstance(tree, list) and tree and tree[0] == "or":
        yield from _split(["and", tree], lits, ctx, budget)
        return
    raise Unsupported(f"node {tree!r}")


# ---------------------------------------------------------------------------
# model verification against the original assertions


class _Verifier:
    def __init__(self, model: dict[Atom, int], ctx: _Ctx):
        self.ctx = ctx
        self.scalars: dict[str, int] = {}
        self.arrays: dict[str, dict[int, int]] = {}
        for atom, v in model.items():
            if atom[0] == "v":
                self.scalars[atom[1]] = v
        helper = _Model()
        helper.atom_values.update(model)
        for atom, v in model.items():
            if atom[0] == "r":
                idx = helper.eval_poly(atom[2])
                cell = self.arrays.setdefault(atom[1], {})
                if cell.get(idx, v) != v:
                    raise Unsupported("incongruent array model")
                cell[idx] = v

    def term(self, e: Sexp, env: dict[str, int]) -> int:
        if isinstance(e, int):
            return e
        if isinstance(e, str):
            if e in env:
                return env[e]
            if e in self.ctx.defs:
                return self.term(self.ctx.defs[e], env)
            return self.scalars.get(e, 0)
        head = e[0]
        if head == "+":
            return sum(self.term(x, env) for x in e[1:])
        if head == "-":
            if len(e) == 2:
                return -self.term(e[1], env)
            out = self.term(e[1], env)
            for x in e[2:]:
                out -= self.term(x, env)
            return out
        if head == "*":
            out = 1
            for x in e[1:]:
                out *= self.term(x, env)
            return out
        if head == "ite":
            return self.term(e[2], env) if self.holds(e[1], env) else self.term(e[3], env)
        if head == "select":
            arr = e[1]
            if isinstance(arr, list) and arr and arr[0] == "store":
                base, i, v = arr[1], arr[2], arr[3]
                if self.term(i, env) == self.term(e[2], env):
                    return self.term(v, env)
                return self.term(["select", base, e[2]], env)
            if isinstance(arr, list) and arr and arr[0] == "ite":
                chosen = arr[2] if self.holds(arr[1], env) else arr[3]
                return self.term(["select", chosen, e[2]], env)
            if isinstance(arr, str):
                if arr in self.ctx.defs:
                    return self.term(["select", self.ctx.defs[arr], e[2]], env)
                return self.arrays.get(arr, {}).get(self.term(e[2], env), 0)
        raise Unsupported(f"term {e!r}")

    def holds(self, e: Sexp, env: dict[str, int]) -> bool:
        if e in (True, "true"):
            return True
        if e in (False, "false"):
            return False
        head = e[0]
        if head == "and":
            return all(self.holds(x, env) for x in e[1:])
        if head == "or":
            return any(self.holds(x, env) for x in e[1:])
        if head == "not":
            return not self.holds(e[1], env)
        if head == "=>":
            for hyp in e[1:-1]:
                if not self.holds(hyp, env):
                    return True
            return self.holds(e[-1], env)
        if head == "ite":
            return self.holds(e[2], env) if self.holds(e[1], env) else self.holds(e[3], env)
        if head == "distinct":
            return self.term(e[1], env) != self.term(e[2], env)
        if head == "forall":
            return self.check_forall(e, env)
        if head in _REL:
            a, b = self.term(e[1], env), self.term(e[2], env)
            return {
                "=": a == b,
                "<": a < b,
                "<=": a <= b,
                ">": a > b,
                ">=": a >= b,
            }[head]
        raise Unsupported(f"formula {e!r}")

    def check_forall(self, e: Sexp, env: dict[str, int]) -> bool:
        varlist = [v for v, _s in e[1]]
        body = e[2]
        if len(varlist) != 1:
            raise Unsupported("multi-variable forall")
        var = varlist[0]
        lo, hi = self._range_of(body, var, env)
        if lo is None or hi is None:
            raise Unsupported("unbounded forall")
        if hi - lo > 10_000:
            raise Unsupported("forall range too wide to verify")
        for v in range(lo, hi + 1):
            env2 = dict(env)
            env2[var] = v
            if not self.holds(body, env2):
                return False
        return True

    def _range_of(self, body: Sexp, var: str, env: dict[str, int]):
        lo = hi = None
        if isinstance(body, list) and body and body[0] == "=>":
            guard = body[1]
            parts = (
                guard[1:]
                if isinstance(guard, list) and guard and guard[0] == "and"
                else [guard]
            )
            for g in parts:
                if not (isinstance(g, list) and len(g) == 3 and g[0] in _REL):
                    continue
                a, b = g[1], g[2]
                if a == var and not _mentions(b, var):
                    v = self.term(b, env)
                    if g[0] in ("<=",):
                        hi = v if hi is None else min(hi, v)
                    elif g[0] == "<":
                        hi = v - 1 if hi is None else min(hi, v - 1)
                    elif g[0] == ">=":
                        lo = v if lo is None else max(lo, v)
                    elif g[0] == ">":
                        lo = v + 1 if lo is None else max(lo, v + 1)
                elif b == var and not _mentions(a, var):
                    v = self.term(a, env)
                    if g[0] == "<=":
                        lo = v if lo is None else max(lo, v)
                    elif g[0] == "<":
                        lo = v + 1 if lo is None else max(lo, v + 1)
                    elif g[0] == ">=":
                        hi = v if hi is None else min(hi, v)
                    elif g[0] == ">":
                        hi = v - 1 if hi is None else min(hi, v - 1)
        return lo, hi


# ---------------------------------------------------------------------------
# driver


class Result:
    def __init__(self, status: str, model: Optional[dict[Atom, int]] = None):
        self.status = status
        self.model = model or {}


def solve_assertions(assertions: list[Sexp], ctx: _Ctx) -> Result:
    try:
        tree = _nnf(["and"] + assertions, True, ctx)
        tree = _lower_atoms_tree(tree, ctx)
        tree = _instantiate(tree, ctx)
        tree, gchain = _global_simplify(tree, ctx)
        if tree is _FALSE_LIT:
            return Result("unsat")
        budget = [BRANCH_CAP]
        saw_unknown = False
        for leaf in _split(tree, [], ctx, budget):
            status, model = _theory_check(leaf, ctx)
            if status == "sat":
                assert model is not None
                model = _extend_model(model, gchain)
                try:
                    verifier = _Verifier(model, ctx)
                    if all(verifier.holds(a, {}) for a in assertions):
                        return Result("sat", model)
                    saw_unknown = True
                except Unsupported:
                    saw_unknown = True
            elif status == "unknown":
                saw_unknown = True
        return Result("unknown" if saw_unknown else "unsat")
    except (Unsupported, TimeoutError, RecursionError, OverflowError):
        return Result("unknown")


def _lower_atoms_tree(tree: Sexp, ctx: _Ctx) -> Sexp:
    if isinstance(tree, list) and tree and tree[0] in ("and", "or"):
        return [tree[0]] + [_lower_atoms_tree(x, ctx) for x in tree[1:]]
    if isinstance(tree, list) and tree and tree[0] == "forall":
        return tree
    return _lower_atoms(tree, ctx)


def _model_sexp(model: dict[Atom, int], ctx: _Ctx) -> str:
    helper = _Model()
    helper.atom_values.update(model)
    lines = ["("]
    done_scalars: set[str] = set()
    for atom in sorted(model, key=repr):
        if atom[0] == "v" and atom[1] not in done_scalars:
            done_scalars.add(atom[1])
            lines.append(f"  (define-fun {atom[1]} () Int {_int_smt(model[atom])})")
    arrays: dict[str, dict[int, int]] = {}
    for atom, v in model.items():
        if atom[0] == "r":
            idx = helper.eval_poly(atom[2])
            arrays.setdefault(atom[1], {})[idx] = v
    for arr in sorted(arrays):
        chain = "((as const (Array Int Int)) 0)"
        for idx in sorted(arrays[arr]):
            chain = f"(store {chain} {_int_smt(idx)} {_int_smt(arrays[arr][idx])})"
        lines.append(f"  (define-fun {arr} () (Array Int Int) {chain})")
    lines.append(")")
    return "\n".join(lines)


def _int_smt(v: int) -> str:
    return str(v) if v >= 0 else f"(- {-v})"


def run_script(text: str, timeout_s: float = 30.0) -> str:
    ctx = _Ctx()
    ctx.deadline = time.monotonic() + timeout_s
    out: list[str] = []
    assertions: list[Sexp] = []
    result: Optional[Result] = None
    try:
        cmds = parse_sexps(text)
    except Exception:
        return "unknown\n"
    for cmd in cmds:
        if not isinstance(cmd, list) or not cmd:
            continue
        head = cmd[0]
        if head in ("set-logic", "set-option", "set-info", "push", "pop", "exit", "echo"):
            continue
        if head == "declare-const":
            name, sort = cmd[1], cmd[2]
            if sort == "Int":
                ctx.ints.add(name)
            else:
                ctx.arrays.add(name)
        elif head == "declare-fun":
            name, params, sort = cmd[1], cmd[2], cmd[3]
            if params:
                return "unknown\n"
            if sort == "Int":
                ctx.ints.add(name)
            else:
                ctx.arrays.add(name)
        elif head == "define-fun":
            name, params, _sort, body = cmd[1], cmd[2], cmd[3], cmd[4]
            if params:
                return "unknown\n"
            ctx.defs[name] = body
        elif head == "assert":
            assertions.append(cmd[1])
        elif head == "check-sat":
            result = solve_assertions(assertions, ctx)
            out.append(result.status)
        elif head == "get-model":
            if result is not None and result.status == "sat":
                out.append(_model_sexp(result.model, ctx))
    if result is None:
        result = solve_assertions(assertions, ctx)
        out.append(result.status)
    return "\n".join(out) + "\n"


def main(argv: Optional[list[str]] = None) -> int:
    ap = argparse.ArgumentParser(
        prog="fpi-solve", description="baseline SMT solver for fpi queries"
    )
    ap.add_argument("file", nargs="?", help="SMT-LIB script (default: stdin)")
    ap.add_argument("--timeout", type=float, default=30_000.0, help="milliseconds")
    args = ap.parse_args(argv)
    if args.file:
        with open(args.file, "r", encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = sys.stdin.read()
    sys.stdout.write(run_script(text, timeout_s=args.timeout / 1000.0))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
