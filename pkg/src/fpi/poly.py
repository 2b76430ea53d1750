"""Canonical polynomial arithmetic over opaque atoms.

A Poly is a sum of monomials with integer coefficients.  Atoms are what the
rest of the pipeline treats as indivisible integer-valued terms:

    ('v', name)                 scalar / counter / parameter / skolem
    ('r', array, index_poly)    array read at a normalized index
    ('d', num_poly, den_poly)   residual truncated integer division
    ('p', base_poly, exp_poly)  residual power with symbolic exponent

Array-read atoms key on the *normalized* index, so A[i+1-1] and A[i] are the
same atom: that one property does most of the cancellation work in the
difference-program construction.

Division is simplified only when it is exact as a polynomial identity
(constant divisor dividing every coefficient, or exact multivariate long
division); everything else stays a residual atom so truncation semantics are
never silently changed.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Union

from .errors import UnhandledOperator
from .lang import Bin, Expr, IteExpr, Name, Num, Read

Atom = tuple  # shape documented above
Mono = tuple  # tuple[tuple[Atom, int], ...] sorted by atom key

_POW_FOLD_CAP = 64


def _key(x) -> tuple:
    """Total order over atoms / polys / ints / strs for canonical sorting."""
    if isinstance(x, Poly):
        return (3, tuple(( _key(m), c) for m, c in x.terms))
    if isinstance(x, tuple):
        return (2, tuple(_key(e) for e in x))
    if isinstance(x, str):
        return (1, x)
    if isinstance(x, int):
        return (0, x)
    raise TypeError(x)


class Poly:
    __slots__ = ("terms", "_hash", "_deep")

    def __init__(self, terms: Iterable[tuple[Mono, int]]):
        items = [(m, c) for m, c in terms if c != 0]
        items.sort(key=lambda t: _key(t[0]))
        object.__setattr__(self, "terms", tuple(items))
        object.__setattr__(self, "_hash", hash(self.terms))
        object.__setattr__(self, "_deep", None)

    def __setattr__(self, *a):  # immutable
        raise AttributeError("Poly is immutable")

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return isinstance(other, Poly) and self.terms == other.terms

    def __repr__(self):  # pragma: no cover - debug aid
        from .lang import expr_to_str

        return f"Poly({expr_to_str(to_expr(self))})"

    # -- constructors -------------------------------------------------------

    @staticmethod
    def const(c: int) -> "Poly":
        return Poly([((), c)]) if c else ZERO

    @staticmethod
    def var(name: str) -> "Poly":
        return Poly.atom(("v", name))

    @staticmethod
    def atom(a: Atom, power: int = 1) -> "Poly":
        return Poly([(((a, power),), 1)])

    # -- queries ------------------------------------------------------------

    def is_const(self) -> bool:
        return not self.terms or (len(self.terms) == 1 and self.terms[0][0] == ())

    def const_value(self) -> Optional[int]:
        if not self.terms:
            return 0
        if len(self.terms) == 1 and self.terms[0][0] == ():
            return self.terms[0][1]
        return None

    def atoms(self) -> set[Atom]:
        out: set[Atom] = set()
        for m, _ in self.terms:
            for a, _p in m:
                out.add(a)
        return out

    def atoms_deep(self) -> frozenset[Atom]:
        """Atoms including those nested inside opaque sub-polys (cached)."""
        if self._deep is None:
            out: set[Atom] = set()
            for a in self.atoms():
                out.add(a)
                if a[0] == "r":
                    out |= a[2].atoms_deep()
                elif a[0] in ("d", "p"):
                    out |= a[1].atoms_deep()
                    out |= a[2].atoms_deep()
            object.__setattr__(self, "_deep", frozenset(out))
        return self._deep

    def is_linear(self) -> bool:
        return all(sum(p for _, p in m) <= 1 for m, _ in self.terms)

    def linear_parts(self) -> Optional[tuple[dict[Atom, int], int]]:
        """Return ({atom: coeff}, constant) if linear, else None."""
        coeffs: dict[Atom, int] = {}
        const = 0
        for m, c in self.terms:
            if m == ():
                const = c
            elif len(m) == 1 and m[0][1] == 1:
                coeffs[m[0][0]] = c
            else:
                return None
        return coeffs, const

    def degree_of(self, atom: Atom) -> int:
        d = 0
        for m, _ in self.terms:
            for a, p in m:
                if a == atom:
                    d = max(d, p)
        return d

    # -- arithmetic -----------------------------------------------------------

    def __add__(self, other: "Poly") -> "Poly":
        acc = dict(self.terms)
        for m, c in other.terms:
            acc[m] = acc.get(m, 0) + c
        return Poly(acc.items())

    def __sub__(self, other: "Poly") -> "Poly":
        return self + other.__neg__()

    def __neg__(self) -> "Poly":
        return Poly([(m, -c) for m, c in self.terms])

    def __mul__(self, other: "Poly") -> "Poly":
        acc: dict[Mono, int] = {}
        for m1, c1 in self.terms:
            for m2, c2 in other.terms:
                m = _mono_mul(m1, m2)
                acc[m] = acc.get(m, 0) + c1 * c2
        return Poly(acc.items())

    def scale(self, k: int) -> "Poly":
        return Poly([(m, c * k) for m, c in self.terms])

    def pow_int(self, k: int) -> "Poly":
        if k < 0:
            raise UnhandledOperator("negative constant exponent")
        out = Poly.const(1)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out


def _mono_mul(m1: Mono, m2: Mono) -> Mono:
    acc: dict[Atom, int] = {}
    for a, p in m1:
        acc[a] = acc.get(a, 0) + p
    for a, p in m2:
        acc[a] = acc.get(a, 0) + p
    return tuple(sorted(acc.items(), key=lambda t: _key(t[0])))


ZERO = Poly([])
ONE = Poly([((), 1)])


# ---------------------------------------------------------------------------
# exact division


def exact_div(num: Poly, den: Poly) -> Optional[Poly]:
    """num / den when the quotient is a polynomial identity, else None."""
    dc = den.const_value()
    if dc is not None:
        if dc == 0:
            return None
        if all(c % dc == 0 for _, c in num.terms):
            return Poly([(m, c // dc) for m, c in num.terms])
        return None
    if num == den:
        return ONE
    if not num.terms:
        # 0 / den is 0 only when den is provably nonzero; keep the residual
        return None
    return _long_div(num, den)


def _mono_div(m1: Mono, m2: Mono) -> Optional[Mono]:
    acc = {a: p for a, p in m1}
    for a, p in m2:
        if acc.get(a, 0) < p:
            return None
        acc[a] -= p
    return tuple(sorted(((a, p) for a, p in acc.items() if p), key=lambda t: _key(t[0])))


def _long_div(num: Poly, den: Poly) -> Optional[Poly]:
    # graded lexicographic order over the atoms of num and den; the tuple
    # comparison must be a genuine monomial order or the reduction below can
    # fail on exactly divisible inputs
    basis = sorted(num.atoms() | den.atoms(), key=_key)
    index = {a: i for i, a in enumerate(basis)}

    def grlex(m: Mono) -> tuple:
        vec = [0] * len(basis)
        for a, p in m:
            vec[index[a]] = p
        return (sum(vec), tuple(vec))

    def lead(p: Poly) -> tuple[Mono, int]:
        return max(p.terms, key=lambda t: grlex(t[0]))

    dlead_m, dlead_c = lead(den)
    quo = ZERO
    rem = num
    for _ in range(10_000):
        if not rem.terms:
            return quo
        rlead_m, rlead_c = lead(rem)
        m = _mono_div(rlead_m, dlead_m)
        if m is None or rlead_c % dlead_c != 0:
            return None
        t = Poly([(m, rlead_c // dlead_c)])
        quo = quo + t
        rem = rem - t * den
    return None


# ---------------------------------------------------------------------------
# substitution


def subst_atom(p: Poly, atom: Atom, rep: Poly) -> Poly:
    out = ZERO
    for m, c in p.terms:
        term = Poly.const(c)
        for a, pw in m:
            if a == atom:
                term = term * rep.pow_int(pw)
            else:
                term = term * Poly.atom(a, pw)
        out = out + term
    return out


def map_atoms(p: Poly, fn: Callable[[Atom], Optional[Poly]]) -> Poly:
    """Rewrite every atom through fn (None keeps the atom).  fn receives
    atoms with already-rewritten sub-polys."""
    out = ZERO
    for m, c in p.terms:
        term = Poly.const(c)
        for a, pw in m:
            a2 = _map_atom_children(a, fn)
            rep = fn(a2)
            term = term * (rep.pow_int(pw) if rep is not None else Poly.atom(a2, pw))
        out = out + term
    return out


def _map_atom_children(a: Atom, fn) -> Atom:
    kind = a[0]
    if kind == "v":
        return a
    if kind == "r":
        return ("r", a[1], map_atoms(a[2], fn))
    if kind == "d":
        return ("d", map_atoms(a[1], fn), map_atoms(a[2], fn))
    if kind == "p":
        return ("p", map_atoms(a[1], fn), map_atoms(a[2], fn))
    raise TypeError(a)


# ---------------------------------------------------------------------------
# conversions to / from the surface AST

Resolver = Callable[[Union[Name, Read]], Optional[Poly]]


def from_expr(e: Expr, resolve: Resolver | None = None) -> Poly:
    match e:
        case Num(value=v):
            return Poly.const(v)
        case Name():
            if resolve is not None:
                r = resolve(e)
                if r is not None:
                    return r
            return Poly.var(e.id)
        case Read(array=a, index=i):
            ip = from_expr(i, resolve)
            if resolve is not None:
                r = resolve(Read(a, to_expr(ip)))
                if r is not None:
                    return r
            return Poly.atom(("r", a, ip))
        case Bin(op=op, left=l, right=r):
            pl = from_expr(l, resolve)
            pr = from_expr(r, resolve)
            if op == "+":
                return pl + pr
            if op == "-":
                return pl - pr
            if op == "*":
                return pl * pr
            if op == "/":
                q = exact_div(pl, pr)
                return q if q is not None else Poly.atom(("d", pl, pr))
            if op == "^":
                k = pr.const_value()
                if k is not None and 0 <= k <= _POW_FOLD_CAP:
                    return pl.pow_int(k)
                return Poly.atom(("p", pl, pr))
            raise TypeError(op)
        case IteExpr():
            raise UnhandledOperator("conditional expression has no polynomial form")
    raise TypeError(e)


def _atom_to_expr(a: Atom) -> Expr:
    kind = a[0]
    if kind == "v":
        return Name(a[1])
    if kind == "r":
        return Read(a[1], to_expr(a[2]))
    if kind == "d":
        return Bin("/", to_expr(a[1]), to_expr(a[2]))
    if kind == "p":
        return Bin("^", to_expr(a[1]), to_expr(a[2]))
    raise TypeError(a)


def _mono_to_expr(m: Mono, c: int) -> Expr:
    factors: list[Expr] = []
    for a, pw in m:
        base = _atom_to_expr(a)
        for _ in range(pw):
            factors.append(base)
    expr: Expr | None = None
    if abs(c) != 1 or not factors:
        expr = Num(abs(c))
    for f in factors:
        expr = f if expr is None else Bin("*", expr, f)
    assert expr is not None
    return expr


def to_expr(p: Poly) -> Expr:
    """Deterministic rendering: monomials in canonical order, subtraction for
    negative coefficients, no +0/*1 residue."""
    if not p.terms:
        return Num(0)
    expr: Expr | None = None
    for m, c in p.terms:
        if expr is None:
            if m == ():
                expr = Num(c)
            elif c > 0:
                expr = _mono_to_expr(m, c)
            else:
                expr = Bin("-", Num(0), _mono_to_expr(m, c))
        elif c > 0:
            expr = Bin("+", expr, _mono_to_expr(m, c))
        else:
            expr = Bin("-", expr, _mono_to_expr(m, c))
    assert expr is not None
    return expr


def simplify_expr(e: Expr, resolve: Resolver | None = None) -> Expr:
    """Normalize an expression through the polynomial form and back."""
    return to_expr(from_expr(e, resolve))
