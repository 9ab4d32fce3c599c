"""Pseudodifferential operators over differential polynomials.

Two representations are used:

* :class:`PsiDO` -- ``sum_j a_j d^j`` with finitely many positive powers and a
  recorded tail truncation ``trunc`` (coefficients are known exactly for
  ``j >= trunc``; ``trunc is None`` means the operator is exact).
* :class:`IntegralOp` -- an exact finite non-local operator
  ``D + sum a d^-1 o m`` with ``D`` differential.  The tail is stored with
  each ``m`` a generator monomial, which makes the form canonical.

Operator coefficients sit on the left: ``a*d^j``.
"""
from __future__ import annotations

import os
from fractions import Fraction
from functools import lru_cache

from .diffpoly import (
    DiffPoly, GradientVector, LocalFunctional, NotExact, antiderivative, as_poly,
    scalar_inverse, NonUnitScalar,
)
from .printing import format_poly, format_power_term, join_terms

DEFAULT_DEPTH = 8


class TruncationError(ValueError):
    """Comparison or extraction requested below the recorded truncation."""


class InsufficientTruncation(TruncationError):
    pass


class NonInvertibleLeading(ValueError):
    pass


class NotMonic(ValueError):
    pass


class OrderMismatch(ValueError):
    pass


class NonExactArgument(ValueError):
    """A d^-1 argument met while applying an operator is not a total derivative."""

    def __init__(self, message, integrand=None):
        super().__init__(message)
        self.integrand = integrand


class NotRepresentable(ValueError):
    """Result leaves the finite ``D + sum a d^-1 o m`` class."""


def depth() -> int:
    env = os.environ.get("PVA_TRUNC")
    if env:
        return abs(int(env))
    return DEFAULT_DEPTH


def default_trunc(order: int) -> int:
    return -(depth() + abs(order))


@lru_cache(maxsize=None)
def binom(j: int, k: int) -> Fraction:
    """Generalized binomial coefficient C(j, k), valid for negative j."""
    num = 1
    for t in range(k):
        num *= j - t
    den = 1
    for t in range(2, k + 1):
        den *= t
    return Fraction(num, den)


class _Derivs:
    """Memoized derivatives of one polynomial."""

    __slots__ = ("seq",)

    def __init__(self, p):
        self.seq = [p]

    def __getitem__(self, k):
        seq = self.seq
        while len(seq) <= k:
            seq.append(seq[-1].diff())
        return seq[k]


def _max_trunc(*ts):
    vals = [t for t in ts if t is not None]
    return max(vals) if vals else None


# ---------------------------------------------------------------------------

class PsiDO:
    __slots__ = ("coeffs", "trunc")

    def __init__(self, coeffs=None, trunc=None):
        clean = {}
        for j, c in (coeffs or {}).items():
            c = as_poly(c)
            if c and (trunc is None or j >= trunc):
                clean[int(j)] = c
        self.coeffs = clean
        self.trunc = trunc

    # constructors -------------------------------------------------------
    @classmethod
    def d(cls, k: int = 1) -> "PsiDO":
        return cls({k: DiffPoly.const(1)})

    @classmethod
    def mult(cls, a) -> "PsiDO":
        return cls({0: as_poly(a)})

    @classmethod
    def identity(cls) -> "PsiDO":
        return cls.mult(1)

    # queries ---------------------------------------------------------------
    @property
    def order(self):
        if self.coeffs:
            return max(self.coeffs)
        if self.trunc is not None:
            return self.trunc - 1
        return None

    @property
    def exact(self) -> bool:
        return self.trunc is None

    def coeff(self, j: int) -> DiffPoly:
        if self.trunc is not None and j < self.trunc:
            raise InsufficientTruncation("coefficient of d^%d is below truncation d^%d" % (j, self.trunc))
        return self.coeffs.get(j, DiffPoly())

    def is_differential(self) -> bool:
        return self.trunc is None and all(j >= 0 for j in self.coeffs)

    def is_zero(self) -> bool:
        return not self.coeffs

    def leading(self) -> DiffPoly:
        return self.coeffs[self.order] if self.coeffs else DiffPoly()

    def variables(self) -> set:
        out = set()
        for c in self.coeffs.values():
            out |= {v[0] for v in c.gen_variables()}
        return out

    # arithmetic ------------------------------------------------------------
    def __add__(self, other):
        other = _as_psido(other)
        t = _max_trunc(self.trunc, other.trunc)
        out = dict(self.coeffs)
        for j, c in other.coeffs.items():
            out[j] = out.get(j, DiffPoly()) + c
        return PsiDO(out, t)

    __radd__ = __add__

    def __neg__(self):
        return PsiDO({j: -c for j, c in self.coeffs.items()}, self.trunc)

    def __sub__(self, other):
        return self + (-_as_psido(other))

    def __rsub__(self, other):
        return _as_psido(other) - self

    def __mul__(self, other):
        """Composition with another operator, left multiplication by scalars."""
        if isinstance(other, PsiDO):
            return compose(self, other)
        if isinstance(other, IntegralOp):
            return compose(self, other.to_psido(self._suggest(other)))
        return compose(self, PsiDO.mult(other))

    def _suggest(self, other):
        return self.trunc

    def __rmul__(self, other):
        a = as_poly(other)
        return PsiDO({j: a * c for j, c in self.coeffs.items()}, self.trunc)

    def __matmul__(self, other):
        return self.__mul__(other)

    def __pow__(self, n: int):
        return power(self, n)

    def __eq__(self, other):
        if isinstance(other, IntegralOp):
            if not other.tails:
                other = other.to_psido()
            else:
                return False
        if not isinstance(other, PsiDO):
            try:
                other = _as_psido(other)
            except TypeError:
                return NotImplemented
        return self.trunc == other.trunc and self.coeffs == other.coeffs

    def __hash__(self):
        return hash((self.trunc, frozenset(self.coeffs.items())))

    def agrees(self, other, down_to=None) -> bool:
        """Compare coefficients with exponent >= down_to (default: common truncation)."""
        other = _as_psido(other)
        common = _max_trunc(self.trunc, other.trunc)
        if down_to is None:
            down_to = common
        elif common is not None and down_to < common:
            raise TruncationError("cannot compare below d^%d" % common)
        keys = set(self.coeffs) | set(other.coeffs)
        for j in keys:
            if down_to is not None and j < down_to:
                continue
            if self.coeffs.get(j, DiffPoly()) != other.coeffs.get(j, DiffPoly()):
                return False
        return True

    def truncate(self, t) -> "PsiDO":
        return PsiDO(self.coeffs, _max_trunc(self.trunc, t))

    def subs(self, mapping) -> "PsiDO":
        return PsiDO({j: c.subs(mapping) for j, c in self.coeffs.items()}, self.trunc)

    # application -----------------------------------------------------------
    def apply(self, f) -> DiffPoly:
        """Apply to a differential polynomial; negative powers need exact arguments."""
        f = as_poly(f)
        if self.trunc is not None:
            raise TruncationError("cannot apply a truncated operator exactly")
        out = DiffPoly()
        pos = [j for j in self.coeffs if j >= 0]
        if pos:
            ders = _Derivs(f)
            for j in pos:
                out = out + self.coeffs[j] * ders[j]
        neg = sorted((j for j in self.coeffs if j < 0), reverse=True)
        if neg:
            g = f
            k = 0
            for j in neg:
                while k > j:
                    try:
                        g = antiderivative(g)
                    except NotExact as exc:
                        raise NonExactArgument(str(exc), g) from exc
                    k -= 1
                out = out + self.coeffs[j] * g
        return out

    def __call__(self, f):
        return self.apply(f)

    def __str__(self):
        return format_operator(self)

    __repr__ = __str__


def _as_psido(x) -> PsiDO:
    if isinstance(x, PsiDO):
        return x
    if isinstance(x, IntegralOp):
        if x.tails:
            raise TypeError("non-local integral operator needs an explicit truncation")
        return x.to_psido()
    if isinstance(x, (int, Fraction, DiffPoly)):
        return PsiDO.mult(x)
    raise TypeError("cannot interpret %r as an operator" % (x,))


def format_operator(A: PsiDO, symbol: str = "d") -> str:
    pieces = []
    for j in sorted(A.coeffs, reverse=True):
        pieces.append(format_power_term(A.coeffs[j], symbol, j))
    out = join_terms(pieces)
    if A.trunc is not None:
        out = ("" if not pieces else out + " + ") + "O(%s^%d)" % (symbol, A.trunc - 1)
    return out


# ---------------------------------------------------------------------------
# ring operations

def compose(A: PsiDO, B: PsiDO, trunc=None) -> PsiDO:
    """A o B using d^i o b = sum_k C(i,k) b^(k) d^(i-k)."""
    A = _as_psido(A)
    B = _as_psido(B)
    oa, ob = A.order, B.order
    if oa is None or ob is None:
        # one factor is the exact zero
        return PsiDO({}, None)
    cands = []
    if A.trunc is not None:
        cands.append(A.trunc + ob)
    if B.trunc is not None:
        cands.append(oa + B.trunc)
    infinite = any(i < 0 for i in A.coeffs) and any(not b.is_scalar() for b in B.coeffs.values())
    if trunc is not None:
        cands.append(trunc)
    elif infinite and not cands:
        cands.append(default_trunc(oa + ob))
    T = max(cands) if cands else None
    out: dict = {}
    for j, b in B.coeffs.items():
        ders = _Derivs(b)
        scalar_b = b.is_scalar()
        for i, a in A.coeffs.items():
            if scalar_b:
                kmax = 0
            elif i >= 0:
                kmax = i
            else:
                kmax = None
            top = i + j
            if T is not None:
                lim = top - T
                kmax = lim if kmax is None else min(kmax, lim)
            if kmax is None or kmax < 0:
                continue
            for k in range(kmax + 1):
                bk = ders[k]
                if not bk:
                    break
                e = top - k
                term = a * bk
                cf = binom(i, k)
                if cf != 1:
                    term = term * cf
                prev = out.get(e)
                out[e] = term if prev is None else prev + term
    return PsiDO(out, T)


def power(A: PsiDO, n: int, trunc=None) -> PsiDO:
    if n < 0:
        raise ValueError("use invert for negative powers")
    result = PsiDO.identity()
    oa = A.order or 0
    for i in range(n):
        step = None if trunc is None else trunc - max(oa, 0) * (n - 1 - i)
        result = compose(result, A, step)
    return result


def adjoint(A, trunc=None):
    """Formal adjoint: (sum a_j d^j)* = sum (-d)^j o a_j."""
    if isinstance(A, IntegralOp):
        return A.adjoint()
    if isinstance(A, PsiDOMatrix):
        return A.adjoint(trunc)
    A = _as_psido(A)
    cands = [] if A.trunc is None else [A.trunc]
    infinite = any(j < 0 and not a.is_scalar() for j, a in A.coeffs.items())
    if trunc is not None:
        cands.append(trunc)
    elif infinite and not cands:
        cands.append(default_trunc(A.order))
    T = max(cands) if cands else None
    out: dict = {}
    for j, a in A.coeffs.items():
        ders = _Derivs(a)
        sign = -1 if j % 2 else 1
        if a.is_scalar():
            kmax = 0
        elif j >= 0:
            kmax = j
        else:
            kmax = None
        if T is not None:
            lim = j - T
            kmax = lim if kmax is None else min(kmax, lim)
        if kmax is None or kmax < 0:
            continue
        for k in range(kmax + 1):
            ak = ders[k]
            if not ak:
                break
            term = ak * (sign * binom(j, k))
            e = j - k
            prev = out.get(e)
            out[e] = term if prev is None else prev + term
    return PsiDO(out, T)


PsiDO.adjoint = adjoint


def residue(A: PsiDO) -> DiffPoly:
    A = _as_psido(A)
    if A.trunc is not None and A.trunc > -1:
        raise InsufficientTruncation("residue needs the d^-1 coefficient (truncated at d^%d)" % A.trunc)
    return A.coeffs.get(-1, DiffPoly())


def positive_part(A: PsiDO) -> PsiDO:
    A = _as_psido(A)
    if A.trunc is not None and A.trunc > 0:
        raise InsufficientTruncation("positive part needs coefficients down to d^0")
    return PsiDO({j: c for j, c in A.coeffs.items() if j >= 0})


def negative_part(A: PsiDO) -> PsiDO:
    A = _as_psido(A)
    return PsiDO({j: c for j, c in A.coeffs.items() if j < 0}, A.trunc)


def _scalar_unit_inverse(a: DiffPoly) -> DiffPoly:
    if not a.is_scalar():
        raise NonInvertibleLeading("leading coefficient %s involves generators" % a)
    try:
        return scalar_inverse(a)
    except NonUnitScalar as exc:
        raise NonInvertibleLeading(str(exc)) from exc


def invert(A: PsiDO, trunc=None) -> PsiDO:
    """Inverse of an operator whose leading coefficient is an invertible scalar."""
    A = _as_psido(A)
    if A.is_zero():
        raise NonInvertibleLeading("zero operator")
    n = A.order
    inv_lead = _scalar_unit_inverse(A.leading())
    if len(A.coeffs) == 1 and A.trunc is None:
        return PsiDO({-n: inv_lead})
    T = trunc if trunc is not None else default_trunc(n)
    # A = lead d^n (1 + N),  N = lead^-1 d^-n o (A - lead d^n)
    rest = PsiDO({j: c for j, c in A.coeffs.items() if j != n}, A.trunc)
    N = compose(PsiDO({-n: inv_lead}), rest, T + n)
    base = PsiDO({-n: inv_lead})
    minus_N = -N
    term = PsiDO.identity()
    total = PsiDO.identity()
    for _ in range(max(0, -T - n) + 1):
        term = compose(term, minus_N, T + n)
        if term.is_zero() and term.trunc is None:
            break
        total = total + term
        if term.order is not None and term.order < T + n:
            break
    result = compose(total, base, T)
    return result


def kth_root(L: PsiDO, k: int, trunc=None) -> PsiDO:
    """Unique monic R of order 1 with R^k = L up to truncation."""
    L = _as_psido(L)
    if k < 1:
        raise ValueError("root index must be positive")
    if L.order != k:
        raise OrderMismatch("operator has order %s, expected %d" % (L.order, k))
    if L.leading() != 1:
        raise NotMonic("leading coefficient is %s, not 1" % L.leading())
    T = trunc if trunc is not None else default_trunc(1)
    if L.trunc is not None:
        T = max(T, L.trunc - (k - 1))
    R = PsiDO.d(1)
    if k == 1:
        return PsiDO(L.coeffs, _max_trunc(T, L.trunc))
    for m in range(1, 2 - T):
        target = k - m
        Rt = PsiDO(R.coeffs, 1 - m)
        Pk = power(Rt, k, target)
        have = Pk.coeffs.get(target, DiffPoly())
        r = (L.coeffs.get(target, DiffPoly()) - have) * Fraction(1, k)
        if r:
            coeffs = dict(R.coeffs)
            coeffs[1 - m] = r
            R = PsiDO(coeffs)
    return PsiDO(R.coeffs, T)


def fractional_power(L: PsiDO, n: int, k: int, trunc=None) -> PsiDO:
    """L^(n/k) as (kth_root(L))^n; retained down to `trunc` (default d^-1)."""
    want = -1 if trunc is None else trunc
    root = kth_root(L, k, want - n - 1)
    return power(root, n, want)


def lax_rhs(L: PsiDO, n: int, k: int) -> PsiDO:
    """[(L^(n/k))_+, L]."""
    L = _as_psido(L)
    P = positive_part(fractional_power(L, n, k, 0))
    out = compose(P, L) - compose(L, P)
    if L.is_differential():
        if not out.is_differential() or (out.coeffs and out.order >= k):
            raise ArithmeticError("Lax flow is not a differential operator of order < %d" % k)
    return out


def conserved_density(L: PsiDO, n: int, k: int, variables=None) -> LocalFunctional:
    """int h_{n,k} with h_{n,k} = (-k/n) Res L^(n/k)."""
    L = _as_psido(L)
    if variables is None:
        variables = sorted(L.variables())
    res = residue(fractional_power(L, n, k, -1))
    return LocalFunctional(res * Fraction(-k, n), variables)


# ---------------------------------------------------------------------------
# exact finite non-local operators

class IntegralOp:
    """Exact operator ``D + sum_m a_m d^-1 o m``.

    ``local`` maps exponents j >= 0 to coefficients; ``tails`` maps a generator
    monomial m (empty tuple for 1) to its left factor a_m.
    """

    __slots__ = ("local", "tails")

    def __init__(self, local=None, tails=None):
        if isinstance(local, PsiDO):
            if not local.is_differential():
                raise ValueError("local part must be a differential operator")
            local = local.coeffs
        self.local = {j: as_poly(c) for j, c in (local or {}).items() if as_poly(c)}
        self.tails = {m: a for m, a in (tails or {}).items() if a}

    @classmethod
    def from_tail(cls, a, b) -> "IntegralOp":
        """a d^-1 o b."""
        return cls({}, _tail_terms(as_poly(a), as_poly(b)))

    @classmethod
    def from_operator(cls, A) -> "IntegralOp":
        if isinstance(A, IntegralOp):
            return A
        A = _as_psido(A)
        if A.trunc is not None or any(j < -1 for j in A.coeffs):
            raise NotRepresentable("operator with a d^-k tail is not in integral form")
        out = cls({j: c for j, c in A.coeffs.items() if j >= 0})
        if -1 in A.coeffs:
            out = out + cls.from_tail(A.coeffs[-1], 1)
        return out

    @property
    def is_local(self) -> bool:
        return not self.tails

    @property
    def local_op(self) -> PsiDO:
        return PsiDO(self.local)

    @property
    def order(self):
        if self.local:
            return max(self.local)
        return -1 if self.tails else None

    def tail_pairs(self):
        for m, a in self.tails.items():
            yield a, DiffPoly({m: 1})

    def __add__(self, other):
        other = _as_integral(other)
        local = dict(self.local)
        for j, c in other.local.items():
            local[j] = local.get(j, DiffPoly()) + c
        tails = dict(self.tails)
        for m, a in other.tails.items():
            tails[m] = tails.get(m, DiffPoly()) + a
        return IntegralOp(local, tails)

    __radd__ = __add__

    def __neg__(self):
        return IntegralOp({j: -c for j, c in self.local.items()},
                          {m: -a for m, a in self.tails.items()})

    def __sub__(self, other):
        return self + (-_as_integral(other))

    def __rsub__(self, other):
        return _as_integral(other) - self

    def __rmul__(self, c):
        c = as_poly(c)
        return IntegralOp({j: c * x for j, x in self.local.items()},
                          {m: c * a for m, a in self.tails.items()})

    def __mul__(self, other):
        return compose_exact(self, other)

    __matmul__ = __mul__

    def __eq__(self, other):
        if isinstance(other, PsiDO):
            if other.is_differential():
                other = IntegralOp(other.coeffs)
            else:
                return False
        if not isinstance(other, IntegralOp):
            try:
                other = _as_integral(other)
            except TypeError:
                return NotImplemented
        return self.local == other.local and self.tails == other.tails

    def __hash__(self):
        return hash((frozenset(self.local.items()), frozenset(self.tails.items())))

    def is_zero(self) -> bool:
        return not self.local and not self.tails

    def adjoint(self) -> "IntegralOp":
        out = IntegralOp(adjoint(self.local_op).coeffs)
        for a, m in self.tail_pairs():
            out = out + IntegralOp.from_tail(-m, a)
        return out

    def to_psido(self, trunc=None) -> PsiDO:
        if not self.tails:
            return PsiDO(self.local)
        T = trunc if trunc is not None else default_trunc(self.order or 0)
        coeffs = dict(self.local)
        for a, m in self.tail_pairs():
            ders = _Derivs(m)
            for k in range(0, -1 - T + 1):
                mk = ders[k]
                if not mk:
                    break
                e = -1 - k
                term = a * mk * (-1 if k % 2 else 1)
                coeffs[e] = coeffs.get(e, DiffPoly()) + term
        return PsiDO(coeffs, T)

    def subs(self, mapping) -> "IntegralOp":
        out = IntegralOp({j: c.subs(mapping) for j, c in self.local.items()})
        for a, m in self.tail_pairs():
            out = out + IntegralOp.from_tail(a.subs(mapping), m.subs(mapping))
        return out

    def apply(self, f) -> DiffPoly:
        f = as_poly(f)
        out = self.local_op.apply(f) if self.local else DiffPoly()
        groups = _group_tails([(a, m * f) for a, m in self.tail_pairs()])
        return out + _integrate_groups(groups)

    __call__ = apply

    def variables(self) -> set:
        out = set()
        for c in self.local.values():
            out |= {v[0] for v in c.gen_variables()}
        for a, m in self.tail_pairs():
            out |= {v[0] for v in a.gen_variables()} | {v[0] for v in m.gen_variables()}
        return out

    def __str__(self):
        pieces = [format_power_term(self.local[j], "d", j) for j in sorted(self.local, reverse=True)]
        for a, m in sorted(self.tail_pairs(), key=lambda am: format_poly(am[1])):
            ms = format_poly(m)
            as_ = format_poly(a)
            if as_ == "1":
                body, sign = "dinv(%s)" % ms, "+"
            elif as_ == "-1":
                body, sign = "dinv(%s)" % ms, "-"
            elif " " not in as_ and as_.startswith("-"):
                body, sign = "%s*dinv(%s)" % (as_[1:], ms), "-"
            else:
                wrapped = ("(" + as_ + ")") if " " in as_ else as_
                body, sign = "%s*dinv(%s)" % (wrapped, ms), "+"
            pieces.append((sign, body))
        return join_terms(pieces)

    __repr__ = __str__


def _tail_terms(a: DiffPoly, b: DiffPoly) -> dict:
    out: dict = {}
    for g, s in b.coefficient_map().items():
        out[g] = out.get(g, DiffPoly()) + a * s
    return {g: x for g, x in out.items() if x}


def _as_integral(x) -> IntegralOp:
    if isinstance(x, IntegralOp):
        return x
    if isinstance(x, PsiDO):
        return IntegralOp.from_operator(x)
    if isinstance(x, (int, Fraction, DiffPoly)):
        return IntegralOp({0: as_poly(x)})
    raise TypeError("cannot interpret %r as an integral operator" % (x,))


def _group_tails(pairs):
    """Rewrite sum a_t d^-1(g_t) as sum over generator monomials of a."""
    groups: dict = {}
    for a, g in pairs:
        for mono, s in a.coefficient_map().items():
            groups[mono] = groups.get(mono, DiffPoly()) + s * g
    return groups


def _integrate_groups(groups) -> DiffPoly:
    out = DiffPoly()
    for mono, g in groups.items():
        if not g:
            continue
        try:
            prim = antiderivative(g)
        except NotExact as exc:
            raise NonExactArgument("d^-1 argument %s is not a total derivative" % g, g) from exc
        out = out + DiffPoly({mono: 1}) * prim
    return out


def _right_normal(A: PsiDO) -> dict:
    """Coefficients r_k with A = sum d^k o r_k (A differential)."""
    star = adjoint(A)
    return {k: c * (-1 if k % 2 else 1) for k, c in star.coeffs.items()}


def _left_compose_tail(D: PsiDO, a: DiffPoly, m: DiffPoly) -> IntegralOp:
    """D o a d^-1 o m."""
    Da = compose(D, PsiDO.mult(a))
    out = IntegralOp()
    for k, q in Da.coeffs.items():
        if k == 0:
            out = out + IntegralOp.from_tail(q, m)
        else:
            out = out + IntegralOp(compose(PsiDO({k - 1: q}), PsiDO.mult(m)).coeffs)
    return out


def _right_compose_tail(a: DiffPoly, m: DiffPoly, D: PsiDO) -> IntegralOp:
    """a d^-1 o m o D."""
    mD = compose(PsiDO.mult(m), D)
    out = IntegralOp()
    for k, r in _right_normal(mD).items():
        if k == 0:
            out = out + IntegralOp.from_tail(a, r)
        else:
            out = out + IntegralOp(compose(PsiDO({k - 1: a}), PsiDO.mult(r)).coeffs)
    return out


def compose_exact(X, Y) -> IntegralOp:
    """Exact composition inside the integral class, or NotRepresentable."""
    X = _as_integral(X)
    Y = _as_integral(Y)
    if X.tails and Y.tails:
        raise NotRepresentable("product of two d^-1 tails")
    out = IntegralOp(compose(X.local_op, Y.local_op).coeffs) if X.local and Y.local else IntegralOp()
    if Y.tails and X.local:
        for a, m in Y.tail_pairs():
            out = out + _left_compose_tail(X.local_op, a, m)
    if X.tails and Y.local:
        for a, m in X.tail_pairs():
            out = out + _right_compose_tail(a, m, Y.local_op)
    return out


def compose_any(X, Y, trunc=None):
    """Compose two entries, staying exact whenever possible."""
    if isinstance(X, PsiDO) and isinstance(Y, PsiDO):
        if X.is_differential() and Y.is_differential():
            return compose(X, Y)
        if X.trunc is not None or Y.trunc is not None:
            return compose(X, Y, trunc)
    try:
        return compose_exact(X, Y)
    except (NotRepresentable, TypeError):
        Xp = X if isinstance(X, PsiDO) else X.to_psido(trunc)
        Yp = Y if isinstance(Y, PsiDO) else Y.to_psido(trunc)
        return compose(Xp, Yp, trunc)


def _entry_add(a, b):
    if isinstance(a, PsiDO) and a.trunc is not None or isinstance(b, PsiDO) and b.trunc is not None:
        ta = a if isinstance(a, PsiDO) else a.to_psido(b.trunc)
        tb = b if isinstance(b, PsiDO) else b.to_psido(a.trunc)
        return ta + tb
    if isinstance(a, IntegralOp) or isinstance(b, IntegralOp):
        return _as_integral(a) + _as_integral(b)
    return a + b


def _entry_zero(e) -> bool:
    return e.is_zero()


def _entry_equal(a, b) -> bool:
    if isinstance(a, PsiDO) and a.trunc is not None or isinstance(b, PsiDO) and b.trunc is not None:
        ta = a if isinstance(a, PsiDO) else a.to_psido(b.trunc)
        tb = b if isinstance(b, PsiDO) else b.to_psido(a.trunc)
        return ta.agrees(tb)
    return _as_integral(a) == _as_integral(b)


# ---------------------------------------------------------------------------

class PsiDOMatrix:
    """Rectangular matrix of operator entries (PsiDO or IntegralOp)."""

    __slots__ = ("rows",)

    def __init__(self, rows):
        self.rows = [[_normalize_entry(e) for e in row] for row in rows]
        widths = {len(r) for r in self.rows}
        if len(widths) > 1:
            raise ValueError("ragged operator matrix")

    @classmethod
    def identity(cls, n: int) -> "PsiDOMatrix":
        return cls([[PsiDO.identity() if i == j else PsiDO() for j in range(n)] for i in range(n)])

    @classmethod
    def scalar(cls, A) -> "PsiDOMatrix":
        return cls([[A]])

    @property
    def shape(self):
        return (len(self.rows), len(self.rows[0]) if self.rows else 0)

    def __getitem__(self, ij):
        i, j = ij
        return self.rows[i][j]

    @property
    def exact(self) -> bool:
        return all(not (isinstance(e, PsiDO) and e.trunc is not None) for row in self.rows for e in row)

    @property
    def trunc(self):
        ts = [e.trunc for row in self.rows for e in row if isinstance(e, PsiDO) and e.trunc is not None]
        return max(ts) if ts else None

    @property
    def is_local(self) -> bool:
        return all((isinstance(e, PsiDO) and e.is_differential()) or
                   (isinstance(e, IntegralOp) and e.is_local) for row in self.rows for e in row)

    def map(self, fn) -> "PsiDOMatrix":
        return PsiDOMatrix([[fn(e) for e in row] for row in self.rows])

    def transpose(self) -> "PsiDOMatrix":
        n, m = self.shape
        return PsiDOMatrix([[self.rows[i][j] for i in range(n)] for j in range(m)])

    def adjoint(self, trunc=None) -> "PsiDOMatrix":
        def adj(e):
            if isinstance(e, IntegralOp):
                return e.adjoint()
            return adjoint(e, trunc)
        return self.transpose().map(adj)

    def __add__(self, other):
        return PsiDOMatrix([[_entry_add(a, b) for a, b in zip(r1, r2)]
                            for r1, r2 in zip(self.rows, other.rows)])

    def __neg__(self):
        return self.map(lambda e: -e)

    def __sub__(self, other):
        return self + (-other)

    def compose(self, other, trunc=None) -> "PsiDOMatrix":
        n, k = self.shape
        k2, m = other.shape
        if k != k2:
            raise ValueError("shape mismatch %s x %s" % (self.shape, other.shape))
        rows = []
        for i in range(n):
            row = []
            for j in range(m):
                acc = PsiDO()
                for t in range(k):
                    a, b = self.rows[i][t], other.rows[t][j]
                    if a.is_zero() and not (isinstance(a, PsiDO) and a.trunc is not None):
                        continue
                    if b.is_zero() and not (isinstance(b, PsiDO) and b.trunc is not None):
                        continue
                    acc = _entry_add(acc, compose_any(a, b, trunc))
                row.append(acc)
            rows.append(row)
        return PsiDOMatrix(rows)

    __matmul__ = compose

    def __mul__(self, other):
        if isinstance(other, PsiDOMatrix):
            return self.compose(other)
        c = as_poly(other)
        return self.map(lambda e: c * e)

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, PsiDOMatrix) or self.shape != other.shape:
            return False
        return all(_entry_equal(a, b) for r1, r2 in zip(self.rows, other.rows) for a, b in zip(r1, r2))

    def is_zero(self) -> bool:
        return all(e.is_zero() for row in self.rows for e in row)

    def subs(self, mapping) -> "PsiDOMatrix":
        return self.map(lambda e: e.subs(mapping))

    def submatrix(self, rows, cols) -> "PsiDOMatrix":
        return PsiDOMatrix([[self.rows[i][j] for j in cols] for i in rows])

    def apply(self, vec):
        """Apply to a vector; d^-1 pieces are resolved by exact antiderivatives."""
        comps = list(vec.components) if isinstance(vec, GradientVector) else [as_poly(v) for v in vec]
        out = []
        for row in self.rows:
            local = DiffPoly()
            pairs = []
            for e, f in zip(row, comps):
                if isinstance(e, PsiDO):
                    if e.trunc is not None:
                        raise TruncationError("cannot apply a truncated entry exactly")
                    if e.is_differential():
                        local = local + e.apply(f)
                    else:
                        try:
                            e = IntegralOp.from_operator(e)
                        except NotRepresentable:
                            local = local + e.apply(f)
                            continue
                if isinstance(e, IntegralOp):
                    if e.local:
                        local = local + e.local_op.apply(f)
                    pairs.extend((a, m * f) for a, m in e.tail_pairs())
            out.append(local + _integrate_groups(_group_tails(pairs)))
        return out

    def __str__(self):
        return "[" + "; ".join("[" + ", ".join(str(e) for e in row) + "]" for row in self.rows) + "]"

    __repr__ = __str__


def _normalize_entry(e):
    if isinstance(e, (PsiDO, IntegralOp)):
        return e
    return PsiDO.mult(e)


def apply_nonlocal(A: PsiDOMatrix, P) -> GradientVector:
    """Exact value of A applied to P; every d^-1 argument must be exact."""
    variables = P.variables if isinstance(P, GradientVector) else tuple(range(len(P)))
    comps = A.apply(P)
    if isinstance(P, GradientVector) and len(comps) == len(variables):
        return GradientVector(variables, comps)
    return GradientVector(tuple("x%d" % i for i in range(len(comps))), comps)


def invert_matrix(C: PsiDOMatrix, trunc=None) -> PsiDOMatrix:
    """Inverse of a square matrix with uniform order and constant invertible leading matrix."""
    n, m = C.shape
    if n != m:
        raise ValueError("only square matrices are invertible")
    if n == 1:
        e = C[0, 0]
        if isinstance(e, IntegralOp):
            if e.tails:
                e = e.to_psido(trunc)
            else:
                e = e.local_op
        return PsiDOMatrix([[invert(e, trunc)]])
    entries = [[_as_psido(e) if not isinstance(e, IntegralOp) or not e.tails else e.to_psido(trunc)
                for e in row] for row in C.rows]
    order = max(e.order for row in entries for e in row if e.order is not None)
    lead = []
    for row in entries:
        lr = []
        for e in row:
            c = e.coeffs.get(order, DiffPoly())
            if not c.is_constant():
                raise NonInvertibleLeading("leading matrix entry %s is not a rational constant" % c)
            lr.append(Fraction(c.constant_value()) if c else Fraction(0))
        lead.append(lr)
    import sympy
    Lm = sympy.Matrix(lead)
    if Lm.det() == 0:
        raise NonInvertibleLeading("leading matrix is singular")
    Linv = Lm.inv()
    T = trunc if trunc is not None else default_trunc(order)
    Linv_ops = PsiDOMatrix([[PsiDO.mult(Fraction(int(Linv[i, j].p), int(Linv[i, j].q)))
                             for j in range(n)] for i in range(n)])
    rest = PsiDOMatrix([[PsiDO({k: c for k, c in e.coeffs.items() if k != order}, e.trunc)
                         for e in row] for row in entries])
    dneg = PsiDOMatrix([[PsiDO.d(-order) if i == j else PsiDO() for j in range(n)] for i in range(n)])
    N = dneg.compose(Linv_ops.compose(rest, T + order), T + order)
    if N.is_zero() and N.exact:
        return dneg.compose(Linv_ops)
    total = PsiDOMatrix.identity(n)
    term = PsiDOMatrix.identity(n)
    minus_N = -N
    for _ in range(max(0, -T - order) + 1):
        term = term.compose(minus_N, T + order)
        total = total + term
    return total.compose(dneg.compose(Linv_ops), T)
