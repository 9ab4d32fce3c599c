"""Exact differential polynomials and variational calculus.

A :class:`DiffPoly` is a sparse map from monomials to rational coefficients.
A monomial is a sorted tuple of ``((name, order), exponent)`` pairs.  Named
parameters (``c``, ``alpha``, ``z`` ...) live in the same monomials with order
``-1``; they are constants for the total derivative and invisible to the
partial and variational derivatives.  This keeps every coefficient a plain
``Fraction`` and the parameter ring polynomial.  Algebraic parameters may
carry a monic defining relation (``r^2 = 2``) registered with
:func:`declare_relation`.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

__all__ = [
    "DiffPoly", "GradientVector", "EvolutionaryVF", "LocalFunctional",
    "NotExact", "NotClosed", "ReconstructionFailed", "NonUnitScalar",
    "declare_relation", "clear_relations", "relations",
    "total_derivative", "partial_derivative", "variational_derivative",
    "frechet_derivative", "is_closed", "reconstruct_functional",
    "antiderivative", "ev_apply", "ev_commutator", "as_poly",
]

PARAM = -1


class NotExact(ValueError):
    """Raised when a polynomial is not a total derivative.

    ``witness`` holds the variational derivative (or the offending constant).
    """

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class NotClosed(ValueError):
    def __init__(self, message, gradient=None):
        super().__init__(message)
        self.gradient = gradient


class ReconstructionFailed(RuntimeError):
    pass


class NonUnitScalar(ZeroDivisionError):
    """Division by a coefficient that is not a unit of the parameter ring."""


# param name -> (degree d, terms of the reduction of p^d)
_RELATIONS: dict[str, tuple[int, dict]] = {}


def declare_relation(param: str, degree: int, rhs: "DiffPoly") -> None:
    """Register ``param**degree = rhs`` where rhs has lower degree in param."""
    rhs = as_poly(rhs)
    if rhs.gen_variables():
        raise ValueError("relation right-hand side must be a scalar")
    for mono in rhs.terms:
        for (name, n), e in mono:
            if name == param and e >= degree:
                raise ValueError("relation is not monic in %s" % param)
    _RELATIONS[param] = (degree, dict(rhs.terms))


def clear_relations() -> None:
    _RELATIONS.clear()


def relations() -> dict[str, tuple[int, "DiffPoly"]]:
    return {p: (d, DiffPoly(t)) for p, (d, t) in _RELATIONS.items()}


# ---------------------------------------------------------------------------
# monomial helpers

def _mono_mul(a: tuple, b: tuple) -> tuple:
    if not a:
        return b
    if not b:
        return a
    out = []
    i = j = 0
    la, lb = len(a), len(b)
    while i < la and j < lb:
        va, ea = a[i]
        vb, eb = b[j]
        if va == vb:
            out.append((va, ea + eb))
            i += 1
            j += 1
        elif va < vb:
            out.append(a[i])
            i += 1
        else:
            out.append(b[j])
            j += 1
    if i < la:
        out.extend(a[i:])
    if j < lb:
        out.extend(b[j:])
    return tuple(out)


def _needs_reduction(mono: tuple) -> bool:
    for (name, n), e in mono:
        if n == PARAM and name in _RELATIONS and e >= _RELATIONS[name][0]:
            return True
    return False


def _reduce_mono(mono: tuple, coeff, out: dict) -> None:
    """Add coeff*mono to out, applying parameter relations."""
    if not _RELATIONS or not _needs_reduction(mono):
        c = out.get(mono, 0) + coeff
        if c:
            out[mono] = c
        else:
            out.pop(mono, None)
        return
    for k, ((name, n), e) in enumerate(mono):
        if n == PARAM and name in _RELATIONS and e >= _RELATIONS[name][0]:
            d, rhs = _RELATIONS[name]
            rest = list(mono)
            if e == d:
                del rest[k]
            else:
                rest[k] = ((name, n), e - d)
            rest = tuple(rest)
            for m2, c2 in rhs.items():
                _reduce_mono(_mono_mul(rest, m2), coeff * c2, out)
            return


def _gen_degree(mono: tuple) -> int:
    return sum(e for (name, n), e in mono if n >= 0)


def _split_mono(mono: tuple) -> tuple[tuple, tuple]:
    gens = tuple(p for p in mono if p[0][1] >= 0)
    pars = tuple(p for p in mono if p[0][1] < 0)
    return gens, pars


# ---------------------------------------------------------------------------

class DiffPoly:
    """Element of the algebra of differential polynomials.

    Instances are immutable; ``terms`` must not be mutated after construction.
    """

    __slots__ = ("terms", "_hash")

    def __init__(self, terms: Mapping | None = None):
        self.terms = terms if terms is not None else {}
        self._hash = None

    # construction -------------------------------------------------------
    @classmethod
    def const(cls, c) -> "DiffPoly":
        c = _coerce_coeff(c)
        return cls({(): c}) if c else cls()

    @classmethod
    def var(cls, name: str, n: int = 0) -> "DiffPoly":
        if n < 0:
            raise ValueError("derivative order must be non-negative")
        return cls({(((name, n), 1),): 1})

    @classmethod
    def param(cls, name: str) -> "DiffPoly":
        return cls({(((name, PARAM), 1),): 1})

    @classmethod
    def from_terms(cls, items: Iterable) -> "DiffPoly":
        out: dict = {}
        for mono, c in items:
            _reduce_mono(tuple(sorted(mono)), _coerce_coeff(c), out)
        return cls(out)

    # basic protocol -----------------------------------------------------
    def __bool__(self):
        return bool(self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def __eq__(self, other):
        if not isinstance(other, DiffPoly):
            try:
                other = as_poly(other)
            except TypeError:
                return NotImplemented
        return self.terms == other.terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self.terms.items()))
        return self._hash

    def __repr__(self):
        return "DiffPoly(%s)" % self

    def __str__(self):
        from .printing import format_poly
        return format_poly(self)

    # arithmetic ---------------------------------------------------------
    def __add__(self, other):
        other = _as_poly_or_none(other)
        if other is None:
            return NotImplemented
        if not other.terms:
            return self
        if not self.terms:
            return other
        out = dict(self.terms)
        for m, c in other.terms.items():
            v = out.get(m, 0) + c
            if v:
                out[m] = v
            else:
                del out[m]
        return DiffPoly(out)

    __radd__ = __add__

    def __neg__(self):
        return DiffPoly({m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        other = _as_poly_or_none(other)
        if other is None:
            return NotImplemented
        if not other.terms:
            return self
        out = dict(self.terms)
        for m, c in other.terms.items():
            v = out.get(m, 0) - c
            if v:
                out[m] = v
            else:
                del out[m]
        return DiffPoly(out)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            if not other:
                return DiffPoly()
            return DiffPoly({m: c * other for m, c in self.terms.items()})
        other = _as_poly_or_none(other)
        if other is None:
            return NotImplemented
        a, b = self.terms, other.terms
        if not a or not b:
            return DiffPoly()
        if len(a) < len(b):
            a, b = b, a
        out: dict = {}
        reduce_ = bool(_RELATIONS)
        for mb, cb in b.items():
            for ma, ca in a.items():
                m = _mono_mul(ma, mb)
                if reduce_:
                    _reduce_mono(m, ca * cb, out)
                else:
                    v = out.get(m, 0) + ca * cb
                    if v:
                        out[m] = v
                    else:
                        del out[m]
        return DiffPoly(out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative power of a differential polynomial")
        result = DiffPoly.const(1)
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    def __truediv__(self, other):
        if isinstance(other, (int, Fraction)):
            if other == 0:
                raise ZeroDivisionError("division by zero")
            return self * (Fraction(1) / other)
        other = as_poly(other)
        return self * scalar_inverse(other)

    # queries -------------------------------------------------------------
    def gen_variables(self) -> set:
        """Set of (name, n) with n >= 0 occurring in self."""
        out = set()
        for m in self.terms:
            for v, e in m:
                if v[1] >= 0:
                    out.add(v)
        return out

    def params(self) -> set:
        out = set()
        for m in self.terms:
            for (name, n), e in m:
                if n < 0:
                    out.add(name)
        return out

    def is_scalar(self) -> bool:
        """True if no generator variable occurs (parameters allowed)."""
        return all(v[1] < 0 for m in self.terms for v, e in m)

    def is_constant(self) -> bool:
        """True if self is a rational number."""
        return not self.terms or (len(self.terms) == 1 and () in self.terms)

    def constant_value(self):
        if not self.is_constant():
            raise ValueError("not a rational constant: %s" % self)
        return self.terms.get((), Fraction(0))

    def constant_term(self) -> "DiffPoly":
        """Part of self free of generator variables (parameters kept)."""
        return DiffPoly({m: c for m, c in self.terms.items()
                         if all(v[1] < 0 for v, e in m)})

    def max_order(self, name: str | None = None) -> int:
        orders = [v[1] for v in self.gen_variables() if name is None or v[0] == name]
        return max(orders) if orders else -1

    def gen_degree(self) -> int:
        return max((_gen_degree(m) for m in self.terms), default=0)

    # calculus -------------------------------------------------------------
    def diff(self, k: int = 1) -> "DiffPoly":
        """Total derivative applied k times."""
        p = self
        for _ in range(k):
            p = _total_derivative(p)
        return p

    def partial(self, name: str, n: int = 0) -> "DiffPoly":
        target = (name, n)
        out: dict = {}
        for m, c in self.terms.items():
            for k, (v, e) in enumerate(m):
                if v == target:
                    if e == 1:
                        nm = m[:k] + m[k + 1:]
                    else:
                        nm = m[:k] + ((v, e - 1),) + m[k + 1:]
                    val = out.get(nm, 0) + c * e
                    if val:
                        out[nm] = val
                    else:
                        out.pop(nm, None)
                    break
        return DiffPoly(out)

    def subs(self, mapping: Mapping[str, "DiffPoly"]) -> "DiffPoly":
        """Substitute generators (all their derivatives follow) or parameters."""
        mapping = {k: as_poly(v) for k, v in mapping.items()}
        cache: dict = {}

        def image(v):
            if v not in cache:
                name, n = v
                cache[v] = mapping[name] if n < 0 else mapping[name].diff(n)
            return cache[v]

        out = DiffPoly()
        for m, c in self.terms.items():
            term = DiffPoly({(): c})
            keep = []
            for v, e in m:
                if v[0] in mapping:
                    term = term * image(v) ** e
                else:
                    keep.append((v, e))
            out = out + term * DiffPoly({tuple(keep): 1})
        return out

    def coefficient_map(self) -> dict:
        """Split into {generator monomial: scalar DiffPoly}."""
        out: dict = {}
        for m, c in self.terms.items():
            g, p = _split_mono(m)
            out.setdefault(g, {})[p] = c
        return {g: DiffPoly(t) for g, t in out.items()}


def _coerce_coeff(c):
    if isinstance(c, (int, Fraction)):
        return c
    if isinstance(c, float):
        raise TypeError("floating point coefficients are not allowed")
    return Fraction(c)


def _as_poly_or_none(x):
    if isinstance(x, DiffPoly):
        return x
    if isinstance(x, (int, Fraction)):
        return DiffPoly.const(x)
    return None


def as_poly(x) -> DiffPoly:
    p = _as_poly_or_none(x)
    if p is None:
        raise TypeError("cannot interpret %r as a differential polynomial" % (x,))
    return p


def _total_derivative(p: DiffPoly) -> DiffPoly:
    out: dict = {}
    for m, c in p.terms.items():
        for k, (v, e) in enumerate(m):
            name, n = v
            if n < 0:
                continue
            nv = (name, n + 1)
            # remove one power of v, add one power of nv
            if e == 1:
                rest = m[:k] + m[k + 1:]
            else:
                rest = m[:k] + ((v, e - 1),) + m[k + 1:]
            nm = _mono_mul(rest, ((nv, 1),))
            val = out.get(nm, 0) + c * e
            if val:
                out[nm] = val
            else:
                out.pop(nm, None)
    return DiffPoly(out)


def scalar_inverse(s: DiffPoly) -> DiffPoly:
    """Inverse of a scalar in Q[params]/(relations).

    Rational constants always invert.  Elements built only from algebraic
    parameters invert by solving a linear system in the power basis.
    """
    if not s.is_scalar():
        raise NonUnitScalar("cannot divide by a non-scalar: %s" % s)
    if not s:
        raise ZeroDivisionError("division by zero")
    if s.is_constant():
        return DiffPoly.const(Fraction(1) / s.constant_value())
    names = sorted(s.params())
    if any(n not in _RELATIONS for n in names):
        raise NonUnitScalar("%s is not a unit of the coefficient ring" % s)
    import itertools
    degs = [_RELATIONS[n][0] for n in names]
    basis = [DiffPoly({tuple(((n, PARAM), e) for n, e in zip(names, exps) if e): 1})
             for exps in itertools.product(*[range(d) for d in degs])]
    index = {next(iter(b.terms)): i for i, b in enumerate(basis)}
    cols = []
    for b in basis:
        prod = s * b
        col = [Fraction(0)] * len(basis)
        for m, c in prod.terms.items():
            if m not in index:
                raise NonUnitScalar("%s is not a unit of the coefficient ring" % s)
            col[index[m]] = Fraction(c)
        cols.append(col)
    n = len(basis)
    # solve M x = e_0, M[i][j] = cols[j][i]
    a = [[cols[j][i] for j in range(n)] + [Fraction(int(i == 0))] for i in range(n)]
    for col in range(n):
        piv = next((r for r in range(col, n) if a[r][col] != 0), None)
        if piv is None:
            raise NonUnitScalar("%s is a zero divisor" % s)
        a[col], a[piv] = a[piv], a[col]
        pv = a[col][col]
        a[col] = [x / pv for x in a[col]]
        for r in range(n):
            if r != col and a[r][col] != 0:
                f = a[r][col]
                a[r] = [x - f * y for x, y in zip(a[r], a[col])]
    out = DiffPoly()
    for i, b in enumerate(basis):
        if a[i][n]:
            out = out + b * a[i][n]
    return out


# ---------------------------------------------------------------------------
# vector types


@dataclass(frozen=True)
class GradientVector:
    """A column vector in V^l indexed by the declared generators."""

    variables: tuple
    components: tuple

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "components", tuple(as_poly(c) for c in self.components))
        if len(self.variables) != len(self.components):
            raise ValueError("gradient length does not match the generator list")

    def __getitem__(self, i):
        return self.components[i]

    def __iter__(self):
        return iter(self.components)

    def __len__(self):
        return len(self.components)

    def __add__(self, other):
        return GradientVector(self.variables, [a + b for a, b in zip(self, other)])

    def __sub__(self, other):
        return GradientVector(self.variables, [a - b for a, b in zip(self, other)])

    def scale(self, c) -> "GradientVector":
        return GradientVector(self.variables, [a * c for a in self])

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.components)

    def dot(self, other) -> DiffPoly:
        out = DiffPoly()
        for a, b in zip(self, other):
            out = out + a * b
        return out

    def __str__(self):
        return "(" + ", ".join(str(c) for c in self.components) + ")"


class EvolutionaryVF(GradientVector):
    """Evolutionary vector field with characteristics P (one per generator)."""

    def __call__(self, f):
        return ev_apply(self, f)


class LocalFunctional:
    """Class of a representative in V / dV.

    Equality uses the kernel description on differential polynomials:
    two representatives agree iff their difference has zero variational
    derivative and zero constant term.
    """

    __slots__ = ("representative", "variables")

    def __init__(self, representative, variables: Sequence[str]):
        self.representative = as_poly(representative)
        self.variables = tuple(variables)

    def gradient(self) -> GradientVector:
        return variational_derivative(self.representative, self.variables)

    def is_zero(self) -> bool:
        return (variational_derivative(self.representative, self.variables).is_zero()
                and self.representative.constant_term().is_zero())

    def __eq__(self, other):
        if isinstance(other, LocalFunctional):
            other = other.representative
        try:
            other = as_poly(other)
        except TypeError:
            return NotImplemented
        return LocalFunctional(self.representative - other, self.variables).is_zero()

    def __hash__(self):
        raise TypeError("LocalFunctional is not hashable")

    def __add__(self, other):
        return LocalFunctional(self.representative + other.representative, self.variables)

    def __sub__(self, other):
        return LocalFunctional(self.representative - other.representative, self.variables)

    def __neg__(self):
        return LocalFunctional(-self.representative, self.variables)

    def __mul__(self, c):
        return LocalFunctional(self.representative * c, self.variables)

    __rmul__ = __mul__

    def __repr__(self):
        return "LocalFunctional(int %s)" % self.representative

    def __str__(self):
        return "int(%s)" % self.representative


# ---------------------------------------------------------------------------
# operations


def total_derivative(f) -> DiffPoly:
    return as_poly(f).diff()


def partial_derivative(f, idx) -> DiffPoly:
    name, n = idx
    return as_poly(f).partial(name, n)


def variational_derivative(f, variables: Sequence[str]) -> GradientVector:
    """Euler operator: sum_n (-d)^n df/du_i^(n), one component per generator."""
    f = as_poly(f)
    comps = []
    for name in variables:
        top = f.max_order(name)
        acc = DiffPoly()
        for n in range(top, -1, -1):
            # Horner scheme in -d
            acc = f.partial(name, n) - acc.diff()
        comps.append(acc)
    return GradientVector(variables, comps)


def frechet_derivative(X, variables: Sequence[str]):
    """Matrix differential operator D_X with entries sum_n dX_j/du_i^(n) d^n."""
    from .psido import PsiDO, PsiDOMatrix
    comps = list(X.components) if isinstance(X, GradientVector) else [as_poly(x) for x in X]
    rows = []
    for xj in comps:
        row = []
        for name in variables:
            coeffs = {}
            for n in range(xj.max_order(name) + 1):
                c = xj.partial(name, n)
                if c:
                    coeffs[n] = c
            row.append(PsiDO(coeffs))
        rows.append(row)
    return PsiDOMatrix(rows)


def is_closed(F: GradientVector) -> bool:
    D = frechet_derivative(F, F.variables)
    return D == D.adjoint()


def reconstruct_functional(F: GradientVector) -> LocalFunctional:
    """Local functional h with dh/du = F, by the homotopy formula.

    h = int_0^1 sum_i u_i F_i[t u] dt; a term of generator degree d in F_i
    contributes u_i * term / (d + 1).
    """
    if not is_closed(F):
        raise NotClosed("Frechet derivative is not selfadjoint", F)
    h = DiffPoly()
    for name, comp in zip(F.variables, F.components):
        ui = DiffPoly.var(name)
        acc: dict = {}
        for m, c in comp.terms.items():
            acc[m] = Fraction(c) / (_gen_degree(m) + 1)
        h = h + ui * DiffPoly({m: c for m, c in acc.items() if c})
    if variational_derivative(h, F.variables) != F:
        raise ReconstructionFailed("homotopy reconstruction does not reproduce %s" % F)
    return LocalFunctional(h, F.variables)


def antiderivative(f, variables: Sequence[str] | None = None) -> DiffPoly:
    """Return g with dg = f, integrating by parts on the top derivative."""
    f = as_poly(f)
    if variables is None:
        variables = sorted({v[0] for v in f.gen_variables()})
    if not f.constant_term().is_zero():
        raise NotExact("nonzero constant term is not a total derivative", f.constant_term())
    grad = variational_derivative(f, variables)
    if not grad.is_zero():
        raise NotExact("%s is not a total derivative" % f, grad)
    g = DiffPoly()
    rest = f
    for _ in range(10000):
        if not rest:
            break
        top = max(rest.gen_variables(), key=lambda v: (v[1], v[0]))
        name, n = top
        if n == 0:
            raise NotExact("integration by parts stalled on %s" % rest, rest)
        coeff = DiffPoly()
        for m, c in rest.terms.items():
            e = dict(m).get(top, 0)
            if e == 1:
                coeff = coeff + DiffPoly({tuple(p for p in m if p[0] != top): c})
            elif e > 1:
                raise NotExact("nonlinear in the top derivative: %s" % rest, rest)
        G = _integrate_in(coeff, (name, n - 1))
        g = g + G
        rest = rest - G.diff()
    else:  # pragma: no cover - exactness precheck makes this unreachable
        raise NotExact("integration by parts did not terminate", f)
    if g.diff() != f:
        raise NotExact("antiderivative verification failed", f)
    return g


def _integrate_in(p: DiffPoly, v) -> DiffPoly:
    out: dict = {}
    for m, c in p.terms.items():
        d = dict(m)
        e = d.get(v, 0)
        d[v] = e + 1
        out[tuple(sorted(d.items()))] = Fraction(c) / (e + 1)
    return DiffPoly(out)


def ev_apply(P: GradientVector, f) -> DiffPoly:
    """Evolutionary derivation: sum_i,n (d^n P_i) df/du_i^(n)."""
    f = as_poly(f)
    out = DiffPoly()
    for name, Pi in zip(P.variables, P.components):
        top = f.max_order(name)
        der = Pi
        for n in range(top + 1):
            part = f.partial(name, n)
            if part:
                out = out + der * part
            if n < top:
                der = der.diff()
    return out


def ev_commutator(P: GradientVector, Q: GradientVector) -> EvolutionaryVF:
    """Characteristic of [X_P, X_Q] = X_P(Q) - X_Q(P)."""
    if P.variables != Q.variables:
        raise ValueError("vector fields over different generators")
    comps = [ev_apply(P, q) - ev_apply(Q, p) for p, q in zip(P.components, Q.components)]
    return EvolutionaryVF(P.variables, comps)
