"""Dirac modification by constraints and reduction to the quotient."""
from __future__ import annotations

from dataclasses import dataclass, field

from .diffpoly import DiffPoly, as_poly, frechet_derivative, scalar_inverse, NonUnitScalar
from .lambdas import LambdaSeries, PVAStructure, Verdict, master_bracket
from .psido import (
    IntegralOp, PsiDO, PsiDOMatrix, compose_any, invert_matrix, _entry_add, _entry_equal,
)


class UnsupportedConstraintShape(ValueError):
    pass


@dataclass
class ConstraintSet:
    """Constraints theta_1..theta_m; reduction needs each of the form u_i - k."""

    thetas: list
    reductions: dict = field(default_factory=dict)

    def __post_init__(self):
        self.thetas = [as_poly(t) for t in self.thetas]

    @classmethod
    def generators(cls, *names) -> "ConstraintSet":
        return cls([DiffPoly.var(n) for n in names])

    def reduction_map(self) -> dict:
        """{generator: value} read off constraints of the form c*(u_i - k)."""
        out = {}
        for th in self.thetas:
            lin = [(g, s) for g, s in th.coefficient_map().items() if g]
            if len(lin) != 1:
                raise UnsupportedConstraintShape("constraint %s is not a generator minus a constant" % th)
            mono, s = lin[0]
            if len(mono) != 1 or mono[0][1] != 1 or mono[0][0][1] != 0:
                raise UnsupportedConstraintShape("constraint %s is not a generator minus a constant" % th)
            try:
                inv = scalar_inverse(s)
            except NonUnitScalar as exc:
                raise UnsupportedConstraintShape(str(exc)) from exc
            name = mono[0][0][0]
            out[name] = -(th.constant_term() * inv)
        out.update(self.reductions)
        return out


def _d_theta(H: PVAStructure, theta: ConstraintSet) -> PsiDOMatrix:
    return frechet_derivative(theta.thetas, H.variables)


def dirac_C(H: PVAStructure, theta: ConstraintSet) -> PsiDOMatrix:
    """C = D_theta o H o D_theta^*; entry (a, b) has symbol {theta_b lambda theta_a}."""
    D = _d_theta(H, theta)
    C = D.compose(H.operator).compose(D.adjoint())
    if H.is_local:
        m = len(theta.thetas)
        for a in range(m):
            for b in range(m):
                sym = master_bracket(H, theta.thetas[b], theta.thetas[a])
                if not _entry_equal(C[a, b], sym.op()):
                    raise ArithmeticError("operator and bracket forms of C disagree at (%d, %d)" % (a, b))
    return C


def dirac_modify(H: PVAStructure, theta: ConstraintSet, trunc=None) -> PVAStructure:
    """H^D = H + B C^-1 B^* with B = H o D_theta^*."""
    D = _d_theta(H, theta)
    B = H.operator.compose(D.adjoint())
    if B.is_zero():
        # constraints already central
        return PVAStructure(H.variables, H.operator, name=H.name)
    C = dirac_C(H, theta)
    Cinv = invert_matrix(C, trunc).map(_exactify)
    corr = B.compose(Cinv, trunc).compose(B.adjoint(trunc), trunc)
    HD = PVAStructure(H.variables, H.operator + corr, name=(H.name + "^D") if H.name else "")
    return HD


def _exactify(e):
    if isinstance(e, PsiDO) and e.trunc is None:
        try:
            return IntegralOp.from_operator(e)
        except ValueError:
            return e
    return e


def check_centrality(HD: PVAStructure, theta: ConstraintSet) -> Verdict:
    """{theta lambda u_i}^D = 0 for every constraint and generator, i.e. H^D D_theta^* = 0."""
    v = Verdict("centrality")
    D = _d_theta(HD, theta)
    prod = HD.operator.compose(D.adjoint())
    n, m = prod.shape
    for i in range(n):
        for a in range(m):
            e = prod[i, a]
            if isinstance(e, PsiDO) and e.trunc is not None:
                v.truncation = e.trunc if v.truncation is None else max(v.truncation, e.trunc)
            if not e.is_zero():
                v.add(("theta%d" % (a + 1), HD.variables[i]), e)
    return v


def dirac_reduce(HD: PVAStructure, theta: ConstraintSet) -> PVAStructure:
    """Substitute constrained generators by their values and drop their rows and columns."""
    if not theta.thetas:
        return HD
    values = theta.reduction_map()
    keep = [i for i, v in enumerate(HD.variables) if v not in values]
    op = HD.operator.submatrix(keep, keep).subs(values)
    return PVAStructure([HD.variables[i] for i in keep], op, name=HD.name)


@dataclass
class FamilyMatch:
    """Outcome of solving ``computed = template(unknowns)`` entry by entry."""

    verdict: Verdict
    solution: dict
    equations: list


def _entry_scalars(e) -> list:
    """Scalar coefficients of every generator monomial in an exact entry."""
    if isinstance(e, PsiDO) and e.trunc is not None:
        raise ValueError("family matching needs exact entries")
    op = e if isinstance(e, IntegralOp) else IntegralOp.from_operator(e)
    out = []
    for j, c in sorted(op.local.items()):
        out.extend((("d", j), g, s) for g, s in c.coefficient_map().items())
    for m, a in op.tails.items():
        out.extend((("dinv", m), g, s) for g, s in a.coefficient_map().items())
    return out


def match_family(pairs, unknowns) -> FamilyMatch:
    """Solve for the unknown parameters so that each computed structure equals its template.

    ``pairs`` is a list of (computed, template) PVAStructures over the same
    generators.  The verdict fails, listing the inconsistent equations, when no
    value of the unknowns works.
    """
    import sympy
    from .hierarchy import _to_sympy

    cache = {}
    syms = [cache.setdefault(u, sympy.Symbol(u)) for u in unknowns]
    eqs = []
    where = []
    for k, (H, T) in enumerate(pairs):
        if tuple(H.variables) != tuple(T.variables):
            raise ValueError("structures over different generators")
        diff = H.operator - T.operator
        n, m = diff.shape
        for i in range(n):
            for j in range(m):
                for part, g, s in _entry_scalars(diff[i, j]):
                    eq = sympy.expand(_to_sympy(s, cache))
                    if eq != 0:
                        eqs.append(eq)
                        where.append((k, H.variables[i], H.variables[j], part, g))
    v = Verdict("family")
    sols = sympy.solve(eqs, syms, dict=True) if eqs else [{}]
    if not sols:
        for w, eq in zip(where, eqs):
            if not eq.free_symbols & set(syms):
                v.add(w, "%s = 0" % eq)
        if v.passed:
            v.add(("system",), "no common solution for %s" % ", ".join(unknowns))
        return FamilyMatch(v, {}, eqs)
    return FamilyMatch(v, {str(k): val for k, val in sols[0].items()}, eqs)
