"""Lenard-Magri recursion and integrability diagnostics."""
from __future__ import annotations

from dataclasses import dataclass, field

import sympy

from .diffpoly import (
    DiffPoly, EvolutionaryVF, GradientVector, LocalFunctional, NotClosed, NotExact,
    antiderivative, ev_commutator, is_closed, reconstruct_functional, variational_derivative,
)
from .lambdas import PVAStructure, Verdict, functional_bracket
from .psido import (
    NonExactArgument, NonInvertibleLeading, PsiDOMatrix, apply_nonlocal, invert_matrix,
)


class NotInImage(ValueError):
    """The recursion right-hand side is not in the image of H0."""

    def __init__(self, message, component=None, witness=None):
        super().__init__(message)
        self.component = component
        self.witness = witness


class UnsupportedH0(ValueError):
    pass


class StepError(RuntimeError):
    def __init__(self, step, cause):
        super().__init__("step %d: %s" % (step, cause))
        self.step = step
        self.cause = cause


@dataclass
class HierarchyResult:
    functionals: list = field(default_factory=list)
    gradients: list = field(default_factory=list)
    flows: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    associations: list = field(default_factory=list)
    variables: tuple = ()


@dataclass
class AssociatedPair:
    xi: GradientVector
    P: EvolutionaryVF
    witness: GradientVector
    A: PsiDOMatrix | None = None
    B: PsiDOMatrix | None = None


def _exact_inverse(H0: PVAStructure) -> PsiDOMatrix:
    if not H0.is_local:
        raise UnsupportedH0("H0 must be local")
    try:
        inv = invert_matrix(H0.operator)
    except (NonInvertibleLeading, ValueError) as exc:
        raise UnsupportedH0("H0 is not invertible with constant leading coefficient: %s" % exc) from exc
    if not inv.exact:
        raise UnsupportedH0("the inverse of H0 is an infinite series; only operators such as k*d^m are supported")
    return inv


def lenard_step(H0: PVAStructure, H1: PVAStructure, F_n: GradientVector) -> GradientVector:
    """F_(n+1) with H0(d) F_(n+1) = H1(d) F_n."""
    if H0.variables != H1.variables:
        raise ValueError("structures over different generators")
    inv = _exact_inverse(H0)
    rhs = H1.operator.apply(F_n)
    comps = []
    for i, row in enumerate(inv.rows):
        acc = DiffPoly()
        for e, r in zip(row, rhs):
            if e.is_zero() or not r:
                continue
            try:
                acc = acc + PsiDOMatrix([[e]]).apply([r])[0]
            except (NonExactArgument, NotExact) as exc:
                bad = getattr(exc, "integrand", r)
                delta = variational_derivative(bad, H0.variables) if bad is not None else None
                raise NotInImage("component %s is not in the image of H0" % H0.variables[i], i, delta) from exc
        comps.append(acc)
    out = GradientVector(H0.variables, comps)
    check = H0.operator.apply(out)
    if any(a != b for a, b in zip(check, rhs)):
        raise NotInImage("H0 F_(n+1) does not reproduce the right-hand side", None, None)
    return out


def run_lenard(H0: PVAStructure, H1: PVAStructure, h0: LocalFunctional, steps: int) -> HierarchyResult:
    """Functionals h_0..h_steps, gradients F_n and flows P_n = H0(d) F_n."""
    variables = H0.variables
    if not isinstance(h0, LocalFunctional):
        h0 = LocalFunctional(h0, variables)
    F = h0.gradient()
    res = HierarchyResult(variables=variables)
    res.functionals.append(h0)
    res.gradients.append(F)
    for n in range(steps):
        try:
            Fn = lenard_step(H0, H1, F)
        except (NotInImage, UnsupportedH0) as exc:
            raise StepError(n + 1, exc) from exc
        if not is_closed(Fn):
            raise NotClosed("F_%d is not a variational derivative" % (n + 1), Fn)
        h = reconstruct_functional(Fn)
        res.diagnostics.append({"step": n + 1, "closed": True,
                                "reconstructed": h.gradient() == Fn})
        res.functionals.append(h)
        res.gradients.append(Fn)
        F = Fn
    for k, Fk in enumerate(res.gradients):
        res.flows.append(H0.apply(Fk))
        res.associations.append((k, k))
    return res


def involution_verdict(H: PVAStructure, functionals) -> Verdict:
    v = Verdict("involution")
    for a in range(len(functionals)):
        for b in range(a + 1, len(functionals)):
            br = functional_bracket(H, functionals[a], functionals[b])
            if not br.is_zero():
                v.add((a, b), br)
    return v


def commutator_verdict(flows) -> Verdict:
    v = Verdict("commutators")
    for a in range(len(flows)):
        for b in range(a + 1, len(flows)):
            c = ev_commutator(flows[a], flows[b])
            if not c.is_zero():
                v.add((a, b), c)
    return v


def con1_spot_check(H0: PVAStructure, gradients, family) -> dict:
    """For P in the family orthogonal to all gradients, test that P lies in im H0."""
    inv = _exact_inverse(H0)
    checked = inside = 0
    for P in family:
        if not all(LocalFunctional(P.dot(F), H0.variables).is_zero() for F in gradients):
            continue
        checked += 1
        try:
            inv.apply(P)
            inside += 1
        except (NonExactArgument, NotExact):
            pass
    return {"checked": checked, "in_image": inside}


def verify_association(A, B, F, xi, P) -> bool:
    """True iff B F = xi and A F = P exactly; ``B=None`` stands for the identity."""
    bf = F if B is None else apply_nonlocal(B, F)
    af = apply_nonlocal(A, F)
    return list(bf.components) == list(xi.components) and list(af.components) == list(P.components)


def _to_sympy(p: DiffPoly, cache):
    expr = sympy.Integer(0)
    for mono, c in p.terms.items():
        term = sympy.Rational(c.numerator, c.denominator) if hasattr(c, "numerator") else sympy.Integer(c)
        for (name, n), e in mono:
            sym = cache.setdefault(name, sympy.Symbol(name))
            term *= sym ** e
        expr += term
    return expr


def span_dimension(flows) -> int:
    """Rank of the flows over the field of rational functions of the parameters."""
    columns = {}
    rows = []
    for P in flows:
        row = {}
        for i, comp in enumerate(P.components):
            for g, s in comp.coefficient_map().items():
                key = (i, g)
                columns.setdefault(key, len(columns))
                row[columns[key]] = s
        rows.append(row)
    if not columns or not rows:
        return 0
    cache = {}
    M = sympy.zeros(len(rows), len(columns))
    for r, row in enumerate(rows):
        for col, s in row.items():
            M[r, col] = _to_sympy(s, cache)
    return M.rank(simplify=True)


@dataclass
class IntegrabilityReport:
    c1: Verdict
    c2: Verdict
    c3: Verdict
    c4_dimension: int
    c4_flows: int
    note: str = "finite-depth evidence, not a proof"

    @property
    def passed(self) -> bool:
        return self.c1.passed and self.c2.passed and self.c3.passed

    def to_dict(self) -> dict:
        def ver(v):
            return {"verdict": "PASS" if v.passed else "FAIL",
                    "residuals": [[list(map(str, w)), str(r)] for w, r in v.residuals]}
        return {"C1": ver(self.c1), "C2": ver(self.c2), "C3": ver(self.c3),
                "C4": {"span_dimension": self.c4_dimension, "flows": self.c4_flows,
                       "note": self.note}}

    def __str__(self):
        lines = ["(C1) association: %s" % ("PASS" if self.c1.passed else "FAIL"),
                 "(C2) commutators: %s" % ("PASS" if self.c2.passed else "FAIL"),
                 "(C3) pairings: %s" % ("PASS" if self.c3.passed else "FAIL"),
                 "(C4) span dimension %d of %d flows (%s)" % (self.c4_dimension, self.c4_flows, self.note)]
        return "\n".join(lines)


def integrability_report(result: HierarchyResult, H: PVAStructure) -> IntegrabilityReport:
    """Finite-depth checks of association, commuting flows, vanishing pairings and rank."""
    c1 = Verdict("association")
    for gi, pi in result.associations:
        F = result.gradients[gi]
        P = result.flows[pi]
        try:
            got = apply_nonlocal(H.operator, F)
        except NonExactArgument as exc:
            c1.add((gi, pi), "not exact: %s" % exc.integrand)
            continue
        if list(got.components) != list(P.components):
            diff = [a - b for a, b in zip(got.components, P.components)]
            c1.add((gi, pi), GradientVector(P.variables, diff))
    c2 = commutator_verdict(result.flows)
    c3 = Verdict("pairings")
    for m, P in enumerate(result.flows):
        for n, F in enumerate(result.gradients):
            pairing = LocalFunctional(P.dot(F), result.variables or H.variables)
            if not pairing.is_zero():
                c3.add((m, n), pairing)
    dim = span_dimension(result.flows)
    return IntegrabilityReport(c1, c2, c3, dim, len(result.flows))
