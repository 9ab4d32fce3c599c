"""Examples for the Lenard-Magri driver and the integrability report."""
from fractions import Fraction

import pytest

from pvacalc.diffpoly import DiffPoly, EvolutionaryVF, GradientVector, LocalFunctional
from pvacalc.hierarchy import (
    HierarchyResult, NotInImage, UnsupportedH0, commutator_verdict, integrability_report,
    involution_verdict, lenard_step, run_lenard, verify_association,
)
from pvacalc.lambdas import LambdaSeries, PVAStructure
from pvacalc.psido import PsiDO, PsiDOMatrix, conserved_density

u = DiffPoly.var("u")
c = DiffPoly.param("c")
half = Fraction(1, 2)
VM = PVAStructure.from_brackets(["u"], {("u", "u"): LambdaSeries({0: u.diff(), 1: 2 * u, 3: c})})
GFZ = PVAStructure.from_brackets(["u"], {("u", "u"): LambdaSeries({1: 1})})


def grad(*comps):
    return GradientVector(["u"], comps)


def test_lenard_step_examples():
    assert lenard_step(GFZ, VM, grad(1)) == grad(u)
    assert lenard_step(GFZ, VM, grad(u)) == grad(Fraction(3, 2) * u * u + c * u.diff(2))
    ident = PVAStructure(["u"], [[PsiDO.mult(1)]])
    with pytest.raises(NotInImage):
        lenard_step(GFZ, ident, grad(u))
    with pytest.raises(UnsupportedH0):
        lenard_step(VM, GFZ, grad(1))


def test_run_lenard_kdv():
    res = run_lenard(GFZ, VM, LocalFunctional(u, ["u"]), 3)
    expected = [u, half * u * u, half * (u ** 3 + c * u * u.diff(2))]
    for h, e in zip(res.functionals, expected):
        assert h == LocalFunctional(e, ["u"])
    for h, F in zip(res.functionals, res.gradients):
        assert h.gradient() == F
    for n in range(3):
        assert GFZ.apply(res.gradients[n + 1]) == VM.apply(res.gradients[n])
    # h3 is proportional to the Gelfand-Dickey density of d^2 + u at n = 7 when c = 1/2
    h3 = res.functionals[3].representative.subs({"c": DiffPoly.const(half)})
    gd = conserved_density(PsiDO({2: 1, 0: u}), 7, 2).gradient()[0]
    mine = LocalFunctional(h3, ["u"]).gradient()[0]
    key = next(iter(gd.terms))
    assert mine == gd * (Fraction(mine.terms[key]) / Fraction(gd.terms[key]))


def test_involution_and_commutators():
    res = run_lenard(GFZ, VM, LocalFunctional(u, ["u"]), 3)
    assert involution_verdict(GFZ, res.functionals).passed
    assert involution_verdict(VM, res.functionals).passed
    assert commutator_verdict(res.flows).passed


def test_integrability_report_kdv():
    res = run_lenard(GFZ, VM, LocalFunctional(u, ["u"]), 4)
    rep = integrability_report(res, GFZ)
    assert rep.passed
    # P_0 = d(1) = 0, the other four flows are independent
    assert rep.c4_flows == 5 and rep.c4_dimension == 4
    assert set(rep.to_dict()) == {"C1", "C2", "C3", "C4"}


def test_integrability_report_zero_flow():
    res = HierarchyResult(functionals=[LocalFunctional(u, ["u"])], gradients=[grad(1)],
                          flows=[EvolutionaryVF(["u"], [0])], associations=[(0, 0)], variables=("u",))
    rep = integrability_report(res, GFZ)
    assert rep.c4_dimension == 0
    assert "not a proof" in str(rep)


def test_verify_association():
    A = PsiDOMatrix([[PsiDO.d(1)]])
    xi = grad(u * u)
    P = GradientVector(["u"], [2 * u * u.diff()])
    assert verify_association(A, None, xi, xi, P)
    assert not verify_association(A, None, xi, xi, grad(u))
