"""Examples for lambda-brackets, axiom checks and Hamiltonian flows."""
from fractions import Fraction

import pytest
import sympy as sp

import oracles as O
from pvacalc.diffpoly import DiffPoly, LocalFunctional
from pvacalc.lambdas import (
    LambdaSeries, NonLocalUnsupported, PVAStructure, SingularSubstitution, TruncationRequired,
    affine_pva, change_of_variables, check_compatibility, check_jacobi, check_skewsymmetry,
    flow_via_bracket, functional_bracket, hamiltonian_flow, master_bracket, split_parameter,
)
from pvacalc.liealg import LieAlgebraData, build_sl
from pvacalc.parser import parse
from pvacalc.psido import PsiDO

from test_acceptance import FIXTURES

u = DiffPoly.var("u")
c = DiffPoly.param("c")
half = Fraction(1, 2)
VM = PVAStructure.from_brackets(["u"], {("u", "u"): LambdaSeries({0: u.diff(), 1: 2 * u, 3: c})})
GFZ = PVAStructure.from_brackets(["u"], {("u", "u"): LambdaSeries({1: 1})})
VM_SYM = O.fn("u").diff(O.x) + 2 * O.lam * O.fn("u") + sp.Symbol("c") * O.lam ** 3


def fixture(name):
    return parse((FIXTURES / (name + ".pva")).read_text())


def series_sympy(S: LambdaSeries):
    return sp.expand(sum((O.to_sympy(cf) * O.lam ** e for e, cf in S.coefficients.items()), sp.Integer(0)))


def test_master_bracket_on_generators():
    assert master_bracket(VM, u, u) == LambdaSeries({0: u.diff(), 1: 2 * u, 3: c})
    W = fixture("minimal-sl3").structures["W"]
    for a in W.variables:
        for b in W.variables:
            got = master_bracket(W, DiffPoly.var(a), DiffPoly.var(b))
            assert got == LambdaSeries.of(W.entry(b, a))


def test_master_bracket_vm_square():
    br = master_bracket(VM, u * u, u)
    assert br.coeff(0) == 6 * u * u.diff() + 2 * c * u.diff(3)
    U = O.fn("u")
    assert O.same(series_sympy(br), O.master_bracket_1var(VM_SYM, U ** 2, U))


@pytest.mark.parametrize("f, g", [
    (u * u.diff(), u ** 3),
    (u.diff(2) * u, u.diff() ** 2),
    (c * u ** 2, u * u.diff(3)),
])
def test_master_bracket_against_oracle(f, g):
    ours = series_sympy(master_bracket(VM, f, g))
    assert O.same(ours, O.master_bracket_1var(VM_SYM, O.to_sympy(f), O.to_sympy(g)))


def test_skewsymmetry_examples():
    assert check_skewsymmetry(VM).passed
    assert check_skewsymmetry(GFZ).passed
    bad = PVAStructure.from_brackets(["u"], {("u", "u"): LambdaSeries({0: u})})
    v = check_skewsymmetry(bad)
    assert not v.passed
    (where, res), = v.residuals
    assert res == PsiDO.mult(2 * u)


def test_jacobi_examples():
    assert check_jacobi(VM).passed
    assert check_jacobi(fixture("affine-sl2").structures["H0"]).passed
    assert check_jacobi(fixture("principal-sl3").structures["W"]).passed
    K = PsiDO({3: u})
    bad = PVAStructure(["u"], [[K - K.adjoint()]])
    assert check_skewsymmetry(bad).passed
    assert not check_jacobi(bad).passed
    with pytest.raises(NonLocalUnsupported):
        check_jacobi(fixture("nls").structures["H0"])


def test_compatibility_examples():
    assert check_compatibility(GFZ, VM).passed
    assert check_compatibility(VM, VM).passed
    s = fixture("affine-sl2")
    assert check_compatibility(s.structures["H0"], s.structures["H1"]).passed


def test_affine_pva_examples():
    s = fixture("affine-sl2")
    g = build_sl(2)
    H = affine_pva(g, g.element("s"), z="z")
    H0, H1 = split_parameter(H, "z")
    assert H0.operator == s.structures["H0"].operator
    assert H1.operator == s.structures["H1"].operator
    ab = LieAlgebraData(("a",), [[[0]]], [[1]])
    A = affine_pva(ab, [0], z="z")
    assert A.bracket("a", "a") == LambdaSeries({1: 1})


def test_functional_bracket_examples():
    U = LocalFunctional(u, ["u"])
    assert functional_bracket(VM, U, U).is_zero()
    assert functional_bracket(VM, LocalFunctional(half * u * u, ["u"]), U).is_zero()
    W = fixture("minimal-sl3").structures["W"].subs({"z": 0})
    f = fixture("minimal-sl3").functionals
    assert functional_bracket(W, f["g0"], f["g1"]).is_zero()


def test_hamiltonian_flow_examples():
    kdv = 3 * u * u.diff() + c * u.diff(3)
    assert hamiltonian_flow(VM, half * u * u)[0] == kdv
    assert hamiltonian_flow(GFZ, half * (u ** 3 + c * u * u.diff(2)))[0] == kdv
    W = fixture("principal-sl3").structures["W"].subs({"z": 0})
    u1, u2 = DiffPoly.var("u1"), DiffPoly.var("u2")
    P = hamiltonian_flow(W, u2)
    assert P[0] == 2 * u2.diff()
    assert P[1] == -Fraction(1, 6) * u1.diff(3) + Fraction(2, 3) * u1 * u1.diff()
    assert P == flow_via_bracket(W, u2)


def test_change_of_variables_examples():
    s = fixture("nls")
    H1 = s.structures["H1"]
    assert change_of_variables(VM, ["u"], {"u": u}) == VM
    sw = change_of_variables(H1, ["v", "u"], {"v": DiffPoly.var("v"), "u": DiffPoly.var("u")})
    assert sw.entry("u", "v") == H1.entry("u", "v")
    assert sw.operator[0, 1] == H1.operator[1, 0]
    with pytest.raises(SingularSubstitution):
        change_of_variables(H1, ["a", "b"], {"a": DiffPoly.var("u"), "b": 2 * DiffPoly.var("u")})


def test_nonlocal_bracket_needs_truncation():
    H0 = fixture("nls").structures["H0"]
    with pytest.raises(TruncationRequired):
        master_bracket(H0, DiffPoly.var("u"), DiffPoly.var("v"))
    br = master_bracket(H0, DiffPoly.var("u"), DiffPoly.var("v"), trunc=-3)
    assert br.truncation_order == -3
