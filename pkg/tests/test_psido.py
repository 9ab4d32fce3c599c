"""Examples for the pseudodifferential operator ring, checked against sympy symbols."""
from fractions import Fraction

import pytest
import sympy as sp

import oracles as O
from pvacalc.diffpoly import DiffPoly, GradientVector
from pvacalc.psido import (
    IntegralOp, InsufficientTruncation, NonExactArgument, NonInvertibleLeading, NotMonic,
    OrderMismatch, PsiDO, PsiDOMatrix, adjoint, apply_nonlocal, compose, conserved_density,
    fractional_power, invert, invert_matrix, kth_root, lax_rhs, positive_part, residue,
)

u = DiffPoly.var("u")
d = PsiDO.d
half = Fraction(1, 2)
L = d(2) + u


def sym(A: PsiDO):
    return sp.expand(sum((O.to_sympy(c) * O.xi ** j for j, c in A.coeffs.items()), sp.Integer(0)))


def same_symbol(A: PsiDO, S, low):
    return O.same(O.chop(sym(A), low), O.chop(S, low))


def test_compose_examples():
    assert compose(d(), PsiDO.mult(u)) == PsiDO({1: u, 0: u.diff()})
    inv = compose(d(-1), PsiDO.mult(u), -3)
    assert inv == PsiDO({-1: u, -2: -u.diff(), -3: u.diff(2)}, -3)
    assert compose(d() + u, d() - u) == PsiDO({2: 1, 0: -u.diff() - u * u})


def test_compose_against_symbol_calculus():
    A = PsiDO({1: u, -1: u.diff(), -2: u * u})
    B = PsiDO({2: 1, 0: u, -1: u ** 3})
    low = -5
    assert same_symbol(compose(A, B, low), O.symbol_compose(sym(A), sym(B), low), low)


def test_adjoint_examples():
    assert adjoint(d()) == -d()
    assert adjoint(PsiDO({1: u})) == PsiDO({1: -u, 0: -u.diff()})
    assert adjoint(d(-1)) == -d(-1)


def test_residue_examples():
    assert residue(PsiDO({-1: u})) == u
    assert residue(L).is_zero()
    assert residue(kth_root(L, 2, -3)) == half * u
    with pytest.raises(InsufficientTruncation):
        residue(PsiDO({1: 1}, 0))


def test_positive_part_examples():
    assert positive_part(PsiDO({-1: u, 1: 1})) == d()
    assert positive_part(L) == L
    P = positive_part(fractional_power(L, 3, 2, 0))
    assert P == PsiDO({3: 1, 1: Fraction(3, 2) * u, 0: Fraction(3, 4) * u.diff()})


def test_invert_examples():
    assert invert(d()) == d(-1)
    assert invert(PsiDO({1: 2})) == PsiDO({-1: half})
    A = d() - u
    inv = invert(A, -6)
    assert compose(A, inv, -5).agrees(PsiDO.identity(), -5)
    assert inv.coeff(-1) == 1 and inv.coeff(-2) == u
    with pytest.raises(NonInvertibleLeading):
        invert(PsiDO({1: u}))


def test_kth_root_examples():
    assert kth_root(d(2), 2, -4).agrees(d(), -4)
    R = kth_root(L, 2, -5)
    assert R.coeff(-1) == half * u and R.coeff(-2) == -Fraction(1, 4) * u.diff()
    assert same_symbol(R, O.sqrt_symbol(sym(L), -5), -5)
    assert kth_root(d(2) + PsiDO({1: u}), 2, -3).order == 1
    with pytest.raises(NotMonic):
        kth_root(PsiDO({2: 2}), 2)
    with pytest.raises(OrderMismatch):
        kth_root(L, 3)


def test_lax_rhs_examples():
    assert lax_rhs(L, 1, 2) == PsiDO.mult(u.diff())
    expected = Fraction(1, 4) * u.diff(3) + Fraction(3, 2) * u * u.diff()
    assert lax_rhs(L, 3, 2) == PsiDO.mult(expected)
    assert lax_rhs(L, 2, 2).is_zero()
    # oracle: (L^(3/2))_+ from the symbol square root, then the commutator
    R = O.sqrt_symbol(sym(L), -4)
    P = O.chop(O.symbol_compose(O.symbol_compose(R, R, -4), R, 0), 0)
    comm = O.symbol_compose(P, sym(L), 0) - O.symbol_compose(sym(L), P, 0)
    assert O.same(comm, O.to_sympy(expected))


def test_conserved_density_examples():
    assert conserved_density(L, 1, 2).representative == -u
    assert conserved_density(L, 2, 2).is_zero()
    h3 = conserved_density(L, 3, 2)
    res = residue(fractional_power(L, 3, 2, -1))
    assert h3.representative == -Fraction(2, 3) * res
    # -(2/3) Res L^(3/2) = -(1/4) u^2 modulo total derivatives
    assert h3 == -Fraction(1, 4) * u * u


def test_apply_nonlocal_examples():
    one = PsiDOMatrix([[d(-1)]])
    assert apply_nonlocal(one, GradientVector(["u"], [u * u.diff()]))[0] == half * u * u
    with pytest.raises(NonExactArgument) as err:
        apply_nonlocal(one, GradientVector(["u"], [u]))
    assert err.value.integrand == u


def test_integral_op_exact_form():
    op = IntegralOp.from_tail(u, u)
    assert op.apply(u.diff()) == half * u ** 3
    assert op.adjoint() == -op
    assert op.to_psido(-3).agrees(compose(PsiDO.mult(u), compose(d(-1), PsiDO.mult(u), -3), -3), -3)


def test_invert_matrix_round_trip():
    C = PsiDOMatrix([[d(), PsiDO.mult(u)], [PsiDO.mult(-u), d()]])
    Ci = invert_matrix(C, -4)
    prod = C.compose(Ci, -3)
    for i in range(2):
        for j in range(2):
            target = PsiDO.identity() if i == j else PsiDO()
            assert prod[i, j].agrees(target, -3)
