"""Session language: parsing, errors and the print-parse round trip."""
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pvacalc.diffpoly import DiffPoly
from pvacalc.lambdas import PVAStructure, check_skewsymmetry
from pvacalc.parser import ParseError, format_bracket_entry, format_session, parse, sessions_equal
from pvacalc.printing import format_poly
from pvacalc.psido import IntegralOp, PsiDO, PsiDOMatrix
from strategies import PINNED, polys

FIXTURES = Path(__file__).resolve().parent.parent / "src" / "pvacalc" / "fixtures"
UV = ("u", "v")
u = DiffPoly.var("u")


def test_virasoro_magri_round_trip():
    s = parse((FIXTURES / "virasoro-magri.pva").read_text())
    H = s.structures["VM"]
    assert H.bracket("u", "u").coeff(3) == DiffPoly.param("c")
    text = format_session(s)
    assert "(u,u) = u' + 2*u*lambda + c*lambda^3;" in text
    assert sessions_equal(parse(text), s)
    assert format_session(parse(text)) == text


@pytest.mark.parametrize("name", sorted(p.stem for p in FIXTURES.glob("*.pva")))
def test_fixture_round_trip(name):
    s = parse((FIXTURES / (name + ".pva")).read_text())
    assert sessions_equal(parse(format_session(s)), s)


def test_unbalanced_brace_position():
    text = "var u;\nbracket H {\n  (u,u) = lambda;\n"
    with pytest.raises(ParseError) as err:
        parse(text)
    assert err.value.line == 4
    assert "line 4" in str(err.value)
    with pytest.raises(ParseError) as err:
        parse("var u;\nfunctional h = (u + u';\n")
    assert (err.value.line, err.value.col) == (2, 23)


def test_undeclared_symbol():
    with pytest.raises(ParseError) as err:
        parse("var u;\nfunctional h = u*w;")
    assert "w" in str(err.value) and err.value.line == 2


def test_nls_nonlocal_entries():
    s = parse((FIXTURES / "nls.pva").read_text())
    H0 = s.structures["H0"]
    assert not H0.is_local
    assert check_skewsymmetry(H0).passed
    text = "var u, v; param alpha; operator H { (u,u) = d + 2*alpha*v*dinv(v); (u,v) = -2*alpha*v*dinv(u);" \
           " (v,u) = -2*alpha*u*dinv(v); (v,v) = d + 2*alpha*u*dinv(u); }"
    other = parse(text).structures["H"]
    assert other == H0.subs({"beta": DiffPoly.param("beta")})
    assert sessions_equal(parse(format_session(s)), s)


def test_relation_declaration():
    s = parse("var e, f; param r: r^2 = 2; functional g = r*e*r;")
    assert s.relations["r"][0] == 2
    assert s.functionals["g"].representative == 2 * DiffPoly.var("e")


small = polys(UV, 2, 2, 2)


@st.composite
def entries(draw):
    local = {j: draw(small) for j in range(draw(st.integers(0, 2)) + 1)}
    op = IntegralOp(local)
    if draw(st.booleans()):
        op = op + IntegralOp.from_tail(draw(st.sampled_from([u, DiffPoly.var("v"), 2 * u])),
                                       draw(st.sampled_from([u, DiffPoly.var("v")])))
    return op


@st.composite
def sessions(draw):
    rows = [[draw(entries()) for _ in UV] for _ in UV]
    H = PVAStructure(UV, PsiDOMatrix(rows))
    lines = ["var u, v;", "operator H {"]
    for i, a in enumerate(UV):
        for j, b in enumerate(UV):
            if not rows[i][j].is_zero():
                lines.append("  (%s,%s) = %s;" % (a, b, rows[i][j]))
    lines.append("}")
    # a local bracket given through its upper triangle
    sym = [draw(small), draw(small)]
    lines.append("bracket B { (u,u) = %s; (u,v) = %s; }" % (
        format_bracket_entry(PsiDO({1: 1})), format_bracket_entry(PsiDO({0: sym[0], 1: sym[1]}))))
    L = PsiDO({2: 1, 0: draw(small)})
    lines.append("operator L = %s;" % L)
    f = draw(small)
    lines.append("functional h = %s;" % format_poly(f))
    return "\n".join(lines), H, L, f


@PINNED
@given(sessions())
def test_random_session_round_trip(data):
    text, H, L, f = data
    s = parse(text)
    assert s.structures["H"] == H
    assert s.operators["L"] == L
    assert s.functionals["h"].representative == f
    again = parse(format_session(s))
    assert sessions_equal(again, s)
    assert format_session(again) == format_session(s)
