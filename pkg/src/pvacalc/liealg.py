"""Finite-dimensional Lie algebras given by structure constants and an invariant form."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import sympy

from .lambdas import Verdict


class InvalidLieData(ValueError):
    pass


@dataclass
class LieAlgebraData:
    """Basis labels, constants ``c[i][j][k]`` with [a_i, a_j] = sum_k c[i][j][k] a_k, and a form."""

    labels: tuple
    c: list
    form: list
    elements: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return len(self.labels)

    def bracket(self, x, y) -> list:
        n = self.dim
        out = [Fraction(0)] * n
        for i in range(n):
            if not x[i]:
                continue
            for j in range(n):
                if not y[j]:
                    continue
                for k in range(n):
                    if self.c[i][j][k]:
                        out[k] += x[i] * y[j] * self.c[i][j][k]
        return out

    def pairing(self, x, y) -> Fraction:
        n = self.dim
        return sum((x[i] * self.form[i][j] * y[j] for i in range(n) for j in range(n)), Fraction(0))

    def basis_vector(self, label) -> list:
        v = [Fraction(0)] * self.dim
        v[self.labels.index(label)] = Fraction(1)
        return v

    def element(self, name) -> list:
        if name in self.elements:
            return list(self.elements[name])
        return self.basis_vector(name)

    @classmethod
    def from_tables(cls, labels, brackets, form) -> "LieAlgebraData":
        """Build from {(a, b): {label: coeff}} brackets and {(a, b): value} form entries.

        Reverse brackets follow antisymmetry and the form is symmetrized.
        """
        labels = tuple(labels)
        n = len(labels)
        idx = {x: k for k, x in enumerate(labels)}
        c = [[[Fraction(0)] * n for _ in range(n)] for _ in range(n)]
        given = set()
        for (a, b), combo in brackets.items():
            for lab, val in combo.items():
                c[idx[a]][idx[b]][idx[lab]] = Fraction(val)
            given.add((idx[a], idx[b]))
        for (i, j) in list(given):
            if (j, i) not in given:
                c[j][i] = [-x for x in c[i][j]]
        fm = [[Fraction(0)] * n for _ in range(n)]
        for (a, b), val in form.items():
            fm[idx[a]][idx[b]] = Fraction(val)
            fm[idx[b]][idx[a]] = Fraction(val)
        return cls(labels, c, fm)


def _from_matrices(labels, mats, N) -> LieAlgebraData:
    """Structure constants and trace form from a basis of N x N matrices."""
    n = len(mats)
    basis = [sympy.Matrix(N, N, lambda r, s, m=m: m.get((r, s), 0)) for m in mats]
    flat = sympy.Matrix([[b[r, s] for b in basis] for r in range(N) for s in range(N)])
    c = []
    for i in range(n):
        row = []
        for j in range(n):
            comm = basis[i] * basis[j] - basis[j] * basis[i]
            rhs = sympy.Matrix([comm[r, s] for r in range(N) for s in range(N)])
            sol, params = flat.gauss_jordan_solve(rhs)
            row.append([Fraction(int(sympy.fraction(x)[0]), int(sympy.fraction(x)[1])) for x in sol])
        c.append(row)
    form = [[Fraction(int((basis[i] * basis[j]).trace())) for j in range(n)] for i in range(n)]
    return LieAlgebraData(tuple(labels), c, form)


def build_gl(N: int) -> LieAlgebraData:
    """gl_N with elementary matrices u_ij = E_ij and the trace form."""
    if N < 1:
        raise ValueError("N must be positive")
    labels, mats = [], []
    for i in range(1, N + 1):
        for j in range(1, N + 1):
            labels.append("u%d%d" % (i, j))
            mats.append({(i - 1, j - 1): 1})
    return _from_matrices(labels, mats, N)


def build_sl(N: int) -> LieAlgebraData:
    """sl_N with E_ij (i != j) and E_ii - E_(i+1,i+1); sl_2 uses the basis (h, e, f)."""
    if N < 2:
        raise ValueError("sl_N needs N >= 2")
    if N == 2:
        g = _from_matrices(("h", "e", "f"), [{(0, 0): 1, (1, 1): -1}, {(0, 1): 1}, {(1, 0): 1}], 2)
        g.elements["s"] = [Fraction(1, 2), Fraction(0), Fraction(0)]
        return g
    labels, mats = [], []
    for i in range(1, N):
        labels.append("h%d" % i)
        mats.append({(i - 1, i - 1): 1, (i, i): -1})
    for i in range(1, N + 1):
        for j in range(1, N + 1):
            if i != j:
                labels.append("e%d%d" % (i, j))
                mats.append({(i - 1, j - 1): 1})
    return _from_matrices(labels, mats, N)


def validate(g: LieAlgebraData) -> Verdict:
    """Antisymmetry, Jacobi, symmetry, invariance and non-degeneracy of the form."""
    v = Verdict("lie algebra")
    n = g.dim
    c = g.c
    for i in range(n):
        for j in range(n):
            for k in range(n):
                if c[i][j][k] != -c[j][i][k]:
                    v.add(("antisymmetry", g.labels[i], g.labels[j], g.labels[k]), c[i][j][k] + c[j][i][k])
    basis = [g.basis_vector(x) for x in g.labels]
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                a, b, d = basis[i], basis[j], basis[k]
                t1 = g.bracket(a, g.bracket(b, d))
                t2 = g.bracket(b, g.bracket(d, a))
                t3 = g.bracket(d, g.bracket(a, b))
                res = [x + y + z for x, y, z in zip(t1, t2, t3)]
                if any(res):
                    v.add(("jacobi", g.labels[i], g.labels[j], g.labels[k]), res)
    for i in range(n):
        for j in range(n):
            if g.form[i][j] != g.form[j][i]:
                v.add(("symmetry", g.labels[i], g.labels[j]), g.form[i][j] - g.form[j][i])
    for i in range(n):
        for j in range(n):
            ab = g.bracket(basis[i], basis[j])
            for k in range(n):
                lhs = g.pairing(basis[k], ab)
                rhs = g.pairing(g.bracket(basis[k], basis[i]), basis[j])
                if lhs != rhs:
                    v.add(("invariance", g.labels[k], g.labels[i], g.labels[j]), lhs - rhs)
    det = sympy.Matrix([[sympy.Rational(x.numerator, x.denominator) for x in row] for row in g.form]).det()
    if det == 0:
        v.add(("non-degeneracy",), 0)
    return v
