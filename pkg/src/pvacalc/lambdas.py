"""Lambda-brackets: Master Formula, axiom checks, affine structures and flows.

A structure is stored as its operator matrix ``H(d)``; the generator bracket
``{u_i lambda u_j}`` is the symbol of the entry ``H[j][i]``.  The symbol of
``A o B`` is ``A(lambda+d) B(lambda)``, which turns the Master Formula into
``{f_lambda g} = symbol(D_g o H o D_f^*)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .diffpoly import (
    DiffPoly, EvolutionaryVF, GradientVector, LocalFunctional, as_poly,
    frechet_derivative, scalar_inverse, NonUnitScalar, variational_derivative,
)
from .psido import (
    IntegralOp, PsiDO, PsiDOMatrix, TruncationError, adjoint, binom, compose,
    compose_any, _entry_add, _entry_equal,
)
from .printing import format_poly, format_power_term, join_terms


class TruncationRequired(ValueError):
    pass


class NonLocalUnsupported(ValueError):
    pass


class SingularSubstitution(ValueError):
    pass


# ---------------------------------------------------------------------------

class LambdaSeries:
    """Laurent series in lambda with DiffPoly coefficients and a recorded truncation."""

    __slots__ = ("coefficients", "truncation_order")

    def __init__(self, coefficients=None, truncation_order=None):
        op = PsiDO(coefficients or {}, truncation_order)
        self.coefficients = op.coeffs
        self.truncation_order = op.trunc

    @classmethod
    def of(cls, A) -> "LambdaSeries":
        """Symbol of an operator (exact operators only for IntegralOp tails)."""
        if isinstance(A, IntegralOp):
            if A.tails:
                raise TruncationRequired("symbol of a non-local operator needs a truncation")
            A = A.local_op
        return cls(A.coeffs, A.trunc)

    def op(self) -> PsiDO:
        return PsiDO(self.coefficients, self.truncation_order)

    @property
    def min_exponent(self) -> int:
        if self.truncation_order is not None:
            return self.truncation_order
        return min(self.coefficients, default=0)

    @property
    def is_local(self) -> bool:
        return self.truncation_order is None and all(e >= 0 for e in self.coefficients)

    def coeff(self, e: int) -> DiffPoly:
        return self.op().coeff(e)

    def at_zero(self) -> DiffPoly:
        if not self.is_local:
            raise TruncationError("evaluation at lambda = 0 needs a polynomial series")
        return self.coefficients.get(0, DiffPoly())

    def __add__(self, other):
        return LambdaSeries.of(self.op() + _series_op(other))

    __radd__ = __add__

    def __sub__(self, other):
        return LambdaSeries.of(self.op() - _series_op(other))

    def __neg__(self):
        return LambdaSeries.of(-self.op())

    def __rmul__(self, c):
        return LambdaSeries.of(as_poly(c) * self.op())

    def __mul__(self, c):
        return self.__rmul__(c)

    def shift_lambda(self, k: int) -> "LambdaSeries":
        """Multiply by lambda^k."""
        t = None if self.truncation_order is None else self.truncation_order + k
        return LambdaSeries({e + k: c for e, c in self.coefficients.items()}, t)

    def reflect(self) -> "LambdaSeries":
        """B(-lambda-d), acting on the coefficients."""
        return LambdaSeries.of(adjoint(self.op()))

    def is_zero(self) -> bool:
        return not self.coefficients

    def __eq__(self, other):
        if isinstance(other, LambdaSeries):
            return self.op() == other.op()
        try:
            return self.op() == _series_op(other)
        except TypeError:
            return NotImplemented

    def __hash__(self):
        return hash(self.op())

    def agrees(self, other, down_to=None) -> bool:
        return self.op().agrees(_series_op(other), down_to)

    def subs(self, mapping) -> "LambdaSeries":
        return LambdaSeries.of(self.op().subs(mapping))

    def __str__(self):
        pieces = [format_power_term(self.coefficients[e], "lambda", e)
                  for e in sorted(self.coefficients)]
        out = join_terms(pieces)
        if self.truncation_order is not None:
            out += " + O(lambda^%d)" % (self.truncation_order - 1)
        return out

    __repr__ = __str__


def _series_op(x) -> PsiDO:
    if isinstance(x, LambdaSeries):
        return x.op()
    if isinstance(x, PsiDO):
        return x
    if isinstance(x, (int, Fraction, DiffPoly)):
        return PsiDO.mult(x)
    raise TypeError("cannot interpret %r as a lambda series" % (x,))


class BiSeries:
    """Polynomial in (lambda, mu) with DiffPoly coefficients."""

    __slots__ = ("coefficients",)

    def __init__(self, coefficients=None):
        self.coefficients = {k: as_poly(c) for k, c in (coefficients or {}).items() if as_poly(c)}

    def __add__(self, other):
        out = dict(self.coefficients)
        for k, c in other.coefficients.items():
            out[k] = out.get(k, DiffPoly()) + c
        return BiSeries(out)

    def __neg__(self):
        return BiSeries({k: -c for k, c in self.coefficients.items()})

    def __sub__(self, other):
        return self + (-other)

    def is_zero(self) -> bool:
        return not self.coefficients

    def __eq__(self, other):
        return isinstance(other, BiSeries) and self.coefficients == other.coefficients

    def __str__(self):
        pieces = []
        for (a, b) in sorted(self.coefficients):
            sym = []
            if a:
                sym.append("lambda" if a == 1 else "lambda^%d" % a)
            if b:
                sym.append("mu" if b == 1 else "mu^%d" % b)
            cs = format_poly(self.coefficients[(a, b)])
            if not sym:
                pieces.append(("+", cs))
                continue
            s = "*".join(sym)
            if cs == "1":
                pieces.append(("+", s))
            elif cs == "-1":
                pieces.append(("-", s))
            else:
                wrap = "(" + cs + ")" if " " in cs else cs
                pieces.append(("+", wrap + "*" + s))
        return join_terms(pieces)

    __repr__ = __str__


# ---------------------------------------------------------------------------

@dataclass
class Verdict:
    """Outcome of a check; passes exactly when no residuals are recorded."""

    name: str = ""
    residuals: list = field(default_factory=list)
    truncation: int | None = None

    @property
    def passed(self) -> bool:
        return not self.residuals

    def __bool__(self):
        return self.passed

    def add(self, where, residual):
        self.residuals.append((tuple(where), residual))

    def __str__(self):
        head = "%s: %s" % (self.name or "verdict", "PASS" if self.passed else "FAIL")
        lines = [head]
        for where, res in self.residuals:
            lines.append("  (%s): %s" % (", ".join(str(w) for w in where), res))
        return "\n".join(lines)


class PVAStructure:
    """Poisson structure H(d) over named generators; H[j][i] has symbol {u_i lambda u_j}."""

    def __init__(self, variables, operator, params=None, name="", witnesses=None):
        self.variables = tuple(variables)
        if not isinstance(operator, PsiDOMatrix):
            operator = PsiDOMatrix(operator)
        if operator.shape != (len(self.variables), len(self.variables)):
            raise ValueError("operator shape %s does not match %d generators"
                             % (operator.shape, len(self.variables)))
        self.operator = operator
        self.name = name
        self.witnesses = witnesses
        self.skew_verified = False
        self.jacobi_verified = False
        found = set()
        for row in operator.rows:
            for e in row:
                found |= _entry_params(e)
        self.params = tuple(params) if params is not None else tuple(sorted(found))

    @classmethod
    def from_brackets(cls, variables, table, name="", params=None) -> "PVAStructure":
        """Build from {(a, b): {a lambda b}}; a missing reverse entry follows skewsymmetry."""
        variables = tuple(variables)
        idx = {v: k for k, v in enumerate(variables)}
        n = len(variables)
        rows = [[None] * n for _ in range(n)]
        for (a, b), val in table.items():
            rows[idx[b]][idx[a]] = _as_entry(val)
        for i in range(n):
            for j in range(n):
                if rows[i][j] is None:
                    rev = rows[j][i]
                    rows[i][j] = -adjoint(rev) if rev is not None else PsiDO()
        return cls(variables, PsiDOMatrix(rows), params=params, name=name)

    @property
    def is_local(self) -> bool:
        return self.operator.is_local

    def index(self, name: str) -> int:
        return self.variables.index(name)

    def entry(self, a: str, b: str):
        """Operator entry H_ab."""
        return self.operator[self.index(a), self.index(b)]

    def bracket(self, a: str, b: str, trunc=None) -> LambdaSeries:
        """{a lambda b} for generators a, b."""
        e = self.entry(b, a)
        if isinstance(e, IntegralOp):
            if e.tails and trunc is None:
                raise TruncationRequired("non-local entry needs a truncation order")
            e = e.to_psido(trunc)
        return LambdaSeries.of(e)

    def subs(self, mapping, name=None) -> "PVAStructure":
        return PVAStructure(self.variables, self.operator.subs(mapping), name=name or self.name)

    def scaled(self, c) -> "PVAStructure":
        return PVAStructure(self.variables, self.operator * as_poly(c), name=self.name)

    def __add__(self, other):
        if self.variables != other.variables:
            raise ValueError("structures over different generators")
        return PVAStructure(self.variables, self.operator + other.operator)

    def __eq__(self, other):
        return (isinstance(other, PVAStructure) and self.variables == other.variables
                and self.operator == other.operator)

    def apply(self, vec) -> EvolutionaryVF:
        comps = self.operator.apply(vec)
        return EvolutionaryVF(self.variables, comps)

    def __str__(self):
        lines = []
        for a in self.variables:
            for b in self.variables:
                e = self.entry(b, a)
                if e.is_zero():
                    continue
                if isinstance(e, PsiDO) and e.is_differential():
                    lines.append("{%s_lambda %s} = %s" % (a, b, LambdaSeries.of(e)))
                else:
                    lines.append("H[%s,%s] = %s" % (b, a, e))
        return "\n".join(lines) if lines else "0"

    __repr__ = __str__


def _entry_params(e) -> set:
    polys = []
    if isinstance(e, PsiDO):
        polys = list(e.coeffs.values())
    elif isinstance(e, IntegralOp):
        polys = list(e.local.values()) + list(e.tails.values())
    out = set()
    for p in polys:
        out |= p.params()
    return out


def _as_entry(val):
    if isinstance(val, LambdaSeries):
        return val.op()
    if isinstance(val, (PsiDO, IntegralOp)):
        return val
    return PsiDO.mult(as_poly(val))


# ---------------------------------------------------------------------------
# Master Formula

def _row_op(f: DiffPoly, variables) -> list:
    """D_f as a row of differential operators."""
    return list(frechet_derivative([f], variables).rows[0])


def master_bracket(H: PVAStructure, f, g, trunc=None) -> LambdaSeries:
    """{f_lambda g} by the Master Formula."""
    f, g = as_poly(f), as_poly(g)
    Dg = _row_op(g, H.variables)
    Df = _row_op(f, H.variables)
    total = None
    for j, dg in enumerate(Dg):
        if dg.is_zero():
            continue
        for i, df in enumerate(Df):
            if df.is_zero():
                continue
            h = H.operator[j, i]
            if h.is_zero() and not (isinstance(h, PsiDO) and h.trunc is not None):
                continue
            term = compose_any(compose_any(dg, h, trunc), adjoint(df), trunc)
            total = term if total is None else _entry_add(total, term)
    if total is None:
        return LambdaSeries()
    if isinstance(total, IntegralOp):
        if total.tails:
            if trunc is None:
                raise TruncationRequired("non-local bracket needs a truncation order")
            return LambdaSeries.of(total.to_psido(trunc))
        return LambdaSeries.of(total.local_op)
    if total.trunc is not None and trunc is None and not H.is_local:
        raise TruncationRequired("non-local bracket needs a truncation order")
    return LambdaSeries.of(total)


def _bracket_series_right(H, f, G: LambdaSeries) -> BiSeries:
    """{f_lambda G(mu)} where G has mu-coefficients."""
    out = BiSeries()
    for q, c in G.coefficients.items():
        br = master_bracket(H, f, c)
        out = out + BiSeries({(a, q): x for a, x in br.coefficients.items()})
    return out


def jacobi_residual(H: PVAStructure, f, g, h) -> BiSeries:
    """{f_l {g_m h}} - {g_m {f_l h}} - {{f_l g}_(l+m) h} as a polynomial in (l, m)."""
    if not H.is_local:
        raise NonLocalUnsupported("Jacobi identity is checked for local structures only")
    t1 = _bracket_series_right(H, f, master_bracket(H, g, h))
    t2 = _bracket_series_right(H, g, master_bracket(H, f, h))
    t2 = BiSeries({(b, a): c for (a, b), c in t2.coefficients.items()})
    t3 = BiSeries()
    for q, c in master_bracket(H, f, g).coefficients.items():
        inner = master_bracket(H, c, h)
        acc: dict = {}
        for e, x in inner.coefficients.items():
            for t in range(e + 1):
                key = (q + t, e - t)
                val = x * binom(e, t)
                acc[key] = acc.get(key, DiffPoly()) + val
        t3 = t3 + BiSeries(acc)
    return t1 - t2 - t3


def check_skewsymmetry(H: PVAStructure, trunc=None) -> Verdict:
    """H^* = -H entrywise; residual for (a, b) is {b lambda a} + {a_(-lambda-d) b}."""
    v = Verdict("skewsymmetry")
    A = H.operator
    adj = A.adjoint(trunc)
    n = len(H.variables)
    for i in range(n):
        for j in range(i, n):
            res = _entry_add(A[i, j], adj[i, j])
            if isinstance(res, IntegralOp):
                bad = not res.is_zero()
            elif res.trunc is not None:
                v.truncation = res.trunc if v.truncation is None else max(v.truncation, res.trunc)
                bad = not res.is_zero()
            else:
                bad = not res.is_zero()
            if bad:
                v.add((H.variables[j], H.variables[i]), res)
    if v.passed:
        H.skew_verified = True
    return v


def check_jacobi(H: PVAStructure) -> Verdict:
    if not H.is_local:
        raise NonLocalUnsupported("Jacobi identity is checked for local structures only")
    v = Verdict("jacobi")
    gens = [DiffPoly.var(x) for x in H.variables]
    names = H.variables
    for a, fa in zip(names, gens):
        for b, fb in zip(names, gens):
            for c, fc in zip(names, gens):
                res = jacobi_residual(H, fa, fb, fc)
                if not res.is_zero():
                    v.add((a, b, c), res)
    if v.passed:
        H.jacobi_verified = True
    return v


def _fresh_param(H0, H1, base="z"):
    taken = set(H0.params) | set(H1.params) | set(H0.variables)
    name = base
    while name in taken:
        name += "_"
    return name


def pencil(H0: PVAStructure, H1: PVAStructure, z: str) -> PVAStructure:
    return H0 + H1.scaled(DiffPoly.param(z))


def check_compatibility(H0: PVAStructure, H1: PVAStructure) -> Verdict:
    if H0.variables != H1.variables:
        raise ValueError("compatible structures must share generators")
    if not (H0.is_local and H1.is_local):
        raise NonLocalUnsupported("compatibility is checked for local structures only")
    z = _fresh_param(H0, H1)
    v = check_jacobi(pencil(H0, H1, z))
    v.name = "compatibility"
    return v


# ---------------------------------------------------------------------------

def affine_pva(g, s=None, z: str = "z") -> PVAStructure:
    """{a_lambda b}_z = [a,b] + (a|b) lambda + z (s|[a,b]) on the basis of g."""
    from .liealg import validate, InvalidLieData
    verdict = validate(g)
    if not verdict.passed:
        raise InvalidLieData(str(verdict))
    n = g.dim
    svec = [DiffPoly()] * n if s is None else [as_poly(x) for x in s]
    # (s|a_k) for each basis element
    s_pair = [sum((svec[t] * g.form[t][k] for t in range(n) if g.form[t][k]), DiffPoly())
              for k in range(n)]
    gens = [DiffPoly.var(x) for x in g.labels]
    zp = DiffPoly.param(z)
    table = {}
    for i in range(n):
        for j in range(n):
            br = DiffPoly()
            sval = DiffPoly()
            for k in range(n):
                ck = g.c[i][j][k]
                if ck:
                    br = br + gens[k] * ck
                    sval = sval + s_pair[k] * ck
            coeffs = {}
            if br or sval:
                coeffs[0] = br + zp * sval
            if g.form[i][j]:
                coeffs[1] = DiffPoly.const(g.form[i][j])
            table[(g.labels[i], g.labels[j])] = LambdaSeries(coeffs)
    return PVAStructure.from_brackets(g.labels, table, name="affine")


def split_parameter(H: PVAStructure, z: str):
    """(H0, H1) with H = H0 + z H1; raises if H is not affine-linear in z."""
    zero = H.subs({z: 0})
    one = H.subs({z: 1})
    H1 = PVAStructure(H.variables, (one.operator - zero.operator))
    check = pencil(zero, H1, z)
    if not (check.operator == H.operator):
        raise ValueError("structure is not linear in %s" % z)
    return zero, H1


def functional_bracket(H: PVAStructure, f: LocalFunctional, g: LocalFunctional) -> LocalFunctional:
    """{int f, int g} = int {f_lambda g}|_(lambda=0) = int dg . H df."""
    df = _grad(f, H)
    dg = _grad(g, H)
    flow = H.operator.apply(df)
    total = DiffPoly()
    for a, b in zip(dg.components, flow):
        total = total + a * b
    return LocalFunctional(total, H.variables)


def _grad(f, H) -> GradientVector:
    if isinstance(f, LocalFunctional):
        rep = f.representative
    else:
        rep = as_poly(f)
    return variational_derivative(rep, H.variables)


def hamiltonian_flow(H: PVAStructure, h) -> EvolutionaryVF:
    """Characteristics H(d) . delta h."""
    return H.apply(_grad(h, H))


def flow_via_bracket(H: PVAStructure, h) -> EvolutionaryVF:
    """{int h_lambda u_i}|_(lambda=0) through the Master Formula."""
    rep = h.representative if isinstance(h, LocalFunctional) else as_poly(h)
    comps = [master_bracket(H, rep, DiffPoly.var(x)).at_zero() for x in H.variables]
    return EvolutionaryVF(H.variables, comps)


# ---------------------------------------------------------------------------

def _scalar_matrix_inverse(M):
    n = len(M)
    A = [[as_poly(x) for x in row] + [DiffPoly.const(1 if i == j else 0) for j in range(n)]
         for i, row in enumerate(M)]
    for col in range(n):
        piv = None
        for r in range(col, n):
            if A[r][col]:
                try:
                    inv = scalar_inverse(A[r][col])
                except NonUnitScalar:
                    continue
                piv = r
                break
        if piv is None:
            raise SingularSubstitution("substitution matrix is not invertible over the scalars")
        A[col], A[piv] = A[piv], A[col]
        A[col] = [x * inv for x in A[col]]
        for r in range(n):
            if r != col and A[r][col]:
                fac = A[r][col]
                A[r] = [x - fac * y for x, y in zip(A[r], A[col])]
    return [row[n:] for row in A]


def change_of_variables(H: PVAStructure, new_variables, forward) -> PVAStructure:
    """Linear change of generators; ``forward[w]`` expresses w in the old generators."""
    new_variables = tuple(new_variables)
    old = H.variables
    if len(new_variables) != len(old):
        raise SingularSubstitution("number of generators must not change")
    M = []
    for w in new_variables:
        expr = as_poly(forward[w])
        row = []
        for u in old:
            c = expr.partial(u, 0)
            if not c.is_scalar():
                raise SingularSubstitution("substitution for %s is not linear" % w)
            row.append(c)
        rest = expr - sum((DiffPoly.var(u) * c for u, c in zip(old, row)), DiffPoly())
        if rest:
            raise SingularSubstitution("substitution for %s is not homogeneous linear" % w)
        M.append(row)
    Minv = _scalar_matrix_inverse(M)
    back = {}
    for i, u in enumerate(old):
        back[u] = sum((DiffPoly.var(w) * Minv[i][a] for a, w in enumerate(new_variables)), DiffPoly())
    n = len(old)
    A = H.operator
    rows = []
    for a in range(n):
        row = []
        for b in range(n):
            acc = PsiDO()
            for j in range(n):
                if not M[a][j]:
                    continue
                for i in range(n):
                    if not M[b][i]:
                        continue
                    e = A[j, i]
                    if e.is_zero():
                        continue
                    acc = _entry_add(acc, (M[a][j] * M[b][i]) * e)
            row.append(acc.subs(back))
        rows.append(row)
    out = PVAStructure(new_variables, PsiDOMatrix(rows), name=H.name)
    out.skew_verified = H.skew_verified
    out.jacobi_verified = H.jacobi_verified
    return out
