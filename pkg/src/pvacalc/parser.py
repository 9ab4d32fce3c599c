"""Definition language for sessions: variables, parameters, brackets, operators.

Example::

    var u;
    param c;
    bracket VM { (u,u) = u' + 2*lambda*u + c*lambda^3; }
    operator L = d^2 + u;
    functional h = 1/2*u^2;

In a ``bracket`` block every entry ``(a,b) = expr`` is the value of
``{a_lambda b}``: ``lambda`` commutes with everything, ``d`` differentiates
whatever stands to its right, and ``dinv(x)`` is ``(lambda+d)^-1 x``.  A missing
reverse entry follows skewsymmetry.  In an ``operator`` block entries are
operators in ``d``, ``dinv`` (= d^-1) and ``dinv(x)`` (= d^-1 o x).
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction

from .diffpoly import DiffPoly, LocalFunctional, clear_relations, declare_relation
from .lambdas import LambdaSeries, PVAStructure
from .liealg import LieAlgebraData, build_gl, build_sl
from .printing import format_coeff, format_poly, format_power_term, join_terms
from .psido import IntegralOp, PsiDO, PsiDOMatrix, compose_any, _entry_add, _entry_equal

KEYWORDS = {"var", "param", "bracket", "operator", "functional", "algebra", "lambda", "d", "dinv"}


class ParseError(ValueError):
    def __init__(self, message, line=None, col=None):
        where = "" if line is None else " at line %d, column %d" % (line, col)
        super().__init__(message + where)
        self.line = line
        self.col = col


@dataclass
class Token:
    kind: str
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<num>\d+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<sym>[;,{}()\[\]=+\-*/^':|])
""", re.VERBOSE)


def tokenize(text: str) -> list:
    out = []
    line, start = 1, 0
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError("unexpected character %r" % text[pos], line, pos - start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            start = m.end()
        elif kind not in ("ws", "comment"):
            out.append(Token(kind, m.group(), line, pos - start + 1))
        pos = m.end()
    out.append(Token("eof", "", line, pos - start + 1))
    return out


# AST ---------------------------------------------------------------------

@dataclass
class Node:
    kind: str
    value: object = None
    args: tuple = ()
    line: int = 0
    col: int = 0


class _Parser:
    def __init__(self, text):
        self.toks = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def next(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def error(self, msg, tok=None):
        tok = tok or self.tok
        raise ParseError(msg, tok.line, tok.col)

    def accept(self, text):
        if self.tok.text == text and self.tok.kind in ("sym", "name"):
            return self.next()
        return None

    def expect(self, text):
        t = self.accept(text)
        if t is None:
            self.error("expected %r, found %r" % (text, self.tok.text or "end of input"))
        return t

    def name(self) -> Token:
        if self.tok.kind != "name":
            self.error("expected a name, found %r" % (self.tok.text or "end of input"))
        return self.next()

    def integer(self) -> int:
        sign = -1 if self.accept("-") else 1
        if self.tok.kind != "num":
            self.error("expected an integer")
        return sign * int(self.next().text)

    # expressions
    def expr(self) -> Node:
        t = self.tok
        if self.accept("-"):
            node = Node("neg", args=(self.term(),), line=t.line, col=t.col)
        else:
            self.accept("+")
            node = self.term()
        while self.tok.text in ("+", "-") and self.tok.kind == "sym":
            op = self.next()
            rhs = self.term()
            node = Node("add" if op.text == "+" else "sub", args=(node, rhs), line=op.line, col=op.col)
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.tok.text in ("*", "/") and self.tok.kind == "sym":
            op = self.next()
            rhs = self.unary()
            node = Node("mul" if op.text == "*" else "div", args=(node, rhs), line=op.line, col=op.col)
        return node

    def unary(self) -> Node:
        t = self.tok
        if self.accept("-"):
            return Node("neg", args=(self.unary(),), line=t.line, col=t.col)
        return self.power()

    def power(self) -> Node:
        node = self.postfix()
        while self.tok.text == "^":
            op = self.next()
            if node.kind == "name" and self.tok.text == "(":
                self.next()
                k = self.integer()
                self.expect(")")
                node = Node("name", (_base(node), _order(node) + k), line=node.line, col=node.col)
                continue
            if self.accept("("):
                k = self.integer()
                self.expect(")")
            else:
                k = self.integer()
            node = Node("pow", k, (node,), line=op.line, col=op.col)
        return node

    def postfix(self) -> Node:
        node = self.atom()
        while self.tok.text == "'":
            t = self.next()
            if node.kind != "name" or node.value in KEYWORDS:
                self.error("prime applied to a non-variable", t)
            node = Node("name", (_base(node), _order(node) + 1), line=node.line, col=node.col)
        return node

    def atom(self) -> Node:
        t = self.tok
        if t.kind == "num":
            self.next()
            return Node("num", Fraction(int(t.text)), line=t.line, col=t.col)
        if t.kind == "name":
            self.next()
            if t.text == "dinv" and self.tok.text == "(":
                self.next()
                arg = self.expr()
                self.expect(")")
                return Node("dinv", args=(arg,), line=t.line, col=t.col)
            if t.text in ("lambda", "d", "dinv"):
                return Node(t.text, line=t.line, col=t.col)
            return Node("name", (t.text, 0), line=t.line, col=t.col)
        if self.accept("("):
            node = self.expr()
            self.expect(")")
            return node
        self.error("unexpected %r" % (t.text or "end of input"))


def _base(node):
    return node.value[0]


def _order(node):
    return node.value[1]


# evaluation ----------------------------------------------------------------

class _Scope:
    def __init__(self, variables, params):
        self.variables = variables
        self.params = params

    def atom(self, node: Node) -> DiffPoly:
        name, n = node.value
        if name in self.variables:
            return DiffPoly.var(name, n)
        if name in self.params:
            if n:
                raise ParseError("parameter %s cannot be differentiated" % name, node.line, node.col)
            return DiffPoly.param(name)
        raise ParseError("undeclared symbol %r" % name, node.line, node.col)


def eval_poly(node: Node, scope: _Scope) -> DiffPoly:
    k = node.kind
    if k == "num":
        return DiffPoly.const(node.value)
    if k == "name":
        return scope.atom(node)
    if k == "neg":
        return -eval_poly(node.args[0], scope)
    if k in ("add", "sub", "mul"):
        a = eval_poly(node.args[0], scope)
        b = eval_poly(node.args[1], scope)
        return a + b if k == "add" else a - b if k == "sub" else a * b
    if k == "div":
        a = eval_poly(node.args[0], scope)
        b = eval_poly(node.args[1], scope)
        if not b.is_scalar():
            raise ParseError("division by a non-constant", node.line, node.col)
        return a / b
    if k == "pow":
        if node.value < 0:
            raise ParseError("negative power of a polynomial", node.line, node.col)
        return eval_poly(node.args[0], scope) ** node.value
    raise ParseError("%s is not allowed in a polynomial expression" % k, node.line, node.col)


@dataclass
class _BVal:
    """Bracket-entry value: polynomial in lambda plus tails a (lambda+d)^-1 m."""

    poly: dict = field(default_factory=dict)
    tails: IntegralOp = field(default_factory=IntegralOp)

    def __add__(self, other):
        out = dict(self.poly)
        for e, c in other.poly.items():
            out[e] = out.get(e, DiffPoly()) + c
        return _BVal({e: c for e, c in out.items() if c}, self.tails + other.tails)

    def neg(self):
        return _BVal({e: -c for e, c in self.poly.items()}, -self.tails)


def _apply_bracket(node: Node, val: _BVal, scope: _Scope) -> _BVal:
    k = node.kind
    if k in ("num", "name"):
        c = eval_poly(node, scope)
        return _BVal({e: c * x for e, x in val.poly.items() if c * x}, c * val.tails)
    if k == "lambda":
        if not val.tails.is_zero():
            raise ParseError("lambda times a dinv term is not supported", node.line, node.col)
        return _BVal({e + 1: x for e, x in val.poly.items()})
    if k == "d":
        if not val.tails.is_zero():
            raise ParseError("d applied to a dinv term is not supported", node.line, node.col)
        return _BVal({e: x.diff() for e, x in val.poly.items() if x.diff()})
    if k in ("dinv",):
        if not val.tails.is_zero() or any(e != 0 for e in val.poly):
            raise ParseError("dinv must act on a lambda-free polynomial", node.line, node.col)
        inner = val.poly.get(0, DiffPoly())
        if node.args:
            inner = eval_poly(node.args[0], scope) * inner
        return _BVal({}, IntegralOp.from_tail(1, inner))
    if k == "neg":
        return _apply_bracket(node.args[0], val, scope).neg()
    if k in ("add", "sub"):
        a = _apply_bracket(node.args[0], val, scope)
        b = _apply_bracket(node.args[1], val, scope)
        return a + (b if k == "add" else b.neg())
    if k == "mul":
        return _apply_bracket(node.args[0], _apply_bracket(node.args[1], val, scope), scope)
    if k == "div":
        b = eval_poly(node.args[1], scope)
        if not b.is_scalar():
            raise ParseError("division by a non-constant", node.line, node.col)
        res = _apply_bracket(node.args[0], val, scope)
        inv = DiffPoly.const(1) / b
        return _BVal({e: x * inv for e, x in res.poly.items()}, inv * res.tails)
    if k == "pow":
        if node.value < 0:
            raise ParseError("negative powers are not allowed in bracket entries", node.line, node.col)
        for _ in range(node.value):
            val = _apply_bracket(node.args[0], val, scope)
        return val
    raise ParseError("unexpected %s" % k, node.line, node.col)


def eval_bracket_entry(node: Node, scope: _Scope):
    """Operator whose symbol is the bracket value."""
    val = _apply_bracket(node, _BVal({0: DiffPoly.const(1)}), scope)
    local = PsiDO(val.poly)
    if val.tails.is_zero():
        return local
    return IntegralOp(local) + val.tails


def eval_operator(node: Node, scope: _Scope):
    k = node.kind
    if k in ("num", "name"):
        return PsiDO.mult(eval_poly(node, scope))
    if k == "d":
        return PsiDO.d()
    if k == "dinv":
        arg = eval_poly(node.args[0], scope) if node.args else DiffPoly.const(1)
        return IntegralOp.from_tail(1, arg)
    if k == "lambda":
        raise ParseError("lambda is not allowed in operator expressions", node.line, node.col)
    if k == "neg":
        return -eval_operator(node.args[0], scope)
    if k in ("add", "sub"):
        a = eval_operator(node.args[0], scope)
        b = eval_operator(node.args[1], scope)
        return _entry_add(a, b if k == "add" else -b)
    if k == "mul":
        try:
            return compose_any(eval_operator(node.args[0], scope), eval_operator(node.args[1], scope))
        except ValueError as exc:
            raise ParseError(str(exc), node.line, node.col) from exc
    if k == "div":
        b = eval_poly(node.args[1], scope)
        if not b.is_scalar():
            raise ParseError("division by a non-constant", node.line, node.col)
        return (DiffPoly.const(1) / b) * eval_operator(node.args[0], scope)
    if k == "pow":
        base = node.args[0]
        if node.value < 0:
            if base.kind == "d":
                if node.value == -1:
                    return IntegralOp.from_tail(1, 1)
                return PsiDO.d(node.value)
            raise ParseError("negative powers are only allowed for d", node.line, node.col)
        if base.kind == "d":
            return PsiDO.d(node.value)
        out = PsiDO.identity()
        op = eval_operator(base, scope)
        for _ in range(node.value):
            out = compose_any(out, op)
        return out
    raise ParseError("unexpected %s" % k, node.line, node.col)


# session -------------------------------------------------------------------

@dataclass
class SessionFile:
    variables: list = field(default_factory=list)
    params: list = field(default_factory=list)
    relations: dict = field(default_factory=dict)
    structures: dict = field(default_factory=dict)
    operators: dict = field(default_factory=dict)
    functionals: dict = field(default_factory=dict)
    algebras: dict = field(default_factory=dict)
    spans: dict = field(default_factory=dict)
    forms: dict = field(default_factory=dict)

    def activate(self):
        """Install the declared parameter relations."""
        clear_relations()
        for p, (deg, rhs) in self.relations.items():
            declare_relation(p, deg, rhs)


def parse(text: str) -> SessionFile:
    clear_relations()
    p = _Parser(text)
    s = SessionFile()
    scope = _Scope(s.variables, s.params)

    def declare(tok, kind):
        if tok.text in KEYWORDS:
            p.error("%r is reserved" % tok.text, tok)
        if tok.text in s.variables or tok.text in s.params:
            p.error("%r is already declared" % tok.text, tok)
        s.spans[tok.text] = (tok.line, tok.col)

    while p.tok.kind != "eof":
        kw = p.name()
        if kw.text == "var":
            while True:
                t = p.name()
                declare(t, "var")
                s.variables.append(t.text)
                if not p.accept(","):
                    break
            p.expect(";")
        elif kw.text == "param":
            while True:
                t = p.name()
                declare(t, "param")
                s.params.append(t.text)
                if p.accept(":"):
                    lhs = p.name()
                    if lhs.text != t.text:
                        p.error("relation must be stated for %s" % t.text, lhs)
                    p.expect("^")
                    deg = p.integer()
                    p.expect("=")
                    rhs = eval_poly(p.expr(), scope)
                    if not rhs.is_scalar():
                        p.error("relation right-hand side must be constant in the generators")
                    s.relations[t.text] = (deg, rhs)
                    declare_relation(t.text, deg, rhs)
                if not p.accept(","):
                    break
            p.expect(";")
        elif kw.text == "bracket":
            name = p.name()
            s.spans[name.text] = (name.line, name.col)
            table = {}
            p.expect("{")
            while not p.accept("}"):
                a, b = _pair(p, s.variables)
                p.expect("=")
                table[(a, b)] = eval_bracket_entry(p.expr(), scope)
                p.expect(";")
            s.structures[name.text] = PVAStructure.from_brackets(s.variables, table, name=name.text)
            s.forms[name.text] = "bracket"
        elif kw.text == "operator":
            name = p.name()
            s.spans[name.text] = (name.line, name.col)
            if p.accept("="):
                s.operators[name.text] = eval_operator(p.expr(), scope)
                p.expect(";")
            else:
                p.expect("{")
                n = len(s.variables)
                idx = {v: k for k, v in enumerate(s.variables)}
                rows = [[PsiDO() for _ in range(n)] for _ in range(n)]
                while not p.accept("}"):
                    a, b = _pair(p, s.variables)
                    p.expect("=")
                    rows[idx[a]][idx[b]] = eval_operator(p.expr(), scope)
                    p.expect(";")
                s.structures[name.text] = PVAStructure(s.variables, PsiDOMatrix(rows), name=name.text)
                s.forms[name.text] = "operator"
        elif kw.text == "functional":
            name = p.name()
            p.expect("=")
            s.functionals[name.text] = LocalFunctional(eval_poly(p.expr(), scope), s.variables)
            s.spans[name.text] = (name.line, name.col)
            p.expect(";")
        elif kw.text == "algebra":
            name = p.name()
            s.spans[name.text] = (name.line, name.col)
            s.algebras[name.text], s.forms[name.text] = _algebra(p)
        else:
            p.error("unknown declaration %r" % kw.text, kw)
    return s


def _pair(p: _Parser, variables):
    p.expect("(")
    a = p.name()
    p.expect(",")
    b = p.name()
    p.expect(")")
    for t in (a, b):
        if t.text not in variables:
            p.error("undeclared symbol %r" % t.text, t)
    return a.text, b.text


def _algebra(p: _Parser) -> LieAlgebraData:
    if p.accept("="):
        kind = p.name()
        p.expect("(")
        N = p.integer()
        p.expect(")")
        p.expect(";")
        if kind.text == "sl":
            return build_sl(N), ("sl", N)
        if kind.text == "gl":
            return build_gl(N), ("gl", N)
        p.error("unknown algebra family %r" % kind.text, kind)
    p.expect("{")
    labels = []
    brackets, form, elements = {}, {}, {}
    scope = _Scope(labels, [])

    def linear(node):
        val = eval_poly(node, scope)
        out = {}
        for g, c in val.coefficient_map().items():
            if len(g) != 1 or g[0][1] != 1 or g[0][0][1] != 0 or not c.is_constant():
                raise ParseError("expected a linear combination of basis elements", node.line, node.col)
            out[g[0][0][0]] = c.constant_value()
        return out

    while not p.accept("}"):
        if p.accept("["):
            a = p.name().text
            p.expect(",")
            b = p.name().text
            p.expect("]")
            p.expect("=")
            node = p.expr()
            brackets[(a, b)] = {} if node.kind == "num" and node.value == 0 else linear(node)
        elif p.accept("("):
            a = p.name().text
            p.expect("|")
            b = p.name().text
            p.expect(")")
            p.expect("=")
            val = eval_poly(p.expr(), scope)
            if not val.is_constant():
                p.error("form entries must be numbers")
            form[(a, b)] = val.constant_value()
        else:
            kw = p.name()
            if kw.text == "basis":
                while True:
                    labels.append(p.name().text)
                    if not p.accept(","):
                        break
            elif kw.text == "element":
                nm = p.name()
                p.expect("=")
                elements[nm.text] = linear(p.expr())
            else:
                p.error("expected basis, element, [a,b] or (a|b)", kw)
        p.expect(";")
    g = LieAlgebraData.from_tables(labels, brackets, form)
    for nm, combo in elements.items():
        g.elements[nm] = [Fraction(combo.get(x, 0)) for x in labels]
    return g, "block"


# printing ------------------------------------------------------------------

def format_bracket_entry(e) -> str:
    """Bracket-block text for the symbol of an exact operator entry."""
    if isinstance(e, PsiDO):
        if e.trunc is not None:
            raise ValueError("truncated entries have no exact text form")
        e = IntegralOp.from_operator(e)
    pieces = [format_power_term(e.local[j], "lambda", j) for j in sorted(e.local)]
    text = join_terms(pieces) if pieces else ""
    tails = str(IntegralOp({}, e.tails)) if e.tails else ""
    if not text:
        return tails or "0"
    if not tails:
        return text
    return text + (" - " + tails[1:] if tails.startswith("-") else " + " + tails)


def format_operator_entry(e) -> str:
    if isinstance(e, PsiDO) and e.trunc is not None:
        raise ValueError("truncated operators have no exact text form")
    return str(e)


def _linear(g, vec) -> str:
    p = DiffPoly()
    for lab, c in zip(g.labels, vec):
        if c:
            p = p + DiffPoly.var(lab) * c
    return format_poly(p)


def _format_algebra(name, g, form) -> list:
    if isinstance(form, tuple):
        return ["algebra %s = %s(%d);" % (name, form[0], form[1])]
    n = g.dim
    lines = ["algebra %s {" % name, "  basis %s;" % ", ".join(g.labels)]
    for i in range(n):
        for j in range(i + 1, n):
            if any(g.c[i][j]):
                lines.append("  [%s,%s] = %s;" % (g.labels[i], g.labels[j], _linear(g, g.c[i][j])))
    for i in range(n):
        for j in range(i, n):
            if g.form[i][j]:
                lines.append("  (%s|%s) = %s;" % (g.labels[i], g.labels[j], format_coeff(g.form[i][j])))
    for nm, vec in g.elements.items():
        lines.append("  element %s = %s;" % (nm, _linear(g, vec)))
    lines.append("}")
    return lines


def format_session(s: SessionFile) -> str:
    """Canonical text of a session; ``parse`` reads it back to an equal session."""
    lines = []
    if s.variables:
        lines.append("var %s;" % ", ".join(s.variables))
    if s.params:
        parts = []
        for p in s.params:
            if p in s.relations:
                deg, rhs = s.relations[p]
                parts.append("%s: %s^%d = %s" % (p, p, deg, format_poly(rhs)))
            else:
                parts.append(p)
        lines.append("param %s;" % ", ".join(parts))
    for name, g in s.algebras.items():
        lines.extend(_format_algebra(name, g, s.forms.get(name, "block")))
    for name, H in s.structures.items():
        n = len(H.variables)
        if s.forms.get(name) == "bracket":
            lines.append("bracket %s {" % name)
            for i in range(n):
                for j in range(i, n):
                    a, b = H.variables[i], H.variables[j]
                    e = H.entry(b, a)
                    if not e.is_zero():
                        lines.append("  (%s,%s) = %s;" % (a, b, format_bracket_entry(e)))
        else:
            lines.append("operator %s {" % name)
            for i in range(n):
                for j in range(n):
                    e = H.operator[i, j]
                    if not e.is_zero():
                        lines.append("  (%s,%s) = %s;" % (H.variables[i], H.variables[j],
                                                          format_operator_entry(e)))
        lines.append("}")
    for name, L in s.operators.items():
        lines.append("operator %s = %s;" % (name, format_operator_entry(L)))
    for name, h in s.functionals.items():
        lines.append("functional %s = %s;" % (name, format_poly(h.representative)))
    return "\n".join(lines) + "\n"


def sessions_equal(a: SessionFile, b: SessionFile) -> bool:
    """Equality of the declared content of two sessions."""
    if (a.variables, a.params, a.relations) != (b.variables, b.params, b.relations):
        return False
    if set(a.structures) != set(b.structures) or set(a.operators) != set(b.operators):
        return False
    if any(a.structures[k] != b.structures[k] for k in a.structures):
        return False
    if any(not _entry_equal(a.operators[k], b.operators[k]) for k in a.operators):
        return False
    if {k: f.representative for k, f in a.functionals.items()} != \
            {k: f.representative for k, f in b.functionals.items()}:
        return False
    if set(a.algebras) != set(b.algebras):
        return False
    for k, g in a.algebras.items():
        h = b.algebras[k]
        if (g.labels, g.c, g.form, g.elements) != (h.labels, h.c, h.form, h.elements):
            return False
    return True
