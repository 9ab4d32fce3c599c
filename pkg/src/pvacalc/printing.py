"""Canonical plain-text and LaTeX rendering.

Plain output is re-readable by :mod:`pvacalc.parser`: ``(3/2)*u^2 + c*u''``,
derivatives as primes up to three and ``u^(4)`` beyond.
"""
from __future__ import annotations

from fractions import Fraction

PRIME_LIMIT = 3


def format_var(name: str, n: int) -> str:
    if n < 0 or n == 0:
        return name
    if n <= PRIME_LIMIT:
        return name + "'" * n
    return "%s^(%d)" % (name, n)


def _mono_key(mono):
    gens = tuple((v[0], v[1], e) for v, e in mono if v[1] >= 0)
    deg = sum(e for _, _, e in gens)
    pars = tuple((v[0], e) for v, e in mono if v[1] < 0)
    return (deg, tuple((nm, -n, -e) for nm, n, e in gens), -sum(e for _, e in pars), pars)


def _format_factor(v, e) -> str:
    base = format_var(*v)
    if e == 1:
        return base
    return "%s^%d" % (base, e)


def format_coeff(c) -> str:
    c = Fraction(c)
    if c.denominator == 1:
        return str(c.numerator)
    return "%d/%d" % (c.numerator, c.denominator)


def format_poly(p) -> str:
    if not p.terms:
        return "0"
    pieces = []
    for mono in sorted(p.terms, key=_mono_key):
        c = Fraction(p.terms[mono])
        factors = [_format_factor(v, e) for v, e in mono if v[1] < 0]
        factors += [_format_factor(v, e) for v, e in mono if v[1] >= 0]
        sign = "-" if c < 0 else "+"
        a = abs(c)
        if factors:
            body = "*".join(factors)
            if a.denominator != 1:
                body = "(%s)*%s" % (format_coeff(a), body)
            elif a != 1:
                body = format_coeff(a) + "*" + body
        else:
            body = format_coeff(a)
        pieces.append((sign, body))
    first_sign, first = pieces[0]
    out = ("-" if first_sign == "-" else "") + first
    for sign, body in pieces[1:]:
        out += " %s %s" % (sign, body)
    return out


def _wrap(s: str) -> str:
    if any(ch in s[1:] for ch in "+-") or " " in s:
        return "(" + s + ")"
    return s


def format_power_term(coeff, symbol: str, k: int) -> tuple[str, str]:
    """Render coeff*symbol^k as (sign, body) with the symbol on the right."""
    cs = format_poly(coeff)
    if k == 0:
        sym = ""
    elif k == 1:
        sym = symbol
    else:
        sym = "%s^%d" % (symbol, k)
    if not sym:
        body = cs
    elif cs == "1":
        body = sym
    elif cs == "-1":
        body = "-" + sym
    else:
        body = _wrap(cs) + "*" + sym
    if body.startswith("-") and not body.startswith("-(") and body.count(" ") == 0:
        return "-", body[1:]
    return "+", body


def join_terms(pieces) -> str:
    if not pieces:
        return "0"
    sign, body = pieces[0]
    out = ("-" if sign == "-" else "") + body
    for sign, body in pieces[1:]:
        if sign == "+" and body.startswith("-"):
            sign, body = "-", body[1:]
        out += " %s %s" % (sign, body)
    return out


# ---------------------------------------------------------------------------
# LaTeX

def latex_var(name: str, n: int) -> str:
    base = _latex_name(name)
    if n <= 0:
        return base
    if n <= PRIME_LIMIT:
        return base + "'" * n
    return "%s^{(%d)}" % (base, n)


_GREEK = {"alpha", "beta", "gamma", "delta", "epsilon", "lambda", "mu", "nu"}


def _latex_name(name: str) -> str:
    head = name.rstrip("0123456789")
    idx = name[len(head):]
    if head in _GREEK:
        head = "\\" + head
    return head + ("_{%s}" % idx if idx else "")


def latex_poly(p) -> str:
    if not p.terms:
        return "0"
    out = ""
    for k, mono in enumerate(sorted(p.terms, key=_mono_key)):
        c = Fraction(p.terms[mono])
        factors = []
        for v, e in list((x for x in mono if x[0][1] < 0)) + [x for x in mono if x[0][1] >= 0]:
            f = latex_var(*v)
            if e != 1:
                f = ("{%s}^{%d}" % (f, e)) if "'" in f or "^" in f else "%s^{%d}" % (f, e)
            factors.append(f)
        a = abs(c)
        if a == 1 and factors:
            coeff = ""
        elif a.denominator == 1:
            coeff = str(a.numerator)
        else:
            coeff = "\\frac{%d}{%d}" % (a.numerator, a.denominator)
        body = coeff + "".join(factors)
        if k == 0:
            out = ("-" if c < 0 else "") + body
        else:
            out += (" - " if c < 0 else " + ") + body
    return out


def latex_terms(items, symbol: str) -> str:
    """Join (coeff, k) pairs as coeff symbol^k; multi-term coefficients are bracketed."""
    out = ""
    for coeff, k in items:
        cs = latex_poly(coeff)
        if k == 0:
            sym = ""
        elif k == 1:
            sym = symbol
        else:
            sym = "%s^{%d}" % (symbol, k)
        neg = False
        if sym and cs in ("1", "-1"):
            neg, body = cs == "-1", sym
        elif sym and (" " in cs):
            body = "(%s)%s" % (cs, sym)
        else:
            neg = cs.startswith("-")
            body = (cs[1:] if neg else cs) + sym
        if not out:
            out = ("-" if neg else "") + body
        else:
            out += (" - " if neg else " + ") + body
    return out or "0"
