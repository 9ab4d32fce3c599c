"""Command-line driver: ``pvacalc [--format F] COMMAND SESSION [options]``.

SESSION is a path or the name of a bundled fixture such as ``virasoro-magri``.
Exit status is 0 when every verdict passes, 1 on a failed verdict or an engine
error, 2 on usage and parse errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from importlib import resources
from pathlib import Path

from .adler import adler_bracket, check_adler
from .diffpoly import DiffPoly, EvolutionaryVF, LocalFunctional
from .dirac import ConstraintSet, check_centrality, dirac_C, dirac_modify, dirac_reduce
from .hierarchy import StepError, integrability_report, involution_verdict, run_lenard
from .lambdas import (
    LambdaSeries, NonLocalUnsupported, PVAStructure, Verdict, affine_pva, check_compatibility,
    check_jacobi, check_skewsymmetry, hamiltonian_flow, split_parameter,
)
from .parser import ParseError, format_bracket_entry, parse
from .printing import format_poly, latex_poly, latex_terms, latex_var
from .psido import IntegralOp, PsiDO, conserved_density, lax_rhs

FORMATS = ("plain", "json", "latex")


class UsageError(ValueError):
    pass


class Report:
    """Collected output of one command; rendered as plain text, JSON or LaTeX."""

    def __init__(self):
        self.verdicts = []
        self.functionals = []
        self.flows = []
        self.structures = []
        self.lines = []
        self.truncation = None

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def verdict(self, v: Verdict):
        self.verdicts.append(v)
        if v.truncation is not None:
            self.truncation = v.truncation if self.truncation is None else max(self.truncation, v.truncation)

    def to_json(self) -> dict:
        return {
            "verdict": None if not self.verdicts else ("PASS" if self.passed else "FAIL"),
            "residuals": [{"check": v.name, "where": [str(x) for x in w], "residual": str(r)}
                          for v in self.verdicts for w, r in v.residuals],
            "functionals": [{"name": n, "density": format_poly(f)} for n, f in self.functionals],
            "flows": [{"name": n, "components": {x: format_poly(c) for x, c in zip(P.variables, P.components)}}
                      for n, P in self.flows],
            "truncation": self.truncation,
            "structures": [{"name": n, "entries": _structure_entries(H)} for n, H in self.structures],
        }

    def plain(self) -> str:
        out = []
        if self.verdicts:
            out.append("; ".join("%s: %s" % (v.name, "PASS" if v.passed else "FAIL") for v in self.verdicts))
            for v in self.verdicts:
                for w, r in v.residuals:
                    out.append("  %s residual at %s: %s" % (v.name, ", ".join(map(str, w)), r))
        out.extend(self.lines)
        for n, f in self.functionals:
            out.append("int %s = int %s" % (n, format_poly(f)))
        for n, P in self.flows:
            if n:
                out.append("%s:" % n)
            for x, c in zip(P.variables, P.components):
                out.append("  d%s/dt = %s" % (x, format_poly(c)))
        for n, H in self.structures:
            out.append("%s:" % n)
            for key, text in _structure_entries(H).items():
                out.append("  %s = %s" % (key, text))
        if self.truncation is not None:
            out.append("truncation: O(d^%d)" % (self.truncation - 1))
        return "\n".join(out)

    def latex(self) -> str:
        out = []
        for v in self.verdicts:
            out.append("%% %s: %s" % (v.name, "PASS" if v.passed else "FAIL"))
        for n, f in self.functionals:
            out.append("\\int %s = \\int %s" % (n, latex_poly(f)))
        for n, P in self.flows:
            for x, c in zip(P.variables, P.components):
                out.append("\\frac{d%s}{dt} = %s" % (latex_var(x, 0), latex_poly(c)))
        for n, H in self.structures:
            for a in H.variables:
                for b in H.variables:
                    e = H.entry(b, a)
                    if not e.is_zero():
                        out.append("\\{%s{}_\\lambda %s\\} = %s" % (latex_var(a, 0), latex_var(b, 0),
                                                                   _latex_symbol(e)))
        return "\n".join(out)


def _structure_entries(H: PVAStructure) -> dict:
    out = {}
    for a in H.variables:
        for b in H.variables:
            e = H.entry(b, a)
            if e.is_zero():
                continue
            key = "{%s_lambda %s}" % (a, b)
            if isinstance(e, PsiDO) and e.trunc is not None:
                out[key] = str(LambdaSeries.of(e))
            else:
                out[key] = format_bracket_entry(e)
    return out


def _latex_symbol(e) -> str:
    if isinstance(e, PsiDO) and e.trunc is None:
        e = IntegralOp.from_operator(e)
    if isinstance(e, PsiDO):
        items = [(e.coeffs[k], k) for k in sorted(e.coeffs)]
        return latex_terms(items, "\\lambda") + " + O(\\lambda^{%d})" % (e.trunc - 1)
    text = latex_terms([(e.local[k], k) for k in sorted(e.local)], "\\lambda") if e.local else ""
    for a, m in e.tail_pairs():
        cs = latex_poly(a)
        neg = cs.startswith("-") and " " not in cs
        if neg:
            cs = cs[1:]
        if cs == "1":
            cs = ""
        elif " " in cs:
            cs = "(%s)" % cs
        piece = "%s(\\lambda+\\partial)^{-1}%s" % (cs, latex_poly(m))
        if not text:
            text = ("-" if neg else "") + piece
        else:
            text += (" - " if neg else " + ") + piece
    return text or "0"


def load_session(ref: str):
    path = Path(ref)
    if path.exists():
        text = path.read_text(encoding="utf-8")
    else:
        name = ref if ref.endswith(".pva") else ref + ".pva"
        res = resources.files("pvacalc").joinpath("fixtures", name)
        if not res.is_file():
            raise UsageError("no session file or fixture named %r" % ref)
        text = res.read_text(encoding="utf-8")
    return parse(text)


def _parse_settings(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError("--set expects NAME=VALUE, got %r" % item)
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = Fraction(v.strip())
        except ValueError as exc:
            raise UsageError("value of %s must be a rational number" % k) from exc
    return out


def _apply_settings(session, values):
    if not values:
        return
    unknown = set(values) - set(session.params)
    if unknown:
        raise UsageError("undeclared parameter(s): %s" % ", ".join(sorted(unknown)))
    for k, H in list(session.structures.items()):
        session.structures[k] = H.subs(values)
    for k, L in list(session.operators.items()):
        session.operators[k] = L.subs(values)
    for k, f in list(session.functionals.items()):
        session.functionals[k] = LocalFunctional(f.representative.subs(values), f.variables)


def _structure(session, name):
    if name is None:
        if not session.structures:
            raise UsageError("session declares no structures")
        return next(iter(session.structures.items()))
    if name not in session.structures:
        raise UsageError("unknown structure %r" % name)
    return name, session.structures[name]


def _pair(session, text):
    if text:
        names = [x.strip() for x in text.split(",")]
        if len(names) != 2:
            raise UsageError("--pair expects two structure names separated by a comma")
    else:
        names = list(session.structures)[:2]
        if len(names) != 2:
            raise UsageError("session declares fewer than two structures; use --pair")
    return [_structure(session, n) for n in names]


def _functional(session, name):
    if name not in session.functionals:
        raise UsageError("unknown functional %r" % name)
    return session.functionals[name]


def _operator(session, name):
    if name not in session.operators:
        raise UsageError("unknown operator %r" % name)
    op = session.operators[name]
    if isinstance(op, IntegralOp):
        if op.tails:
            raise UsageError("operator %r must be a differential operator" % name)
        op = op.local_op
    return op


def _axioms(report, H, label=""):
    checks = [check_skewsymmetry(H)]
    if H.is_local:
        checks.append(check_jacobi(H))
    else:
        report.lines.append("jacobi: not checked for the non-local structure %s" % (label or H.name))
    for v in checks:
        if label:
            v.name = "%s %s" % (label, v.name)
        report.verdict(v)


def cmd_check(args, session, report):
    names = [args.structure] if args.structure else list(session.structures)
    if not names:
        raise UsageError("session declares no structures")
    for n in names:
        _, H = _structure(session, n)
        _axioms(report, H, n if len(names) > 1 else "")


def cmd_compat(args, session, report):
    (n0, H0), (n1, H1) = _pair(session, args.pair)
    report.verdict(check_compatibility(H0, H1))


def cmd_flow(args, session, report):
    name, H = _structure(session, args.structure)
    h = _functional(session, args.ham)
    report.flows.append(("flow of int %s under %s" % (args.ham, name), hamiltonian_flow(H, h)))


def cmd_lenard(args, session, report):
    (n0, H0), (n1, H1) = _pair(session, args.pair)
    start = args.start or next(iter(session.functionals), None)
    if start is None:
        raise UsageError("session declares no functionals; use --start")
    res = run_lenard(H0, H1, _functional(session, start), args.steps)
    for k, (h, P) in enumerate(zip(res.functionals, res.flows)):
        report.functionals.append(("h%d" % k, h.representative))
        report.flows.append(("P%d = %s(d) F%d" % (k, n0, k), P))
    for H, n in ((H0, n0), (H1, n1)):
        v = involution_verdict(H, res.functionals)
        v.name = "involution(%s)" % n
        report.verdict(v)
    rep = integrability_report(res, H0)
    report.verdict(rep.c1)
    report.verdict(rep.c2)
    report.verdict(rep.c3)
    report.lines.append("span dimension %d of %d flows (finite-depth evidence)" % (rep.c4_dimension, rep.c4_flows))


def cmd_lax(args, session, report):
    L = _operator(session, args.op)
    rhs = lax_rhs(L, args.power, args.root)
    variables = session.variables
    comps = _lax_components(L, rhs, variables)
    report.flows.append(("", EvolutionaryVF(variables, comps)))


def _lax_components(L, rhs, variables):
    """Read dL/dt = rhs off coefficientwise: each generator is some coefficient of L."""
    comps = [DiffPoly() for _ in variables]
    for j, a in L.coeffs.items():
        g = a.gen_variables()
        if not g:
            continue
        if len(a.terms) != 1 or len(g) != 1 or next(iter(g))[1] != 0 or list(a.terms.values())[0] != 1:
            raise UsageError("coefficient of d^%d is not a single generator" % j)
        comps[list(variables).index(next(iter(g))[0])] = rhs.coeff(j)
    return comps


def cmd_density(args, session, report):
    L = _operator(session, args.op)
    h = conserved_density(L, args.power, args.root, session.variables)
    report.functionals.append(("h_%d,%d" % (args.power, args.root), h.representative))


def cmd_adler(args, session, report):
    A = _operator(session, args.op)
    if args.structure:
        name, H = _structure(session, args.structure)
    else:
        H = adler_bracket(A, session.variables, args.depth)
        name = "adler(%s)" % args.op
        report.structures.append((name, H))
        _axioms(report, H)
    v = check_adler(A, H, args.depth)
    report.verdicts.append(v)
    report.lines.append("compared down to z^-%d" % args.depth)


def cmd_dirac(args, session, report):
    name, H = _structure(session, args.structure)
    for c in args.constraints:
        if c not in session.variables:
            raise UsageError("constraint %r is not a declared generator" % c)
    theta = ConstraintSet.generators(*args.constraints)
    C = dirac_C(H, theta)
    report.lines.append("C = %s" % C)
    HD = dirac_modify(H, theta)
    report.verdict(check_centrality(HD, theta))
    out = dirac_reduce(HD, theta) if args.reduce else HD
    report.structures.append((name + "^D", out))


def cmd_affine(args, session, report):
    if args.algebra not in session.algebras:
        raise UsageError("unknown algebra %r" % args.algebra)
    g = session.algebras[args.algebra]
    element = args.element or ("s" if "s" in g.elements else None)
    s = g.element(element) if element else None
    H = affine_pva(g, s, z="z")
    H0, H1 = split_parameter(H, "z")
    report.structures.append(("H0", H0))
    report.structures.append(("H1", H1))
    _axioms(report, H0, "H0")
    _axioms(report, H1, "H1")
    report.verdict(check_compatibility(H0, H1))


COMMANDS = {
    "check": cmd_check, "compat": cmd_compat, "flow": cmd_flow, "lenard": cmd_lenard,
    "lax": cmd_lax, "density": cmd_density, "adler": cmd_adler, "dirac": cmd_dirac,
    "affine": cmd_affine,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pvacalc", description="Poisson vertex algebra calculator")
    ap.add_argument("--format", choices=FORMATS, default="plain")
    sub = ap.add_subparsers(dest="command", required=True)

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("session", help="session file or bundled fixture name")
        p.add_argument("--set", action="append", metavar="NAME=VALUE", help="fix a parameter")
        p.add_argument("--format", choices=FORMATS, default=argparse.SUPPRESS)
        return p

    p = command("check", "skewsymmetry and Jacobi verdicts")
    p.add_argument("--structure")
    p = command("compat", "compatibility of a pair")
    p.add_argument("--pair")
    p = command("flow", "Hamiltonian evolution equations")
    p.add_argument("--ham", required=True)
    p.add_argument("--structure")
    p = command("lenard", "Lenard-Magri hierarchy table")
    p.add_argument("--steps", type=int, default=4)
    p.add_argument("--pair")
    p.add_argument("--start")
    for name in ("lax", "density"):
        p = command(name, "Lax flow" if name == "lax" else "conserved density")
        p.add_argument("--op", required=True)
        p.add_argument("--power", type=int, required=True)
        p.add_argument("--root", type=int, required=True)
    p = command("adler", "Adler identity check")
    p.add_argument("--op", required=True)
    p.add_argument("--depth", type=int, default=6)
    p.add_argument("--structure")
    p = command("dirac", "Dirac modification by constraints")
    p.add_argument("--constraints", required=True, type=lambda s: [x.strip() for x in s.split(",") if x.strip()])
    p.add_argument("--structure")
    p.add_argument("--reduce", action="store_true")
    p = command("affine", "affine structure of a Lie algebra")
    p.add_argument("--algebra", required=True)
    p.add_argument("--element")
    return ap


def render(report: Report, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report.to_json(), indent=2, default=str)
    if fmt == "latex":
        return report.latex()
    return report.plain()


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        session = load_session(args.session)
        _apply_settings(session, _parse_settings(args.set))
    except (ParseError, UsageError, OSError) as exc:
        print("error: %s" % exc, file=stderr)
        return 2
    report = Report()
    try:
        COMMANDS[args.command](args, session, report)
    except UsageError as exc:
        print("error: %s" % exc, file=stderr)
        return 2
    except (StepError, NonLocalUnsupported, ArithmeticError, ValueError, TypeError) as exc:
        print("error: %s: %s" % (type(exc).__name__, exc), file=stderr)
        return 1
    print(render(report, args.format), file=stdout)
    return 0 if report.passed else 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
