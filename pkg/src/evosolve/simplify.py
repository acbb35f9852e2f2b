"""Canonical sum-of-terms forms and equivalence verdicts.

A graph with calibrated coefficients canonicalizes to a sum of terms, each a
float coefficient times a multiset of atoms (variable powers, sin/cos of a
canonical argument, opaque subtrees).  Add, sub, mul and small integer powers
expand fully; division by a non-constant and general powers stay opaque.
Verdicts between two forms are structural first, numeric probing second.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from evosolve import fitness as _fitness
from evosolve.expr import ARITY, GraphBuilder, Op, reachable_set, slot_map

DROP_TOL = 1e-12      # coefficients below this vanish during canonicalization
PHASE_TOL = 1e-9      # cos(theta - pi/2) recognized as sin(theta) within this
MAX_POW_EXPAND = 16   # integer powers above this stay opaque
MAX_TERMS = 4000      # expansion abort threshold
PROBE_POINTS = 64
PROBE_TOL = 1e-10


@dataclass(frozen=True)
class CanonicalForm:
    """Sorted tuple of (coefficient, atoms) terms; atoms are (atom, power)."""

    terms: tuple

    def __str__(self):
        return render_form(self)


class Verdict(enum.Enum):
    EQUIVALENT = "equivalent"
    NUMERICALLY_CLOSE_ONLY = "numerically_close_only"
    DISTINCT = "distinct"


@dataclass(frozen=True)
class EquivalenceVerdict:
    kind: Verdict
    witness: tuple | None = None
    values: tuple | None = None


# == form algebra =============================================================


def _key_float(v):
    return math.inf if math.isnan(v) else v


def _atom_key(atom):
    if atom[0] == "var":
        return (0, atom[1])
    if atom[0] == "sin":
        return (1, _form_key(atom[1]))
    if atom[0] == "cos":
        return (2, _form_key(atom[1]))
    if atom[0] == "div":
        return (3, _form_key(atom[1]), _form_key(atom[2]))
    if atom[0] == "pow":
        return (4, _form_key(atom[1]), _form_key(atom[2]))
    return (5, _form_key(atom[1]), _form_key(atom[2]))  # mul kept opaque


def _term_key(atoms):
    return tuple((_atom_key(a), p) for a, p in atoms)


def _form_key(form):
    return tuple(
        (_term_key(atoms), _key_float(coef)) for coef, atoms in form.terms
    )


def _build(term_map):
    """term_map: atoms tuple -> coefficient.  Sorts and drops tiny terms."""
    terms = []
    for atoms, coef in term_map.items():
        if math.isnan(coef) or abs(coef) >= DROP_TOL:
            terms.append((float(coef), atoms))
    terms.sort(key=lambda t: _term_key(t[1]))
    return CanonicalForm(tuple(terms))


def const_form(v):
    return _build({(): float(v)})


def var_form(k):
    return _build({((("var", k), 1),): 1.0})


ZERO = CanonicalForm(())
ONE = const_form(1.0)


def _is_const(form):
    return not form.terms or (len(form.terms) == 1 and not form.terms[0][1])


def _const_value(form):
    if not form.terms:
        return 0.0
    return form.terms[0][0]


def add_forms(a, b, sign=1.0):
    out = {atoms: coef for coef, atoms in a.terms}
    for coef, atoms in b.terms:
        out[atoms] = out.get(atoms, 0.0) + sign * coef
    return _build(out)


def scale_form(a, factor):
    return _build({atoms: coef * factor for coef, atoms in a.terms})


def mul_forms(a, b):
    out = {}
    if len(a.terms) * len(b.terms) > MAX_TERMS:
        raise _TooBig()
    for ca, atoms_a in a.terms:
        for cb, atoms_b in b.terms:
            merged = dict(atoms_a)
            for atom, p in atoms_b:
                merged[atom] = merged.get(atom, 0) + p
            key = tuple(sorted(merged.items(), key=lambda kv: _atom_key(kv[0])))
            out[key] = out.get(key, 0.0) + ca * cb
    return _build(out)


class _TooBig(Exception):
    pass


def int_pow_form(a, n):
    result = ONE
    base = a
    while n:
        if n & 1:
            result = mul_forms(result, base)
        n >>= 1
        if n:
            base = mul_forms(base, base)
    return result


def _split_const(form):
    """(constant term value, remainder form)."""
    c = 0.0
    rest = {}
    for coef, atoms in form.terms:
        if atoms:
            rest[atoms] = coef
        else:
            c = coef
    return c, _build(rest)


def _normalize_arg_sign(form):
    """Flip the argument sign so its leading non-constant coefficient is > 0.

    Returns (normalized form, sign), where sign is -1 if a flip happened.
    sin is odd and cos even, so callers fold the sign accordingly.
    """
    lead = None
    for coef, atoms in form.terms:
        if atoms:
            lead = coef
            break
    if lead is not None and lead < 0:
        return scale_form(form, -1.0), -1.0
    return form, 1.0


def sin_form(arg):
    if _is_const(arg):
        with np.errstate(all="ignore"):
            return const_form(np.sin(_const_value(arg)))
    arg, sign = _normalize_arg_sign(arg)
    return _build({((("sin", arg), 1),): sign})


def cos_form(arg):
    if _is_const(arg):
        with np.errstate(all="ignore"):
            return const_form(np.cos(_const_value(arg)))
    arg, _ = _normalize_arg_sign(arg)  # cos is even; sign discarded
    c, rest = _split_const(arg)
    if abs(c + math.pi / 2.0) < PHASE_TOL:
        shifted = add_forms(rest, const_form(c + math.pi / 2.0))
        shifted, sign = _normalize_arg_sign(shifted)
        return _build({((("sin", shifted), 1),): sign})
    return _build({((("cos", arg), 1),): 1.0})


def div_form(num, den):
    if _is_const(den):
        with np.errstate(all="ignore"):
            return scale_form(num, float(np.float64(1.0) / _const_value(den)))
    if not num.terms:
        return ZERO
    return _build({((("div", num, den), 1),): 1.0})


def pow_form(base, expo):
    if _is_const(expo):
        v = _const_value(expo)
        vr = round(v) if math.isfinite(v) else v
        if math.isfinite(v) and abs(v - vr) < 1e-9 and 0 <= vr <= MAX_POW_EXPAND:
            if _is_const(base):
                with np.errstate(all="ignore"):
                    return const_form(np.power(_const_value(base), float(vr)))
            try:
                return int_pow_form(base, int(vr))
            except _TooBig:
                pass
        elif _is_const(base):
            with np.errstate(all="ignore"):
                return const_form(np.power(_const_value(base), v))
    return _build({((("pow", base, expo), 1),): 1.0})


def canonicalize(g, coeffs):
    """Expand a calibrated graph into its canonical form."""
    coeffs = np.asarray(coeffs, dtype=float)
    smap = slot_map(g)
    forms = [None] * len(g.commands)
    for i in reachable_set(g):
        cmd = g.commands[i]
        if cmd.op is Op.VAR:
            forms[i] = var_form(cmd.payload)
        elif cmd.op is Op.CONST:
            forms[i] = const_form(coeffs[smap[cmd.payload]])
        elif cmd.op is Op.ADD:
            forms[i] = add_forms(forms[cmd.a], forms[cmd.b])
        elif cmd.op is Op.SUB:
            forms[i] = add_forms(forms[cmd.a], forms[cmd.b], sign=-1.0)
        elif cmd.op is Op.MUL:
            try:
                forms[i] = mul_forms(forms[cmd.a], forms[cmd.b])
            except _TooBig:
                forms[i] = _build(
                    {((("mul", forms[cmd.a], forms[cmd.b]), 1),): 1.0}
                )
        elif cmd.op is Op.DIV:
            forms[i] = div_form(forms[cmd.a], forms[cmd.b])
        elif cmd.op is Op.SIN:
            forms[i] = sin_form(forms[cmd.a])
        elif cmd.op is Op.COS:
            forms[i] = cos_form(forms[cmd.a])
        elif cmd.op is Op.POW:
            forms[i] = pow_form(forms[cmd.a], forms[cmd.b])
    return forms[g.output]


# == rendering and evaluation =================================================


def _render_atom(atom, power):
    if atom[0] == "var":
        base = f"x{atom[1]}"
    elif atom[0] in ("sin", "cos"):
        base = f"{atom[0]}({render_form(atom[1])})"
    elif atom[0] == "div":
        base = f"(({render_form(atom[1])})/({render_form(atom[2])}))"
    elif atom[0] == "mul":
        base = f"(({render_form(atom[1])})*({render_form(atom[2])}))"
    else:
        base = f"(({render_form(atom[1])})^({render_form(atom[2])}))"
    return base if power == 1 else f"{base}^{power}"


def render_form(form):
    if not form.terms:
        return "0"
    parts = []
    for coef, atoms in form.terms:
        bits = [_render_atom(a, p) for a, p in atoms]
        if not bits:
            parts.append(repr(coef))
        elif coef == 1.0:
            parts.append("*".join(bits))
        else:
            parts.append("*".join([repr(coef)] + bits))
    return " + ".join(parts)


def eval_form(form, x):
    """Numeric value of a form at one point (float; may be nan)."""
    x = np.asarray(x, dtype=float)
    total = np.float64(0.0)
    with np.errstate(all="ignore"):
        for coef, atoms in form.terms:
            p = np.float64(coef)
            for atom, power in atoms:
                p = p * _eval_atom(atom, x) ** power
            total = total + p
    return float(total)


def _eval_atom(atom, x):
    if atom[0] == "var":
        return np.float64(x[atom[1]])
    if atom[0] == "sin":
        return np.sin(eval_form(atom[1], x))
    if atom[0] == "cos":
        return np.cos(eval_form(atom[1], x))
    if atom[0] == "div":
        return np.float64(eval_form(atom[1], x)) / np.float64(eval_form(atom[2], x))
    if atom[0] == "mul":
        return np.float64(eval_form(atom[1], x)) * np.float64(eval_form(atom[2], x))
    e = np.float64(eval_form(atom[2], x))
    er = np.round(e)
    b = np.float64(eval_form(atom[1], x))
    return np.power(b, er) if np.abs(e - er) < 1e-9 else np.power(b, e)


def form_dimension(form):
    dim = 0
    for _, atoms in form.terms:
        for atom, _ in atoms:
            if atom[0] == "var":
                dim = max(dim, atom[1] + 1)
            else:
                for child in atom[1:]:
                    dim = max(dim, form_dimension(child))
    return dim


# == equivalence ==============================================================


def _coef_close(a, b, tol):
    if a == b or (math.isnan(a) and math.isnan(b)):
        return True
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def _atoms_match(a, b, tol):
    if a[0] != b[0]:
        return False
    if a[0] == "var":
        return a[1] == b[1]
    return all(_forms_match(fa, fb, tol) for fa, fb in zip(a[1:], b[1:]))


def _terms_match(ta, tb, tol):
    atoms_a, atoms_b = ta[1], tb[1]
    if len(atoms_a) != len(atoms_b):
        return False
    used = [False] * len(atoms_b)
    for atom_a, pow_a in atoms_a:
        hit = False
        for j, (atom_b, pow_b) in enumerate(atoms_b):
            if used[j] or pow_a != pow_b:
                continue
            if _atoms_match(atom_a, atom_b, tol):
                used[j] = True
                hit = True
                break
        if not hit:
            return False
    return True


def _forms_match(a, b, tol):
    """Structural match with coefficient tolerance; tol 0 demands equality."""
    remaining = list(b.terms)
    for coef_a, atoms_a in a.terms:
        found = None
        for j, (coef_b, atoms_b) in enumerate(remaining):
            if _terms_match((coef_a, atoms_a), (coef_b, atoms_b), tol):
                found = j
                break
        if found is None:
            if abs(coef_a) <= tol:
                continue
            return False
        coef_b = remaining.pop(found)[0]
        if not _coef_close(coef_a, coef_b, tol):
            return False
    return all(abs(coef) <= tol for coef, _ in remaining)


def probe_points(dim, domain=None, count=PROBE_POINTS):
    """Deterministic quasi-random points inside the domain box."""
    if domain is not None:
        dim = max(dim, len(domain))
    dim = max(dim, 1)
    sampler = qmc.Halton(d=dim, scramble=False)
    unit = sampler.random(count)
    if domain is None:
        return unit
    low = np.asarray([d[0] for d in domain], dtype=float)
    high = np.asarray([d[1] for d in domain], dtype=float)
    return low + unit * (high - low)


def equivalent(a, b, coef_tol=1e-6, domain=None):
    """Verdict between two canonical forms.

    Structural agreement (same atoms, coefficients within coef_tol) is
    EQUIVALENT.  Otherwise 64 quasi-random probes decide between
    NUMERICALLY_CLOSE_ONLY (pointwise agreement better than 1e-10) and
    DISTINCT (with a witness point).
    """
    if _forms_match(a, b, coef_tol):
        return EquivalenceVerdict(Verdict.EQUIVALENT)
    dim = max(form_dimension(a), form_dimension(b))
    for x in probe_points(dim, domain):
        va = eval_form(a, x)
        vb = eval_form(b, x)
        if not math.isfinite(va) and not math.isfinite(vb):
            continue
        if not math.isfinite(va) or not math.isfinite(vb) or not (
            abs(va - vb) <= PROBE_TOL * max(1.0, abs(va), abs(vb))
        ):
            return EquivalenceVerdict(Verdict.DISTINCT, tuple(x), (va, vb))
    return EquivalenceVerdict(Verdict.NUMERICALLY_CLOSE_ONLY)


def is_known_solution(individual, problem):
    """Dual gate: dense-grid fitness below threshold and structural equivalence."""
    scalar = _fitness.grid_fitness(individual.graph, individual.coeffs, problem)
    if not scalar < problem.success_threshold:
        return False
    mine = canonicalize(individual.graph, individual.coeffs)
    known = canonicalize(problem.known_graph, problem.known_coeffs)
    verdict = equivalent(mine, known, domain=problem.domain)
    return verdict.kind is Verdict.EQUIVALENT


# == reconstruction (tests and round-trips) ===================================


def form_to_graph(form):
    """Rebuild (graph, coeffs) computing the form; inverse up to canonicalize."""
    b = GraphBuilder(dim=max(form_dimension(form), 1))
    coeffs = []

    def new_const(v):
        coeffs.append(float(v))
        return b.const(len(coeffs) - 1)

    def build_form(f):
        if not f.terms:
            return new_const(0.0)
        acc = None
        for coef, atoms in f.terms:
            term = None
            for atom, power in atoms:
                node = build_atom(atom)
                for _ in range(power):
                    term = node if term is None else b.mul(term, node)
            if term is None:
                term = new_const(coef)
            elif coef != 1.0:
                term = b.mul(new_const(coef), term)
            acc = term if acc is None else b.add(acc, term)
        return acc

    def build_atom(atom):
        if atom[0] == "var":
            return b.var(atom[1])
        if atom[0] == "sin":
            return b.sin(build_form(atom[1]))
        if atom[0] == "cos":
            return b.cos(build_form(atom[1]))
        if atom[0] == "div":
            return b.div(build_form(atom[1]), build_form(atom[2]))
        if atom[0] == "mul":
            return b.mul(build_form(atom[1]), build_form(atom[2]))
        return b.pow(build_form(atom[1]), build_form(atom[2]))

    root = build_form(form)
    graph = b.graph(root=root)
    # slots were created densely in order, so the vector maps through as-is
    return graph, np.asarray(coeffs)
