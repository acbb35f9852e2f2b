"""Graph evaluation and exact derivatives by forward-mode Taylor arithmetic.

Derivatives come from propagating truncated univariate Taylor series through
the command stack; mixed partials nest one series inside another.  Values are
numpy arrays so a whole batch of points (and coefficient settings) flows
through each command at once.  Any non-finite intermediate marks the affected
batch entries undefined; per-point wrappers report that as None.
"""

from __future__ import annotations

import math

import numpy as np

from evosolve.expr import ARITY, Op, reachable_set, slot_map

MAX_ORDER = 4

_INT_TOL = 1e-9  # exponents this close to an integer count as integer powers


class Jet:
    """Truncated Taylor series.  ``level`` separates nested directions."""

    __slots__ = ("c", "level")

    def __init__(self, coeffs, level):
        self.c = coeffs
        self.level = level

    def __repr__(self):
        return f"Jet(level={self.level}, c={self.c!r})"


def _is_jet(v):
    return type(v) is Jet


def _is_zero(v):
    return type(v) is float and v == 0.0


def _all_zero(v):
    if _is_jet(v):
        return all(_all_zero(t) for t in v.c)
    return bool(np.all(np.asarray(v) == 0.0))


def _neg(v):
    if _is_jet(v):
        return Jet([_neg(t) for t in v.c], v.level)
    return -v


def _add(x, y):
    if _is_jet(x):
        if _is_jet(y):
            if x.level == y.level:
                return Jet([_add(a, b) for a, b in zip(x.c, y.c)], x.level)
            if x.level < y.level:
                x, y = y, x
        c = list(x.c)
        c[0] = _add(c[0], y)
        return Jet(c, x.level)
    if _is_jet(y):
        return _add(y, x)
    if _is_zero(x):
        return y
    if _is_zero(y):
        return x
    return x + y


def _sub(x, y):
    if _is_jet(x):
        if _is_jet(y) and x.level == y.level:
            return Jet([_sub(a, b) for a, b in zip(x.c, y.c)], x.level)
        if _is_jet(y) and x.level < y.level:
            pass  # fall through to the y-jet branch below
        else:
            c = list(x.c)
            c[0] = _sub(c[0], y)
            return Jet(c, x.level)
    if _is_jet(y):
        c = [_sub(x, y.c[0])] + [_neg(t) for t in y.c[1:]]
        return Jet(c, y.level)
    if _is_zero(y):
        return x
    return x - y


def _mul(x, y):
    if _is_jet(x):
        if _is_jet(y):
            if x.level == y.level:
                n = len(x.c)
                out = []
                for k in range(n):
                    s = 0.0
                    for i in range(k + 1):
                        a, b = x.c[i], y.c[k - i]
                        if _is_zero(a) or _is_zero(b):
                            continue
                        s = _add(s, _mul(a, b))
                    out.append(s)
                return Jet(out, x.level)
            if x.level < y.level:
                x, y = y, x
        return Jet([0.0 if _is_zero(t) else _mul(t, y) for t in x.c], x.level)
    if _is_jet(y):
        return _mul(y, x)
    return x * y


def _div(x, y):
    if _is_jet(y):
        if _is_jet(x) and x.level > y.level:
            return Jet([_div(t, y) for t in x.c], x.level)
        if _is_jet(x) and x.level == y.level:
            ac = x.c
        else:
            ac = [x] + [0.0] * (len(y.c) - 1)
        out = []
        for k in range(len(y.c)):
            s = ac[k]
            for j in range(1, k + 1):
                if _is_zero(y.c[j]) or _is_zero(out[k - j]):
                    continue
                s = _sub(s, _mul(y.c[j], out[k - j]))
            out.append(_div(s, y.c[0]))
        return Jet(out, y.level)
    if _is_jet(x):
        return Jet([_div(t, y) for t in x.c], x.level)
    if type(x) is float and type(y) is float:
        return np.float64(x) / np.float64(y)
    return x / y


def _sincos(u):
    if not _is_jet(u):
        return np.sin(u), np.cos(u)
    s0, c0 = _sincos(u.c[0])
    s, c = [s0], [c0]
    n = len(u.c)
    for k in range(1, n):
        ssum = 0.0
        csum = 0.0
        for j in range(1, k + 1):
            if _is_zero(u.c[j]):
                continue
            ju = _mul(float(j), u.c[j])
            ssum = _add(ssum, _mul(ju, c[k - j]))
            csum = _add(csum, _mul(ju, s[k - j]))
        s.append(_div(ssum, float(k)))
        c.append(_neg(_div(csum, float(k))))
    return Jet(s, u.level), Jet(c, u.level)


def _sin(u):
    return _sincos(u)[0]


def _cos(u):
    return _sincos(u)[1]


def _exp(u):
    if not _is_jet(u):
        return np.exp(u)
    e = [_exp(u.c[0])]
    for k in range(1, len(u.c)):
        s = 0.0
        for j in range(1, k + 1):
            if _is_zero(u.c[j]):
                continue
            s = _add(s, _mul(_mul(float(j), u.c[j]), e[k - j]))
        e.append(_div(s, float(k)))
    return Jet(e, u.level)


def _log(u):
    if not _is_jet(u):
        return np.log(u)
    w = [_log(u.c[0])]
    for k in range(1, len(u.c)):
        s = _mul(float(k), u.c[k])
        for j in range(1, k):
            if _is_zero(w[j]) or _is_zero(u.c[k - j]):
                continue
            s = _sub(s, _mul(_mul(float(j), w[j]), u.c[k - j]))
        w.append(_div(_div(s, u.c[0]), float(k)))
    return Jet(w, u.level)


def _select(mask, a, b):
    """Elementwise where(mask, a, b) that recurses through jets."""
    if _is_jet(a) or _is_jet(b):
        if _is_jet(a) and _is_jet(b) and a.level == b.level:
            return Jet([_select(mask, x, y) for x, y in zip(a.c, b.c)], a.level)
        if _is_jet(a) and (not _is_jet(b) or b.level < a.level):
            bc = [b] + [0.0] * (len(a.c) - 1)
            return Jet([_select(mask, x, y) for x, y in zip(a.c, bc)], a.level)
        ac = [a] + [0.0] * (len(b.c) - 1)
        return Jet([_select(mask, x, y) for x, y in zip(ac, b.c)], b.level)
    return np.where(mask, a, b)


def _jet_value(v):
    while _is_jet(v):
        v = v.c[0]
    return v


def _ipow(x, n):
    """Integer power by repeated squaring; handles jets and negative n."""
    if n == 0:
        return np.float64(1.0)
    if n < 0:
        return _ipow(_div(np.float64(1.0), x), -n)
    result = None
    base = x
    while n:
        if n & 1:
            result = base if result is None else _mul(result, base)
        n >>= 1
        if n:
            base = _mul(base, base)
    return result


def _powf(x, y):
    # exponents that are themselves constant jets reduce to their value
    while _is_jet(y):
        if all(_all_zero(t) for t in y.c[1:]):
            y = y.c[0]
        else:
            return _exp(_mul(_log(x), y))
    if not _is_jet(x):
        yr = np.round(y)
        is_int = np.abs(y - yr) < _INT_TOL
        return np.where(is_int, np.power(x, yr), np.power(x, y))
    yr = np.round(np.asarray(y, dtype=float))
    is_int = np.abs(y - yr) < _INT_TOL
    ints = np.unique(yr[is_int]) if np.ndim(yr) else (
        [float(yr)] if bool(is_int) else []
    )
    ints = [n for n in np.atleast_1d(ints) if abs(n) <= 1024]
    if np.all(is_int) and len(ints) == 1:
        return _ipow(x, int(ints[0]))
    out = _exp(_mul(_log(x), y))
    for n in ints:
        here = is_int & (yr == n)
        out = _select(here, _ipow(x, int(n)), out)
    return out


def _nonfinite(v):
    if _is_jet(v):
        bad = False
        for t in v.c:
            nb = _nonfinite(t)
            if nb is not False:
                bad = nb if bad is False else (bad | nb)
        return bad
    if _is_zero(v):
        return False
    return ~np.isfinite(v)


_UNARY = {Op.SIN: _sin, Op.COS: _cos}
_BINARY = {Op.ADD: _add, Op.SUB: _sub, Op.MUL: _mul, Op.DIV: _div, Op.POW: _powf}


def _run_stack(g, leaf_vals, batch):
    """Execute the reachable commands; returns (output value, undefined mask)."""
    vals = [None] * len(g.commands)
    bad = np.zeros(batch, dtype=bool)
    with np.errstate(all="ignore"):
        for i in reachable_set(g):
            cmd = g.commands[i]
            if ARITY[cmd.op] == 0:
                vals[i] = leaf_vals[i]
                continue
            if ARITY[cmd.op] == 1:
                v = _UNARY[cmd.op](vals[cmd.a])
            else:
                v = _BINARY[cmd.op](vals[cmd.a], vals[cmd.b])
            nf = _nonfinite(v)
            if nf is not False:
                bad |= nf
            vals[i] = v
    return vals[g.output], bad


def _leaf_values(g, coeffs, X, directions):
    """Seed values for every reachable leaf command.

    ``directions`` is a sequence of (variable, order) pairs; direction i is
    carried at jet level i+1.  Variables not named stay plain arrays and act
    as constants of every direction.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    smap = slot_map(g)
    leaf_vals = {}
    for i in reachable_set(g):
        cmd = g.commands[i]
        if cmd.op is Op.VAR:
            v = X[:, cmd.payload]
            for lvl, (vidx, order) in enumerate(directions, start=1):
                if vidx == cmd.payload:
                    v = Jet([v, 1.0] + [0.0] * (order - 1), lvl)
            leaf_vals[i] = v
        elif cmd.op is Op.CONST:
            j = smap[cmd.payload]
            leaf_vals[i] = coeffs[:, j] if coeffs.ndim == 2 else np.float64(coeffs[j])
    return leaf_vals


def _extract(value, directions, batch):
    """Pull one Taylor coefficient per direction and rescale to a derivative."""
    out = value
    scale = 1.0
    for lvl in range(len(directions), 0, -1):
        order = directions[lvl - 1][1]
        scale *= math.factorial(order)
        if _is_jet(out) and out.level == lvl:
            out = out.c[order]
        elif order > 0:
            return np.zeros(batch)
    out = np.asarray(_jet_value(out), dtype=float)  # levels never depended on
    if scale != 1.0:
        out = out * scale
    return np.broadcast_to(out, (batch,))


def _check_request(g, multi_index):
    if len(multi_index) != g.dim:
        raise ValueError(
            f"multi-index length {len(multi_index)} != graph dimension {g.dim}"
        )
    if any(o < 0 for o in multi_index):
        raise ValueError("derivative orders must be non-negative")
    if sum(multi_index) > MAX_ORDER:
        raise ValueError(f"total derivative order above {MAX_ORDER} is unsupported")


def eval_values(g, coeffs, X):
    """Batch evaluation.  Returns (values, undefined mask), both shape (B,)."""
    X = np.asarray(X, dtype=float)
    leaf_vals = _leaf_values(g, coeffs, X, ())
    value, bad = _run_stack(g, leaf_vals, X.shape[0])
    out = np.broadcast_to(np.asarray(value, dtype=float), (X.shape[0],)).copy()
    out[bad] = np.nan
    return out, bad


def eval_derivs(g, coeffs, X, requests):
    """Batch derivatives for several multi-indices at once.

    Pure requests that share a direction share one Taylor pass; mixed partials
    get a nested pass each.  Returns (dict multi_index -> values, undefined
    mask).  The mask is the union over all passes performed.
    """
    X = np.asarray(X, dtype=float)
    batch = X.shape[0]
    requests = [tuple(mi) for mi in requests]
    for mi in requests:
        _check_request(g, mi)

    pure_order = {}
    mixed = []
    zero_only = []
    for mi in requests:
        nz = [(i, o) for i, o in enumerate(mi) if o > 0]
        if not nz:
            zero_only.append(mi)
        elif len(nz) == 1:
            var = nz[0][0]
            pure_order[var] = max(pure_order.get(var, 0), nz[0][1])
        else:
            mixed.append(mi)

    results = {}
    total_bad = np.zeros(batch, dtype=bool)

    for var, max_o in sorted(pure_order.items()):
        directions = ((var, max_o),)
        value, bad = _run_stack(g, _leaf_values(g, coeffs, X, directions), batch)
        total_bad |= bad
        for mi in requests:
            nz = [(i, o) for i, o in enumerate(mi) if o > 0]
            if len(nz) == 1 and nz[0][0] == var:
                results[mi] = _extract(value, ((var, nz[0][1]),), batch)
        if zero_only and zero_only[0] not in results:
            base = _extract(value, ((var, 0),), batch)
            for mi in zero_only:
                results[mi] = base

    for mi in mixed:
        directions = tuple((i, o) for i, o in enumerate(mi) if o > 0)
        value, bad = _run_stack(g, _leaf_values(g, coeffs, X, directions), batch)
        total_bad |= bad
        results[mi] = _extract(value, directions, batch)

    if zero_only and zero_only[0] not in results:
        value, bad = _run_stack(g, _leaf_values(g, coeffs, X, ()), batch)
        total_bad |= bad
        base = np.broadcast_to(np.asarray(value, dtype=float), (batch,)).copy()
        for mi in zero_only:
            results[mi] = base

    for mi in requests:
        vals = results[mi]
        if vals.base is not None or not vals.flags.writeable:
            vals = vals.copy()
        vals[total_bad] = np.nan
        results[mi] = vals
    return results, total_bad


def eval_laplacian(g, coeffs, X):
    """Sum of pure second derivatives over every input variable, batched."""
    X = np.asarray(X, dtype=float)
    requests = []
    for k in range(g.dim):
        mi = [0] * g.dim
        mi[k] = 2
        requests.append(tuple(mi))
    vals, bad = eval_derivs(g, coeffs, X, requests)
    out = np.zeros(X.shape[0])
    for mi in requests:
        out = out + vals[mi]
    out[bad] = np.nan
    return out, bad


def evaluate(g, coeffs, point):
    """Value of the graph at one point, or None where undefined."""
    vals, bad = eval_values(g, coeffs, np.asarray(point, dtype=float)[None, :])
    return None if bad[0] else float(vals[0])


def derivative(g, coeffs, point, multi_index):
    """Partial derivative described by multi_index at one point (None = undefined)."""
    _check_request(g, tuple(multi_index))
    vals, bad = eval_derivs(
        g, coeffs, np.asarray(point, dtype=float)[None, :], [tuple(multi_index)]
    )
    return None if bad[0] else float(vals[tuple(multi_index)][0])


def laplacian(g, coeffs, point):
    """Laplacian at one point, or None where undefined."""
    vals, bad = eval_laplacian(g, coeffs, np.asarray(point, dtype=float)[None, :])
    return None if bad[0] else float(vals[0])
