"""Command-stack expression graphs.

An expression is a flat stack of commands.  Each command is a leaf (an input
variable or a coefficient slot) or an operator whose arguments point at
earlier stack positions, so sharing is free and acyclicity is structural.
The output of a graph is its final command.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass

import numpy as np


class GraphError(ValueError):
    """Raised when a command stack violates a structural invariant."""


class ParseError(ValueError):
    """Raised by deserialize; carries the 1-based offending line number."""

    def __init__(self, message, line):
        super().__init__(f"line {line}: {message}")
        self.line = line


class Op(enum.Enum):
    ADD = "ADD"
    SUB = "SUB"
    MUL = "MUL"
    DIV = "DIV"
    SIN = "SIN"
    COS = "COS"
    POW = "POW"
    VAR = "VAR"
    CONST = "CONST"


ARITY = {
    Op.ADD: 2,
    Op.SUB: 2,
    Op.MUL: 2,
    Op.DIV: 2,
    Op.SIN: 1,
    Op.COS: 1,
    Op.POW: 2,
    Op.VAR: 0,
    Op.CONST: 0,
}

LEAVES = (Op.VAR, Op.CONST)


@dataclass(frozen=True)
class Command:
    """One stack entry: operator plus argument indices or a leaf payload.

    For leaves, ``payload`` is the variable index (VAR) or coefficient slot
    (CONST) and both args are None.  For operators the payload is None and
    ``a`` (and ``b`` for binary ops) index earlier commands.
    """

    op: Op
    a: int | None = None
    b: int | None = None
    payload: int | None = None


@dataclass(frozen=True)
class OperatorPalette:
    """The operator set evolution may draw from (leaves are always allowed)."""

    ops: tuple[Op, ...]

    def __post_init__(self):
        if not self.ops:
            raise GraphError("palette must contain at least one operator")
        seen = set()
        for op in self.ops:
            if op in LEAVES:
                raise GraphError("palette lists operators only; leaves are implicit")
            if op in seen:
                raise GraphError(f"duplicate operator {op.value}")
            seen.add(op)

    @property
    def unary(self):
        return tuple(op for op in self.ops if ARITY[op] == 1)

    @property
    def binary(self):
        return tuple(op for op in self.ops if ARITY[op] == 2)

    def __len__(self):
        return len(self.ops)


@dataclass(frozen=True)
class ExpressionGraph:
    """Immutable command stack; the last command is the output."""

    commands: tuple[Command, ...]
    dim: int

    def __post_init__(self):
        validate(self)

    @property
    def output(self):
        return len(self.commands) - 1


def validate(g):
    """Check structural validity; raises GraphError on the first violation."""
    if g.dim < 1:
        raise GraphError("dimension must be >= 1")
    if not g.commands:
        raise GraphError("graph must contain at least one command")
    for i, cmd in enumerate(g.commands):
        arity = ARITY.get(cmd.op)
        if arity is None:
            raise GraphError(f"command {i}: unknown operator")
        if arity == 0:
            if cmd.a is not None or cmd.b is not None:
                raise GraphError(f"command {i}: leaf with arguments")
            if cmd.payload is None or cmd.payload < 0:
                raise GraphError(f"command {i}: leaf needs a non-negative payload")
            if cmd.op is Op.VAR and cmd.payload >= g.dim:
                raise GraphError(
                    f"command {i}: variable {cmd.payload} outside dimension {g.dim}"
                )
            continue
        if cmd.payload is not None:
            raise GraphError(f"command {i}: operator with payload")
        args = (cmd.a,) if arity == 1 else (cmd.a, cmd.b)
        if arity == 1 and cmd.b is not None:
            raise GraphError(f"command {i}: unary operator with second argument")
        for arg in args:
            if arg is None or not (0 <= arg < i):
                raise GraphError(
                    f"command {i}: argument must reference an earlier command"
                )


def _arg_list(cmd):
    n = ARITY[cmd.op]
    if n == 0:
        return ()
    if n == 1:
        return (cmd.a,)
    return (cmd.a, cmd.b)


@functools.lru_cache(maxsize=16384)
def reachable_set(g):
    """Indices of commands reachable from the output, as a sorted tuple."""
    seen = [False] * len(g.commands)
    stack = [g.output]
    while stack:
        i = stack.pop()
        if seen[i]:
            continue
        seen[i] = True
        stack.extend(_arg_list(g.commands[i]))
    return tuple(i for i, s in enumerate(seen) if s)


def complexity(g):
    """Number of commands that contribute to the output (dead code excluded)."""
    return len(reachable_set(g))


@functools.lru_cache(maxsize=16384)
def slot_map(g):
    """Map from reachable CONST payloads to dense coefficient indices 0..q-1."""
    slots = sorted(
        {
            g.commands[i].payload
            for i in reachable_set(g)
            if g.commands[i].op is Op.CONST
        }
    )
    return {s: j for j, s in enumerate(slots)}


def coefficient_count(g):
    """Number of distinct coefficient slots the output actually uses."""
    return len(slot_map(g))


def prune(g):
    """Drop unreachable commands; slots renumber densely but keep their order.

    Renumbering follows slot_map (sorted payloads -> 0..q-1), so a coefficient
    vector that matched ``g`` still matches the pruned graph.
    """
    keep = reachable_set(g)
    remap = {old: new for new, old in enumerate(keep)}
    slot_renames = slot_map(g)
    commands = []
    for old in keep:
        cmd = g.commands[old]
        if cmd.op is Op.CONST:
            commands.append(Command(Op.CONST, payload=slot_renames[cmd.payload]))
        elif ARITY[cmd.op] == 0:
            commands.append(cmd)
        elif ARITY[cmd.op] == 1:
            commands.append(Command(cmd.op, a=remap[cmd.a]))
        else:
            commands.append(Command(cmd.op, a=remap[cmd.a], b=remap[cmd.b]))
    return ExpressionGraph(tuple(commands), g.dim)


def random_graph(palette, dim, max_complexity, rng, leaf_prob=0.1):
    """Draw a random fully-reachable graph with complexity <= max_complexity.

    A size budget is sampled uniformly and spent top-down on a random tree:
    every command feeds the output, so draws carry real structure instead of
    collapsing to a leaf after pruning.  Each constant gets its own slot.
    """
    budget = int(rng.integers(1, max_complexity + 1))
    commands = []
    n_consts = 0

    def leaf():
        nonlocal n_consts
        if rng.random() < 0.5:
            commands.append(Command(Op.VAR, payload=int(rng.integers(dim))))
        else:
            commands.append(Command(Op.CONST, payload=n_consts))
            n_consts += 1
        return len(commands) - 1

    def build(budget, root):
        arities = sorted({ARITY[op] for op in palette.ops if ARITY[op] < budget})
        if not arities or (not root and rng.random() < leaf_prob):
            return leaf()
        arity = arities[int(rng.integers(len(arities)))]
        ops = [op for op in palette.ops if ARITY[op] == arity]
        op = ops[int(rng.integers(len(ops)))]
        if arity == 1:
            return _append(commands, Command(op, a=build(budget - 1, False)))
        left = int(rng.integers(1, budget - 1))
        a = build(left, False)
        b = build(budget - 1 - left, False)
        return _append(commands, Command(op, a=a, b=b))

    build(budget, root=True)
    return prune(ExpressionGraph(tuple(commands), dim))


def _append(commands, cmd):
    commands.append(cmd)
    return len(commands) - 1


def enumerate_graphs(palette, dim, max_complexity):
    """Yield every fully-reachable graph with at most max_complexity commands.

    Constants are labelled canonically: each CONST command takes the next
    fresh slot in order of appearance.  Only practical for tiny sizes.
    """
    if max_complexity > 6:
        raise GraphError("exhaustive enumeration is only supported up to size 6")

    def extensions(prefix_len, n_consts):
        yield Command(Op.CONST, payload=n_consts)
        for k in range(dim):
            yield Command(Op.VAR, payload=k)
        for op in palette.ops:
            if ARITY[op] == 1:
                for a in range(prefix_len):
                    yield Command(op, a=a)
            else:
                for a in range(prefix_len):
                    for b in range(prefix_len):
                        yield Command(op, a=a, b=b)

    def walk(stack, n_consts):
        g = ExpressionGraph(tuple(stack), dim)
        if len(reachable_set(g)) == len(stack):
            yield g
        if len(stack) == max_complexity:
            return
        for cmd in extensions(len(stack), n_consts):
            stack.append(cmd)
            yield from walk(stack, n_consts + (cmd.op is Op.CONST))
            stack.pop()

    for first in (Command(Op.CONST, payload=0), *(
        Command(Op.VAR, payload=k) for k in range(dim)
    )):
        yield from walk([first], 1 if first.op is Op.CONST else 0)


def serialize(g):
    """Render the stack as text: a dim header then one command per line."""
    lines = [f"dim {g.dim}"]
    for i, cmd in enumerate(g.commands):
        if ARITY[cmd.op] == 0:
            lines.append(f"{i}: {cmd.op.value} {cmd.payload}")
        elif ARITY[cmd.op] == 1:
            lines.append(f"{i}: {cmd.op.value} {cmd.a}")
        else:
            lines.append(f"{i}: {cmd.op.value} {cmd.a} {cmd.b}")
    return "\n".join(lines) + "\n"


def deserialize(text):
    """Parse serialize() output back into a graph; inverse of serialize."""
    lines = text.split("\n")
    entries = [(i + 1, ln.strip()) for i, ln in enumerate(lines) if ln.strip()]
    if not entries:
        raise ParseError("empty input", 1)
    lineno, header = entries[0]
    parts = header.split()
    if len(parts) != 2 or parts[0] != "dim":
        raise ParseError("expected 'dim <d>' header", lineno)
    try:
        dim = int(parts[1])
    except ValueError:
        raise ParseError("dimension is not an integer", lineno) from None
    commands = []
    for pos, (lineno, line) in enumerate(entries[1:]):
        head, _, rest = line.partition(":")
        try:
            idx = int(head)
        except ValueError:
            raise ParseError("expected '<index>:' prefix", lineno) from None
        if idx != pos:
            raise ParseError(f"index {idx} out of order (expected {pos})", lineno)
        fields = rest.split()
        if not fields:
            raise ParseError("missing operator", lineno)
        try:
            op = Op(fields[0])
        except ValueError:
            raise ParseError(f"unknown operator {fields[0]!r}", lineno) from None
        args = fields[1:]
        if len(args) != max(ARITY[op], 1):
            raise ParseError(f"{op.value} takes {max(ARITY[op], 1)} argument(s)", lineno)
        try:
            nums = [int(a) for a in args]
        except ValueError:
            raise ParseError("arguments must be integers", lineno) from None
        if ARITY[op] == 0:
            commands.append(Command(op, payload=nums[0]))
        elif ARITY[op] == 1:
            commands.append(Command(op, a=nums[0]))
        else:
            commands.append(Command(op, a=nums[0], b=nums[1]))
    try:
        return ExpressionGraph(tuple(commands), dim)
    except GraphError as exc:
        raise ParseError(str(exc), entries[-1][0]) from None


# precedence levels used by render_infix; POW children are always wrapped
_PREC = {Op.ADD: 1, Op.SUB: 1, Op.MUL: 2, Op.DIV: 2, Op.POW: 3}
_SYMBOL = {Op.ADD: " + ", Op.SUB: " - ", Op.MUL: "*", Op.DIV: "/", Op.POW: "**"}


def render_infix(g, coeffs=None):
    """Human-readable infix form.

    With ``coeffs`` the coefficient slots print as numbers, otherwise as
    c0, c1, ...  The output parses as a Python expression (sin/cos calls,
    ** for powers) with evaluation order matching the stack's.
    """
    smap = slot_map(g)
    parts = {}

    def fmt(i):
        prec, text = parts[i]
        return text, prec

    for i in reachable_set(g):
        cmd = g.commands[i]
        if cmd.op is Op.VAR:
            parts[i] = (9, f"x{cmd.payload}")
        elif cmd.op is Op.CONST:
            if coeffs is None:
                parts[i] = (9, f"c{smap[cmd.payload]}")
            else:
                v = float(coeffs[smap[cmd.payload]])
                parts[i] = (9, repr(v)) if v >= 0 else (0, repr(v))
        elif ARITY[cmd.op] == 1:
            inner, _ = fmt(cmd.a)
            parts[i] = (9, f"{cmd.op.value.lower()}({inner})")
        else:
            prec = _PREC[cmd.op]
            la, lp = fmt(cmd.a)
            rb, rp = fmt(cmd.b)
            if cmd.op is Op.POW:
                if lp < 9:
                    la = f"({la})"
                if rp < 9:
                    rb = f"({rb})"
            else:
                if lp < prec:
                    la = f"({la})"
                if rp <= prec:
                    rb = f"({rb})"
            parts[i] = (prec, f"{la}{_SYMBOL[cmd.op]}{rb}")
    return parts[g.output][1]


class GraphBuilder:
    """Assemble graphs by hand; identical commands are shared automatically."""

    def __init__(self, dim):
        self.dim = dim
        self._commands = []
        self._index = {}

    def _push(self, cmd):
        key = (cmd.op, cmd.a, cmd.b, cmd.payload)
        if key in self._index:
            return self._index[key]
        self._commands.append(cmd)
        self._index[key] = len(self._commands) - 1
        return self._index[key]

    def var(self, k):
        return self._push(Command(Op.VAR, payload=k))

    def const(self, slot):
        return self._push(Command(Op.CONST, payload=slot))

    def add(self, a, b):
        return self._push(Command(Op.ADD, a=a, b=b))

    def sub(self, a, b):
        return self._push(Command(Op.SUB, a=a, b=b))

    def mul(self, a, b):
        return self._push(Command(Op.MUL, a=a, b=b))

    def div(self, a, b):
        return self._push(Command(Op.DIV, a=a, b=b))

    def pow(self, a, b):
        return self._push(Command(Op.POW, a=a, b=b))

    def sin(self, a):
        return self._push(Command(Op.SIN, a=a))

    def cos(self, a):
        return self._push(Command(Op.COS, a=a))

    def graph(self, root=None):
        if root is None:
            root = len(self._commands) - 1
        return prune(ExpressionGraph(tuple(self._commands[: root + 1]), self.dim))
