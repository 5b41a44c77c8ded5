"""Scalar reverse-mode automatic differentiation on an explicit graph.

Every value is a node in an append-only computation graph.  Taking a
gradient does not replay a tape with numeric accumulators: it emits new
nodes that *symbolically* express the adjoints, so the result of ``grad``
is itself differentiable.  Second, third and mixed derivatives, and
parameter-gradients of any of them, are obtained by calling ``grad``
again on its own output.

Primal values are float64 and are computed eagerly as nodes are created.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Graph",
    "Node",
    "Primitive",
    "PRIMITIVES",
    "GraphError",
    "constant",
    "as_node",
    "apply",
    "sin",
    "cos",
    "exp",
    "tanh",
    "cosh",
    "powi",
    "grad",
    "check_grad",
    "pairwise_sum",
    "FD_STEPS",
]

# Operation codes.  The order is frozen: compiled programs and checkpoint
# files store these integers.
OP_CONST = 0
OP_INPUT = 1
OP_ADD = 2
OP_SUB = 3
OP_MUL = 4
OP_DIV = 5
OP_NEG = 6
OP_POWI = 7
OP_SIN = 8
OP_COS = 9
OP_EXP = 10
OP_TANH = 11
OP_COSH = 12

_OP_NAMES = {
    OP_CONST: "constant",
    OP_INPUT: "input",
    OP_ADD: "add",
    OP_SUB: "sub",
    OP_MUL: "mul",
    OP_DIV: "div",
    OP_NEG: "neg",
    OP_POWI: "pow_int",
    OP_SIN: "sin",
    OP_COS: "cos",
    OP_EXP: "exp",
    OP_TANH: "tanh",
    OP_COSH: "cosh",
}


class GraphError(ValueError):
    """Raised for invalid graph construction (cross-graph operands, bad arity,
    non-finite leaf values, unsupported exponents)."""


@dataclass(frozen=True)
class Primitive:
    """A registered operation: tag, arity and primal evaluation rule.

    The symbolic derivative of every primitive is registered in
    ``_emit_adjoint`` and is expressed purely in terms of other primitives,
    which is what makes gradients differentiable again.
    """

    name: str
    code: int
    arity: int


PRIMITIVES = {
    name: Primitive(name, code, 0 if code in (OP_CONST, OP_INPUT) else (2 if code in (OP_ADD, OP_SUB, OP_MUL, OP_DIV) else 1))
    for code, name in _OP_NAMES.items()
}

_INITIAL_CAPACITY = 256


class Graph:
    """Append-only computation graph with columnar node storage.

    Nodes are stored as parallel arrays (op code, two operand indices,
    auxiliary float, primal value).  Operand indices always reference
    earlier nodes, so ascending index order is a topological order.
    A Graph is confined to one thread; independent runs use independent
    Graphs.
    """

    __slots__ = ("_op", "_a", "_b", "_aux", "_val", "_n", "_cap", "_const_cache")

    def __init__(self) -> None:
        self._cap = _INITIAL_CAPACITY
        self._op = np.zeros(self._cap, dtype=np.uint8)
        self._a = np.full(self._cap, -1, dtype=np.int64)
        self._b = np.full(self._cap, -1, dtype=np.int64)
        self._aux = np.zeros(self._cap, dtype=np.float64)
        self._val = np.zeros(self._cap, dtype=np.float64)
        self._n = 0
        self._const_cache: dict[float, int] = {}

    def __len__(self) -> int:
        return self._n

    def _grow(self) -> None:
        new_cap = self._cap * 2
        for name in ("_op", "_a", "_b", "_aux", "_val"):
            old = getattr(self, name)
            new = np.empty(new_cap, dtype=old.dtype)
            new[: self._n] = old[: self._n]
            setattr(self, name, new)
        self._cap = new_cap

    def _emit(self, op: int, a: int, b: int, aux: float, val: float) -> int:
        i = self._n
        if i == self._cap:
            self._grow()
        self._op[i] = op
        self._a[i] = a
        self._b[i] = b
        self._aux[i] = aux
        self._val[i] = val
        self._n = i + 1
        return i

    # Snapshot views used by grad() and the compiled evaluator.
    def columns(self):
        n = self._n
        return self._op[:n], self._a[:n], self._b[:n], self._aux[:n], self._val[:n]

    def node(self, index: int) -> "Node":
        if not 0 <= index < self._n:
            raise GraphError(f"node index {index} out of range")
        return Node(self, index)

    # -- leaf constructors -------------------------------------------------

    def constant(self, v: float) -> "Node":
        v = float(v)
        if not math.isfinite(v):
            raise GraphError(f"constant must be finite, got {v!r}")
        cached = self._const_cache.get(v)
        if cached is not None:
            return Node(self, cached)
        i = self._emit(OP_CONST, -1, -1, v, v)
        self._const_cache[v] = i
        return Node(self, i)

    def input(self, v: float) -> "Node":
        v = float(v)
        if not math.isfinite(v):
            raise GraphError(f"input must be finite, got {v!r}")
        return Node(self, self._emit(OP_INPUT, -1, -1, 0.0, v))

    def set_input(self, node: "Node", v: float) -> None:
        """Rebind the primal of an input leaf (used by finite differencing)."""
        if node.g is not self or self._op[node.i] != OP_INPUT:
            raise GraphError("set_input requires an input node of this graph")
        self._val[node.i] = float(v)


class Node:
    """A handle (graph, index) to one scalar value in a Graph."""

    __slots__ = ("g", "i")

    def __init__(self, g: Graph, i: int) -> None:
        self.g = g
        self.i = i

    @property
    def value(self) -> float:
        return float(self.g._val[self.i])

    @property
    def op_name(self) -> str:
        return _OP_NAMES[int(self.g._op[self.i])]

    def __repr__(self) -> str:
        return f"Node({self.op_name}@{self.i}, value={self.value:.6g})"

    # -- arithmetic (peephole-aware builders below) ------------------------

    def __add__(self, other):
        return _add(self, _coerce(self.g, other))

    def __radd__(self, other):
        return _add(_coerce(self.g, other), self)

    def __sub__(self, other):
        return _sub(self, _coerce(self.g, other))

    def __rsub__(self, other):
        return _sub(_coerce(self.g, other), self)

    def __mul__(self, other):
        return _mul(self, _coerce(self.g, other))

    def __rmul__(self, other):
        return _mul(_coerce(self.g, other), self)

    def __truediv__(self, other):
        return _div(self, _coerce(self.g, other))

    def __rtruediv__(self, other):
        return _div(_coerce(self.g, other), self)

    def __neg__(self):
        return _neg(self)

    def __pow__(self, k):
        return powi(self, k)


def _coerce(g: Graph, x) -> Node:
    if isinstance(x, Node):
        if x.g is not g:
            raise GraphError("operands belong to different Graphs")
        return x
    return g.constant(x)


def as_node(g: Graph, x) -> Node:
    """Return x as a Node of g (floats become cached constants)."""
    return _coerce(g, x)


def _is_const(x: Node, v: float | None = None) -> bool:
    if x.g._op[x.i] != OP_CONST:
        return False
    return v is None or x.g._aux[x.i] == v


# Internal builders.  The peepholes (x+0, x*1, x*0, x*-1, pow 0/1) keep
# the symbolic adjoint graphs compact; they only ever return an existing
# node or a strictly simpler one, so primal invariants are unaffected.

def _add(x: Node, y: Node) -> Node:
    if x.g is not y.g:
        raise GraphError("operands belong to different Graphs")
    if _is_const(y, 0.0):
        return x
    if _is_const(x, 0.0):
        return y
    g = x.g
    return Node(g, g._emit(OP_ADD, x.i, y.i, 0.0, g._val[x.i] + g._val[y.i]))


def _sub(x: Node, y: Node) -> Node:
    if x.g is not y.g:
        raise GraphError("operands belong to different Graphs")
    if _is_const(y, 0.0):
        return x
    if _is_const(x, 0.0):
        return _neg(y)
    g = x.g
    return Node(g, g._emit(OP_SUB, x.i, y.i, 0.0, g._val[x.i] - g._val[y.i]))


def _mul(x: Node, y: Node) -> Node:
    if x.g is not y.g:
        raise GraphError("operands belong to different Graphs")
    g = x.g
    for u, v in ((x, y), (y, x)):
        if _is_const(u):
            c = g._aux[u.i]
            if c == 1.0:
                return v
            if c == 0.0:
                return g.constant(0.0)
            if c == -1.0:
                return _neg(v)
    return Node(g, g._emit(OP_MUL, x.i, y.i, 0.0, g._val[x.i] * g._val[y.i]))


def _div(x: Node, y: Node) -> Node:
    if x.g is not y.g:
        raise GraphError("operands belong to different Graphs")
    g = x.g
    if _is_const(y, 1.0):
        return x
    return Node(g, g._emit(OP_DIV, x.i, y.i, 0.0, g._val[x.i] / g._val[y.i]))


def _neg(x: Node) -> Node:
    g = x.g
    if _is_const(x):
        return g.constant(-g._aux[x.i])
    return Node(g, g._emit(OP_NEG, x.i, -1, 0.0, -g._val[x.i]))


def constant(g: Graph, v: float) -> Node:
    """A non-differentiable leaf with value v (deduplicated per graph)."""
    return g.constant(v)


def sin(x: Node) -> Node:
    g = x.g
    return Node(g, g._emit(OP_SIN, x.i, -1, 0.0, math.sin(g._val[x.i])))


def cos(x: Node) -> Node:
    g = x.g
    return Node(g, g._emit(OP_COS, x.i, -1, 0.0, math.cos(g._val[x.i])))


def exp(x: Node) -> Node:
    g = x.g
    return Node(g, g._emit(OP_EXP, x.i, -1, 0.0, math.exp(g._val[x.i])))


def tanh(x: Node) -> Node:
    g = x.g
    return Node(g, g._emit(OP_TANH, x.i, -1, 0.0, math.tanh(g._val[x.i])))


def cosh(x: Node) -> Node:
    g = x.g
    return Node(g, g._emit(OP_COSH, x.i, -1, 0.0, math.cosh(g._val[x.i])))


def powi(x: Node, k: int) -> Node:
    """x**k for integer k >= 0 (the only powers the problem set needs)."""
    if not isinstance(k, (int, np.integer)) or isinstance(k, bool):
        raise GraphError(f"pow_int exponent must be an integer, got {k!r}")
    k = int(k)
    if k < 0:
        raise GraphError(f"pow_int exponent must be >= 0, got {k}")
    g = x.g
    if k == 0:
        return g.constant(1.0)
    if k == 1:
        return x
    return Node(g, g._emit(OP_POWI, x.i, -1, float(k), g._val[x.i] ** k))


_UNARY_FNS = {
    OP_SIN: sin,
    OP_COS: cos,
    OP_EXP: exp,
    OP_TANH: tanh,
    OP_COSH: cosh,
    OP_NEG: _neg,
}

_BINARY_FNS = {OP_ADD: _add, OP_SUB: _sub, OP_MUL: _mul, OP_DIV: _div}


def apply(primitive: Primitive | str, *operands: Node, aux=None) -> Node:
    """Apply a registered primitive to operand nodes.

    ``aux`` carries the constant value for ``constant`` and the exponent
    for ``pow_int``; leaf primitives take a Graph as sole operand position
    via the module-level constructors instead.
    """
    p = PRIMITIVES[primitive] if isinstance(primitive, str) else primitive
    if p.code in (OP_CONST, OP_INPUT):
        raise GraphError(f"{p.name} is a leaf; use Graph.constant/Graph.input")
    if p.code == OP_POWI:
        if len(operands) != 1:
            raise GraphError(f"pow_int expects 1 operand, got {len(operands)}")
        if aux is None:
            raise GraphError("pow_int requires an integer exponent via aux=")
        return powi(operands[0], aux)
    if len(operands) != p.arity:
        raise GraphError(f"{p.name} expects {p.arity} operands, got {len(operands)}")
    if p.arity == 1:
        return _UNARY_FNS[p.code](operands[0])
    x, y = operands
    if x.g is not y.g:
        raise GraphError("operands belong to different Graphs")
    return _BINARY_FNS[p.code](x, y)


def pairwise_sum(nodes: Sequence[Node]) -> Node:
    """Sum with a fixed pairwise (binary-tree) association order.

    Used for every mean in the loss assembly so that summation order is
    reproducible and documented: leaves are combined by recursive halving,
    left half first.
    """
    if len(nodes) == 0:
        raise GraphError("pairwise_sum of empty sequence")
    if len(nodes) == 1:
        return nodes[0]
    mid = len(nodes) // 2
    return _add(pairwise_sum(nodes[:mid]), pairwise_sum(nodes[mid:]))


# ---------------------------------------------------------------------------
# grad: symbolic adjoint expansion
# ---------------------------------------------------------------------------


def _mark_ancestors(a, b, out_index: int) -> np.ndarray:
    mark = np.zeros(out_index + 1, dtype=np.bool_)
    mark[out_index] = True
    for i in range(out_index, -1, -1):
        if mark[i]:
            ai = a[i]
            if ai >= 0:
                mark[ai] = True
            bi = b[i]
            if bi >= 0:
                mark[bi] = True
    return mark


def _mark_descendants(a, b, seeds, out_index: int) -> np.ndarray:
    mark = np.zeros(out_index + 1, dtype=np.bool_)
    for s in seeds:
        if s <= out_index:
            mark[s] = True
    for i in range(out_index + 1):
        ai = a[i]
        if ai >= 0 and mark[ai]:
            mark[i] = True
            continue
        bi = b[i]
        if bi >= 0 and mark[bi]:
            mark[i] = True
    return mark


try:  # pragma: no cover - exercised implicitly when numba is installed
    import numba as _numba

    _mark_ancestors = _numba.njit(cache=True)(_mark_ancestors)
    _mark_descendants = _numba.njit(cache=True)(_mark_descendants)
    HAVE_NUMBA = True
except Exception:  # pragma: no cover
    HAVE_NUMBA = False


def grad(output: Node, wrt: Sequence[Node]) -> list[Node]:
    """Symbolic derivatives of ``output`` w.r.t. leaf nodes ``wrt``.

    Returns one Node per entry of ``wrt``; each returned Node is an
    ordinary graph expression, so it can be differentiated again.  Only
    the subgraph lying on paths from a wrt leaf to the output is
    expanded.
    """
    g = output.g
    wrt = list(wrt)
    for w in wrt:
        if w.g is not g:
            raise GraphError("wrt nodes must live in the output's Graph")
        code = g._op[w.i]
        if code not in (OP_INPUT, OP_CONST):
            raise GraphError(
                "grad is defined w.r.t. leaf nodes (input/constant), got "
                f"{_OP_NAMES[int(code)]}"
            )

    op, a, b, aux, _ = g.columns()
    out_i = output.i
    zero = g.constant(0.0)
    out_code = op[out_i]
    if out_code in (OP_CONST,):
        return [zero for _ in wrt]

    anc = _mark_ancestors(a[: out_i + 1], b[: out_i + 1], out_i)
    seeds = np.array([w.i for w in wrt if op[w.i] == OP_INPUT], dtype=np.int64)
    desc = _mark_descendants(a[: out_i + 1], b[: out_i + 1], seeds, out_i)
    need = anc & desc
    if not need[out_i]:
        return [zero for _ in wrt]

    live = np.flatnonzero(need)
    adj: dict[int, Node] = {out_i: g.constant(1.0)}

    def accum(j: int, contrib: Node) -> None:
        prev = adj.get(j)
        adj[j] = contrib if prev is None else _add(prev, contrib)

    for i in live[::-1]:
        i = int(i)
        gbar = adj.get(i)
        if gbar is None:
            continue
        code = int(op[i])
        if code in (OP_INPUT, OP_CONST):
            continue
        ia, ib = int(a[i]), int(b[i])
        na = need[ia] if ia >= 0 else False
        nb = need[ib] if ib >= 0 else False
        if code == OP_ADD:
            if na:
                accum(ia, gbar)
            if nb:
                accum(ib, gbar)
        elif code == OP_SUB:
            if na:
                accum(ia, gbar)
            if nb:
                accum(ib, _neg(gbar))
        elif code == OP_MUL:
            if na:
                accum(ia, _mul(gbar, Node(g, ib)))
            if nb:
                accum(ib, _mul(gbar, Node(g, ia)))
        elif code == OP_DIV:
            if na:
                accum(ia, _div(gbar, Node(g, ib)))
            if nb:
                # d(x/y)/dy = -(x/y)/y, reusing the existing quotient node
                accum(ib, _neg(_div(_mul(gbar, Node(g, i)), Node(g, ib))))
        elif code == OP_NEG:
            if na:
                accum(ia, _neg(gbar))
        elif code == OP_POWI:
            if na:
                k = int(aux[i])
                x = Node(g, ia)
                accum(ia, _mul(gbar, _mul(g.constant(float(k)), powi(x, k - 1))))
        elif code == OP_SIN:
            if na:
                accum(ia, _mul(gbar, cos(Node(g, ia))))
        elif code == OP_COS:
            if na:
                accum(ia, _neg(_mul(gbar, sin(Node(g, ia)))))
        elif code == OP_EXP:
            if na:
                accum(ia, _mul(gbar, Node(g, i)))
        elif code == OP_TANH:
            if na:
                t = Node(g, i)
                accum(ia, _mul(gbar, _sub(g.constant(1.0), _mul(t, t))))
        elif code == OP_COSH:
            if na:
                # cosh' = sinh = tanh * cosh, reusing the existing cosh node
                accum(ia, _mul(gbar, _mul(tanh(Node(g, ia)), Node(g, i))))
        else:  # pragma: no cover
            raise GraphError(f"no derivative rule for op code {code}")

    return [adj.get(w.i, zero) for w in wrt]


# ---------------------------------------------------------------------------
# Finite-difference validation
# ---------------------------------------------------------------------------

# Central-difference steps per derivative order, balancing truncation
# against round-off in float64.
FD_STEPS = {1: 1e-5, 2: 1e-4, 3: 1e-3}


def _fd_derivative(f: Callable[[float], float], x: float, order: int) -> float:
    h = FD_STEPS[order]
    if order == 1:
        return (f(x + h) - f(x - h)) / (2.0 * h)
    if order == 2:
        return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
    if order == 3:
        return (f(x + 2 * h) - 2.0 * f(x + h) + 2.0 * f(x - h) - f(x - 2 * h)) / (
            2.0 * h**3
        )
    raise ValueError(f"order must be 1..3, got {order}")


def check_grad(fn: Callable[[Node], Node], at: float, order: int) -> float:
    """Relative discrepancy between AD and a central finite difference.

    ``fn`` builds a scalar expression from one input Node using registered
    primitives.  Returns |ad - fd| / max(1, |ad|, |fd|) for the requested
    derivative order (1..3); it reports, never raises on disagreement.
    """
    if order not in FD_STEPS:
        raise ValueError(f"order must be 1..3, got {order}")

    g = Graph()
    x = g.input(at)
    expr = fn(x)
    d: Node = expr
    for _ in range(order):
        d = grad(d, [x])[0]
    ad = d.value

    def primal(v: float) -> float:
        gg = Graph()
        return fn(gg.input(v)).value

    fd = _fd_derivative(primal, at, order)
    return abs(ad - fd) / max(1.0, abs(ad), abs(fd))
