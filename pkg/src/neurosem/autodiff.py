"""Dense tensors with reverse-mode automatic differentiation.

Define-by-run: every operation appends its output to the owning Graph, so
the tape is already in topological order when ``Graph.backward`` walks it
in reverse. A graph carries a single dtype — training uses float32,
gradient verification rebuilds the same computation in float64.

Tensors are immutable once created; ops return new tensors. A Graph is
confined to one logical thread.
"""

import numpy as np

from .errors import ContractError, DimensionError

GELU_C0 = 0.7978845608  # sqrt(2/pi), tanh approximation
GELU_C1 = 0.044715


class Tensor:
    """One node of the computation graph (leaf or op output)."""

    __slots__ = ("graph", "node_id", "data", "requires_grad", "grad",
                 "op", "_parents", "_backward")

    def __init__(self, graph, data, requires_grad, op="leaf"):
        self.graph = graph
        self.data = data
        self.requires_grad = requires_grad
        self.grad = None
        self.op = op
        self._parents = ()
        self._backward = None
        self.node_id = graph._next_id
        graph._next_id += 1
        if requires_grad:
            # only gradient-relevant nodes stay on the tape; pure inference
            # subgraphs are freed as soon as their consumers release them
            graph.nodes.append(self)

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.data.shape}, grad={self.requires_grad})"

    # Convenience operators; all defer to the module-level ops.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not supported; use mul with a reciprocal")
        return scale(self, 1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, other)


class Graph:
    """Tape of one forward pass, rebuilt per pass (define-by-run)."""

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        if self.dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
            raise ContractError(f"graph dtype must be float32 or float64, got {self.dtype}")
        self.nodes: list[Tensor] = []  # requires_grad nodes, creation order
        self._next_id = 0

    def tensor(self, data, requires_grad=False) -> Tensor:
        """Create a leaf holding ``data`` cast to the graph dtype."""
        arr = np.asarray(data, dtype=self.dtype)
        return Tensor(self, arr, requires_grad)

    def constant(self, data) -> Tensor:
        return self.tensor(data, requires_grad=False)

    def release(self) -> None:
        """Drop tape closures so step-local arrays free by refcount.

        Tensors reference the graph and the tape references the tensors, a
        cycle the generational GC visits too rarely for multi-hundred-MB
        step graphs. Call once the gradients have been consumed.
        """
        for node in self.nodes:
            node._backward = None
            node._parents = ()
        self.nodes.clear()

    def backward(self, loss: Tensor) -> dict[int, np.ndarray]:
        """Reverse-mode sweep from a scalar loss.

        Fills ``t.grad`` for every tensor that requires a gradient
        (graph inputs included) and returns {node_id: gradient}.
        Deterministic: accumulation follows tape order.
        """
        if loss.graph is not self:
            raise ContractError("loss tensor belongs to a different graph")
        if loss.data.size != 1:
            raise ContractError(f"loss must be scalar, got shape {loss.data.shape}")
        if not loss.requires_grad:
            return {}
        pending: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
        result: dict[int, np.ndarray] = {}
        for node in reversed(self.nodes):
            if node.node_id > loss.node_id:
                continue
            g = pending.pop(node.node_id, None)
            if g is None:
                continue
            node.grad = g
            result[node.node_id] = g
            if node._backward is None:
                continue
            for parent, pg in node._backward(g):
                if not parent.requires_grad:
                    continue
                prev = pending.get(parent.node_id)
                pending[parent.node_id] = pg if prev is None else prev + pg
        return result


def backward(graph: Graph, loss: Tensor) -> dict[int, np.ndarray]:
    """Functional alias for ``graph.backward(loss)``."""
    return graph.backward(loss)


def _finish(out, bwd, parents, op):
    out.op = op
    out._parents = parents
    out._backward = bwd
    return out


def _coerce(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        if x.graph is not like.graph:
            raise ContractError("operands belong to different graphs")
        return x
    return like.graph.constant(x)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _swap_last(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2)


# ---------------------------------------------------------------------------
# arithmetic
# ---------------------------------------------------------------------------

def add(a: Tensor, b) -> Tensor:
    b = _coerce(b, a)
    out = Tensor(a.graph, a.data + b.data, a.requires_grad or b.requires_grad)
    if not out.requires_grad:
        return out

    def bwd(g):
        return ((a, _unbroadcast(g, a.data.shape)),
                (b, _unbroadcast(g, b.data.shape)))

    return _finish(out, bwd, (a, b), "add")


def sub(a: Tensor, b) -> Tensor:
    b = _coerce(b, a)
    out = Tensor(a.graph, a.data - b.data, a.requires_grad or b.requires_grad)
    if not out.requires_grad:
        return out

    def bwd(g):
        return ((a, _unbroadcast(g, a.data.shape)),
                (b, _unbroadcast(-g, b.data.shape)))

    return _finish(out, bwd, (a, b), "sub")


def mul(a: Tensor, b) -> Tensor:
    b = _coerce(b, a)
    out = Tensor(a.graph, a.data * b.data, a.requires_grad or b.requires_grad)
    if not out.requires_grad:
        return out

    def bwd(g):
        return ((a, _unbroadcast(g * b.data, a.data.shape)),
                (b, _unbroadcast(g * a.data, b.data.shape)))

    return _finish(out, bwd, (a, b), "mul")


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    out = Tensor(a.graph, a.data * s, a.requires_grad)
    if not out.requires_grad:
        return out

    def bwd(g):
        return ((a, g * s),)

    return _finish(out, bwd, (a,), "scale")


def square(a: Tensor) -> Tensor:
    out = Tensor(a.graph, a.data * a.data, a.requires_grad)
    if not out.requires_grad:
        return out

    def bwd(g):
        return ((a, g * (2.0 * a.data)),)

    return _finish(out, bwd, (a,), "square")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy broadcasting over leading axes.

    Gradients: dA = dC @ B^T, dB = A^T @ dC, summed over broadcast axes.
    """
    b = _coerce(b, a)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise DimensionError(
            f"matmul needs >=2-d operands, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise DimensionError(
            f"matmul inner dimensions disagree: {a.data.shape} x {b.data.shape}")
    try:
        data = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise DimensionError(
            f"matmul broadcast failed for {a.data.shape} x {b.data.shape}: {exc}") from exc
    out = Tensor(a.graph, data, a.requires_grad or b.requires_grad)
    if not out.requires_grad:
        return out

    def bwd(g):
        grads = []
        if a.requires_grad:
            grads.append((a, _unbroadcast(np.matmul(g, _swap_last(b.data)), a.data.shape)))
        if b.requires_grad:
            grads.append((b, _unbroadcast(np.matmul(_swap_last(a.data), g), b.data.shape)))
        return grads

    return _finish(out, bwd, (a, b), "matmul")


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Fused x @ w + b for 2-d weight and 1-d bias (one node, one buffer)."""
    w = _coerce(w, x)
    b = _coerce(b, x)
    if w.data.ndim != 2 or b.data.ndim != 1 or w.data.shape[1] != b.data.shape[0]:
        raise DimensionError(
            f"linear wants w (k, n) and b (n,), got {w.data.shape} and {b.data.shape}")
    if x.data.shape[-1] != w.data.shape[0]:
        raise DimensionError(
            f"linear inner dimensions disagree: {x.data.shape} x {w.data.shape}")
    data = np.matmul(x.data, w.data)
    data += b.data
    out = Tensor(x.graph, data,
                 x.requires_grad or w.requires_grad or b.requires_grad)
    if not out.requires_grad:
        return out

    def bwd(g):
        grads = []
        if x.requires_grad:
            grads.append((x, np.matmul(g, w.data.T)))
        if w.requires_grad:
            grads.append((w, _unbroadcast(np.matmul(_swap_last(x.data), g),
                                          w.data.shape)))
        if b.requires_grad:
            grads.append((b, g.reshape(-1, g.shape[-1]).sum(axis=0)))
        return grads

    return _finish(out, bwd, (x, w, b), "linear")


def dot(a: Tensor, b: Tensor) -> Tensor:
    """Scalar product of two same-shape tensors."""
    return sum_(mul(a, b))


# ---------------------------------------------------------------------------
# shape manipulation
# ---------------------------------------------------------------------------

def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(a.graph, a.data.reshape(shape), a.requires_grad)
    if not out.requires_grad:
        return out

    def bwd(g):
        return ((a, g.reshape(a.data.shape)),)

    return _finish(out, bwd, (a,), "reshape")


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = Tensor(a.graph, np.transpose(a.data, axes), a.requires_grad)
    if not out.requires_grad:
        return out

    def bwd(g):
        return ((a, np.transpose(g, inv)),)

    return _finish(out, bwd, (a,), "transpose")


def diagonal(a: Tensor) -> Tensor:
    """Main diagonal of a square matrix."""
    if a.data.ndim != 2 or a.data.shape[0] != a.data.shape[1]:
        raise DimensionError(f"diagonal expects a square matrix, got {a.data.shape}")
    out = Tensor(a.graph, np.diagonal(a.data).copy(), a.requires_grad)
    if not out.requires_grad:
        return out

    def bwd(g):
        full = np.zeros_like(a.data)
        np.fill_diagonal(full, g)
        return ((a, full),)

    return _finish(out, bwd, (a,), "diagonal")


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def _reduce_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        return (axis % ndim,)
    return tuple(ax % ndim for ax in axis)


def sum_(a: Tensor, axis=None, keepdims=False) -> Tensor:
    axes = _reduce_axes(axis, a.data.ndim)
    out = Tensor(a.graph, a.data.sum(axis=axes, keepdims=keepdims), a.requires_grad)
    if not out.requires_grad:
        return out

    def bwd(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return ((a, np.broadcast_to(g, a.data.shape).copy()),)

    return _finish(out, bwd, (a,), "sum")


def mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    axes = _reduce_axes(axis, a.data.ndim)
    count = 1
    for ax in axes:
        count *= a.data.shape[ax]
    out = Tensor(a.graph, a.data.mean(axis=axes, keepdims=keepdims), a.requires_grad)
    if not out.requires_grad:
        return out

    def bwd(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return ((a, np.broadcast_to(g / count, a.data.shape).copy()),)

    return _finish(out, bwd, (a,), "mean")


def logsumexp(a: Tensor, axis: int) -> Tensor:
    """log(sum(exp(x))) along one axis, max-shifted for stability."""
    axis = axis % a.data.ndim
    m = a.data.max(axis=axis, keepdims=True)
    shifted = np.exp(a.data - m)
    total = shifted.sum(axis=axis, keepdims=True)
    lse = m + np.log(total)
    soft = shifted / total
    out = Tensor(a.graph, np.squeeze(lse, axis=axis), a.requires_grad)
    if not out.requires_grad:
        return out

    def bwd(g):
        return ((a, np.expand_dims(g, axis) * soft),)

    return _finish(out, bwd, (a,), "logsumexp")


# ---------------------------------------------------------------------------
# nonlinear / normalization ops
# ---------------------------------------------------------------------------

def softmax(a: Tensor, axis: int) -> Tensor:
    """Exponential normalization along ``axis``; rows sum to one."""
    axis = axis % a.data.ndim
    shifted = np.exp(a.data - a.data.max(axis=axis, keepdims=True))
    y = shifted / shifted.sum(axis=axis, keepdims=True)
    out = Tensor(a.graph, y, a.requires_grad)
    if not out.requires_grad:
        return out

    def bwd(g):
        gy = g * y
        return ((a, gy - y * gy.sum(axis=axis, keepdims=True)),)

    return _finish(out, bwd, (a,), "softmax")


def layer_norm(a: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale-shift.

    Variance uses the population (1/n) convention; ``eps`` sits inside the
    square root so constant rows map to zero.
    """
    gamma = _coerce(gamma, a)
    beta = _coerce(beta, a)
    d = a.data.shape[-1]
    if gamma.data.shape != (d,) or beta.data.shape != (d,):
        raise DimensionError(
            f"layer_norm scale/shift must have shape ({d},), got "
            f"{gamma.data.shape} and {beta.data.shape}")
    mu = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(a.graph, gamma.data * xhat + beta.data,
                 a.requires_grad or gamma.requires_grad or beta.requires_grad)
    if not out.requires_grad:
        return out

    lead = tuple(range(a.data.ndim - 1))

    def bwd(g):
        grads = []
        if a.requires_grad:
            gx = g * gamma.data
            gxm = gx.mean(axis=-1, keepdims=True)
            gxxm = (gx * xhat).mean(axis=-1, keepdims=True)
            grads.append((a, inv * (gx - gxm - xhat * gxxm)))
        if gamma.requires_grad:
            grads.append((gamma, (g * xhat).sum(axis=lead)))
        if beta.requires_grad:
            grads.append((beta, g.sum(axis=lead)))
        return grads

    return _finish(out, bwd, (a, gamma, beta), "layer_norm")


def standardize(a: Tensor, eps: float = 1e-8) -> Tensor:
    """Zero-mean / unit-variance along the last axis (no scale-shift)."""
    g = a.graph
    d = a.data.shape[-1]
    ones = g.constant(np.ones(d, dtype=g.dtype))
    zeros = g.constant(np.zeros(d, dtype=g.dtype))
    return layer_norm(a, ones, zeros, eps=eps)


def l2_normalize(a: Tensor, axis: int = -1, eps: float = 1e-12) -> Tensor:
    """Scale slices along ``axis`` to unit Euclidean norm; zero slices stay zero."""
    axis = axis % a.data.ndim
    norm = np.sqrt((a.data * a.data).sum(axis=axis, keepdims=True))
    denom = np.maximum(norm, eps)
    y = a.data / denom
    out = Tensor(a.graph, y, a.requires_grad)
    if not out.requires_grad:
        return out

    live = (norm > eps).astype(a.data.dtype)

    def bwd(g):
        inner = (g * a.data).sum(axis=axis, keepdims=True)
        return ((a, g / denom - live * a.data * inner / (denom * denom * denom)),)

    return _finish(out, bwd, (a,), "l2_normalize")


def gelu(a: Tensor) -> Tensor:
    """tanh-approximation GELU."""
    x = a.data
    xx = x * x
    inner = GELU_C0 * (x + GELU_C1 * (xx * x))  # x**3 hits the slow pow loop
    t = np.tanh(inner)
    out = Tensor(a.graph, 0.5 * x * (1.0 + t), a.requires_grad)
    if not out.requires_grad:
        return out

    def bwd(g):
        dinner = GELU_C0 * (1.0 + 3.0 * GELU_C1 * xx)
        dx = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
        return ((a, g * dx),)

    return _finish(out, bwd, (a,), "gelu")


def dropout(a: Tensor, p: float, gen: np.random.Generator) -> Tensor:
    """Inverted dropout; the mask is fixed at op creation (draws from ``gen``)."""
    if not 0.0 <= p < 1.0:
        raise ContractError(f"dropout rate must be in [0, 1), got {p}")
    if p == 0.0:
        return a
    draws = gen.random(a.data.shape, dtype=a.data.dtype)
    mask = (draws >= p).astype(a.data.dtype)
    mask /= 1.0 - p
    out = Tensor(a.graph, a.data * mask, a.requires_grad)
    if not out.requires_grad:
        return out

    def bwd(g):
        return ((a, g * mask),)

    return _finish(out, bwd, (a,), "dropout")
