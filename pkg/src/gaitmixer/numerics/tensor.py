"""Dense float64 tensors with a recorded operation graph for reverse-mode AD."""
from __future__ import annotations

import contextlib
import itertools

import numpy as np

from ..errors import GraphError

_GRAD_ENABLED = True
_ids = itertools.count()


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation, optimizer updates)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """An n-d float64 array plus an optional gradient buffer.

    Non-leaf tensors remember the parents they were computed from and a
    closure mapping the output gradient to one gradient per parent.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward",
                 "_retain", "_consumed", "_id", "__weakref__")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.op = "leaf"
        self._parents = ()
        self._backward = None
        self._retain = False
        self._consumed = False
        self._id = next(_ids)

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def retain_grad(self) -> "Tensor":
        """Keep the gradient of this intermediate after backward (used for Grad-CAM)."""
        self._retain = True
        return self

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from . import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def backward(self) -> "Graph":
        return backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_node(data, parents, backward_fn, op: str) -> Tensor:
    """Wrap an op result, recording it in the graph when any parent needs grad."""
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.op = op
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


class Graph:
    """Operations reachable from a loss, in topological order.

    ``ops`` lists every non-leaf tensor after all of its inputs, so a
    reverse walk visits each operation exactly once after all its consumers.
    """

    def __init__(self, root: Tensor):
        self.root = root
        self.ops: list[Tensor] = []
        self.leaves: list[Tensor] = []
        seen = set()
        # iterative post-order DFS; model graphs are too deep for recursion
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                if node.is_leaf:
                    self.leaves.append(node)
                else:
                    self.ops.append(node)
                continue
            if node._id in seen:
                continue
            seen.add(node._id)
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and p._id not in seen:
                    stack.append((p, False))

    def __len__(self) -> int:
        return len(self.ops)


def backward(loss: Tensor) -> Graph:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every requires_grad leaf.

    Gradients add onto existing leaf buffers, so shared parameters and
    repeated subexpressions sum correctly. A graph can be walked once; the
    closures are released afterwards.
    """
    if loss.data.size != 1:
        raise GraphError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._consumed:
        raise GraphError("backward already ran on this graph; rebuild the forward pass")
    if not loss.requires_grad:
        raise GraphError("loss does not depend on any tensor that requires grad")

    graph = Graph(loss)
    grads = {loss._id: np.ones_like(loss.data)}
    for node in reversed(graph.ops):
        g = grads.pop(node._id, None)
        if g is None:
            continue
        if node._retain:
            node.grad = g if node.grad is None else node.grad + g
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            if pg.shape != parent.data.shape:
                raise GraphError(
                    f"op {node.op} produced grad {pg.shape} for input {parent.shape}")
            if parent.is_leaf:
                if parent.grad is None:
                    parent.grad = np.array(pg, dtype=np.float64, copy=True)
                else:
                    parent.grad += pg
            elif parent._id in grads:
                grads[parent._id] = grads[parent._id] + pg
            else:
                grads[parent._id] = pg
    for node in graph.ops:
        node._backward = None
        node._parents = ()
        node._consumed = True
    return graph
