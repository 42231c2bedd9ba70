"""Dense float64 tensor with reverse-mode differentiation.

A Tensor wraps a row-major numpy buffer plus an optional gradient buffer.
Operators (in ops.py) record the graph as they run: each result keeps
references to its parent tensors and a closure that propagates the output
gradient back to them, tagged with the name of the primitive for debugging.
backward() replays those closures in reverse topological order, accumulating
gradients additively; calling it again on a fresh graph keeps accumulating
until gradients are cleared.
"""

from __future__ import annotations

import numpy as np


class NonFiniteValueError(ValueError):
    """A value that must be finite (offsets, logits, coordinates) was not;
    during training this signals divergence."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_rule")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self._rule = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        rule = f", rule={self._rule}" if self._rule else ""
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad}{rule})"

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of {self.data.size} elements")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def accumulate_grad(self, g: np.ndarray):
        if g.shape != self.data.shape:
            raise ValueError(
                f"gradient shape {g.shape} does not match tensor shape {self.data.shape}"
            )
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def backward(self):
        """Populate grad on every reachable tensor that wants one.

        The loss must be scalar; the seed gradient is 1. Gradient buffers
        accumulate across calls until zero_grad() is invoked.
        """
        if self.data.size != 1:
            raise ValueError(
                f"backward() requires a scalar loss, got shape {self.data.shape}"
            )
        topo = _toposort(self)
        self.accumulate_grad(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Convenience operators used by tests and the training loop; the full
    # operator set lives in ops.py.
    def __add__(self, other):
        from . import ops

        return ops.add(self, other)

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, other)

    def __mul__(self, other):
        from . import ops

        if isinstance(other, (int, float)):
            return ops.scale(self, float(other))
        return ops.mul(self, other)

    __rmul__ = __mul__


def _toposort(root: Tensor) -> list[Tensor]:
    """Iterative post-order over the recorded graph (deep nets would blow
    the recursion limit)."""
    topo = []
    visited = {id(root)}
    stack = [(root, iter(root._parents))]
    while stack:
        node, parents = stack[-1]
        advanced = False
        for p in parents:
            if id(p) not in visited:
                visited.add(id(p))
                stack.append((p, iter(p._parents)))
                advanced = True
                break
        if not advanced:
            topo.append(node)
            stack.pop()
    return topo


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def record(out: Tensor, parents: tuple[Tensor, ...], rule: str, backward_fn):
    """Attach tape bookkeeping to an op result when any input needs it."""
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
        out._rule = rule
    return out


def zero_grads(params) -> None:
    for p in params.values() if isinstance(params, dict) else params:
        p.zero_grad()
