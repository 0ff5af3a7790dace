"""Differentiable arrays and the reverse-mode tape they record onto."""

from __future__ import annotations

import threading
from typing import Callable, Iterator, Sequence

import numpy as np

_local = threading.local()


class ShapeError(ValueError):
    """Operand shapes do not satisfy a kernel's shape rule."""

    def __init__(self, op: str, *shapes: Sequence[int], detail: str = ""):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        msg = f"{op}: incompatible shapes " + " and ".join(str(s) for s in self.shapes)
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class NonFiniteError(FloatingPointError):
    """A kernel produced NaN or Inf."""

    def __init__(self, op: str):
        self.op = op
        super().__init__(f"{op}: non-finite value in output")


class TapeError(RuntimeError):
    pass


def active_tape() -> "Tape | None":
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


class DiffArray:
    """An n-dimensional float64 array that may carry a node on a :class:`Tape`.

    Values are read-only; operations always build new arrays.
    """

    __slots__ = ("value", "requires_grad", "node", "tape", "name", "__weakref__")
    __array_priority__ = 1000

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        arr = np.array(value, dtype=np.float64)
        arr.flags.writeable = False
        self.value = arr
        self.requires_grad = requires_grad
        self.node: int | None = None
        self.tape: Tape | None = None
        self.name = name

    @classmethod
    def _wrap(cls, value: np.ndarray) -> "DiffArray":
        out = cls.__new__(cls)
        value = np.asarray(value, dtype=np.float64)
        if value.flags.writeable and value.base is None:
            value.flags.writeable = False
        out.value = value
        out.requires_grad = False
        out.node = None
        out.tape = None
        out.name = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def size(self) -> int:
        return self.value.size

    def numpy(self) -> np.ndarray:
        return self.value

    def item(self) -> float:
        return float(self.value.reshape(-1)[0]) if self.value.size == 1 else float(self.value)

    def detach(self) -> "DiffArray":
        return DiffArray._wrap(self.value)

    def __repr__(self) -> str:
        tag = f", name={self.name!r}" if self.name else ""
        return f"DiffArray(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    def __len__(self) -> int:
        return self.shape[0]

    # operator sugar; kernels live in ops.py
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __pow__(self, exponent: float):
        from . import ops
        return ops.power(self, exponent)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __rmatmul__(self, other):
        from . import ops
        return ops.matmul(other, self)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)

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

    @property
    def T(self):
        return self.transpose()

    def sum(self, axis=None, keepdims: bool = False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)


def Parameter(value, name: str | None = None) -> DiffArray:
    """A leaf array that gradients are accumulated for."""
    return DiffArray(value, requires_grad=True, name=name)


def as_array(x) -> DiffArray:
    if isinstance(x, DiffArray):
        return x
    return DiffArray._wrap(np.asarray(x, dtype=np.float64))


class _Record:
    __slots__ = ("op", "out", "inputs", "vjp")

    def __init__(self, op: str, out: int, inputs: tuple[DiffArray, ...], vjp: Callable):
        self.op = op
        self.out = out
        self.inputs = inputs
        self.vjp = vjp


class Gradients:
    """Gradients keyed by the arrays they belong to (identity, not value)."""

    def __init__(self):
        self._items: dict[int, tuple[DiffArray, np.ndarray]] = {}

    def _set(self, arr: DiffArray, grad: np.ndarray) -> None:
        self._items[id(arr)] = (arr, grad)

    def __getitem__(self, arr: DiffArray) -> np.ndarray:
        try:
            return self._items[id(arr)][1]
        except KeyError:
            raise KeyError(f"no gradient recorded for {arr!r}") from None

    def get(self, arr: DiffArray, default=None):
        item = self._items.get(id(arr))
        return default if item is None else item[1]

    def __contains__(self, arr: DiffArray) -> bool:
        return id(arr) in self._items

    def __len__(self) -> int:
        return len(self._items)

    def items(self) -> Iterator[tuple[DiffArray, np.ndarray]]:
        return iter(self._items.values())


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager; every kernel evaluated inside it whose inputs
    require gradients appends a record::

        with Tape() as tape:
            loss = (w * w).sum()
        grads = tape.backward(loss)

    Leaf node ids are kept on the tape, so read-only parameters can be shared
    by tapes running in different threads.
    """

    def __init__(self):
        self.records: list[_Record] = []
        self._leaves: dict[int, tuple[DiffArray, int]] = {}
        self._counter = 0

    def __enter__(self) -> "Tape":
        stack = getattr(_local, "stack", None)
        if stack is None:
            stack = _local.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _local.stack.pop()

    def node_of(self, arr: DiffArray) -> int | None:
        if arr.tape is self:
            return arr.node
        leaf = self._leaves.get(id(arr))
        return leaf[1] if leaf is not None and leaf[0] is arr else None

    def record(self, op: str, out: DiffArray, inputs: tuple[DiffArray, ...], vjp: Callable) -> None:
        for x in inputs:
            if x.requires_grad and self.node_of(x) is None:
                self._counter += 1
                self._leaves[id(x)] = (x, self._counter)
        self._counter += 1
        out.requires_grad = True
        out.node = self._counter
        out.tape = self
        self.records.append(_Record(op, out.node, inputs, vjp))

    def backward(self, root: DiffArray) -> Gradients:
        """Reverse sweep from a scalar ``root``; returns gradients for every leaf."""
        if root.size != 1:
            raise TapeError(f"backward needs a scalar root, got shape {root.shape}")
        if root.tape is not self:
            raise TapeError("root was not produced on this tape")
        grads: dict[int, np.ndarray] = {root.node: np.ones(root.shape)}
        for rec in reversed(self.records):
            g = grads.pop(rec.out, None)
            if g is None:
                continue
            in_grads = rec.vjp(g)
            for x, gx in zip(rec.inputs, in_grads):
                if gx is None or not x.requires_grad:
                    continue
                node = self.node_of(x)
                if node is None or node >= rec.out:
                    raise TapeError(f"cycle or out-of-order input at op {rec.op!r}")
                if gx.shape != x.shape:
                    raise TapeError(f"{rec.op}: gradient shape {gx.shape} != input shape {x.shape}")
                prev = grads.get(node)
                grads[node] = gx if prev is None else prev + gx
        out = Gradients()
        for leaf, node in self._leaves.values():
            g = grads.get(node)
            out._set(leaf, g if g is not None else np.zeros(leaf.shape))
        return out
