"""
tensor.py - DiffTensor, the tape of recorded primitives, and reverse-mode backward
"""

import contextlib
import contextvars
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from cls2det.errors import ShapeError

Number = Union[int, float]

_GRAD_ENABLED = contextvars.ContextVar("cls2det_grad_enabled", default=True)


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording: outputs are constants (used for frozen teacher passes)."""
    token = _GRAD_ENABLED.set(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.reset(token)


def grad_enabled() -> bool:
    return _GRAD_ENABLED.get()


@dataclass(eq=False)
class TapeEntry:
    """One recorded primitive application: inputs, output and the backward rule."""
    op: str
    inputs: Tuple["DiffTensor", ...]
    output: "DiffTensor"
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class DiffTensor:
    """
    Dense float64 tensor with an optional gradient slot.

    Values are never mutated by operations; only `grad` of leaves changes,
    and only by accumulation during a backward pass.
    """
    __slots__ = ("data", "grad", "requires_grad", "name", "_entry")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        if isinstance(data, DiffTensor):
            data = data.data
        self.data = np.array(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._entry: Optional[TapeEntry] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._entry is None

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "DiffTensor":
        return DiffTensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def backward(self, grad: Optional[np.ndarray] = None):
        backward(self, grad)

    def __repr__(self):
        return f"DiffTensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operators delegate to ops; imported lazily to keep this module the root of the graph.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(self, other)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.add(ops.neg(self), other)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __truediv__(self, other):
        from . import ops
        if isinstance(other, DiffTensor):
            raise ShapeError("division is only defined by a scalar constant")
        return ops.scale(self, 1.0 / float(other))

    def __getitem__(self, index):
        from . import ops
        return ops.index(self, index)


def as_tensor(x) -> DiffTensor:
    return x if isinstance(x, DiffTensor) else DiffTensor(x)


def record(op: str, out_data: np.ndarray, inputs: Sequence[DiffTensor],
           backward_rule: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]) -> DiffTensor:
    """Wrap a primitive's forward value, attaching a tape entry when any input needs a gradient."""
    needs = grad_enabled() and any(t.requires_grad for t in inputs)
    out = DiffTensor(out_data, requires_grad=needs)
    if needs:
        out._entry = TapeEntry(op, tuple(inputs), out, backward_rule)
    return out


class Tape:
    """
    Topologically ordered entries reachable from an output.

    Every input of entry i is a leaf or the output of some entry j < i.
    """

    def __init__(self, entries: Optional[List[TapeEntry]] = None):
        self.entries: List[TapeEntry] = entries or []

    def __len__(self):
        return len(self.entries)

    @classmethod
    def from_output(cls, out: DiffTensor) -> "Tape":
        entries: List[TapeEntry] = []
        visited = set()
        stack = [(out, False)]
        # iterative post-order DFS; deep student graphs overflow the recursion limit
        while stack:
            node, expanded = stack.pop()
            entry = node._entry
            if entry is None:
                continue
            if expanded:
                entries.append(entry)
                continue
            if id(entry) in visited:
                continue
            visited.add(id(entry))
            stack.append((node, True))
            for parent in reversed(entry.inputs):
                if parent._entry is not None and id(parent._entry) not in visited:
                    stack.append((parent, False))
        return cls(entries)

    def backward(self, out: DiffTensor, seed: np.ndarray):
        grads: Dict[int, np.ndarray] = {id(out): seed}
        for entry in reversed(self.entries):
            g = grads.pop(id(entry.output), None)
            if g is None:
                continue
            input_grads = entry.backward(g)
            for inp, ig in zip(entry.inputs, input_grads):
                if ig is None or not inp.requires_grad:
                    continue
                if ig.shape != inp.shape:
                    raise ShapeError(f"{entry.op} backward produced {ig.shape} for input {inp.shape}")
                if inp._entry is None:
                    _accumulate_leaf(inp, ig)
                else:
                    key = id(inp)
                    grads[key] = grads[key] + ig if key in grads else ig


def _accumulate_leaf(leaf: DiffTensor, g: np.ndarray):
    if leaf.grad is None:
        leaf.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        leaf.grad = leaf.grad + g


def backward(out: DiffTensor, grad: Optional[np.ndarray] = None):
    """Accumulate d(out)/d(leaf) into every reachable leaf that requires a gradient."""
    if not out.requires_grad:
        return
    if grad is None:
        if out.size != 1:
            raise ShapeError(f"backward() without a seed needs a scalar output, got {out.shape}")
        grad = np.ones_like(out.data)
    seed = np.asarray(grad, dtype=np.float64)
    if seed.shape != out.shape:
        raise ShapeError(f"seed gradient {seed.shape} does not match output {out.shape}")
    if out._entry is None:
        _accumulate_leaf(out, seed)
        return
    Tape.from_output(out).backward(out, seed)
