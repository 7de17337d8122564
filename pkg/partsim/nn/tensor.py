"""
Tensors and the reverse-mode tape.

A Tensor wraps a read-only numpy array. Operations executed while a Tape is
active record themselves when any input requires gradients; `Tape.gradient`
walks the record backwards without touching the tensors, so one tape can be
differentiated any number of times.
"""

import threading
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from partsim.errors import ContractError

_local = threading.local()
_DEFAULT_DTYPE = np.float32


def default_dtype():
    return getattr(_local, 'dtype', _DEFAULT_DTYPE)


def set_default_dtype(dtype):
    """Process-wide default, used by create_app from the configuration."""
    global _DEFAULT_DTYPE
    _DEFAULT_DTYPE = np.dtype(dtype).type


@contextmanager
def precision(dtype):
    """Run a block with another working dtype (float64 for gradient checks)."""
    previous = getattr(_local, 'dtype', None)
    _local.dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        if previous is None:
            del _local.dtype
        else:
            _local.dtype = previous


class Tensor:
    __slots__ = ('data', 'requires_grad', 'name')

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        array = np.array(data, dtype=dtype or default_dtype())
        array.setflags(write=False)
        self.data = array
        self.requires_grad = bool(requires_grad)
        self.name = name

    @classmethod
    def wrap(cls, array, requires_grad=False):
        """Adopt an array produced by an operation without copying it."""
        tensor = cls.__new__(cls)
        array = np.asarray(array)
        if array.flags.writeable and array.base is None:
            array.setflags(write=False)
        elif array.flags.writeable:
            array = array.copy()
            array.setflags(write=False)
        tensor.data = array
        tensor.requires_grad = requires_grad
        tensor.name = None
        return tensor

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data.copy()

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float('nan')

    def __len__(self):
        return self.data.shape[0]

    def __repr__(self):
        label = f' {self.name}' if self.name else ''
        grad = ', requires_grad' if self.requires_grad else ''
        return f'<Tensor{label} shape={self.shape} dtype={self.dtype}{grad}>'

    def __add__(self, other):
        from partsim.nn import ops
        return ops.add(self, other)

    def __sub__(self, other):
        from partsim.nn import ops
        return ops.sub(self, other)

    def __mul__(self, other):
        from partsim.nn import ops
        return ops.mul(self, other)

    def __matmul__(self, other):
        from partsim.nn import ops
        return ops.matmul(self, other)

    def __neg__(self):
        from partsim.nn import ops
        return ops.neg(self)


def as_tensor(value):
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


@dataclass(frozen=True)
class TapeEntry:
    op: str
    inputs: tuple
    output: Tensor
    backward: object


def active_tape():
    stack = getattr(_local, 'tapes', None)
    return stack[-1] if stack else None


class Tape:
    """Ordered record of operations in execution (topological) order."""

    def __init__(self):
        self.entries = []

    def __enter__(self):
        if not hasattr(_local, 'tapes'):
            _local.tapes = []
        _local.tapes.append(self)
        return self

    def __exit__(self, *exc):
        _local.tapes.pop()
        return False

    def __len__(self):
        return len(self.entries)

    def record(self, op, inputs, output, backward):
        self.entries.append(TapeEntry(op=op, inputs=tuple(inputs), output=output, backward=backward))

    def gradient(self, loss: Tensor, sources):
        """d loss / d source for every source, as arrays shaped like the sources.

        Sources the loss does not depend on get zero gradients.
        """
        if loss.size != 1:
            raise ContractError(f'loss must be a scalar, got shape {loss.shape}')
        sources = list(sources)
        produced = {id(entry.output) for entry in self.entries}
        if id(loss) not in produced and all(s is not loss for s in sources):
            raise ContractError('loss was not computed on this tape')
        grads = {id(loss): np.ones_like(loss.data)}
        for entry in reversed(self.entries):
            upstream = grads.get(id(entry.output))
            if upstream is None:
                continue
            for tensor, grad in zip(entry.inputs, entry.backward(upstream)):
                if grad is None or not tensor.requires_grad:
                    continue
                key = id(tensor)
                grads[key] = grad if key not in grads else grads[key] + grad
        return [np.array(grads[id(s)]) if id(s) in grads else np.zeros_like(s.data) for s in sources]


def emit(op, data, inputs, backward):
    """Wrap an op result and record it when any input requires gradients."""
    requires_grad = any(t.requires_grad for t in inputs)
    output = Tensor.wrap(data, requires_grad)
    if requires_grad:
        tape = active_tape()
        if tape is not None:
            tape.record(op, inputs, output, backward)
    return output
