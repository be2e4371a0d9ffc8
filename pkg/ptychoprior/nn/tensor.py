"""
Tensor and Tape
Real-valued arrays with reverse-mode gradient recording.

Operations are recorded only while a Tape is active (`with Tape():`) and at
least one input requires a gradient. A tape belongs to the thread that opened
it; worker threads never see another thread's tape.
"""
import threading

import numpy as np

from ptychoprior.errors import GradientError

_local = threading.local()


def current_tape():
    return getattr(_local, 'tape', None)


class Tensor:
    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        self.node_id = None
        self._tape = None

    @classmethod
    def wrap(cls, array):
        """Tensor around `array` without copying it"""
        tensor = cls.__new__(cls)
        tensor.data = np.asarray(array, dtype=np.float64)
        tensor.requires_grad = False
        tensor.grad = None
        tensor.name = None
        tensor.node_id = None
        tensor._tape = None
        return tensor

    @property
    def shape(self):
        return self.data.shape

    @property
    def is_leaf(self):
        return self.node_id is None

    def item(self):
        if self.data.size != 1:
            raise GradientError(f"item() needs a single value, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data.copy())

    def accumulate(self, grad):
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64, copy=True)
        else:
            self.grad = self.grad + grad

    # Operator sugar, resolved lazily to avoid an import cycle
    def __add__(self, other):
        from ptychoprior.nn import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from ptychoprior.nn import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from ptychoprior.nn import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from ptychoprior.nn import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from ptychoprior.nn import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from ptychoprior.nn import ops
        return ops.matmul(self, other)

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ''
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"


class _Node:
    __slots__ = ('output', 'inputs', 'backward')

    def __init__(self, output, inputs, backward):
        self.output = output
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Ordered record of differentiable operations"""

    def __init__(self):
        self.nodes = []
        self._previous = None

    def __enter__(self):
        self._previous = current_tape()
        _local.tape = self
        return self

    def __exit__(self, exc_type, exc, tb):
        _local.tape = self._previous
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, output, inputs, backward):
        output.node_id = len(self.nodes)
        output._tape = self
        output.requires_grad = True
        self.nodes.append(_Node(output, inputs, backward))

    def backward(self, loss):
        """Populate `.grad` of every leaf that requires a gradient"""
        if loss.data.size != 1:
            raise GradientError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss.node_id is None or loss._tape is not self:
            raise GradientError("loss was not recorded on this tape")
        grads = {loss.node_id: np.ones_like(loss.data)}
        # Node ids are assigned in recording order, so descending ids are a
        # reverse topological order and every node is visited once.
        for node_id in range(loss.node_id, -1, -1):
            grad = grads.pop(node_id, None)
            if grad is None:
                continue
            node = self.nodes[node_id]
            input_grads = node.backward(grad)
            for tensor, input_grad in zip(node.inputs, input_grads):
                if input_grad is None or not isinstance(tensor, Tensor) or not tensor.requires_grad:
                    continue
                if tensor._tape is self and tensor.node_id is not None:
                    if tensor.node_id in grads:
                        grads[tensor.node_id] = grads[tensor.node_id] + input_grad
                    else:
                        grads[tensor.node_id] = input_grad
                elif tensor.is_leaf:
                    tensor.accumulate(input_grad)


def backward(loss):
    if not isinstance(loss, Tensor) or loss._tape is None:
        raise GradientError("loss has no recorded graph (was it computed inside `with Tape():`?)")
    loss._tape.backward(loss)


def record(data, inputs, backward_fn):
    """Wrap `data` in a Tensor and record it if any input needs a gradient"""
    out = Tensor.wrap(data)
    tape = current_tape()
    if tape is not None and any(isinstance(t, Tensor) and t.requires_grad for t in inputs):
        tape.record(out, inputs, backward_fn)
    return out
