"""
Differentiable Operations
Forward computation plus hand-written backward rule for every op.
"""
import numpy as np

from ptychoprior.errors import DimensionError, DomainError
from ptychoprior.nn.tensor import Tensor, record
from ptycho_config import PtychoConfig


def as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor.wrap(np.asarray(value, dtype=np.float64))


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_check(a, b, op_name):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op_name}: shapes {a.shape} and {b.shape} are incompatible") from None


# ---------------------------------------------------------------- elementwise

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check(a, b, 'add')

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    return record(a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check(a, b, 'sub')

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)
    return record(a.data - b.data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check(a, b, 'mul')

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)
    return record(a.data * b.data, (a, b), backward)


def scale(a, factor):
    a = as_tensor(a)
    factor = float(factor)
    return record(a.data * factor, (a,), lambda g: (g * factor,))


def square(a):
    a = as_tensor(a)
    return record(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,))


def sqrt(a):
    a = as_tensor(a)
    if np.any(a.data < 0):
        raise DomainError("sqrt of a negative value")
    root = np.sqrt(a.data)

    def backward(g):
        # zero subgradient where the input is exactly 0
        safe = np.where(root > 0, root, 1.0)
        return (np.where(root > 0, 0.5 * g / safe, 0.0),)
    return record(root, (a,), backward)


def abs(a):  # noqa: A001 - mirrors the op list
    a = as_tensor(a)
    return record(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def log(a):
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise DomainError("log needs strictly positive input; floor it first")
    return record(np.log(a.data), (a,), lambda g: (g / a.data,))


def leaky_relu(a, slope=PtychoConfig.LEAKY_SLOPE):
    a = as_tensor(a)
    positive = a.data > 0
    return record(np.where(positive, a.data, slope * a.data), (a,),
                  lambda g: (np.where(positive, g, slope * g),))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(a):
    a = as_tensor(a)
    s = _sigmoid(a.data)
    return record(s, (a,), lambda g: (g * s * (1.0 - s),))


def log_sigmoid(a):
    """log(sigmoid(a)) without overflow"""
    a = as_tensor(a)
    return record(-np.logaddexp(0.0, -a.data), (a,), lambda g: (g * _sigmoid(-a.data),))


# ---------------------------------------------------------------- reductions

def sum(a, axis=None):  # noqa: A001
    a = as_tensor(a)
    data = np.sum(a.data, axis=axis)

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)
    return record(data, (a,), backward)


def mean(a):
    a = as_tensor(a)
    return scale(sum(a), 1.0 / a.data.size)


# ---------------------------------------------------------------- shapes

def reshape(a, shape):
    a = as_tensor(a)
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {a.shape} as {shape}") from None
    return record(data, (a,), lambda g: (g.reshape(a.shape),))


def diff(a, axis):
    """Forward differences a[k+1] - a[k] along `axis` (no wrap)"""
    a = as_tensor(a)
    if a.shape[axis] < 2:
        raise DimensionError(f"diff needs at least two samples along axis {axis}, got {a.shape}")
    data = np.diff(a.data, axis=axis)

    def backward(g):
        pad = [(0, 0)] * g.ndim
        pad[axis] = (1, 0)
        head = np.pad(g, pad)
        pad[axis] = (0, 1)
        return (head - np.pad(g, pad),)
    return record(data, (a,), backward)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} are incompatible")

    def backward(g):
        return g @ b.data.T, a.data.T @ g
    return record(a.data @ b.data, (a, b), backward)


def upsample_nearest(a):
    """x2 nearest-neighbour upsampling of the last two axes"""
    a = as_tensor(a)
    data = a.data.repeat(2, axis=-2).repeat(2, axis=-1)
    h, w = a.shape[-2], a.shape[-1]

    def backward(g):
        return (g.reshape(g.shape[:-2] + (h, 2, w, 2)).sum(axis=(-3, -1)),)
    return record(data, (a,), backward)


def avgpool(a):
    """x2 average pooling of the last two axes"""
    a = as_tensor(a)
    h, w = a.shape[-2], a.shape[-1]
    if h % 2 or w % 2:
        raise DimensionError(f"avgpool needs even spatial size, got {a.shape}")
    data = a.data.reshape(a.shape[:-2] + (h // 2, 2, w // 2, 2)).mean(axis=(-3, -1))

    def backward(g):
        return (0.25 * g.repeat(2, axis=-2).repeat(2, axis=-1),)
    return record(data, (a,), backward)


def conv2d(x, weight, bias=None):
    """3x3 convolution, stride 1, zero padding 1; x is (B, C, H, W)"""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.data.ndim != 4 or weight.data.ndim != 4 or weight.shape[1] != x.shape[1] \
            or weight.shape[2:] != (3, 3):
        raise DimensionError(f"conv2d: input {x.shape} does not match kernel {weight.shape}")
    inputs = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (weight.shape[0],):
            raise DimensionError(f"conv2d: bias {bias.shape} does not match kernel {weight.shape}")
        inputs = (x, weight, bias)
    batch, _, height, width = x.shape
    padded = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))
    out = np.zeros((batch, weight.shape[0], height, width))
    for i in range(3):
        for j in range(3):
            out += np.einsum('bchw,oc->bohw', padded[:, :, i:i + height, j:j + width],
                             weight.data[:, :, i, j], optimize=True)
    if bias is not None:
        out += bias.data[None, :, None, None]

    def backward(g):
        grad_padded = np.zeros_like(padded)
        grad_weight = np.zeros_like(weight.data)
        for i in range(3):
            for j in range(3):
                window = padded[:, :, i:i + height, j:j + width]
                grad_weight[:, :, i, j] = np.einsum('bohw,bchw->oc', g, window, optimize=True)
                grad_padded[:, :, i:i + height, j:j + width] += np.einsum(
                    'bohw,oc->bchw', g, weight.data[:, :, i, j], optimize=True)
        grads = (grad_padded[:, :, 1:-1, 1:-1], grad_weight)
        if bias is not None:
            grads += (g.sum(axis=(0, 2, 3)),)
        return grads
    return record(out, inputs, backward)
