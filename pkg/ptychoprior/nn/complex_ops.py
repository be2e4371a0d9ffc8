"""
Complex Field Operations
Complex values travel as real tensors with a trailing (re, im) axis of size 2.
The final losses are real and the free variables are real, so the backward
rules below are plain real-valued chain rules on the paired components.
"""
import numpy as np

from ptychoprior.core.fft import fft2_array, ifft2_array
from ptychoprior.errors import DimensionError
from ptychoprior.nn.ops import as_tensor
from ptychoprior.nn.tensor import record


def to_complex(pair):
    return pair[..., 0] + 1j * pair[..., 1]


def to_pair(values):
    return np.stack([values.real, values.imag], axis=-1)


def expj(phase):
    """exp(j * phase) for a real phase tensor"""
    phase = as_tensor(phase)
    cos, sin = np.cos(phase.data), np.sin(phase.data)

    def backward(g):
        return (g[..., 1] * cos - g[..., 0] * sin,)
    return record(np.stack([cos, sin], axis=-1), (phase,), backward)


def window_indices(positions, size, bound):
    positions = np.asarray(positions, dtype=np.int64).reshape(-1, 2)
    if np.any(positions < 0) or np.any(positions + size > bound):
        raise DimensionError(f"probe window of size {size} leaves the {bound}x{bound} object")
    offsets = np.arange(size)
    rows = positions[:, 0:1] + offsets
    cols = positions[:, 1:2] + offsets
    return rows[:, :, None], cols[:, None, :]


def crop_windows(field, positions, size):
    """Gather (K, M, M, 2) probe windows from an (N, N, 2) field"""
    field = as_tensor(field)
    rows, cols = window_indices(positions, size, field.shape[0])
    if field.shape[0] != field.shape[1]:
        raise DimensionError(f"crop_windows needs a square field, got {field.shape}")

    def backward(g):
        grad = np.zeros_like(field.data)
        # np.add.at accumulates in index order, so overlaps sum deterministically
        np.add.at(grad, (rows, cols), g)
        return (grad,)
    return record(field.data[rows, cols], (field,), backward)


def cmul_const(field, constant):
    """Multiply a paired field by a fixed complex array (e.g. the probe)"""
    field = as_tensor(field)
    constant = np.asarray(constant, dtype=np.complex128)
    try:
        np.broadcast_shapes(field.shape[:-1], constant.shape)
    except ValueError:
        raise DimensionError(f"cmul_const: {field.shape[:-1]} vs {constant.shape}") from None
    cr, ci = constant.real, constant.imag
    re, im = field.data[..., 0], field.data[..., 1]
    data = np.stack([cr * re - ci * im, cr * im + ci * re], axis=-1)

    def backward(g):
        gr, gi = g[..., 0], g[..., 1]
        return (np.stack([cr * gr + ci * gi, cr * gi - ci * gr], axis=-1),)
    return record(data, (field,), backward)


def fft2c(field, workers=1):
    """Orthonormal 2D DFT of a paired (..., M, M, 2) field"""
    field = as_tensor(field)
    spectrum = fft2_array(to_complex(field.data), workers)

    def backward(g):
        # adjoint of a unitary transform is its inverse
        return (to_pair(ifft2_array(to_complex(g), workers)),)
    return record(to_pair(spectrum), (field,), backward)


def abs2(field):
    """Squared modulus of a paired field"""
    field = as_tensor(field)
    re, im = field.data[..., 0], field.data[..., 1]

    def backward(g):
        return (2.0 * field.data * g[..., None],)
    return record(re * re + im * im, (field,), backward)
