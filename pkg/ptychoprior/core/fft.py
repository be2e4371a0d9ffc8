"""
Radix-2 FFT
Orthonormal 2D transforms for power-of-two square arrays.

Each 1D pass is an iterative decimation-in-time Cooley-Tukey transform
vectorised with numpy over every other axis, scaled by 1/sqrt(M), so the
2D transform is unitary and Parseval holds exactly up to rounding.
"""
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache

import numpy as np

from ptychoprior.core.fields import ComplexField
from ptychoprior.errors import DimensionError


def is_power_of_two(n):
    return n >= 1 and (n & (n - 1)) == 0


@lru_cache(maxsize=None)
def _bit_reversal(n):
    bits = n.bit_length() - 1
    indices = np.arange(n)
    reversed_indices = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        reversed_indices |= ((indices >> b) & 1) << (bits - 1 - b)
    return reversed_indices


@lru_cache(maxsize=None)
def _twiddles(size, inverse):
    sign = 1.0 if inverse else -1.0
    return np.exp(sign * 2j * np.pi * np.arange(size // 2) / size)


def _fft_last_axis(a, inverse):
    n = a.shape[-1]
    lead = a.shape[:-1]
    out = a[..., _bit_reversal(n)].astype(np.complex128)
    size = 2
    while size <= n:
        half = size // 2
        blocks = out.reshape(lead + (n // size, size))
        even = blocks[..., :half]
        odd = blocks[..., half:] * _twiddles(size, inverse)
        out = np.concatenate([even + odd, even - odd], axis=-1).reshape(lead + (n,))
        size *= 2
    return out / np.sqrt(n)


def _check_square_pow2(shape):
    if len(shape) < 2 or shape[-1] != shape[-2] or not is_power_of_two(shape[-1]):
        raise DimensionError(f"FFT needs square power-of-two frames, got shape {tuple(shape)}")


def _transform(a, inverse):
    rows = _fft_last_axis(a, inverse)
    cols = _fft_last_axis(np.swapaxes(rows, -1, -2), inverse)
    return np.swapaxes(cols, -1, -2)


def _chunked(a, inverse, workers):
    if workers <= 1 or a.ndim < 3 or a.shape[0] < 2:
        return _transform(a, inverse)
    # Frames are transformed independently, so chunking never changes a bit
    chunks = np.array_split(np.arange(a.shape[0]), min(workers, a.shape[0]))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda idx: _transform(a[idx], inverse), chunks))
    return np.concatenate(parts, axis=0)


def fft2_array(a, workers=1):
    """Orthonormal 2D DFT over the last two axes of `a`"""
    a = np.asarray(a)
    _check_square_pow2(a.shape)
    return _chunked(a, False, workers)


def ifft2_array(a, workers=1):
    """Inverse of fft2_array"""
    a = np.asarray(a)
    _check_square_pow2(a.shape)
    return _chunked(a, True, workers)


def fft2(field):
    return ComplexField(fft2_array(field.data))


def ifft2(field):
    return ComplexField(ifft2_array(field.data))
