"""
PTYF Array Format
Little-endian binary container for real and complex arrays.

Layout: magic b"PTYF" | version u16 = 1 | dtype u8 | ndim u8 |
ndim x u64 dimensions | row-major payload. No padding, no compression.
dtype codes: 0 f32 real, 1 f64 real, 2 f32 complex, 3 f64 complex.
"""
import math
import os
import struct
import tempfile

import numpy as np

from ptychoprior.core.fields import ComplexField, RealField
from ptychoprior.errors import FormatError

MAGIC = b'PTYF'
VERSION = 1
_HEADER = struct.Struct('<4sHBB')

DTYPES = {
    0: np.dtype('<f4'),
    1: np.dtype('<f8'),
    2: np.dtype('<c8'),
    3: np.dtype('<c16'),
}
_CODES = {('real', 'f32'): 0, ('real', 'f64'): 1, ('complex', 'f32'): 2, ('complex', 'f64'): 3}


def _unwrap(value):
    if isinstance(value, (RealField, ComplexField)):
        return value.data
    return np.asarray(value)


def encode_array(value, precision='f64'):
    """Serialize an array (or field) to PTYF bytes"""
    array = _unwrap(value)
    kind = 'complex' if np.iscomplexobj(array) else 'real'
    code = _CODES[(kind, precision)]
    payload = np.ascontiguousarray(array, dtype=DTYPES[code])
    header = _HEADER.pack(MAGIC, VERSION, code, array.ndim)
    dims = struct.pack(f'<{array.ndim}Q', *array.shape)
    return header + dims + payload.tobytes()


def decode_array(buffer, offset=0):
    """Parse one PTYF blob starting at `offset`; returns (array, end_offset)"""
    view = memoryview(buffer)
    if len(view) - offset < _HEADER.size:
        raise FormatError("truncated header", offset)
    magic, version, code, ndim = _HEADER.unpack_from(view, offset)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset + 4)
    if code not in DTYPES:
        raise FormatError(f"unknown dtype code {code}", offset + 6)
    cursor = offset + _HEADER.size
    if len(view) - cursor < 8 * ndim:
        raise FormatError("truncated dimension list", cursor)
    shape = struct.unpack_from(f'<{ndim}Q', view, cursor)
    cursor += 8 * ndim
    dtype = DTYPES[code]
    count = math.prod(shape)
    nbytes = count * dtype.itemsize
    if len(view) - cursor < nbytes:
        raise FormatError(
            f"truncated payload: expected {nbytes} bytes, found {len(view) - cursor}", cursor)
    array = np.frombuffer(view[cursor:cursor + nbytes], dtype=dtype).reshape(shape).copy()
    return array, cursor + nbytes


def atomic_write_bytes(path, data):
    """Write via a temporary file in the same directory, then rename"""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix='.tmp-', suffix='.part')
    try:
        with os.fdopen(fd, 'wb') as handle:
            handle.write(data)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def write_field(path, field, precision='f64'):
    atomic_write_bytes(path, encode_array(field, precision))


def read_field(path):
    """Read a PTYF file; 2D arrays come back as RealField / ComplexField"""
    with open(path, 'rb') as handle:
        buffer = handle.read()
    array, end = decode_array(buffer)
    if end != len(buffer):
        raise FormatError(f"{len(buffer) - end} trailing bytes", end)
    if array.ndim != 2:
        return array
    if np.iscomplexobj(array):
        return ComplexField(array.astype(np.complex128))
    return RealField(array.astype(np.float64))
