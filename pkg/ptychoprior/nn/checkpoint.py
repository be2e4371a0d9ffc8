"""
Parameter Checkpoints
Named-tensor container built from inline PTYF blobs.

Layout: magic b"PTYZ" | version u16 | count u32 | count x
(name length u16 | UTF-8 name | PTYF blob). Entries keep insertion order.
A text sidecar `<path>.arch` holds key=value architecture metadata.
"""
import struct

from ptychoprior.core.ptyf import atomic_write_bytes, decode_array, encode_array
from ptychoprior.errors import ArchitectureMismatchError, FormatError

MAGIC = b'PTYZ'
VERSION = 1
_HEADER = struct.Struct('<4sHI')
_NAME_LEN = struct.Struct('<H')


def encode_named(named_arrays):
    chunks = [_HEADER.pack(MAGIC, VERSION, len(named_arrays))]
    for name, array in named_arrays:
        raw = name.encode('utf-8')
        chunks.append(_NAME_LEN.pack(len(raw)) + raw + encode_array(array))
    return b''.join(chunks)


def decode_named(buffer):
    if len(buffer) < _HEADER.size:
        raise FormatError("truncated checkpoint header", 0)
    magic, version, count = _HEADER.unpack_from(buffer, 0)
    if magic != MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", 4)
    cursor = _HEADER.size
    entries = []
    for _ in range(count):
        if len(buffer) - cursor < _NAME_LEN.size:
            raise FormatError("truncated entry name", cursor)
        (length,) = _NAME_LEN.unpack_from(buffer, cursor)
        cursor += _NAME_LEN.size
        if len(buffer) - cursor < length:
            raise FormatError("truncated entry name", cursor)
        try:
            name = bytes(buffer[cursor:cursor + length]).decode('utf-8')
        except UnicodeDecodeError as e:
            raise FormatError(f"entry name is not UTF-8: {e.reason}", cursor + e.start) from None
        cursor += length
        array, cursor = decode_array(buffer, cursor)
        entries.append((name, array))
    return entries


def sidecar_path(path):
    return f"{path}.arch"


def save_checkpoint(path, named_arrays, metadata):
    """Atomically write tensors and their architecture sidecar"""
    atomic_write_bytes(path, encode_named(list(named_arrays)))
    lines = ''.join(f"{key}={value}\n" for key, value in metadata.items())
    atomic_write_bytes(sidecar_path(path), lines.encode('utf-8'))


def read_metadata(path):
    try:
        with open(sidecar_path(path), 'r', encoding='utf-8') as handle:
            text = handle.read()
    except FileNotFoundError:
        raise ArchitectureMismatchError(f"missing architecture sidecar for {path}") from None
    return parse_key_values(text)


def parse_key_values(text):
    values = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        key, sep, value = line.partition('=')
        if sep:
            values[key.strip()] = value.strip()
    return values


def load_checkpoint(path):
    """Return (ordered [(name, array)], metadata dict)"""
    with open(path, 'rb') as handle:
        buffer = handle.read()
    return decode_named(buffer), read_metadata(path)
