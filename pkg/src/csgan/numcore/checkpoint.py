"""Binary checkpoint format for named arrays.

Layout (all integers little-endian)::

    b"CSGAN001"
    u32 n_entries
    n_entries x { u32 name_len, name (utf-8), u8 dtype, u32 rank,
                  rank x u64 dim, u64 byte_offset }
    raw C-order payloads, in table order

``byte_offset`` is measured from the start of the file.
"""
from __future__ import annotations

import struct

import numpy as np

MAGIC = b"CSGAN001"

_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i8")}
_CODES = {np.dtype(v).str: k for k, v in _DTYPES.items()}


def _entry_size(name, rank):
    return 4 + len(name.encode("utf-8")) + 1 + 4 + 8 * rank + 8


def save_arrays(path, arrays):
    """Write ``arrays`` (name -> ndarray, insertion order kept) to ``path``."""
    items = []
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        key = arr.dtype.newbyteorder("<").str
        if key not in _CODES:
            raise TypeError(f"unsupported dtype {arr.dtype} for {name!r}")
        items.append((name, np.ascontiguousarray(arr, dtype=_DTYPES[_CODES[key]])))
    offset = len(MAGIC) + 4 + sum(_entry_size(n, a.ndim) for n, a in items)
    header = [MAGIC, struct.pack("<I", len(items))]
    for name, arr in items:
        raw = name.encode("utf-8")
        header.append(struct.pack("<I", len(raw)) + raw)
        header.append(struct.pack("<BI", _CODES[arr.dtype.str], arr.ndim))
        header.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        header.append(struct.pack("<Q", offset))
        offset += arr.nbytes
    with open(path, "wb") as fh:
        fh.write(b"".join(header))
        for _, arr in items:
            fh.write(arr.tobytes(order="C"))


def load_arrays(path):
    """Read a checkpoint written by :func:`save_arrays` into an ordered dict."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:8] != MAGIC:
        raise ValueError(f"{path}: not a CSGAN001 checkpoint")
    pos = 8
    (n,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    table = []
    for _ in range(n):
        (name_len,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        name = buf[pos:pos + name_len].decode("utf-8")
        pos += name_len
        code, rank = struct.unpack_from("<BI", buf, pos)
        pos += 5
        dims = struct.unpack_from(f"<{rank}Q", buf, pos)
        pos += 8 * rank
        (offset,) = struct.unpack_from("<Q", buf, pos)
        pos += 8
        table.append((name, _DTYPES[code], dims, offset))
    out = {}
    for name, dtype, dims, offset in table:
        count = int(np.prod(dims)) if dims else 1
        arr = np.frombuffer(buf, dtype=dtype, count=count, offset=offset)
        out[name] = arr.reshape(dims).astype(dtype.newbyteorder("="), copy=True)
    return out
