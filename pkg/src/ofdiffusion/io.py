"""File formats: binary matrices, CSV, IDX image files, eigensystem tables.

Binary matrix layout (little-endian)::

    bytes 0-3    b"OFDM"
    bytes 4-7    u32 version (= 1)
    bytes 8-15   u64 rows
    bytes 16-23  u64 cols
    bytes 24-    rows*cols float64, row-major
"""
from __future__ import annotations

import csv
import gzip
import json
import struct

import numpy as np

from .eigenbasis import NumericSystem, system_from_descriptor
from .sample_matrix import SampleMatrix, as_array

__all__ = [
    "FormatError",
    "MATRIX_MAGIC",
    "write_matrix",
    "read_matrix",
    "pack_matrix",
    "unpack_matrix",
    "write_csv",
    "read_csv",
    "read_idx",
    "write_idx",
    "save_eigensystem",
    "load_eigensystem",
    "write_samples",
    "read_samples",
]

MATRIX_MAGIC = b"OFDM"
MATRIX_VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


class FormatError(ValueError):
    """Malformed or truncated file."""


def pack_matrix(a) -> bytes:
    a = np.asarray(a, dtype="<f8")
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise FormatError(f"matrix must be 2-D, got shape {a.shape}")
    return _HEADER.pack(MATRIX_MAGIC, MATRIX_VERSION, a.shape[0], a.shape[1]) + np.ascontiguousarray(a).tobytes()


def unpack_matrix(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Decode one matrix starting at ``offset``; returns the array and the next offset."""
    if len(buf) - offset < _HEADER.size:
        raise FormatError("truncated matrix header")
    magic, version, rows, cols = _HEADER.unpack_from(buf, offset)
    if magic != MATRIX_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != MATRIX_VERSION:
        raise FormatError(f"unsupported matrix version {version}")
    start = offset + _HEADER.size
    nbytes = rows * cols * 8
    if len(buf) - start < nbytes:
        raise FormatError(f"truncated payload: {len(buf) - start} bytes, header promises {nbytes}")
    a = np.frombuffer(buf, dtype="<f8", count=rows * cols, offset=start).reshape(rows, cols).astype(float)
    return a, start + nbytes


def write_matrix(path, a) -> None:
    with open(path, "wb") as fh:
        fh.write(pack_matrix(a))


def read_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    a, end = unpack_matrix(buf)
    if end != len(buf):
        raise FormatError(f"{len(buf) - end} trailing bytes after matrix payload")
    return a


def write_csv(path, a, header=None) -> None:
    """CSV with a header row and 17 significant digits (exact float64 round trip)."""
    a = as_array(a)
    if header is None:
        header = [f"x{i}" for i in range(a.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in a:
            w.writerow([format(v, ".17g") for v in row])


def read_csv(path) -> tuple[np.ndarray, list]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError("empty CSV")
    header, body = rows[0], rows[1:]
    try:
        data = np.array([[float(v) for v in r] for r in body], dtype=float)
    except ValueError as exc:
        raise FormatError(f"non-numeric CSV cell: {exc}") from exc
    if data.size == 0:
        data = np.zeros((0, len(header)))
    return data.reshape(len(body), len(header)), header


def write_samples(path, samples) -> None:
    """Write samples as a binary matrix (``.ofdm``/``.bin``) or CSV by extension."""
    path = str(path)
    if path.endswith(".csv"):
        write_csv(path, samples)
    else:
        write_matrix(path, as_array(samples))


def read_samples(path) -> SampleMatrix:
    path = str(path)
    data = read_csv(path)[0] if path.endswith(".csv") else read_matrix(path)
    return SampleMatrix(data, generator=f"file:{path}")


# ---------------------------------------------------------------------------
# IDX (the layout used by the handwritten-digit corpora)
# ---------------------------------------------------------------------------

_IDX_TYPES = {0x08: ">u1", 0x09: ">i1", 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}


def _open_bytes(path) -> bytes:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def read_idx_array(path) -> np.ndarray:
    raw = _open_bytes(path)
    if len(raw) < 4 or raw[0] != 0 or raw[1] != 0:
        raise FormatError("bad IDX magic")
    dtype = _IDX_TYPES.get(raw[2])
    if dtype is None:
        raise FormatError(f"unknown IDX element type 0x{raw[2]:02x}")
    ndim = raw[3]
    if len(raw) < 4 + 4 * ndim:
        raise FormatError("truncated IDX header")
    dims = struct.unpack(f">{ndim}I", raw[4 : 4 + 4 * ndim])
    count = int(np.prod(dims)) if dims else 1
    item = np.dtype(dtype).itemsize
    start = 4 + 4 * ndim
    if len(raw) - start < count * item:
        raise FormatError(f"truncated IDX payload: {len(raw) - start} bytes for {count} items")
    return np.frombuffer(raw, dtype=dtype, count=count, offset=start).reshape(dims)


def read_idx(path, labels_path=None, digits=None, per_digit=None) -> SampleMatrix:
    """Images as rows of a SampleMatrix, pixels scaled to ``[0, 1]``.

    Parameters
    ----------
    labels_path : path, optional
        IDX1 label file; required for ``digits`` / ``per_digit`` filtering.
    digits : iterable of int, optional
        Keep only these labels.
    per_digit : int, optional
        Keep the first ``per_digit`` images of each retained label.
    """
    imgs = read_idx_array(path)
    if imgs.ndim < 2:
        raise FormatError("IDX image file must have at least 2 dimensions")
    X = imgs.reshape(imgs.shape[0], -1).astype(float)
    if imgs.dtype == np.dtype(">u1"):
        X /= 255.0
    meta = {"shape": list(imgs.shape[1:])}
    if labels_path is not None:
        labels = read_idx_array(labels_path).astype(int)
        if labels.shape != (imgs.shape[0],):
            raise FormatError("label count does not match image count")
        keep = np.ones(len(labels), dtype=bool)
        if digits is not None:
            keep &= np.isin(labels, list(digits))
        if per_digit is not None:
            idx = np.flatnonzero(keep)
            sel = []
            for lab in np.unique(labels[idx]):
                sel.extend(idx[labels[idx] == lab][:per_digit])
            keep = np.zeros_like(keep)
            keep[np.sort(np.array(sel, dtype=int))] = True
        X = X[keep]
        meta["labels"] = labels[keep].tolist()
    elif digits is not None or per_digit is not None:
        raise FormatError("digit filtering needs a label file")
    return SampleMatrix(X, generator=f"idx:{path}", meta=meta)


def write_idx(path, array) -> None:
    """Write an unsigned-byte (or float64) IDX file; used for fixtures and outputs."""
    a = np.asarray(array)
    if a.dtype == np.uint8:
        code, payload = 0x08, a.astype(">u1").tobytes()
    else:
        code, payload = 0x0E, a.astype(">f8").tobytes()
    head = bytes([0, 0, code, a.ndim]) + struct.pack(f">{a.ndim}I", *a.shape)
    with open(path, "wb") as fh:
        fh.write(head + payload)


# ---------------------------------------------------------------------------
# Eigensystems and model containers
# ---------------------------------------------------------------------------

def eigensystem_blocks(sys) -> list:
    """Binary blocks that pin a numeric eigensystem exactly (empty for closed forms)."""
    if not isinstance(sys, NumericSystem):
        return []
    return [sys.grid, sys.potential_table, sys.eigenvalues, sys.table]


def eigensystem_from_blocks(desc: dict, blocks: list):
    if desc["kind"] != "numeric":
        return system_from_descriptor(desc)
    grid, vtab, ev, table = (np.asarray(b) for b in blocks)
    poly = desc["params"].get("poly")
    return NumericSystem(grid[0], vtab[0], desc["beta"], ev[0], table.copy(),
                         None if poly is None else np.asarray(poly, dtype=float))


def write_container(path, header: dict, blocks: list) -> None:
    """JSON header (u64 length prefix) followed by binary matrix blocks."""
    head = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for b in blocks:
            fh.write(pack_matrix(b))


def read_container(path) -> tuple[dict, list]:
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 8:
        raise FormatError("truncated container")
    (hlen,) = struct.unpack_from("<Q", buf, 0)
    if len(buf) < 8 + hlen:
        raise FormatError("truncated container header")
    try:
        header = json.loads(buf[8 : 8 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"container header is not JSON: {exc}") from exc
    off = 8 + hlen
    blocks = []
    while off < len(buf):
        a, off = unpack_matrix(buf, off)
        blocks.append(a)
    return header, blocks


def save_eigensystem(path, sys) -> None:
    write_container(path, {"eigensystem": sys.descriptor()}, eigensystem_blocks(sys))


def load_eigensystem(path):
    header, blocks = read_container(path)
    return eigensystem_from_blocks(header["eigensystem"], blocks)


def dumps_matrix(a) -> bytes:
    return pack_matrix(a)


def loads_matrix(buf: bytes) -> np.ndarray:
    return unpack_matrix(buf)[0]

