"""Matrix file formats: the ``TEIG`` binary format and Matrix Market dense."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"TEIG"
VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


class FormatError(ValueError):
    pass


def write_teig(path, a: np.ndarray) -> None:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    rows, cols = a.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, rows, cols))
        fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def read_teig(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, rows, cols = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    body = raw[_HEADER.size:]
    if len(body) != 8 * rows * cols:
        raise FormatError(f"{path}: expected {rows * cols} values, found {len(body) // 8}")
    return np.frombuffer(body, dtype="<f8").astype(np.float64).reshape(rows, cols)


def write_matrix_market(path, a: np.ndarray) -> None:
    a = np.asarray(a, dtype=np.float64)
    rows, cols = a.shape
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix array real general\n")
        fh.write(f"{rows} {cols}\n")
        # array format is column-major
        for v in a.T.ravel():
            fh.write(f"{float(v)!r}\n")


def read_matrix_market(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) < 5 or header[0].lower() != "%%matrixmarket":
            raise FormatError(f"{path}: not a Matrix Market file")
        obj, fmt, field, sym = (h.lower() for h in header[1:5])
        if (obj, fmt, field, sym) != ("matrix", "array", "real", "general"):
            raise FormatError(f"{path}: only 'matrix array real general' is supported")
        line = fh.readline()
        while line.startswith("%"):
            line = fh.readline()
        rows, cols = (int(t) for t in line.split())
        vals = np.array([float(t) for t in fh.read().split()], dtype=np.float64)
    if vals.size != rows * cols:
        raise FormatError(f"{path}: expected {rows * cols} values, found {vals.size}")
    return vals.reshape(cols, rows).T.copy()


def read_matrix(path, fmt: str | None = None) -> np.ndarray:
    if fmt is None:
        with open(path, "rb") as fh:
            fmt = "teig" if fh.read(4) == MAGIC else "matrixmarket"
    if fmt == "teig":
        return read_teig(path)
    if fmt == "matrixmarket":
        return read_matrix_market(path)
    raise ValueError(f"unknown format {fmt!r}")


def write_matrix(path, a: np.ndarray, fmt: str = "teig") -> None:
    if fmt == "teig":
        write_teig(path, a)
    elif fmt == "matrixmarket":
        write_matrix_market(path, a)
    else:
        raise ValueError(f"unknown format {fmt!r}")
