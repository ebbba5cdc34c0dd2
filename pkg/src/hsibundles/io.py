"""Matrix, group-structure and key=value file formats.

Two matrix formats are supported:

``csv``
    one matrix row per line, comma separated, no header.
``bin``
    ``b"HSIM"``, a version byte ``0x01``, rows and cols as little-endian
    uint64, then the row-major little-endian float64 payload.
"""
from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .core import GroupStructure

MAGIC = b"HSIM"
VERSION = 1
_HEADER = struct.Struct("<4sBQQ")
# refuse headers that would need more than this many cells
MAX_CELLS = 1 << 34


class FormatError(ValueError):
    """Malformed matrix, group or config file."""


def _format_of(path, fmt):
    if fmt is not None:
        if fmt not in ("csv", "bin"):
            raise ValueError(f"unknown matrix format {fmt!r}")
        return fmt
    suffix = Path(path).suffix.lower()
    return "csv" if suffix in (".csv", ".txt") else "bin"


def save_matrix(matrix, path, fmt=None) -> None:
    """Write a 2-D matrix; ``fmt`` defaults from the file suffix (``.csv`` or bin)."""
    M = np.asarray(matrix, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    if M.ndim != 2:
        raise ValueError("only 2-D matrices can be saved")
    fmt = _format_of(path, fmt)
    if fmt == "bin":
        payload = np.ascontiguousarray(M, dtype="<f8").tobytes()
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, M.shape[0], M.shape[1]))
            fh.write(payload)
    else:
        with open(path, "w") as fh:
            for row in M:
                fh.write(",".join(repr(float(v)) for v in row))
                fh.write("\n")


def load_matrix(path, fmt=None) -> np.ndarray:
    fmt = _format_of(path, fmt)
    if fmt == "bin":
        return _load_bin(path)
    return _load_csv(path)


def _load_bin(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: header needs {_HEADER.size} bytes, file has {len(raw)}")
    magic, version, rows, cols = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    if rows * cols > MAX_CELLS:
        raise FormatError(f"{path}: dimensions {rows}x{cols} overflow the size limit")
    expected = rows * cols * 8
    available = len(raw) - _HEADER.size
    if available != expected:
        raise FormatError(
            f"{path}: payload for {rows}x{cols} needs {expected} bytes, {available} available")
    data = np.frombuffer(raw, dtype="<f8", count=rows * cols, offset=_HEADER.size)
    return data.reshape(rows, cols).astype(float)


def _load_csv(path) -> np.ndarray:
    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise FormatError(
                    f"{path}: row {lineno} has {len(cells)} columns, expected {width}")
            row = []
            for col, cell in enumerate(cells, start=1):
                try:
                    row.append(float(cell))
                except ValueError:
                    raise FormatError(
                        f"{path}: non-numeric cell {cell.strip()!r} at row {lineno}, column {col}"
                    ) from None
            rows.append(row)
    if not rows:
        raise FormatError(f"{path}: empty matrix file")
    return np.array(rows, dtype=float)


def save_groups(groups: GroupStructure, path) -> None:
    """One line per atom holding its 1-based group id."""
    with open(path, "w") as fh:
        for label in groups.labels:
            fh.write(f"{int(label) + 1}\n")


def load_groups(path) -> GroupStructure:
    labels = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                value = int(line)
            except ValueError:
                raise FormatError(f"{path}: line {lineno}: group id {line!r} is not an integer") from None
            if value < 1:
                raise FormatError(f"{path}: line {lineno}: group ids are 1-based, got {value}")
            labels.append(value - 1)
    if not labels:
        raise FormatError(f"{path}: no group ids")
    return GroupStructure(np.array(labels))


def read_kv(path) -> dict:
    """Parse a flat ``key=value`` file; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"{path}: line {lineno}: expected key=value, got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if not key:
                raise FormatError(f"{path}: line {lineno}: empty key")
            if key in out:
                raise FormatError(f"{path}: line {lineno}: duplicate key {key!r}")
            out[key] = value
    return out


def write_kv(mapping, path) -> None:
    with open(path, "w") as fh:
        for key, value in mapping.items():
            fh.write(f"{key}={value}\n")


def ensure_dir(path) -> Path:
    path = Path(path)
    os.makedirs(path, exist_ok=True)
    return path
