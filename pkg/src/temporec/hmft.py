"""HMFT per-item feature files: text manifest plus packed float32 rows.

Layout: header ``HMFT<TAB>1<TAB>n_rows<TAB>dim``, then one ``item_id<TAB>offset``
line per row, then ``n_rows * dim`` little-endian float32 values row-major,
rows stored in offset order.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

MAGIC = "HMFT"
VERSION = 1


def write_hmft(path: str | Path, item_ids: list[str], matrix: np.ndarray) -> None:
    matrix = np.asarray(matrix, dtype="<f4")
    if matrix.ndim != 2:
        raise ValueError(f"feature matrix must be 2-d, got shape {matrix.shape}")
    if len(item_ids) != matrix.shape[0]:
        raise ValueError(
            f"{len(item_ids)} item ids for {matrix.shape[0]} feature rows")
    n_rows, dim = matrix.shape
    header = [f"{MAGIC}\t{VERSION}\t{n_rows}\t{dim}\n"]
    header += [f"{item_id}\t{row}\n" for row, item_id in enumerate(item_ids)]
    with open(path, "wb") as fh:
        fh.write("".join(header).encode("utf-8"))
        fh.write(matrix.tobytes(order="C"))


def read_hmft(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Return (item ids in offset order, n_rows x dim float32 matrix)."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("utf-8").rstrip("\n").split("\t")
        if len(header) != 4 or header[0] != MAGIC:
            raise ValueError(f"{path}: not an HMFT file (header {header!r})")
        if int(header[1]) != VERSION:
            raise ValueError(f"{path}: unsupported HMFT version {header[1]}")
        n_rows, dim = int(header[2]), int(header[3])

        ids: list[str | None] = [None] * n_rows
        for line_no in range(n_rows):
            fields = fh.readline().decode("utf-8").rstrip("\n").split("\t")
            if len(fields) != 2:
                raise ValueError(
                    f"{path}: malformed manifest line {line_no + 2}: {fields!r}")
            item_id, offset = fields[0], int(fields[1])
            if not 0 <= offset < n_rows or ids[offset] is not None:
                raise ValueError(
                    f"{path}: bad or duplicate offset {offset} for {item_id!r}")
            ids[offset] = item_id

        blob = fh.read()
        expected = n_rows * dim * 4
        if len(blob) != expected:
            raise ValueError(
                f"{path}: binary section holds {len(blob)} bytes, expected {expected}")
    matrix = np.frombuffer(blob, dtype="<f4").reshape(n_rows, dim).copy()
    return [i for i in ids if i is not None], matrix
