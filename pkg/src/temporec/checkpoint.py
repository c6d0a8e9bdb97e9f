"""Checkpoint blobs: a UTF-8 manifest followed by raw little-endian values.

Header line ``TMCK<TAB>1<TAB>n_tensors``, then one ``name<TAB>dtype<TAB>d0,d1,...``
line per tensor, then each tensor's values in manifest order.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .tensor import Tensor

MAGIC = "TMCK"
VERSION = 1
_DTYPES = {"float32": "<f4", "float64": "<f8"}


def save_checkpoint(params: dict[str, Tensor], path: str | Path) -> None:
    names = list(params)
    lines = [f"{MAGIC}\t{VERSION}\t{len(names)}\n"]
    for name in names:
        t = params[name]
        if "\t" in name or "\n" in name:
            raise ValueError(f"tensor name {name!r} cannot contain tabs/newlines")
        dims = ",".join(str(dim) for dim in t.shape)
        lines.append(f"{name}\t{t.data.dtype.name}\t{dims}\n")
    with open(path, "wb") as fh:
        fh.write("".join(lines).encode("utf-8"))
        for name in names:
            arr = params[name].data
            fh.write(arr.astype(_DTYPES[arr.dtype.name]).tobytes(order="C"))


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        header = fh.readline().decode("utf-8").rstrip("\n").split("\t")
        if len(header) != 3 or header[0] != MAGIC or int(header[1]) != VERSION:
            raise ValueError(f"{path}: not a checkpoint blob (header {header!r})")
        n = int(header[2])
        manifest = []
        for _ in range(n):
            fields = fh.readline().decode("utf-8").rstrip("\n").split("\t")
            if len(fields) != 3:
                raise ValueError(f"{path}: malformed manifest line {fields!r}")
            name, dtype, dims = fields
            if dtype not in _DTYPES:
                raise ValueError(f"{path}: unsupported dtype {dtype!r} for {name!r}")
            shape = tuple(int(x) for x in dims.split(",")) if dims else ()
            manifest.append((name, dtype, shape))
        out = {}
        for name, dtype, shape in manifest:
            count = int(np.prod(shape)) if shape else 1
            blob = fh.read(count * np.dtype(_DTYPES[dtype]).itemsize)
            if len(blob) != count * np.dtype(_DTYPES[dtype]).itemsize:
                raise ValueError(f"{path}: truncated values for tensor {name!r}")
            out[name] = np.frombuffer(blob, dtype=_DTYPES[dtype]).reshape(shape).copy()
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after final tensor")
    return out


def restore_params(params: dict[str, Tensor], loaded: dict[str, np.ndarray]) -> None:
    """Copy loaded values into live tensors; any mismatch names the tensor."""
    missing = set(params) - set(loaded)
    extra = set(loaded) - set(params)
    if missing or extra:
        raise ValueError(
            f"checkpoint mismatch: missing={sorted(missing)[:3]} "
            f"extra={sorted(extra)[:3]}")
    for name, t in params.items():
        arr = loaded[name]
        if arr.shape != t.shape:
            raise ValueError(
                f"checkpoint tensor {name!r} has shape {arr.shape}, "
                f"model expects {t.shape}")
        t.data[...] = arr.astype(t.data.dtype)
