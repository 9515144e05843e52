"""Versioned binary container for parameter blocks.

Layout: a magic line, one JSON header line (container kind, version, array
manifest, optional metadata), then the arrays' raw little-endian bytes in
manifest order.  Writing the same data always produces the same bytes, which
lets reruns of a seeded command be compared file-for-file.
"""

import json

import numpy as np

_MAGIC = b"#plsa-container v1\n"
_VERSION = 1


def save_arrays(path, kind: str, arrays: dict, meta: dict | None = None) -> None:
    """Write named arrays to `path` under the given container kind."""
    entries = []
    blobs = []
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr)
        if a.dtype.kind == "f":
            a = np.ascontiguousarray(a, dtype="<f8")
        elif a.dtype.kind in "iu":
            a = np.ascontiguousarray(a, dtype="<i8")
        else:
            raise TypeError(f"array {name!r} has unsupported dtype {a.dtype}")
        entries.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape)})
        blobs.append(a.tobytes())
    header = {"kind": kind, "version": _VERSION, "meta": meta or {}, "arrays": entries}
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        f.write(b"\n")
        for blob in blobs:
            f.write(blob)


def load_arrays(path, kind: str | None = None) -> tuple[dict, dict]:
    """Read a container back; returns (arrays, meta).

    If `kind` is given, the stored kind must match.
    """
    with open(path, "rb") as f:
        magic = f.readline()
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a plsa container file")
        header = json.loads(f.readline().decode("utf-8"))
        if header.get("version") != _VERSION:
            raise ValueError(f"{path}: unsupported container version {header.get('version')}")
        if kind is not None and header.get("kind") != kind:
            raise ValueError(f"{path}: expected container kind {kind!r}, found {header.get('kind')!r}")
        arrays = {}
        for entry in header["arrays"]:
            dtype = np.dtype(entry["dtype"])
            shape = tuple(entry["shape"])
            n_items = int(np.prod(shape, dtype=np.int64)) if shape else 1
            buf = f.read(dtype.itemsize * n_items)
            if len(buf) != dtype.itemsize * n_items:
                raise ValueError(f"{path}: truncated container (array {entry['name']!r})")
            arrays[entry["name"]] = np.frombuffer(buf, dtype=dtype).reshape(shape).copy()
    return arrays, header.get("meta", {})
