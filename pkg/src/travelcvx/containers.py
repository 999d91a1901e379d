"""Versioned binary container for volumes, basis data and coefficient fields.

Layout::

    magic   b"TCVX"           4 bytes
    version uint32 LE         4 bytes
    hlen    uint64 LE         8 bytes
    header  UTF-8 JSON        hlen bytes (sorted keys, includes array table)
    payload row-major float64 arrays, little endian, in header order

The JSON header is written with sorted keys and no timestamps so identical
inputs give byte-identical files.
"""
import hashlib
import json
import struct

import numpy as np

MAGIC = b"TCVX"
VERSION = 1


def write_container(path, kind, meta, arrays):
    """Write ``arrays`` (mapping name -> ndarray) with metadata ``meta``."""
    table = []
    blobs = []
    for name, arr in arrays.items():
        a = np.ascontiguousarray(np.asarray(arr, dtype="<f8"))
        table.append({"name": name, "shape": list(a.shape)})
        blobs.append(a.tobytes(order="C"))
    header = {"kind": kind, "meta": meta, "arrays": table}
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(hbytes)))
        fh.write(hbytes)
        for b in blobs:
            fh.write(b)


def read_container(path, kind=None):
    """Return ``(meta, arrays)``; checks magic, version and optionally kind."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError(f"{path}: not a container file")
        version, hlen = struct.unpack("<IQ", fh.read(12))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported container version {version}")
        header = json.loads(fh.read(hlen).decode())
        if kind is not None and header["kind"] != kind:
            raise ValueError(f"{path}: expected {kind!r}, found {header['kind']!r}")
        arrays = {}
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * count)
            arrays[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    return header["meta"], arrays


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
