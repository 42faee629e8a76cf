"""File formats: KMM1 binary matrices, headerless CSV, key-value manifests, OFF meshes.

KMM1 layout: the 4 magic bytes ``KMM1``, two little-endian uint32 (rows,
cols), then ``rows * cols`` little-endian float64 values in row-major order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"KMM1"
_HEADER = struct.Struct("<4sII")


class FormatError(ValueError):
    pass


def write_kmm(path, M):
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    if M.ndim != 2:
        raise ValueError(f"KMM1 stores 2-D matrices, got shape {M.shape}")
    rows, cols = M.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, rows, cols))
        fh.write(np.ascontiguousarray(M, dtype="<f8").tobytes())


def read_kmm(path):
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated KMM1 header")
    magic, rows, cols = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 8 * rows * cols
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    M = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(rows, cols)
    return M.astype(float)


def write_csv_matrix(path, M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    np.savetxt(path, M, delimiter=",", fmt="%.17g")


def read_csv_matrix(path):
    return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float, ndmin=2))


def write_manifest(path, entries):
    """Write ``key=value`` lines; keys are written in insertion order."""
    lines = []
    for key, value in entries.items():
        if "=" in key or "\n" in key:
            raise ValueError(f"invalid manifest key {key!r}")
        text = _format_value(value)
        if "\n" in text:
            raise ValueError(f"manifest value for {key!r} spans lines")
        lines.append(f"{key}={text}")
    Path(path).write_text("\n".join(lines) + "\n")


def _format_value(value):
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple, np.ndarray)):
        return ",".join(_format_value(v) for v in np.asarray(value).tolist())
    return str(value)


def read_manifest(path):
    entries = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        entries[key.strip()] = value.strip()
    return entries


def parse_int_list(text):
    return [int(x) for x in text.split(",") if x]


def read_off(path):
    """Read a triangle mesh from an OFF text file; returns (vertices, faces)."""
    tokens = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            tokens.extend(line.split())
    if not tokens or tokens[0] != "OFF":
        raise FormatError(f"{path}: missing OFF header")
    nv, nf = int(tokens[1]), int(tokens[2])
    pos = 4
    vertices = np.array(tokens[pos:pos + 3 * nv], dtype=float).reshape(nv, 3)
    pos += 3 * nv
    faces = []
    for _ in range(nf):
        k = int(tokens[pos])
        idx = [int(t) for t in tokens[pos + 1:pos + 1 + k]]
        pos += 1 + k
        if k != 3:
            raise FormatError(f"{path}: only triangular faces are supported")
        faces.append(idx)
    return vertices, np.array(faces, dtype=int).reshape(-1, 3)


def write_off(path, vertices, faces):
    vertices = np.asarray(vertices, dtype=float)
    faces = np.asarray(faces, dtype=int)
    lines = ["OFF", f"{len(vertices)} {len(faces)} 0"]
    lines += [" ".join(repr(float(c)) for c in v) for v in vertices]
    lines += ["3 " + " ".join(str(int(i)) for i in f) for f in faces]
    Path(path).write_text("\n".join(lines) + "\n")
