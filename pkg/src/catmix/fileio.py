"""Small persistence helpers: atomic writes, labels CSV, JSON, binary co-clustering matrix."""

import csv
import io
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError

PCM_MAGIC = b"PCM1"


def atomic_write_bytes(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=False) + "\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_labels_csv(path, labels, obs_names=None):
    labels = np.asarray(labels)
    if obs_names is None:
        obs_names = [str(i) for i in range(len(labels))]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["obs_name", "cluster_index"])
    for name, lab in zip(obs_names, labels):
        w.writerow([name, int(lab)])
    atomic_write_text(path, buf.getvalue())


def read_labels_csv(path):
    """Return ``(obs_names, labels)`` from a two-column labels file."""
    names, labels = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise ValidationError(f"{path}: expected header 'obs_name,cluster_index'")
        for i, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) < 2:
                raise ParseError(i, 1, "", path)
            try:
                lab = int(row[1])
            except ValueError:
                raise ParseError(i, 1, row[1], path) from None
            if lab < 0:
                raise ParseError(i, 1, row[1], path)
            names.append(row[0])
            labels.append(lab)
    return names, np.asarray(labels, dtype=np.int64)


def write_pcm(path, matrix, n_runs):
    """Dense binary layout: b"PCM1", u64 N, u64 M, then N*N little-endian f64 row-major."""
    matrix = np.ascontiguousarray(matrix, dtype="<f8")
    n = matrix.shape[0]
    if matrix.shape != (n, n):
        raise ValidationError("co-clustering matrix must be square")
    header = PCM_MAGIC + struct.pack("<QQ", n, int(n_runs))
    atomic_write_bytes(path, header + matrix.tobytes(order="C"))


def read_pcm(path):
    """Return ``(matrix, n_runs)``."""
    raw = Path(path).read_bytes()
    if raw[:4] != PCM_MAGIC:
        raise ValidationError(f"{path}: bad magic bytes {raw[:4]!r}")
    n, m = struct.unpack("<QQ", raw[4:20])
    expected = 20 + 8 * n * n
    if len(raw) != expected:
        raise ValidationError(f"{path}: expected {expected} bytes, found {len(raw)}")
    matrix = np.frombuffer(raw, dtype="<f8", offset=20).reshape(n, n).astype(np.float64)
    return matrix, int(m)


def write_matrix_csv(path, matrix, fmt="%.10g"):
    buf = io.StringIO()
    np.savetxt(buf, np.asarray(matrix), delimiter=",", fmt=fmt)
    atomic_write_text(path, buf.getvalue())
