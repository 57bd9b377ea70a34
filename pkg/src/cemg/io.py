"""Binary matrix (EMB) and JSON artifact I/O."""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

EMB_MAGIC = b"CEMGEMB1"


class EmbFormatError(ValueError):
    pass


def write_emb(path: str | Path, matrix: np.ndarray) -> None:
    """Write a 2-D float matrix: magic, u32 LE rows, u32 LE cols, f32 LE row-major."""
    m = np.asarray(matrix)
    if m.ndim != 2:
        raise EmbFormatError(f"EMB matrices are 2-D, got shape {m.shape}")
    data = np.ascontiguousarray(m, dtype="<f4")
    with open(path, "wb") as f:
        f.write(EMB_MAGIC)
        f.write(struct.pack("<II", m.shape[0], m.shape[1]))
        f.write(data.tobytes())


def read_emb(path: str | Path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != EMB_MAGIC:
            raise EmbFormatError(f"{path}: bad magic {magic!r}")
        rows, cols = struct.unpack("<II", f.read(8))
        payload = f.read()
    expected = rows * cols * 4
    if len(payload) != expected:
        raise EmbFormatError(f"{path}: expected {expected} payload bytes, got {len(payload)}")
    return np.frombuffer(payload, dtype="<f4").reshape(rows, cols).copy()


def write_json(path: str | Path, obj) -> None:
    """Deterministic JSON: sorted keys, fixed separators, trailing newline."""
    text = json.dumps(obj, sort_keys=True, indent=2)
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_json(path: str | Path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
