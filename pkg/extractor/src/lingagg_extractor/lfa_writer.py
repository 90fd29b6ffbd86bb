"""Independent writer for the LFA v1 byte layout.

This package talks to the analysis toolkit only through its external
interfaces; the archive format is one of them, so the writer lives here
against the documented layout rather than importing the other side:

    magic "LFA1" | u32 version=1 | u32 N | u32 L | u32 D | u8 flags |
    u32 json_len | UTF-8 JSON metadata | N*L*D float32 | N uint32 labels |
    N float32 snr  (iff flags bit 0)

Integers little-endian, features frame-major, vocab inside the JSON block,
metadata serialized with sorted keys so identical jobs write identical
bytes.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"LFA1"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIBI")


def write_lfa(path, features: np.ndarray, labels: np.ndarray, vocab: list[str],
              snr_db: np.ndarray | None = None, meta: dict | None = None) -> None:
    features = np.ascontiguousarray(features, dtype="<f4")
    labels = np.ascontiguousarray(labels, dtype="<u4")
    if features.ndim != 3:
        raise ValueError(f"features must be [N, L, D], got {features.shape}")
    n = features.shape[0]
    if labels.shape != (n,):
        raise ValueError("need exactly one label per frame")
    if labels.size and int(labels.max()) >= len(vocab):
        raise ValueError(f"label {int(labels.max())} outside vocab of {len(vocab)}")
    if not np.isfinite(features).all():
        raise ValueError("features contain non-finite values")
    if snr_db is not None:
        snr_db = np.ascontiguousarray(snr_db, dtype="<f4")
        if snr_db.shape != (n,):
            raise ValueError("snr_db must have one value per frame")

    doc = dict(meta or {})
    doc["vocab"] = [str(v) for v in vocab]
    doc.setdefault("model", "")
    doc.setdefault("layers", [])
    doc.setdefault("snr_levels", [])
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")

    flags = 1 if snr_db is not None else 0
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, n, features.shape[1], features.shape[2], flags, len(blob)))
        f.write(blob)
        f.write(features.tobytes())
        f.write(labels.tobytes())
        if snr_db is not None:
            f.write(snr_db.tobytes())
