"""Layered Feature Archive (LFA): a self-describing binary container for
frame-level layered features, categorical labels, and optional per-frame SNR,
plus the dataset utilities built on top of it (validation, deterministic
splits, SNR grouping).

Byte layout, version 1 (all integers little-endian):

    magic b"LFA1" | u32 version | u32 N | u32 L | u32 D | u8 flags |
    u32 json_len | UTF-8 JSON metadata | N*L*D float32 features |
    N uint32 labels | N float32 snr  (present iff flags bit 0 is set)

Features are frame-major (frame, layer, dim).  The label vocabulary lives in
the JSON metadata block, so a file can be interpreted on its own.  Metadata
is serialized with sorted keys and no whitespace, which makes writes
byte-identical for identical inputs.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"LFA1"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIBI")  # magic, version, N, L, D, flags, json_len
HEADER_SIZE = _HEADER.size  # 25 bytes

FLAG_SNR = 0x01


class LFAError(Exception):
    """Base class for archive format and dataset integrity errors."""


class BadMagicError(LFAError):
    pass


class UnsupportedVersionError(LFAError):
    pass


class TruncatedFileError(LFAError):
    pass


class ValidationError(LFAError):
    pass


class NonFiniteFeaturesError(ValidationError):
    pass


@dataclass(eq=False)
class LayeredDataset:
    """N frames x L layers x D dims of float32 features with one categorical
    label per frame, an optional per-frame SNR in dB, and free-form metadata.
    """

    features: np.ndarray            # [N, L, D] float32
    labels: np.ndarray              # [N] uint32, values < len(vocab)
    vocab: list[str]
    snr_db: np.ndarray | None = None  # [N] float32
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float32)
        if self.features.ndim != 3:
            raise ValidationError(f"features must be [N, L, D], got shape {self.features.shape}")
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.shape[0] != self.features.shape[0]:
            raise ValidationError("labels must be one per frame")
        if labels.size and labels.min() < 0:
            raise ValidationError("labels must be non-negative")
        self.labels = np.ascontiguousarray(labels, dtype=np.uint32)
        if self.snr_db is not None:
            self.snr_db = np.ascontiguousarray(self.snr_db, dtype=np.float32)
            if self.snr_db.ndim != 1:
                raise ValidationError("snr_db must be a 1-D per-frame array")
        self.vocab = [str(v) for v in self.vocab]

    @property
    def n_frames(self) -> int:
        return self.features.shape[0]

    @property
    def n_layers(self) -> int:
        return self.features.shape[1]

    @property
    def dim(self) -> int:
        return self.features.shape[2]

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)


def invariant_report(ds: LayeredDataset) -> list[tuple[str, bool, str]]:
    """Check every dataset invariant; returns (name, passed, detail) rows."""
    rows = []
    n = ds.n_frames
    rows.append(("labels-length", ds.labels.shape == (n,),
                 f"labels shape {ds.labels.shape}, expected ({n},)"))
    in_vocab = bool(ds.labels.size == 0 or int(ds.labels.max()) < ds.vocab_size)
    rows.append(("labels-in-vocab", in_vocab,
                 f"max label {int(ds.labels.max()) if ds.labels.size else '-'} vs vocab size {ds.vocab_size}"))
    finite = bool(np.isfinite(ds.features).all())
    rows.append(("features-finite", finite, "non-finite feature values" if not finite else "all finite"))
    if ds.snr_db is not None:
        rows.append(("snr-length", ds.snr_db.shape == (n,),
                     f"snr shape {ds.snr_db.shape}, expected ({n},)"))
        rows.append(("snr-finite", bool(np.isfinite(ds.snr_db).all()), "snr values"))
    return rows


def validate(ds: LayeredDataset) -> None:
    """Raise on the first failed invariant (non-finite features get their
    own error kind so callers can tell corruption from schema mistakes)."""
    for name, ok, detail in invariant_report(ds):
        if ok:
            continue
        if name == "features-finite":
            raise NonFiniteFeaturesError(detail)
        raise ValidationError(f"{name}: {detail}")


def _meta_json(ds: LayeredDataset) -> bytes:
    meta = dict(ds.meta)
    meta["vocab"] = ds.vocab
    meta.setdefault("model", "")
    meta.setdefault("layers", [])
    meta.setdefault("snr_levels", [])
    return json.dumps(meta, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def write_lfa(ds: LayeredDataset, path) -> None:
    """Serialize a validated dataset; identical inputs give identical bytes."""
    validate(ds)
    blob = _meta_json(ds)
    flags = FLAG_SNR if ds.snr_db is not None else 0
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, ds.n_frames, ds.n_layers, ds.dim, flags, len(blob)))
        f.write(blob)
        f.write(np.ascontiguousarray(ds.features, dtype="<f4").tobytes())
        f.write(np.ascontiguousarray(ds.labels, dtype="<u4").tobytes())
        if ds.snr_db is not None:
            f.write(np.ascontiguousarray(ds.snr_db, dtype="<f4").tobytes())


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise TruncatedFileError(f"truncated {what}: expected {n} bytes, got {len(buf)}")
    return buf


def read_lfa(path) -> LayeredDataset:
    """Load and re-validate an archive; error kinds distinguish bad magic,
    unsupported version, truncation, and non-finite payloads."""
    with open(path, "rb") as f:
        head = _read_exact(f, HEADER_SIZE, "header")
        magic, version, n, l, d, flags, json_len = _HEADER.unpack(head)
        if magic != MAGIC:
            raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise UnsupportedVersionError(f"unsupported version {version}, expected {VERSION}")
        try:
            meta = json.loads(_read_exact(f, json_len, "metadata").decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise ValidationError(f"metadata block is not valid JSON: {e}") from e
        if "vocab" not in meta:
            raise ValidationError("metadata is missing the vocab key")
        vocab = [str(v) for v in meta.pop("vocab")]
        feat = np.frombuffer(_read_exact(f, n * l * d * 4, "features"), dtype="<f4").reshape(n, l, d)
        labels = np.frombuffer(_read_exact(f, n * 4, "labels"), dtype="<u4")
        snr = None
        if flags & FLAG_SNR:
            snr = np.frombuffer(_read_exact(f, n * 4, "snr"), dtype="<f4")
        trailing = f.read(1)
        if trailing:
            raise ValidationError("trailing bytes after declared payload")
    ds = LayeredDataset(features=feat, labels=labels, vocab=vocab, snr_db=snr, meta=meta)
    validate(ds)
    return ds


def datasets_equal(a: LayeredDataset, b: LayeredDataset) -> bool:
    if a.features.shape != b.features.shape:
        return False
    same = (
        np.array_equal(a.features, b.features)
        and np.array_equal(a.labels, b.labels)
        and a.vocab == b.vocab
    )
    if (a.snr_db is None) != (b.snr_db is None):
        return False
    if a.snr_db is not None:
        same = same and np.array_equal(a.snr_db, b.snr_db)
    return bool(same)


def dataset_hash(ds: LayeredDataset) -> str:
    """SHA-256 of the serialized archive bytes (stable content identity)."""
    buf = io.BytesIO()
    blob = _meta_json(ds)
    flags = FLAG_SNR if ds.snr_db is not None else 0
    buf.write(_HEADER.pack(MAGIC, VERSION, ds.n_frames, ds.n_layers, ds.dim, flags, len(blob)))
    buf.write(blob)
    buf.write(np.ascontiguousarray(ds.features, dtype="<f4").tobytes())
    buf.write(np.ascontiguousarray(ds.labels, dtype="<u4").tobytes())
    if ds.snr_db is not None:
        buf.write(np.ascontiguousarray(ds.snr_db, dtype="<f4").tobytes())
    return hashlib.sha256(buf.getvalue()).hexdigest()


@dataclass(frozen=True)
class SplitSpec:
    """Deterministic frame-level train/eval partition."""

    eval_fraction: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.eval_fraction < 1.0:
            raise ValueError(f"eval_fraction must be in (0, 1), got {self.eval_fraction}")


def split_indices(n: int, eval_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Shared index partition: PCG64 permutation, eval size round(n * fraction).

    Raises if either side would be empty.
    """
    if n < 2:
        raise ValueError(f"need at least 2 frames to split, got {n}")
    n_eval = int(round(n * eval_fraction))
    if n_eval == 0 or n_eval >= n:
        raise ValueError(
            f"degenerate split: fraction {eval_fraction} of {n} frames leaves an empty side"
        )
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[n_eval:]), np.sort(perm[:n_eval])


def take(ds: LayeredDataset, idx: np.ndarray, split_tag: str | None = None) -> LayeredDataset:
    """Frame subset. utt_bounds metadata is dropped (frames are reindexed)."""
    meta = dict(ds.meta)
    meta.pop("utt_bounds", None)
    if "active_layer" in meta:
        meta["active_layer"] = [meta["active_layer"][int(i)] for i in idx]
    if split_tag is not None:
        meta["split_tag"] = split_tag
    return LayeredDataset(
        features=ds.features[idx],
        labels=ds.labels[idx],
        vocab=list(ds.vocab),
        snr_db=None if ds.snr_db is None else ds.snr_db[idx],
        meta=meta,
    )


def split(ds: LayeredDataset, spec: SplitSpec) -> tuple[LayeredDataset, LayeredDataset]:
    """Partition frames into (train, eval); deterministic given the spec."""
    train_idx, eval_idx = split_indices(ds.n_frames, spec.eval_fraction, spec.seed)
    tag = f"split:{spec.seed}:{spec.eval_fraction:g}"
    return (
        take(ds, train_idx, split_tag=tag + ":train"),
        take(ds, eval_idx, split_tag=tag + ":eval"),
    )


def format_db(value: float) -> str:
    return f"{float(value):g}"


def group_by_snr(ds: LayeredDataset, bin_edges) -> list[tuple[str, np.ndarray]]:
    """Assign every frame to exactly one SNR bin.

    Bin i covers [edges[i], edges[i+1]) with the last bin open above; frames
    below the first edge land in bin 0, so the bins partition the dataset.
    A frame whose SNR equals an edge lands in that edge's own bin.
    """
    if ds.snr_db is None:
        raise ValueError("dataset has no snr_db field")
    edges = np.unique(np.asarray(list(bin_edges), dtype=np.float64))
    if edges.size == 0:
        raise ValueError("bin_edges must be non-empty")
    which = np.searchsorted(edges, ds.snr_db.astype(np.float64), side="right") - 1
    which = np.clip(which, 0, edges.size - 1)
    return [(format_db(e), np.nonzero(which == i)[0]) for i, e in enumerate(edges)]
