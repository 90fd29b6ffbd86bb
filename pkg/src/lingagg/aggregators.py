"""Static and dynamic layer aggregation.

The static weighted sum fuses L layer representations with softmax-normalized
scalar weights; the dynamic variant applies single-head attention across the
layer axis per frame with a global layer-bias prior.  Both can be pre-trained
to maximize the MI lower bound between the fused representation and the
labels (jointly with a probe on plain cross-entropy), then frozen and
exported to JSON for a downstream consumer.  The hybrid convention marks
exactly the layer-0 parameter (weight w0, or bias b0) trainable.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import (
    AdamState,
    Probe,
    adam_step,
    cross_entropy,
    glorot_uniform,
    layer_attention_backward,
    layer_attention_forward,
    probe_backward,
    probe_forward,
    softmax,
)
from .lfa import LayeredDataset, dataset_hash, split_indices
from .mi import (
    MIEstimate,
    TrainConfig,
    TrainingDivergedError,
    epoch_batches,
    mi_bound,
    train_probe,
)

FORMAT_TAG = "ling-agg/1"
MODES = ("acoustic", "linguistic", "hybrid")
FUSE_CHUNK = 8192


@dataclass
class WSAggregator:
    """Static weighted sum: weights = softmax(logits), one scalar per layer."""

    logits: np.ndarray                      # [L] float64
    mode: str = "linguistic"
    trainable_mask: np.ndarray | None = None  # [L] bool
    frozen: bool = False
    dim: int = 0                            # feature width it was fit on (0 = unknown)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.logits = np.ascontiguousarray(self.logits, dtype=np.float64)
        if self.logits.ndim != 1 or self.logits.size < 1:
            raise ValueError("logits must be a 1-D per-layer vector")
        if not np.isfinite(self.logits).all():
            raise ValueError("logits must be finite")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.trainable_mask is None:
            self.trainable_mask = hybrid_ws_mask(self.n_layers) if self.mode == "hybrid" \
                else np.zeros(self.n_layers, dtype=bool)
        self.trainable_mask = np.ascontiguousarray(self.trainable_mask, dtype=bool)
        if self.trainable_mask.shape != self.logits.shape:
            raise ValueError("trainable_mask must have one flag per layer")
        if self.mode == "hybrid" and not np.array_equal(self.trainable_mask, hybrid_ws_mask(self.n_layers)):
            raise ValueError("hybrid mode marks exactly layer 0 trainable")

    @property
    def n_layers(self) -> int:
        return self.logits.size

    def weights(self) -> np.ndarray:
        return softmax(self.logits)


@dataclass
class DWSAggregator:
    """Per-frame attention over the layer axis with a global layer bias."""

    w_q: np.ndarray                  # [D, d_k] float64
    w_k: np.ndarray                  # [D, d_k] float64
    bias: np.ndarray                 # [L] float64
    mode: str = "linguistic"
    trainable_mask: dict | None = None  # {"W_Q": bool, "W_K": bool, "bias": [L] bool}
    frozen: bool = False
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.w_q = np.ascontiguousarray(self.w_q, dtype=np.float64)
        self.w_k = np.ascontiguousarray(self.w_k, dtype=np.float64)
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float64)
        if self.w_q.ndim != 2 or self.w_q.shape != self.w_k.shape:
            raise ValueError(f"W_Q {self.w_q.shape} and W_K {self.w_k.shape} must match [D, d_k]")
        if self.bias.ndim != 1:
            raise ValueError("bias must be a 1-D per-layer vector")
        for name, arr in (("W_Q", self.w_q), ("W_K", self.w_k), ("bias", self.bias)):
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} must be finite")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.trainable_mask is None:
            self.trainable_mask = hybrid_dws_mask(self.n_layers) if self.mode == "hybrid" \
                else {"W_Q": False, "W_K": False, "bias": np.zeros(self.n_layers, dtype=bool)}
        self.trainable_mask = {
            "W_Q": bool(self.trainable_mask["W_Q"]),
            "W_K": bool(self.trainable_mask["W_K"]),
            "bias": np.ascontiguousarray(self.trainable_mask["bias"], dtype=bool),
        }
        if self.trainable_mask["bias"].shape != self.bias.shape:
            raise ValueError("bias mask must have one flag per layer")
        if self.mode == "hybrid":
            ref = hybrid_dws_mask(self.n_layers)
            if (self.trainable_mask["W_Q"] or self.trainable_mask["W_K"]
                    or not np.array_equal(self.trainable_mask["bias"], ref["bias"])):
                raise ValueError("hybrid mode marks exactly the layer-0 bias trainable")

    @property
    def n_layers(self) -> int:
        return self.bias.size

    @property
    def dim(self) -> int:
        return self.w_q.shape[0]

    @property
    def d_k(self) -> int:
        return self.w_q.shape[1]


def hybrid_ws_mask(n_layers: int) -> np.ndarray:
    mask = np.zeros(n_layers, dtype=bool)
    mask[0] = True
    return mask


def hybrid_dws_mask(n_layers: int) -> dict:
    bias_mask = np.zeros(n_layers, dtype=bool)
    bias_mask[0] = True
    return {"W_Q": False, "W_K": False, "bias": bias_mask}


def aggregator_id(agg) -> str:
    """Short content identity: kind, mode, and a parameter digest."""
    h = hashlib.sha256()
    if isinstance(agg, WSAggregator):
        kind = "ws"
        h.update(agg.logits.tobytes())
    else:
        kind = "dws"
        for arr in (agg.w_q, agg.w_k, agg.bias):
            h.update(arr.tobytes())
    return f"{kind}:{agg.mode}:{h.hexdigest()[:8]}"


@dataclass
class FusedView:
    """Fused [N x D] features plus where they came from."""

    features: np.ndarray
    aggregator_id: str
    dataset_hash: str

    def __post_init__(self):
        if self.features.ndim != 2:
            raise ValueError("fused features must be [N, D]")
        if not np.isfinite(self.features).all():
            raise ValueError("fused features must be finite")


def ws_fuse(agg: WSAggregator, ds: LayeredDataset) -> FusedView:
    """Per frame, the exact linear combination sum_i w_i * layer_i.

    The sum over layers runs in float64 before rounding back, so the result
    does not depend on the layer storage order.
    """
    if agg.n_layers != ds.n_layers:
        raise ValueError(f"aggregator has {agg.n_layers} layers, dataset has {ds.n_layers}")
    fused64 = np.einsum("l,nld->nd", agg.weights(), ds.features.astype(np.float64))
    return FusedView(fused64.astype(ds.features.dtype), aggregator_id(agg), dataset_hash(ds))


def dws_fuse(agg: DWSAggregator, ds: LayeredDataset):
    """Attention fusion per frame.  Also returns the per-frame layer weights
    [N x L]: column j is the mean attention mass assigned to layer j, the
    quantity dumped for time-varying weight plots.
    """
    if agg.n_layers != ds.n_layers:
        raise ValueError(f"aggregator has {agg.n_layers} layers, dataset has {ds.n_layers}")
    if agg.dim != ds.dim:
        raise ValueError(f"aggregator width {agg.dim} does not match dataset width {ds.dim}")
    n = ds.n_frames
    fused = np.empty((n, ds.dim), dtype=ds.features.dtype)
    weights = np.empty((n, ds.n_layers), dtype=ds.features.dtype)
    for start in range(0, n, FUSE_CHUNK):
        xb = ds.features[start:start + FUSE_CHUNK]
        fb, ab, _ = layer_attention_forward(agg.w_q, agg.w_k, agg.bias, xb)
        fused[start:start + FUSE_CHUNK] = fb
        weights[start:start + FUSE_CHUNK] = ab.mean(axis=1)
    return FusedView(fused, aggregator_id(agg), dataset_hash(ds)), weights


def _joint_setup(ds: LayeredDataset, cfg: TrainConfig):
    if ds.n_layers < 2:
        raise ValueError("aggregation over a single layer is degenerate; use the layer directly")
    train_idx, _ = split_indices(ds.n_frames, cfg.eval_fraction, cfg.seed)
    x = ds.features[train_idx].astype(cfg.dtype, copy=False)
    y = ds.labels[train_idx]
    if np.unique(y).size < 2:
        raise ValueError("training labels contain a single class")
    return x, y


def train_linguistic_ws(ds: LayeredDataset, cfg: TrainConfig):
    """Jointly fit the weighted-sum logits and a probe by minimizing held-in
    cross-entropy on the fused view (equivalently, maximizing the MI bound).

    Logits start at zero (exact uniform prior over layers).  Returns the
    frozen aggregator, the co-trained probe, and the per-epoch CE history.
    """
    x, y = _joint_setup(ds, cfg)
    n, l, d = x.shape
    rng = np.random.default_rng(cfg.seed)
    theta = np.zeros(l, dtype=np.float64)
    probe = Probe.create(d, cfg.hidden, ds.vocab_size, rng, dropout_rate=cfg.dropout, dtype=cfg.dtype)
    probe.train_tag = f"ws-joint:{cfg.seed}:train"
    params = {"theta": theta, **{f"probe.{k}": v for k, v in probe.params().items()}}
    state = AdamState.for_params(params, lr=cfg.lr)

    history = []
    for epoch in range(cfg.epochs):
        total = 0.0
        for idx in epoch_batches(rng, n, cfg.batch_size):
            xb = x[idx]
            w64 = softmax(theta)
            fused = np.einsum("l,bld->bd", w64.astype(xb.dtype), xb)
            logits, cache = probe_forward(probe, fused, train=True, rng=rng)
            loss, d_logits = cross_entropy(logits, y[idx])
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"non-finite training loss at epoch {epoch}")
            probe_grads, d_fused = probe_backward(cache, d_logits)
            d_w = np.einsum("bd,bld->l", d_fused, xb).astype(np.float64)
            d_theta = w64 * (d_w - np.dot(w64, d_w))
            grads = {"theta": d_theta, **{f"probe.{k}": v for k, v in probe_grads.items()}}
            adam_step(params, grads, state)
            total += loss * idx.size
        history.append(total / n)

    agg = WSAggregator(
        logits=theta, mode="linguistic",
        trainable_mask=np.zeros(l, dtype=bool), frozen=True, dim=d,
        provenance={"seed": cfg.seed, "dataset_hash": dataset_hash(ds)},
    )
    return agg, probe, history


def train_linguistic_dws(ds: LayeredDataset, cfg: TrainConfig, d_k: int | None = None):
    """Jointly fit the attention projections, the layer bias, and a probe on
    fused-view cross-entropy.  Bias starts at zero (uniform layer prior);
    projection width defaults to the feature width.
    """
    x, y = _joint_setup(ds, cfg)
    n, l, d = x.shape
    dk = d if d_k is None else int(d_k)
    rng = np.random.default_rng(cfg.seed)
    w_q = glorot_uniform(rng, d, dk, dtype=np.float64)
    w_k = glorot_uniform(rng, d, dk, dtype=np.float64)
    bias = np.zeros(l, dtype=np.float64)
    probe = Probe.create(d, cfg.hidden, ds.vocab_size, rng, dropout_rate=cfg.dropout, dtype=cfg.dtype)
    probe.train_tag = f"dws-joint:{cfg.seed}:train"
    params = {"W_Q": w_q, "W_K": w_k, "bias": bias,
              **{f"probe.{k}": v for k, v in probe.params().items()}}
    state = AdamState.for_params(params, lr=cfg.lr)

    history = []
    for epoch in range(cfg.epochs):
        total = 0.0
        for idx in epoch_batches(rng, n, cfg.batch_size):
            xb = x[idx]
            fused, _, att_cache = layer_attention_forward(w_q, w_k, bias, xb)
            logits, cache = probe_forward(probe, fused, train=True, rng=rng)
            loss, d_logits = cross_entropy(logits, y[idx])
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"non-finite training loss at epoch {epoch}")
            probe_grads, d_fused = probe_backward(cache, d_logits)
            att_grads, _ = layer_attention_backward(att_cache, d_fused)
            grads = {"W_Q": att_grads["W_Q"], "W_K": att_grads["W_K"], "bias": att_grads["bias"],
                     **{f"probe.{k}": v for k, v in probe_grads.items()}}
            adam_step(params, grads, state)
            total += loss * idx.size
        history.append(total / n)

    agg = DWSAggregator(
        w_q=w_q, w_k=w_k, bias=bias, mode="linguistic",
        trainable_mask={"W_Q": False, "W_K": False, "bias": np.zeros(l, dtype=bool)},
        frozen=True,
        provenance={"seed": cfg.seed, "dataset_hash": dataset_hash(ds)},
    )
    return agg, probe, history


def fuse(agg, ds: LayeredDataset) -> FusedView:
    if isinstance(agg, WSAggregator):
        return ws_fuse(agg, ds)
    return dws_fuse(agg, ds)[0]


def joint_heldout_bound(agg, probe: Probe, ds: LayeredDataset, cfg: TrainConfig) -> MIEstimate:
    """Bound of the co-trained probe on the held-out frames of the same
    deterministic split used during joint training."""
    _, eval_idx = split_indices(ds.n_frames, cfg.eval_fraction, cfg.seed)
    view = fuse(agg, ds)
    return mi_bound(probe, view.features[eval_idx], ds.labels[eval_idx],
                    context=aggregator_id(agg), split_tag=f"joint:{cfg.seed}:eval")


def evaluate_aggregator(agg, ds: LayeredDataset, cfg: TrainConfig) -> MIEstimate:
    """Fuse the dataset, train a fresh probe on the train split of the fused
    view, and report the bound on the held-out split.  Performs no parameter
    writes on the aggregator.
    """
    view = fuse(agg, ds)
    train_idx, eval_idx = split_indices(ds.n_frames, cfg.eval_fraction, cfg.seed)
    probe, _ = train_probe(view.features[train_idx], ds.labels[train_idx], cfg,
                           n_classes=ds.vocab_size, split_tag="agg-eval:train")
    return mi_bound(probe, view.features[eval_idx], ds.labels[eval_idx],
                    context=aggregator_id(agg), split_tag="agg-eval:eval")


def _format_floats(obj):
    """JSON text with every float printed at 17 significant digits (exact
    round-trip for float64)."""
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(k)}:{_format_floats(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_format_floats(v) for v in obj) + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError("cannot serialize non-finite numbers")
        return f"{obj:.17g}"
    if isinstance(obj, (int, str)) or obj is None:
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj)}")


def export_aggregator(agg, path) -> None:
    """Write the aggregator JSON (mode, masks, frozen flag, provenance all
    preserved; numbers at 17 significant digits)."""
    if isinstance(agg, WSAggregator):
        doc = {
            "format": FORMAT_TAG, "type": "ws", "mode": agg.mode,
            "L": agg.n_layers, "D": agg.dim,
            "logits": [float(v) for v in agg.logits],
            "trainable_mask": {"logits": [bool(v) for v in agg.trainable_mask]},
            "frozen": agg.frozen,
            "provenance": dict(agg.provenance),
        }
    elif isinstance(agg, DWSAggregator):
        doc = {
            "format": FORMAT_TAG, "type": "dws", "mode": agg.mode,
            "L": agg.n_layers, "D": agg.dim, "d_k": agg.d_k,
            "W_Q": [[float(v) for v in row] for row in agg.w_q],
            "W_K": [[float(v) for v in row] for row in agg.w_k],
            "bias": [float(v) for v in agg.bias],
            "trainable_mask": {"W_Q": agg.trainable_mask["W_Q"],
                               "W_K": agg.trainable_mask["W_K"],
                               "bias": [bool(v) for v in agg.trainable_mask["bias"]]},
            "frozen": agg.frozen,
            "provenance": dict(agg.provenance),
        }
    else:
        raise TypeError(f"not an aggregator: {type(agg)}")
    with open(path, "w", encoding="utf-8") as f:
        f.write(_format_floats(doc))
        f.write("\n")


def import_aggregator(path):
    """Load an aggregator JSON.  Hand-written static imports may carry a raw
    "weights" vector instead of logits; those are normalized onto the simplex
    (log-weights reproduce them exactly under softmax) and flagged in
    provenance as normalized_from_raw.
    """
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    if doc.get("format") != FORMAT_TAG:
        raise ValueError(f"unsupported format tag {doc.get('format')!r}, expected {FORMAT_TAG!r}")
    kind = doc.get("type")
    if kind == "ws":
        provenance = dict(doc.get("provenance", {}))
        if "logits" in doc:
            logits = np.asarray(doc["logits"], dtype=np.float64)
        elif "weights" in doc:
            w = np.asarray(doc["weights"], dtype=np.float64)
            if w.ndim != 1 or (w < 0).any() or w.sum() <= 0:
                raise ValueError("raw weights must be non-negative with positive sum")
            w = w / w.sum()
            logits = np.log(np.clip(w, 1e-300, None))
            provenance["normalized_from_raw"] = True
        else:
            raise ValueError("ws aggregator needs logits or weights")
        if "L" in doc and int(doc["L"]) != logits.size:
            raise ValueError(f"declared L={doc['L']} does not match {logits.size} weights")
        mask = doc.get("trainable_mask", {}).get("logits")
        return WSAggregator(
            logits=logits, mode=doc.get("mode", "acoustic"),
            trainable_mask=None if mask is None else np.asarray(mask, dtype=bool),
            frozen=bool(doc.get("frozen", False)),
            dim=int(doc.get("D", 0)), provenance=provenance,
        )
    if kind == "dws":
        w_q = np.asarray(doc["W_Q"], dtype=np.float64)
        w_k = np.asarray(doc["W_K"], dtype=np.float64)
        bias = np.asarray(doc["bias"], dtype=np.float64)
        if "L" in doc and int(doc["L"]) != bias.size:
            raise ValueError(f"declared L={doc['L']} does not match bias length {bias.size}")
        if "D" in doc and int(doc["D"]) != w_q.shape[0]:
            raise ValueError(f"declared D={doc['D']} does not match W_Q rows {w_q.shape[0]}")
        mask = doc.get("trainable_mask")
        if mask is not None:
            mask = {"W_Q": mask["W_Q"], "W_K": mask["W_K"],
                    "bias": np.asarray(mask["bias"], dtype=bool)}
        return DWSAggregator(
            w_q=w_q, w_k=w_k, bias=bias, mode=doc.get("mode", "acoustic"),
            trainable_mask=mask, frozen=bool(doc.get("frozen", False)),
            provenance=dict(doc.get("provenance", {})),
        )
    raise ValueError(f"unknown aggregator type tag {kind!r}")


def compare_weights(aggs: list, labels: list[str], ds: LayeredDataset | None = None) -> list[dict]:
    """Per-layer normalized weight rows, one per aggregator, for bar plots.

    Static aggregators contribute softmax weights; dynamic ones contribute
    their mean per-frame weights on the reference dataset.  Rows imported
    from raw weight vectors are flagged.
    """
    if len(aggs) != len(labels):
        raise ValueError("need one label per aggregator")
    n_layers = {a.n_layers for a in aggs}
    if len(n_layers) > 1:
        raise ValueError(f"aggregators disagree on layer count: {sorted(n_layers)}")
    rows = []
    for agg, label in zip(aggs, labels):
        if isinstance(agg, WSAggregator):
            w = agg.weights()
        else:
            if ds is None:
                raise ValueError("dynamic aggregators need a reference dataset for mean weights")
            _, per_frame = dws_fuse(agg, ds)
            w = per_frame.mean(axis=0).astype(np.float64)
        note = "normalized-from-raw" if agg.provenance.get("normalized_from_raw") else ""
        rows.append({"label": label, "weights": w, "note": note})
    return rows


def write_weight_rows_csv(fileobj, rows: list[dict]) -> None:
    n_layers = rows[0]["weights"].size if rows else 0
    w = csv.writer(fileobj)
    w.writerow(["label", *[f"w_{i}" for i in range(n_layers)], "note"])
    for row in rows:
        w.writerow([row["label"], *[f"{v:.10g}" for v in row["weights"]], row["note"]])


def write_dynamic_weights_csv(fileobj, weights: np.ndarray, snr_db: np.ndarray | None) -> None:
    """Per-frame layer weight dump: frame, snr_db, w_0..w_{L-1}."""
    w = csv.writer(fileobj)
    n, l = weights.shape
    w.writerow(["frame", "snr_db", *[f"w_{i}" for i in range(l)]])
    for i in range(n):
        snr = "" if snr_db is None else f"{float(snr_db[i]):g}"
        w.writerow([i, snr, *[f"{v:.10g}" for v in weights[i]]])
