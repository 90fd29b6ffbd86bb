"""Probe training and mutual-information lower bounds.

The bound for a categorical target Y and representation Z is

    I(Z; Y) >= H(Y) - E[-log q(y|z)]

where q is a trained classifier and the expectation is its held-out
cross-entropy.  H(Y) is the plug-in entropy of the evaluation labels, so both
terms of the bound live on the same empirical distribution.  Bounds are
reported in nats (bits = nats / ln 2) and are deliberately not clamped at
zero: a negative value means the probe is worse than the label marginal,
which is worth seeing.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .kernels import AdamState, Probe, adam_step, cross_entropy, probe_backward, probe_forward
from .lfa import LayeredDataset, group_by_snr, split_indices

EVAL_CHUNK = 8192  # fixed chunk size keeps the float64 accumulation order stable

CSV_COLUMNS = ("context", "layer", "snr_bin", "h_y_nats", "ce_nats", "mi_nats", "mi_bits", "n_eval")


class TrainingDivergedError(ArithmeticError):
    """Probe training hit a non-finite loss."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 15
    lr: float = 0.001
    batch_size: int = 256
    seed: int = 0
    eval_fraction: float = 0.2
    hidden: tuple[int, ...] = (256, 256)   # () trains a purely linear probe
    dropout: float = 0.1
    precision: str = "f32"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.eval_fraction < 1.0:
            raise ValueError(f"eval_fraction must be in (0, 1), got {self.eval_fraction}")
        if self.precision not in ("f32", "f64"):
            raise ValueError(f"precision must be f32 or f64, got {self.precision}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @property
    def dtype(self):
        return np.float64 if self.precision == "f64" else np.float32

    def with_seed(self, seed: int) -> "TrainConfig":
        return dataclasses.replace(self, seed=seed)


@dataclass
class MIEstimate:
    """One entropy / cross-entropy / bound triple, all in nats."""

    h_y: float
    ce: float
    bound: float
    n_eval: int
    context: str = ""
    layer: int | None = None
    snr_bin: str | None = None

    def __post_init__(self):
        if not (math.isfinite(self.h_y) and math.isfinite(self.ce) and math.isfinite(self.bound)):
            raise ValueError("MI estimate fields must be finite")
        if self.ce < 0:
            raise ValueError(f"cross-entropy cannot be negative, got {self.ce}")
        if abs(self.bound - (self.h_y - self.ce)) > 1e-12 * max(1.0, abs(self.h_y)):
            raise ValueError("bound must equal h_y - ce")

    @property
    def bits(self) -> float:
        return self.bound / math.log(2.0)


@dataclass
class MIReport:
    """Estimates over layers (and SNR bins when grouped), plus the absent
    (layer, bin) pairs that had no evaluation frames."""

    estimates: list[MIEstimate]
    n_layers: int
    bin_labels: list[str] | None = None
    absent: list[tuple[int, str]] = field(default_factory=list)
    averaging: str = "unweighted mean over SNR bins"

    def matrix(self) -> np.ndarray:
        """Bounds as [L x n_bins] (single column when ungrouped); NaN marks
        absent entries."""
        bins = self.bin_labels if self.bin_labels is not None else ["all"]
        out = np.full((self.n_layers, len(bins)), np.nan)
        col = {b: j for j, b in enumerate(bins)}
        for est in self.estimates:
            out[est.layer, col[est.snr_bin if est.snr_bin is not None else "all"]] = est.bound
        return out

    def layer_means(self) -> np.ndarray:
        """Per-layer bound averaged over non-absent bins (the collapsed view)."""
        with np.errstate(invalid="ignore"):
            return np.nanmean(self.matrix(), axis=1)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            write_estimates_csv(f, self.estimates)


def write_estimates_csv(fileobj, estimates: list[MIEstimate]) -> None:
    w = csv.writer(fileobj)
    w.writerow(CSV_COLUMNS)
    for e in estimates:
        w.writerow([
            e.context,
            "" if e.layer is None else e.layer,
            "all" if e.snr_bin is None else e.snr_bin,
            f"{e.h_y:.10g}", f"{e.ce:.10g}", f"{e.bound:.10g}", f"{e.bits:.10g}",
            e.n_eval,
        ])


def empirical_entropy(labels: np.ndarray) -> float:
    """Plug-in entropy -sum p ln p of the observed label distribution, nats."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("cannot estimate entropy of an empty label array")
    counts = np.bincount(labels.astype(np.int64))
    p = counts[counts > 0].astype(np.float64) / labels.size
    return float(-np.sum(p * np.log(p)))


def epoch_batches(rng: np.random.Generator, n: int, batch_size: int):
    """Seeded shuffle, then contiguous minibatch index slices."""
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start:start + batch_size]


def train_probe(features: np.ndarray, labels: np.ndarray, cfg: TrainConfig,
                n_classes: int | None = None, split_tag: str | None = None):
    """Seeded-shuffle minibatch Adam on the cross-entropy of an MLP probe.

    Returns (probe, per-epoch mean training CE).  Deterministic given
    cfg.seed; raises TrainingDivergedError (with the epoch) on non-finite
    loss and ValueError if the training labels hold a single class.
    """
    x = np.ascontiguousarray(features, dtype=cfg.dtype)
    y = np.asarray(labels)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError(f"features {x.shape} and labels {y.shape} do not align")
    if np.unique(y).size < 2:
        raise ValueError("training labels contain a single class; the probe has nothing to learn")
    k = int(n_classes) if n_classes is not None else int(y.max()) + 1

    rng = np.random.default_rng(cfg.seed)
    probe = Probe.create(x.shape[1], cfg.hidden, k, rng, dropout_rate=cfg.dropout, dtype=cfg.dtype)
    probe.train_tag = split_tag
    params = probe.params()
    state = AdamState.for_params(params, lr=cfg.lr)

    history = []
    n = x.shape[0]
    for epoch in range(cfg.epochs):
        total = 0.0
        for idx in epoch_batches(rng, n, cfg.batch_size):
            logits, cache = probe_forward(probe, x[idx], train=True, rng=rng)
            loss, d_logits = cross_entropy(logits, y[idx])
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"non-finite training loss at epoch {epoch}")
            grads, _ = probe_backward(cache, d_logits)
            adam_step(params, grads, state)
            total += loss * idx.size
        history.append(total / n)
    return probe, history


def eval_cross_entropy(probe: Probe, features: np.ndarray, labels: np.ndarray) -> float:
    """Held-out CE in eval mode (no dropout), float64 accumulation over fixed
    chunks."""
    x = np.asarray(features)
    y = np.asarray(labels).astype(np.int64)
    chunk_sums = []
    for start in range(0, x.shape[0], EVAL_CHUNK):
        xb = x[start:start + EVAL_CHUNK]
        yb = y[start:start + EVAL_CHUNK]
        logits, _ = probe_forward(probe, xb, train=False)
        shifted = logits - logits.max(axis=1, keepdims=True)
        logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        logp = shifted - logz
        chunk_sums.append(np.sum(-logp[np.arange(len(yb)), yb].astype(np.float64)))
    return float(np.sum(np.asarray(chunk_sums)) / x.shape[0])


def mi_bound(probe: Probe, features: np.ndarray, labels: np.ndarray,
             context: str = "", layer: int | None = None, snr_bin: str | None = None,
             split_tag: str | None = None) -> MIEstimate:
    """H(Y) minus held-out cross-entropy on the given evaluation frames.

    The evaluation set must be disjoint from the probe's training set; when
    both carry split tags the identical-split misuse is rejected.
    """
    x = np.asarray(features)
    if x.ndim != 2 or x.shape[1] != probe.in_dim:
        raise ValueError(f"features {x.shape} do not match probe input dim {probe.in_dim}")
    if x.shape[0] == 0:
        raise ValueError("evaluation set is empty")
    if split_tag is not None and probe.train_tag is not None and split_tag == probe.train_tag:
        raise ValueError(f"evaluation split {split_tag!r} is the probe's own training split")
    h_y = empirical_entropy(labels)
    ce = eval_cross_entropy(probe, x, labels)
    return MIEstimate(h_y=h_y, ce=ce, bound=h_y - ce, n_eval=x.shape[0],
                      context=context, layer=layer, snr_bin=snr_bin)


def _layer_probe(ds: LayeredDataset, layer: int, cfg: TrainConfig):
    """Split + train one per-layer probe with the layer-derived seed.

    Returns (probe, layer config, eval indices)."""
    layer_cfg = cfg.with_seed(cfg.seed ^ layer)
    train_idx, eval_idx = split_indices(ds.n_frames, cfg.eval_fraction, layer_cfg.seed)
    x = np.ascontiguousarray(ds.features[:, layer, :])
    probe, _ = train_probe(x[train_idx], ds.labels[train_idx], layer_cfg,
                           n_classes=ds.vocab_size, split_tag=f"layer{layer}:train")
    return probe, x, eval_idx


def layerwise_analysis(ds: LayeredDataset, cfg: TrainConfig, threads: int = 1) -> MIReport:
    """One independently seeded probe per layer, bound on the held-out frames.

    Per-layer work is independent and read-only, so it may fan out across
    threads; results are ordered by layer either way.
    """
    def one(layer: int) -> MIEstimate:
        probe, x, eval_idx = _layer_probe(ds, layer, cfg)
        return mi_bound(probe, x[eval_idx], ds.labels[eval_idx], context="layer",
                        layer=layer, split_tag=f"layer{layer}:eval")

    layers = range(ds.n_layers)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            estimates = list(pool.map(one, layers))
    else:
        estimates = [one(layer) for layer in layers]
    return MIReport(estimates=estimates, n_layers=ds.n_layers)


def snr_analysis(ds: LayeredDataset, bin_edges, cfg: TrainConfig, threads: int = 1) -> MIReport:
    """Per-layer probes trained on all SNRs pooled, evaluated per SNR bin.

    Emits the full layer x bin matrix; empty bins are flagged absent rather
    than reported as zero.  The per-layer mean over bins is the collapsed
    single-axis view.
    """
    if ds.snr_db is None:
        raise ValueError("dataset has no snr_db field")
    bins = group_by_snr(ds, bin_edges)
    bin_labels = [label for label, _ in bins]

    def one(layer: int):
        probe, x, eval_idx = _layer_probe(ds, layer, cfg)
        ests, missing = [], []
        for label, bin_idx in bins:
            sel = np.intersect1d(eval_idx, bin_idx, assume_unique=True)
            if sel.size == 0:
                missing.append((layer, label))
                continue
            ests.append(mi_bound(probe, x[sel], ds.labels[sel], context="layer",
                                 layer=layer, snr_bin=label, split_tag=f"layer{layer}:eval"))
        return ests, missing

    layers = range(ds.n_layers)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, layers))
    else:
        results = [one(layer) for layer in layers]

    estimates, absent = [], []
    for ests, missing in results:
        estimates.extend(ests)
        absent.extend(missing)
    return MIReport(estimates=estimates, n_layers=ds.n_layers, bin_labels=bin_labels, absent=absent)
