"""Synthetic layered datasets with analytically known or controllably ordered
information content.  These are the oracle sources for the test suite: each
family pins the true mutual information between the informative layer(s) and
the labels, or pins an ordering that estimates must reproduce.

All generators draw from a seeded PCG64 stream (numpy's default_rng) in a
fixed call order, so identical specs give bitwise-identical datasets on any
platform.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

import numpy as np

from .lfa import LayeredDataset

FAMILIES = ("deterministic", "independent", "binary_channel", "noisy_snr", "layer_switching")

# Codebook rows carry a constant positive marker in dim 0 so that "this row
# is a class embedding" is detectable by a linear feature; the class identity
# lives in dims 1..D-1.  The marker is label-independent and adds no MI.
MARKER = 2.5
MIN_CODEBOOK_SEP = 1.0


@dataclass(frozen=True)
class SynthSpec:
    family: str
    n: int
    l: int = 1
    d: int = 8
    k: int = 2
    flip_p: float | None = None
    snr_schedule: tuple[float, ...] | None = None
    informative: tuple[int, ...] = (0,)
    segment_len: int | None = None
    noise_sigma: float = 1.0
    peak_decay: float = 0.5      # amplitude factor per layer of distance from the peak
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}, expected one of {FAMILIES}")
        if self.n < 1 or self.l < 1 or self.d < 1:
            raise ValueError("n, l, d must all be positive")
        if self.k < 2:
            raise ValueError(f"need at least 2 classes, got {self.k}")
        if any(i < 0 or i >= self.l for i in self.informative):
            raise ValueError(f"informative layers {self.informative} out of range for L={self.l}")
        if self.flip_p is not None and not 0.0 < self.flip_p <= 0.5:
            raise ValueError(f"flip probability must be in (0, 0.5], got {self.flip_p}")
        if self.segment_len is not None and self.segment_len < 1:
            raise ValueError("segment_len must be >= 1")
        object.__setattr__(self, "informative", tuple(int(i) for i in self.informative))
        if self.snr_schedule is not None:
            object.__setattr__(self, "snr_schedule", tuple(float(s) for s in self.snr_schedule))

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "SynthSpec":
        raw = json.loads(text)
        for key in ("snr_schedule", "informative"):
            if raw.get(key) is not None:
                raw[key] = tuple(raw[key])
        return cls(**raw)


def binary_channel_mi(p: float) -> float:
    """Exact MI in nats of a binary symmetric channel with uniform input:
    ln 2 - H_b(p)."""
    hb = -p * math.log(p) - (1.0 - p) * math.log(1.0 - p) if 0.0 < p < 1.0 else 0.0
    return math.log(2.0) - hb


def _codebook(rng: np.random.Generator, k: int, d: int, marker: float | None = MARKER,
              max_tries: int = 200) -> np.ndarray:
    """K class embeddings in R^D with a minimum pairwise separation so a probe
    can drive its CE to zero.  With a marker, dim 0 is the constant marker and
    class identity lives in dims 1..D-1; marker=None uses every dim for
    identity (no power spent on activeness signalling)."""
    ident_dims = d if marker is None else d - 1
    if ident_dims < 1:
        raise ValueError(f"D={d} leaves no room for class identity next to the marker; increase D")
    for _ in range(max_tries):
        ident = rng.standard_normal((k, ident_dims))
        diff = ident[:, None, :] - ident[None, :, :]
        dist = np.sqrt((diff ** 2).sum(-1))
        dist[np.diag_indices(k)] = np.inf
        if dist.min() >= MIN_CODEBOOK_SEP:
            if marker is None:
                return ident
            return np.concatenate([np.full((k, 1), marker), ident], axis=1)
    raise ValueError(
        f"could not separate {k} class embeddings in D={d} dims "
        f"(min separation {MIN_CODEBOOK_SEP}); increase D"
    )


def _base_meta(spec: SynthSpec, vocab: list[str], extra: dict | None = None) -> dict:
    meta = {
        "model": "synth",
        "layers": [f"layer{i}" for i in range(spec.l)],
        "snr_levels": list(spec.snr_schedule) if spec.snr_schedule else [],
        "synth_spec": json.loads(spec.to_json()),
    }
    if extra:
        meta.update(extra)
    return meta


def gen_deterministic(spec: SynthSpec) -> LayeredDataset:
    """One informative layer holds the exact class embedding, every other
    layer is i.i.d. standard normal: MI(informative; Y) = H(Y) = ln K,
    MI(other; Y) = 0.
    """
    if len(spec.informative) != 1:
        raise ValueError("deterministic family takes exactly one informative layer")
    rng = np.random.default_rng(spec.seed)
    cb = _codebook(rng, spec.k, spec.d)
    labels = rng.integers(0, spec.k, size=spec.n)
    feats = rng.standard_normal((spec.n, spec.l, spec.d))
    feats[:, spec.informative[0], :] = cb[labels]
    vocab = [f"c{i}" for i in range(spec.k)]
    meta = _base_meta(spec, vocab, {"codebook": cb.tolist()})
    return LayeredDataset(feats.astype(np.float32), labels, vocab, meta=meta)


def gen_independent(spec: SynthSpec) -> LayeredDataset:
    """Labels carry no information about any layer: MI = 0 everywhere."""
    rng = np.random.default_rng(spec.seed)
    labels = rng.integers(0, spec.k, size=spec.n)
    feats = rng.standard_normal((spec.n, spec.l, spec.d))
    vocab = [f"c{i}" for i in range(spec.k)]
    return LayeredDataset(feats.astype(np.float32), labels, vocab, meta=_base_meta(spec, vocab))


def gen_binary_channel(spec: SynthSpec) -> LayeredDataset:
    """Uniform bits observed through a symmetric channel: dim 0 of the
    informative layer is +/-1 carrying the label flipped with probability p,
    all remaining dims are noise.  Exact MI = ln 2 - H_b(p).

    Flips are stratified (exactly round(N p) of them, at seeded positions) so
    the empirical channel matches p and the oracle comparison is tight.
    """
    if spec.k != 2:
        raise ValueError("binary_channel requires K=2")
    if spec.flip_p is None:
        raise ValueError("binary_channel requires flip_p")
    rng = np.random.default_rng(spec.seed)
    labels = rng.integers(0, 2, size=spec.n)
    n_flip = int(round(spec.n * spec.flip_p))
    flip_at = rng.permutation(spec.n)[:n_flip]
    observed = labels.copy()
    observed[flip_at] ^= 1
    feats = rng.standard_normal((spec.n, spec.l, spec.d))
    feats[:, spec.informative[0], 0] = 2.0 * observed - 1.0
    vocab = ["0", "1"]
    meta = _base_meta(spec, vocab, {"exact_mi_nats": binary_channel_mi(spec.flip_p)})
    return LayeredDataset(feats.astype(np.float32), labels, vocab, meta=meta)


def gen_noisy_snr(spec: SynthSpec) -> LayeredDataset:
    """Class embeddings under additive isotropic noise at scheduled SNRs.

    Frame i gets schedule[i mod len(schedule)] dB.  The noise magnitude is
    normalized per frame so the power ratio against the full-strength
    embedding is exact; the same noise power is used at every layer while the
    signal amplitude decays by peak_decay per layer of distance from the
    designated peak, so layer-wise information falls off away from the peak
    and downward in SNR.
    """
    if not spec.snr_schedule:
        raise ValueError("noisy_snr requires a non-empty snr_schedule")
    if len(spec.informative) != 1:
        raise ValueError("noisy_snr takes exactly one peak layer")
    peak = spec.informative[0]
    rng = np.random.default_rng(spec.seed)
    # no activeness marker here: every dim carries class identity, so the
    # scheduled power ratio is spent entirely on the label signal
    cb = _codebook(rng, spec.k, spec.d, marker=None)
    labels = rng.integers(0, spec.k, size=spec.n)
    snr = np.asarray(spec.snr_schedule, dtype=np.float64)[np.arange(spec.n) % len(spec.snr_schedule)]

    emb = cb[labels]                                   # [N, D]
    sig_norm = np.sqrt((emb ** 2).sum(axis=1))         # per-frame signal magnitude
    noise_mag = sig_norm * 10.0 ** (-snr / 20.0)       # ||n|| so that ||s||^2/||n||^2 = 10^(snr/10)

    amps = spec.peak_decay ** np.abs(np.arange(spec.l) - peak)
    raw = rng.standard_normal((spec.n, spec.l, spec.d))
    raw /= np.sqrt((raw ** 2).sum(axis=2, keepdims=True))
    feats = amps[None, :, None] * emb[:, None, :] + raw * noise_mag[:, None, None]
    vocab = [f"c{i}" for i in range(spec.k)]
    meta = _base_meta(spec, vocab, {"codebook": cb.tolist(), "peak_layer": peak})
    return LayeredDataset(feats.astype(np.float32), labels, vocab,
                          snr_db=snr.astype(np.float32), meta=meta)


def gen_layer_switching(spec: SynthSpec) -> LayeredDataset:
    """The informative layer rotates between segments: frames are split into
    contiguous runs of segment_len, each run plants the class embedding in
    one layer from the informative list (round-robin) and fills every other
    layer with noise.  meta["active_layer"] records the planted layer per
    frame for test oracles.
    """
    if len(spec.informative) < 2:
        raise ValueError("layer_switching needs at least 2 informative layer indices")
    if spec.segment_len is None:
        raise ValueError("layer_switching requires segment_len")
    if spec.segment_len > spec.n:
        raise ValueError(f"segment_len {spec.segment_len} exceeds N={spec.n}")
    rng = np.random.default_rng(spec.seed)
    cb = _codebook(rng, spec.k, spec.d)
    labels = rng.integers(0, spec.k, size=spec.n)
    feats = rng.standard_normal((spec.n, spec.l, spec.d)) * spec.noise_sigma
    active = np.asarray(spec.informative)[(np.arange(spec.n) // spec.segment_len) % len(spec.informative)]
    feats[np.arange(spec.n), active, :] = cb[labels]
    vocab = [f"c{i}" for i in range(spec.k)]
    meta = _base_meta(spec, vocab, {"codebook": cb.tolist(), "active_layer": active.tolist()})
    return LayeredDataset(feats.astype(np.float32), labels, vocab, meta=meta)


_GENERATORS = {
    "deterministic": gen_deterministic,
    "independent": gen_independent,
    "binary_channel": gen_binary_channel,
    "noisy_snr": gen_noisy_snr,
    "layer_switching": gen_layer_switching,
}


def generate(spec: SynthSpec) -> LayeredDataset:
    """Dispatch to the family generator."""
    return _GENERATORS[spec.family](spec)
