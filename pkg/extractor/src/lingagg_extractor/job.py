"""Extraction jobs: (clean audio x noise x SNR grid) -> one pooled archive.

A job mixes every clean utterance with noise at every scheduled SNR, runs
the layer stack through the checkpoint, labels frames from the utterance's
alignment, and pools everything into a single LFA with per-frame SNR and
utterance boundaries in the metadata.  Deterministic given the job seed:
noise pairing and crop offsets derive from (seed, utterance, snr) alone.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .audio import mix_at_snr, read_wav
from .features import EXPECTED_RATE, LAYER0_CONVENTION, FeatureExtractor
from .labels import align_labels, build_vocab, read_alignment
from .lfa_writer import write_lfa

logger = logging.getLogger(__name__)


@dataclass
class ExtractionJob:
    clean: list[str]
    noise: list[str]
    snr_db: list[float]
    model: str
    alignments: list[str]
    out: str
    layers: list[int] | None = None   # None = every exposed layer (0..num_layers)
    seed: int = 0
    skip_errors: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.clean:
            raise ValueError("job needs at least one clean utterance")
        if not self.noise:
            raise ValueError("job needs at least one noise file")
        if not self.snr_db:
            raise ValueError("job needs at least one SNR level")
        if len(self.alignments) != len(self.clean):
            raise ValueError("need exactly one alignment per clean utterance")

    @classmethod
    def from_json(cls, path) -> "ExtractionJob":
        with open(path, "r", encoding="utf-8") as f:
            return cls(**json.load(f))


def _mixture_seed(seed: int, utt_index: int, snr_index: int) -> int:
    return (seed * 1_000_003 + utt_index * 997 + snr_index) & 0x7FFFFFFF


def run_job(job: ExtractionJob) -> str:
    """Execute the job; returns the output path.

    Per-utterance failures raise unless job.skip_errors, in which case they
    are logged and the mixture is dropped.
    """
    extractor = FeatureExtractor(job.model)

    per_utt_labels = []
    pieces = []  # (features [T, L, D], label strings, snr series)
    utt_bounds = []
    for ui, (clean_path, align_path) in enumerate(zip(job.clean, job.alignments)):
        try:
            clean, rate = read_wav(clean_path)
            if rate != EXPECTED_RATE:
                raise ValueError(f"{clean_path}: sample rate {rate}, model expects {EXPECTED_RATE}")
            intervals = read_alignment(align_path)
        except Exception:
            if not job.skip_errors:
                raise
            logger.exception("skipping utterance %s", clean_path)
            continue
        for si, snr in enumerate(job.snr_db):
            try:
                mix_seed = _mixture_seed(job.seed, ui, si)
                noise_path = job.noise[(ui * len(job.snr_db) + si) % len(job.noise)]
                noise, noise_rate = read_wav(noise_path)
                if noise_rate != rate:
                    raise ValueError(f"{noise_path}: sample rate {noise_rate} != {rate}")
                noisy, scaled_noise, snr_series = mix_at_snr(clean, noise, snr, mix_seed, rate)
                feats = extractor.extract_layers(noisy, rate, job.layers)
            except Exception:
                if not job.skip_errors:
                    raise
                logger.exception("skipping mixture %s @ %s dB", clean_path, snr)
                continue
            t = feats.shape[0]
            labels = align_labels(intervals, t)
            # the 20 ms hop grid and the model's conv stride count frames
            # slightly differently at the edge; align by truncate-or-extend
            if snr_series.size >= t:
                series = snr_series[:t]
            else:
                series = np.concatenate([snr_series, np.full(t - snr_series.size, snr_series[-1])])
            per_utt_labels.append(labels)
            pieces.append((feats, labels, series.astype(np.float32)))

    if not pieces:
        raise ValueError("job produced no mixtures")

    vocab = build_vocab(per_utt_labels)
    index = {name: i for i, name in enumerate(vocab)}
    offset = 0
    for feats, _, _ in pieces:
        utt_bounds.append([offset, offset + feats.shape[0]])
        offset += feats.shape[0]

    features = np.concatenate([p[0] for p in pieces], axis=0)
    labels = np.array([index[name] for p in pieces for name in p[1]], dtype=np.uint32)
    snr_db = np.concatenate([p[2] for p in pieces])

    meta = dict(job.meta)
    meta.update({
        "model": job.model,
        "layers": [f"layer{i}" for i in (job.layers or range(extractor.n_hidden_states))],
        "snr_levels": [float(s) for s in job.snr_db],
        "utt_bounds": utt_bounds,
        "layer0": LAYER0_CONVENTION,
        "labeling": "frame-center containment, 20 ms hop, 12.5 ms center offset",
        "seed": job.seed,
    })
    write_lfa(job.out, features, labels, vocab, snr_db=snr_db, meta=meta)
    return job.out
