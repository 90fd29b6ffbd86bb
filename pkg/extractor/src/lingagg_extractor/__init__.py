"""lingagg-extractor: real SSL checkpoints, noise mixing, and forced-alignment
labels in; Layered Feature Archives out."""

__version__ = "0.1.0"

from .audio import frame_snr_series, mix_at_snr, n_frames, read_wav, write_wav
from .features import FeatureExtractor, make_untrained_checkpoint
from .job import ExtractionJob, run_job
from .labels import align_labels, build_vocab, read_alignment
from .lfa_writer import write_lfa

__all__ = [
    "ExtractionJob", "FeatureExtractor", "align_labels", "build_vocab",
    "frame_snr_series", "make_untrained_checkpoint", "mix_at_snr", "n_frames",
    "read_alignment", "read_wav", "run_job", "write_lfa", "write_wav",
]
