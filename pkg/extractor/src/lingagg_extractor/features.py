"""Layer-stack feature extraction from speech SSL checkpoints.

Loads a local transformers checkpoint (wav2vec2 / HuBERT / WavLM family),
runs the waveform through it, and stacks the requested hidden states as
[T x L x D].  Layer 0 is the transformer encoder's input sequence — the
convolutional front-end output after feature projection — which is the
hidden_states[0] convention of the transformers library; the exact choice is
recorded in the archive metadata rather than assumed downstream.
"""

from __future__ import annotations

import numpy as np

EXPECTED_RATE = 16_000
LAYER0_CONVENTION = "transformers hidden_states[0]: conv front-end after feature projection"

_UNTRAINED_CONFIGS = {
    "wav2vec2-base": ("Wav2Vec2Config", "Wav2Vec2Model"),
    "hubert-base": ("HubertConfig", "HubertModel"),
    "wavlm-base": ("WavLMConfig", "WavLMModel"),
}


def make_untrained_checkpoint(arch: str, path, seed: int = 0) -> str:
    """Materialize a randomly initialized Base-architecture checkpoint.

    The library default config for each family IS the Base size (12
    transformer layers, D=768).  Useful where pretrained weights cannot be
    downloaded; the features are meaningless but every shape, frame-rate,
    and pipeline property is the real one.
    """
    import torch
    import transformers

    if arch not in _UNTRAINED_CONFIGS:
        raise ValueError(f"unknown architecture {arch!r}, expected one of {sorted(_UNTRAINED_CONFIGS)}")
    config_cls, model_cls = (getattr(transformers, name) for name in _UNTRAINED_CONFIGS[arch])
    torch.manual_seed(seed)
    model = model_cls(config_cls())
    model.save_pretrained(str(path))
    return str(path)


class FeatureExtractor:
    """One loaded checkpoint, reused across utterances."""

    def __init__(self, model_id: str):
        import torch
        from transformers import AutoModel

        self._torch = torch
        self.model_id = model_id
        self.model = AutoModel.from_pretrained(model_id)
        self.model.eval()
        self.n_hidden_states = self.model.config.num_hidden_layers + 1
        self.dim = self.model.config.hidden_size

    def extract_layers(self, waveform: np.ndarray, rate: int,
                       layer_indices: list[int] | None = None) -> np.ndarray:
        """Hidden states for the requested layers at the model's native frame
        rate.  Returns float32 [T, L, D]."""
        if rate != EXPECTED_RATE:
            raise ValueError(f"sample rate {rate} does not match the model's expected {EXPECTED_RATE}")
        layers = list(range(self.n_hidden_states)) if layer_indices is None else list(layer_indices)
        for idx in layers:
            if not 0 <= idx < self.n_hidden_states:
                raise ValueError(
                    f"layer {idx} out of range: model exposes layers 0..{self.n_hidden_states - 1}"
                )
        torch = self._torch
        wav = np.asarray(waveform, dtype=np.float64)
        # zero-mean/unit-variance input normalization, the Base models' convention
        wav = (wav - wav.mean()) / (wav.std() + 1e-7)
        with torch.no_grad():
            out = self.model(torch.from_numpy(wav).float()[None, :], output_hidden_states=True)
        stack = np.stack([out.hidden_states[i][0].numpy() for i in layers], axis=1)
        return np.ascontiguousarray(stack, dtype=np.float32)
