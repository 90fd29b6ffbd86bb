"""Waveform loading and SNR-controlled noise mixing.

Audio IO sticks to stdlib wave (PCM16 mono); the mixing math runs in float64
so the global power ratio hits the target to full precision.  Per-frame SNR
is measured on 25 ms windows at a 20 ms hop, matching the frame grid of the
SSL models downstream.
"""

from __future__ import annotations

import wave

import numpy as np

FRAME_WINDOW_S = 0.025
FRAME_HOP_S = 0.020


def read_wav(path) -> tuple[np.ndarray, int]:
    """PCM16 mono WAV -> (float64 waveform in [-1, 1), sample rate)."""
    with wave.open(str(path), "rb") as f:
        if f.getnchannels() != 1:
            raise ValueError(f"{path}: expected mono audio, got {f.getnchannels()} channels")
        if f.getsampwidth() != 2:
            raise ValueError(f"{path}: expected 16-bit PCM, got {8 * f.getsampwidth()}-bit")
        rate = f.getframerate()
        raw = f.readframes(f.getnframes())
    wav = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return wav, rate


def write_wav(path, wav: np.ndarray, rate: int) -> None:
    pcm = np.clip(np.asarray(wav, dtype=np.float64), -1.0, 1.0 - 1.0 / 32768)
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(rate)
        f.writeframes((pcm * 32768.0).astype("<i2").tobytes())


def n_frames(n_samples: int, rate: int) -> int:
    """Number of 20 ms hops covering the signal."""
    hop = int(round(FRAME_HOP_S * rate))
    return max(1, int(np.ceil(n_samples / hop)))


def frame_snr_series(signal: np.ndarray, noise: np.ndarray, rate: int) -> np.ndarray:
    """Per-frame 10*log10(sum s^2 / sum n^2) over 25 ms windows, 20 ms hop."""
    hop = int(round(FRAME_HOP_S * rate))
    win = int(round(FRAME_WINDOW_S * rate))
    count = n_frames(signal.size, rate)
    out = np.empty(count, dtype=np.float64)
    tiny = 1e-30
    for i in range(count):
        sl = slice(i * hop, min(i * hop + win, signal.size))
        ps = float(np.sum(signal[sl] ** 2)) + tiny
        pn = float(np.sum(noise[sl] ** 2)) + tiny
        out[i] = 10.0 * np.log10(ps / pn)
    return out


def _fit_noise(noise: np.ndarray, length: int, rng: np.random.Generator) -> np.ndarray:
    """Loop the noise if it is short, then crop at a seeded offset."""
    if noise.size == 0:
        raise ValueError("noise waveform is empty")
    if noise.size < length:
        reps = int(np.ceil(length / noise.size))
        noise = np.tile(noise, reps)
    offset = int(rng.integers(0, noise.size - length + 1))
    return noise[offset:offset + length]


def mix_at_snr(clean: np.ndarray, noise: np.ndarray, target_db: float, seed: int,
               rate: int = 16_000):
    """Scale noise so the global power ratio hits target_db exactly.

    Returns (noisy waveform, scaled noise, per-frame SNR series in dB).  The
    noise is looped/cropped at a seeded offset when lengths differ.
    """
    clean = np.asarray(clean, dtype=np.float64)
    p_clean = float(np.sum(clean ** 2))
    if p_clean == 0.0:
        raise ValueError("clean signal is silent (zero power)")
    rng = np.random.default_rng(seed)
    noise = _fit_noise(np.asarray(noise, dtype=np.float64), clean.size, rng)
    p_noise = float(np.sum(noise ** 2))
    if p_noise == 0.0:
        raise ValueError("noise segment is silent (zero power)")
    scale = np.sqrt(p_clean / (p_noise * 10.0 ** (target_db / 10.0)))
    scaled = noise * scale
    return clean + scaled, scaled, frame_snr_series(clean, scaled, rate)
