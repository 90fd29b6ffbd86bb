import numpy as np
import pytest

from lingagg_extractor.audio import write_wav

RATE = 16_000


def tone(freq, seconds, rate=RATE, amp=0.3, seed=None):
    t = np.arange(int(seconds * rate)) / rate
    wav = amp * np.sin(2 * np.pi * freq * t)
    if seed is not None:
        wav = wav + 0.01 * np.random.default_rng(seed).standard_normal(wav.size)
    return wav


@pytest.fixture(scope="session")
def audio_dir(tmp_path_factory):
    """Two short clean utterances, one noise file, and alignments."""
    root = tmp_path_factory.mktemp("audio")
    write_wav(root / "utt1.wav", tone(220.0, 0.5, seed=1), RATE)
    write_wav(root / "utt2.wav", tone(330.0, 0.7, seed=2), RATE)
    noise = 0.2 * np.random.default_rng(3).standard_normal(int(0.4 * RATE))
    write_wav(root / "noise.wav", noise, RATE)
    (root / "utt1.csv").write_text("start_s,end_s,phoneme\n0.0,0.2,AA\n0.2,0.5,IY\n")
    (root / "utt2.csv").write_text("0.0,0.3,SH\n0.4,0.7,AA\n")
    return root
