"""Synthetic 48 kHz speech-like material for tests."""

from pathlib import Path

import numpy as np

from bandlift.audio import write_wav
from bandlift.models import TARGET_RATE, Waveform


def harmonic_utterance(
    seconds: float = 0.5, f0: float = 180.0, seed: int = 0, rate: int = TARGET_RATE
) -> Waveform:
    """Harmonic complex up to 20 kHz with short noise bursts, peak 0.5."""
    rng = np.random.default_rng(seed)
    t = np.arange(int(seconds * rate)) / rate
    x = np.zeros_like(t)
    for k in range(1, int(20000 // f0) + 1):
        x += np.sin(2 * np.pi * k * f0 * t + rng.uniform(0, 2 * np.pi)) / k
    bursts = np.zeros_like(t)
    for start in rng.integers(0, len(t) - rate // 50, size=3):
        bursts[start : start + rate // 50] = rng.normal(0, 0.3, rate // 50)
    x = x + bursts
    return Waveform(samples=0.5 * x / np.max(np.abs(x)), sample_rate=rate)


def tone(freq: float, seconds: float = 0.25, rate: int = TARGET_RATE, amp: float = 0.5):
    t = np.arange(int(seconds * rate)) / rate
    return Waveform(samples=amp * np.sin(2 * np.pi * freq * t), sample_rate=rate)


def write_corpus(directory: Path, count: int = 4, seconds: float = 0.5) -> Path:
    """Write `count` synthetic utterances plus a manifest listing them."""
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    for i in range(count):
        path = directory / f"utt_{i:02d}.wav"
        write_wav(
            path,
            harmonic_utterance(seconds, f0=120.0 + 40 * i, seed=i),
            subtype="FLOAT",
        )
        lines.append(f"{path.name}\t{seconds}")
    manifest = directory / "manifest.tsv"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest


