"""WAV file reading and writing."""

import logging
from pathlib import Path
from typing import Literal

import numpy as np
import soundfile as sf

from bandlift.errors import AudioFileError
from bandlift.models import Waveform

logger = logging.getLogger(__name__)

WavSubtype = Literal["PCM_16", "FLOAT"]


def read_wav(path: Path) -> Waveform:
    """
    Read a mono WAV file.

    Args:
        path: WAV file (PCM 16-bit or 32-bit float)

    Returns:
        Waveform with the sample rate from the file header
    """
    path = Path(path)
    if not path.exists():
        raise AudioFileError(
            f"Audio file not found: {path}", user_message=f"File not found: {path}"
        )
    try:
        samples, sample_rate = sf.read(path, dtype="float64", always_2d=True)
    except (RuntimeError, sf.LibsndfileError) as e:
        raise AudioFileError(
            f"Cannot decode {path}: {e}", user_message=f"Cannot read audio file {path.name}"
        ) from e

    if samples.shape[1] != 1:
        raise AudioFileError(
            f"{path} has {samples.shape[1]} channels; only mono audio is supported",
            user_message=f"{path.name} is not mono ({samples.shape[1]} channels)",
            suggestions=["Downmix to a single channel before processing"],
        )
    if samples.shape[0] == 0:
        raise AudioFileError(f"{path} contains no samples")

    try:
        return Waveform(samples=samples[:, 0], sample_rate=int(sample_rate))
    except ValueError as e:
        raise AudioFileError(f"Invalid audio content in {path}: {e}") from e


def write_wav(path: Path, waveform: Waveform, subtype: WavSubtype = "PCM_16") -> Path:
    """
    Write a waveform as a mono WAV file.

    Samples are clipped to [-1, 1] for PCM output.

    Args:
        path: Output file
        waveform: Audio to write
        subtype: "PCM_16" (default) or "FLOAT"

    Returns:
        Path written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    samples = np.asarray(waveform.samples, dtype=np.float64)
    if subtype == "PCM_16":
        samples = np.clip(samples, -1.0, 1.0)
    sf.write(path, samples, waveform.sample_rate, subtype=subtype, format="WAV")
    logger.debug(f"Wrote {waveform.num_samples} samples at {waveform.sample_rate} Hz to {path}")
    return path
