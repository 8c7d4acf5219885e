"""Training data: manifests, paired low/high-resolution simulation and batching."""

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np
import pandas as pd
import torch
from pydantic import BaseModel, Field

from bandlift.audio import read_wav
from bandlift.dsp import (
    eval_filter_spec,
    lowpass_downsample,
    mel_spectrogram,
    sample_filter_spec,
    upsample_to_48k,
)
from bandlift.errors import AudioFileError, ManifestError, ValidationError
from bandlift.models import (
    MIN_INPUT_RATE,
    TARGET_RATE,
    DatasetSpec,
    ExperimentConfig,
    FilterSpec,
    MelConfig,
    MelSpectrogram,
    Waveform,
)

logger = logging.getLogger(__name__)

CONTINUOUS_RATE_STEP = 500


class ManifestEntry(BaseModel):
    path: Path
    duration: Optional[float] = Field(None, ge=0.0, description="Seconds, if listed")


class ManifestLoadResult(BaseModel):
    """Parsed manifest with the problems found along the way."""

    entries: list[ManifestEntry] = Field(default_factory=list)
    warnings: list[str] = Field(default_factory=list)
    total_lines: int = 0


def load_manifest(path: Path) -> ManifestLoadResult:
    """
    Parse a newline-delimited manifest of "path" or "path<TAB>duration_seconds" lines.

    Relative paths are resolved against the manifest's directory.

    Args:
        path: Manifest file

    Returns:
        ManifestLoadResult with entries and warnings
    """
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"Manifest not found: {path}")
    try:
        df = pd.read_csv(
            path,
            sep="\t",
            header=None,
            names=["path", "duration"],
            dtype={"path": str},
            skip_blank_lines=True,
            quoting=csv.QUOTE_NONE,
        )
    except pd.errors.EmptyDataError:
        df = pd.DataFrame(columns=["path", "duration"])
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise ManifestError(f"Cannot parse manifest {path}: {e}") from e

    result = ManifestLoadResult(total_lines=len(df))
    durations = pd.to_numeric(df["duration"], errors="coerce")
    for pos, (raw, raw_duration, value) in enumerate(
        zip(df["path"], df["duration"], durations)
    ):
        line = pos + 1
        raw_path = str(raw).strip() if pd.notna(raw) else ""
        if not raw_path:
            result.warnings.append(f"Entry {line}: empty path skipped")
            continue

        duration: Optional[float] = None
        if pd.notna(raw_duration):
            if pd.isna(value) or value < 0:
                result.warnings.append(
                    f"Entry {line}: invalid duration '{raw_duration}' ignored"
                )
            else:
                duration = float(value)

        entry_path = Path(raw_path)
        if not entry_path.is_absolute():
            entry_path = path.parent / entry_path
        result.entries.append(ManifestEntry(path=entry_path, duration=duration))

    for warning in result.warnings:
        logger.warning(f"{path}: {warning}")
    logger.info(f"Manifest {path}: {len(result.entries)} of {result.total_lines} lines usable")
    return result


def load_utterances(manifest: Path) -> list[Waveform]:
    """
    Decode every 48 kHz file listed in a manifest, skipping unusable ones.

    Args:
        manifest: Manifest file

    Returns:
        Decoded utterances in manifest order
    """
    loaded = load_manifest(manifest)
    utterances = []
    for entry in loaded.entries:
        try:
            wav = read_wav(entry.path)
        except AudioFileError as e:
            logger.warning(f"Skipping unreadable audio {entry.path}: {e}")
            continue
        if wav.sample_rate != TARGET_RATE:
            logger.warning(
                f"Skipping {entry.path}: sampled at {wav.sample_rate} Hz, "
                f"expected {TARGET_RATE} Hz"
            )
            continue
        utterances.append(wav)
    if not utterances:
        raise ManifestError(
            f"No usable 48 kHz audio in {manifest}",
            user_message="The manifest lists no readable 48 kHz WAV files",
        )
    return utterances


def _fit_length(samples: np.ndarray, length: int) -> np.ndarray:
    if len(samples) >= length:
        return samples[:length]
    return np.pad(samples, (0, length - len(samples)))


def degrade(hi: Waveform, rate: int, spec: Optional[FilterSpec] = None) -> Waveform:
    """
    Band-limit a 48 kHz waveform to a lower sampling rate.

    Args:
        hi: 48 kHz source
        rate: Target rate in Hz
        spec: Low-pass filter (evaluation filter if omitted)

    Returns:
        Waveform at `rate`; the source itself when rate is 48 kHz
    """
    if hi.sample_rate != TARGET_RATE:
        raise ValidationError(f"Degradation expects 48 kHz audio, got {hi.sample_rate} Hz")
    if rate == TARGET_RATE:
        return hi
    return lowpass_downsample(hi, rate, spec or eval_filter_spec(rate))


def simulate_pair(
    hi: Waveform, rate: int, spec: FilterSpec, mel_config: MelConfig
) -> tuple[MelSpectrogram, Waveform]:
    """
    Build one (generator input, target) pair from a 48 kHz waveform.

    Args:
        hi: 48 kHz target
        rate: Simulated input rate; 48 kHz bypasses filtering
        spec: Degradation filter
        mel_config: Generator-input mel settings

    Returns:
        (mel of the re-upsampled degraded input, unmodified target)
    """
    if not MIN_INPUT_RATE <= rate <= TARGET_RATE:
        raise ValidationError(f"Input rate {rate} Hz outside [4000, 48000] Hz")
    low = degrade(hi, rate, spec)
    up = upsample_to_48k(low)
    aligned = Waveform(samples=_fit_length(up.samples, hi.num_samples), sample_rate=TARGET_RATE)
    return mel_spectrogram(aligned, mel_config), hi


def sample_input_rate(spec: DatasetSpec, rng: np.random.Generator) -> int:
    """Draw one simulated input rate according to the dataset's rate policy."""
    if spec.rate_policy == "fixed":
        return spec.fixed_rate
    if spec.rate_policy == "discrete":
        return int(spec.discrete_rates[int(rng.integers(len(spec.discrete_rates)))])
    low, high = spec.rate_range
    steps = (high - low) // CONTINUOUS_RATE_STEP
    return low + CONTINUOUS_RATE_STEP * int(rng.integers(0, steps + 1))


class TrainingExample(NamedTuple):
    mel: torch.Tensor
    target: torch.Tensor
    rate: int
    filter_spec: FilterSpec


class SuperResolutionDataset:
    """
    Hop-aligned crops of 48 kHz utterances, degraded on the fly.

    Every draw (crop offset, input rate, filter) comes from an RNG seeded by
    (seed, epoch, index), so an item is a pure function of those three numbers.
    """

    def __init__(self, config: ExperimentConfig, utterances: list[Waveform]):
        if not utterances:
            raise ManifestError("The training set is empty")
        for i, wav in enumerate(utterances):
            if wav.sample_rate != TARGET_RATE:
                raise ValidationError(
                    f"Utterance {i} is sampled at {wav.sample_rate} Hz, expected 48 kHz"
                )
        self.config = config
        self.utterances = utterances
        self.seed = config.train.seed

    @classmethod
    def from_manifest(cls, config: ExperimentConfig) -> "SuperResolutionDataset":
        if config.data.manifest is None:
            raise ManifestError("The experiment config names no data.manifest")
        return cls(config, load_utterances(config.data.manifest))

    def __len__(self) -> int:
        return len(self.utterances)

    def rng(self, epoch: int, index: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.seed, epoch, index]))

    def crop(self, wav: Waveform, rng: np.random.Generator) -> Waveform:
        """Segment starting at a multiple of the hop length (zero-padded if short)."""
        segment = self.config.data.segment_length
        hop = self.config.mel.hop_length
        if wav.num_samples <= segment:
            samples = _fit_length(wav.samples, segment)
        else:
            offset = hop * int(rng.integers(0, (wav.num_samples - segment) // hop + 1))
            samples = wav.samples[offset : offset + segment]
        return Waveform(samples=samples, sample_rate=TARGET_RATE)

    def get(self, index: int, epoch: int) -> TrainingExample:
        data = self.config.data
        rng = self.rng(epoch, index)
        segment = self.crop(self.utterances[index], rng)
        rate = sample_input_rate(data, rng)
        if data.filter_policy == "eval":
            spec = eval_filter_spec(rate)
        else:
            spec = sample_filter_spec(rng, rate, data.filter_families, data.filter_order_range)
        mel, target = simulate_pair(segment, rate, spec, self.config.mel)
        return TrainingExample(
            mel=torch.from_numpy(mel.values.astype(np.float32)),
            target=torch.from_numpy(target.samples.astype(np.float32)),
            rate=rate,
            filter_spec=spec,
        )


class EpochBatcher:
    """Per-epoch shuffled batches of dataset indices; the last partial batch is kept."""

    def __init__(self, num_items: int, batch_size: int, seed: int):
        if num_items < 1:
            raise ValidationError("Cannot batch an empty dataset")
        self.num_items = num_items
        self.batch_size = batch_size
        self.seed = seed

    @property
    def batches_per_epoch(self) -> int:
        return -(-self.num_items // self.batch_size)

    def batches(self, epoch: int) -> list[list[int]]:
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, epoch]))
        order = rng.permutation(self.num_items).tolist()
        return [
            order[i : i + self.batch_size] for i in range(0, self.num_items, self.batch_size)
        ]


def collate(examples: list[TrainingExample]) -> tuple[torch.Tensor, torch.Tensor]:
    """Stack examples into (mel [B, n_mels, T], target [B, 1, L])."""
    mel = torch.stack([ex.mel for ex in examples])
    target = torch.stack([ex.target for ex in examples]).unsqueeze(1)
    return mel, target


def load_batch(
    dataset: SuperResolutionDataset,
    indices: list[int],
    epoch: int,
    num_workers: int = 0,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Simulate and collate one batch, optionally with worker threads."""
    if num_workers > 0:
        with ThreadPoolExecutor(max_workers=num_workers) as pool:
            examples = list(pool.map(lambda i: dataset.get(i, epoch), indices))
    else:
        examples = [dataset.get(i, epoch) for i in indices]
    return collate(examples)
