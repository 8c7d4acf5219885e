"""Inference and log-spectral-distance evaluation."""

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Protocol

import numpy as np
import torch

from bandlift.audio import WavSubtype, read_wav, write_wav
from bandlift.cache import DegradationCache
from bandlift.checkpoint import load_generator
from bandlift.dataset import degrade, load_manifest
from bandlift.dsp import eval_filter_spec, mel_spectrogram, stft_tensor, upsample_to_48k
from bandlift.errors import AudioFileError, ManifestError, ValidationError
from bandlift.generator import Generator, count_parameters, generate
from bandlift.models import (
    MIN_INPUT_RATE,
    TARGET_RATE,
    EvalReport,
    EvalRow,
    ExperimentConfig,
    LsdConfig,
    Waveform,
)

logger = logging.getLogger(__name__)


def magnitude_spectrogram(w: Waveform, cfg: LsdConfig) -> np.ndarray:
    """
    Hann-window STFT magnitudes laid out as frames x bins.

    Args:
        w: Waveform
        cfg: LSD spectrogram settings

    Returns:
        float64 array (T x n_fft/2+1)
    """
    x = torch.from_numpy(np.asarray(w.samples, dtype=np.float64))
    spec = stft_tensor(x, cfg.n_fft, cfg.hop, win_length=cfg.window)
    return np.asarray(spec.abs().numpy().T)


def lsd(s: np.ndarray, s_hat: np.ndarray, floor: float = 1e-8) -> float:
    """
    Log-spectral distance between two magnitude spectrograms (T x F).

    Both inputs are floored before the ratio; each frame contributes the RMS over
    frequency of 2 * (log10 S - log10 S_hat), averaged over frames.
    """
    s = np.asarray(s, dtype=np.float64)
    s_hat = np.asarray(s_hat, dtype=np.float64)
    if s.shape != s_hat.shape or s.ndim != 2:
        raise ValidationError(
            f"LSD needs two T x F spectrograms of equal shape, got {s.shape} and {s_hat.shape}"
        )
    diff = 2.0 * (np.log10(np.maximum(s, floor)) - np.log10(np.maximum(s_hat, floor)))
    return float(np.mean(np.sqrt(np.mean(diff**2, axis=1))))


class Resolver(Protocol):
    """Anything that turns a low-rate waveform into a 48 kHz waveform."""

    identifier: str
    parameter_count: Optional[int]

    def resolve(self, low: Waveform) -> Waveform: ...


class PassThroughResolver:
    """The "Unprocessed" baseline: band-limited upsampling only."""

    identifier = "Unprocessed"
    parameter_count: Optional[int] = None

    def resolve(self, low: Waveform) -> Waveform:
        return upsample_to_48k(low)


class SuperResolver:
    """Checkpoint-backed super-resolution."""

    def __init__(
        self,
        generator: Generator,
        config: ExperimentConfig,
        identifier: str = "bandlift",
    ):
        self.generator = generator.eval()
        self.config = config
        self.identifier = identifier
        self.parameter_count: Optional[int] = count_parameters(generator)

    @classmethod
    def from_checkpoint(cls, path: Path, device: str = "cpu") -> "SuperResolver":
        generator, config = load_generator(path, device)
        return cls(generator, config, identifier=Path(path).stem)

    def resolve(self, low: Waveform) -> Waveform:
        """
        Upsample, extract the mel input and synthesize 48 kHz audio.

        The generator output is trimmed to the upsampled input length.
        """
        if not MIN_INPUT_RATE <= low.sample_rate <= TARGET_RATE:
            raise ValidationError(
                f"Input rate {low.sample_rate} Hz outside [{MIN_INPUT_RATE}, "
                f"{TARGET_RATE}] Hz",
                user_message=f"Unsupported sample rate {low.sample_rate} Hz",
            )
        up = upsample_to_48k(low)
        mel = mel_spectrogram(up, self.config.mel)
        out = generate(self.generator, mel)
        return Waveform(samples=out.samples[: up.num_samples], sample_rate=TARGET_RATE)


def infer(
    checkpoint: Path,
    in_path: Path,
    out_path: Path,
    subtype: WavSubtype = "PCM_16",
    device: str = "cpu",
) -> Path:
    """
    Super-resolve one WAV file to 48 kHz.

    Args:
        checkpoint: Generator checkpoint
        in_path: Input WAV between 4 kHz and 48 kHz
        out_path: Output WAV
        subtype: Output sample format

    Returns:
        Path written
    """
    low = read_wav(in_path)
    if not MIN_INPUT_RATE <= low.sample_rate <= TARGET_RATE:
        raise AudioFileError(
            f"{in_path} is sampled at {low.sample_rate} Hz; supported range is "
            f"{MIN_INPUT_RATE}-{TARGET_RATE} Hz"
        )
    resolver = SuperResolver.from_checkpoint(checkpoint, device)
    out = resolver.resolve(low)
    logger.info(
        f"Super-resolved {in_path} ({low.sample_rate} Hz, {low.duration:.2f} s) "
        f"to {out_path}"
    )
    return write_wav(out_path, out, subtype=subtype)


def evaluate_pair(
    resolver: Resolver, low: Waveform, target: Waveform, cfg: LsdConfig
) -> float:
    """
    LSD between a 48 kHz reference and the resolver's output for its degraded version.

    The output is trimmed to the reference length (zero-padded if shorter).
    """
    if target.sample_rate != TARGET_RATE:
        raise ValidationError(f"Reference must be 48 kHz, got {target.sample_rate} Hz")
    out = resolver.resolve(low).samples[: target.num_samples]
    if len(out) < target.num_samples:
        out = np.pad(out, (0, target.num_samples - len(out)))
    s = magnitude_spectrogram(target, cfg)
    s_hat = magnitude_spectrogram(Waveform(samples=out, sample_rate=TARGET_RATE), cfg)
    return lsd(s, s_hat, cfg.floor)


def load_references(manifest: Path) -> list[tuple[Path, Waveform]]:
    """48 kHz references listed in a manifest; unreadable files are skipped."""
    references = []
    for entry in load_manifest(manifest).entries:
        try:
            wav = read_wav(entry.path)
        except AudioFileError as e:
            logger.warning(f"Skipping unreadable reference {entry.path}: {e}")
            continue
        if wav.sample_rate != TARGET_RATE:
            logger.warning(f"Skipping {entry.path}: reference is not 48 kHz")
            continue
        references.append((entry.path, wav))
    if not references:
        raise ManifestError(f"No usable 48 kHz references in {manifest}")
    return references


def evaluate(
    resolver: Resolver,
    manifest: Path,
    rates: list[int],
    cfg: Optional[LsdConfig] = None,
    workers: int = 1,
    cache: Optional[DegradationCache] = None,
) -> EvalReport:
    """
    Per-rate mean LSD of a resolver over a manifest of 48 kHz references.

    Args:
        resolver: System under test
        manifest: Manifest of 48 kHz references
        rates: Input rates to simulate
        cfg: LSD spectrogram settings
        workers: Parallel utterance workers
        cache: Optional cache for degraded inputs

    Returns:
        EvalReport with one row per rate, ascending
    """
    cfg = cfg or LsdConfig()
    if not rates:
        raise ValidationError("At least one evaluation rate is required")
    for rate in rates:
        if not MIN_INPUT_RATE <= rate <= TARGET_RATE:
            raise ValidationError(f"Evaluation rate {rate} Hz outside [4000, 48000] Hz")
    references = load_references(manifest)

    def score(item: tuple[Path, Waveform], rate: int) -> float:
        path, hi = item
        spec = eval_filter_spec(rate)
        low = cache.get(path, rate, spec) if cache is not None else None
        if low is None:
            low = degrade(hi, rate, spec)
            if cache is not None:
                cache.save(path, rate, spec, low)
        return evaluate_pair(resolver, low, hi, cfg)

    rows = []
    for rate in sorted(set(rates)):
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                scores = list(pool.map(lambda item: score(item, rate), references))
        else:
            scores = [score(item, rate) for item in references]
        rows.append(
            EvalRow(
                rate=rate,
                mean_lsd=float(np.mean(scores)),
                std_lsd=float(np.std(scores)),
                utterance_count=len(scores),
            )
        )
        row = rows[-1]
        logger.info(
            f"{resolver.identifier} @ {rate} Hz: mean LSD {row.mean_lsd:.4f} (std {row.std_lsd:.4f})"
        )

    return EvalReport(
        model_identifier=resolver.identifier,
        parameter_count=resolver.parameter_count,
        rows=rows,
        lsd_config=cfg,
        filter_spec="windowed-sinc, order 8, cutoff at the input Nyquist",
    )
