"""Signal-processing primitives: STFT, mel features and band-limiting resamplers.

Every function here is a pure function of its inputs. The ``*_tensor`` variants work on
batched torch tensors and stay differentiable; the others take and return the
:mod:`bandlift.models` signal types.
"""

import functools
import logging
import math
import warnings
from fractions import Fraction
from typing import Optional

import librosa
import numpy as np
import torch
from scipy import signal

from bandlift.errors import ValidationError
from bandlift.models import (
    MIN_INPUT_RATE,
    TARGET_RATE,
    ComplexSpectrogram,
    FilterFamily,
    FilterSpec,
    MelConfig,
    MelSpectrogram,
    Waveform,
)

logger = logging.getLogger(__name__)

EVAL_FILTER_ORDER = 8
CHEBYSHEV_RIPPLE_DB = 0.05
SINC_KAISER_BETA = 8.6
RESAMPLE_STOPBAND_DB = 80.0
RESAMPLE_TRANSITION = 0.05


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def stft_tensor(
    x: torch.Tensor,
    window_length: int,
    hop_length: int,
    win_length: Optional[int] = None,
) -> torch.Tensor:
    """
    Centered (reflection-padded) Hann STFT of a batch of signals.

    Args:
        x: Signals of shape [B, L] or [L]
        window_length: FFT size
        hop_length: Frame advance in samples
        win_length: Hann window length (defaults to window_length)

    Returns:
        Complex tensor [B, F, T] (or [F, T]) with F = window_length // 2 + 1
    """
    length = x.shape[-1]
    if length <= window_length // 2:
        raise ValidationError(
            f"Signal of {length} samples is too short for a {window_length}-sample "
            f"window: centered reflection padding needs more than {window_length // 2} "
            "samples"
        )
    win_length = win_length or window_length
    window = torch.hann_window(win_length, dtype=x.dtype, device=x.device)
    return torch.stft(
        x,
        n_fft=window_length,
        hop_length=hop_length,
        win_length=win_length,
        window=window,
        center=True,
        pad_mode="reflect",
        return_complex=True,
    )


def stft(w: Waveform, window_length: int, hop_length: int) -> ComplexSpectrogram:
    """
    Complex STFT of a waveform with center padding.

    Args:
        w: Input waveform
        window_length: Power-of-two FFT/window size
        hop_length: Frame advance, at most window_length

    Returns:
        ComplexSpectrogram with floor(len / hop) + 1 frames
    """
    if w.num_samples == 0:
        raise ValidationError("Cannot take the STFT of an empty waveform")
    if not _is_power_of_two(window_length):
        raise ValidationError(f"window_length must be a power of two, got {window_length}")
    if not 1 <= hop_length <= window_length:
        raise ValidationError(
            f"hop_length must lie in [1, {window_length}], got {hop_length}"
        )

    x = torch.from_numpy(np.asarray(w.samples, dtype=np.float64))
    spec = stft_tensor(x, window_length, hop_length)
    return ComplexSpectrogram(
        values=spec.numpy().T.copy(),
        window_length=window_length,
        hop_length=hop_length,
        sample_rate=w.sample_rate,
    )


@functools.lru_cache(maxsize=64)
def _filterbank(config: MelConfig, strict: bool) -> np.ndarray:
    with warnings.catch_warnings():
        # librosa warns about empty rows; strict mode turns that into an error below
        warnings.simplefilter("ignore", UserWarning)
        fb = librosa.filters.mel(
            sr=config.sample_rate,
            n_fft=config.n_fft,
            n_mels=config.n_mels,
            fmin=config.f_min,
            fmax=config.upper_frequency,
            htk=False,
            norm="slaney",
            dtype=np.float64,
        )
    empty = np.flatnonzero(fb.max(axis=1) <= 0.0)
    if empty.size:
        if strict:
            raise ValidationError(
                f"n_mels={config.n_mels} is too large for {config.num_bins} frequency "
                f"bins: filters {empty.tolist()} would be empty"
            )
        logger.debug(
            f"Mel bank n_mels={config.n_mels}, n_fft={config.n_fft} has "
            f"{empty.size} empty rows"
        )
    fb.setflags(write=False)
    return fb


def mel_filterbank(config: MelConfig, strict: bool = True) -> np.ndarray:
    """
    Triangular Slaney-scale mel filterbank.

    Args:
        config: Mel settings
        strict: Reject configurations that leave any filter without a positive weight

    Returns:
        Matrix of shape (n_mels, n_fft // 2 + 1)
    """
    return _filterbank(config, strict).copy()


def mel_center_frequencies(config: MelConfig) -> np.ndarray:
    """Center frequency in Hz of every filterbank row."""
    edges = librosa.mel_frequencies(
        n_mels=config.n_mels + 2,
        fmin=config.f_min,
        fmax=config.upper_frequency,
        htk=False,
    )
    return np.asarray(edges[1:-1], dtype=np.float64)


def log_mel_tensor(x: torch.Tensor, config: MelConfig, strict: bool = True) -> torch.Tensor:
    """
    Differentiable log-mel magnitudes of a batch of signals.

    Args:
        x: Signals [B, L] (or [B, 1, L])
        config: Mel settings
        strict: Passed on to the filterbank construction

    Returns:
        Tensor [B, n_mels, floor(L / hop) + 1]
    """
    if x.dim() == 3:
        x = x.squeeze(1)
    spec = stft_tensor(x, config.n_fft, config.hop_length, config.win_length)
    fb = torch.from_numpy(_filterbank(config, strict)).to(dtype=x.dtype, device=x.device)
    mel = torch.matmul(fb, spec.abs())
    return torch.log(torch.clamp(mel, min=config.log_floor))


def mel_spectrogram(w: Waveform, config: MelConfig) -> MelSpectrogram:
    """
    Log-compressed mel spectrogram of a waveform.

    Args:
        w: Input waveform at config.sample_rate
        config: Mel settings

    Returns:
        MelSpectrogram of shape (n_mels, floor(len / hop) + 1)
    """
    if w.sample_rate != config.sample_rate:
        raise ValidationError(
            f"Waveform is sampled at {w.sample_rate} Hz but the mel config expects "
            f"{config.sample_rate} Hz"
        )
    x = torch.from_numpy(np.asarray(w.samples, dtype=np.float64)).unsqueeze(0)
    values = log_mel_tensor(x, config)[0].numpy()
    return MelSpectrogram(values=values, config=config)


@functools.lru_cache(maxsize=32)
def _resample_kernel(up: int, down: int) -> np.ndarray:
    """Kaiser low-pass whose stopband starts exactly at the lower Nyquist."""
    edge = 1.0 / max(up, down)
    width = RESAMPLE_TRANSITION * edge
    numtaps, beta = signal.kaiserord(RESAMPLE_STOPBAND_DB, width)
    numtaps |= 1
    taps = signal.firwin(numtaps, edge - width / 2, window=("kaiser", beta))
    taps.setflags(write=False)
    return taps


def _resample(x: np.ndarray, source_rate: int, target_rate: int) -> np.ndarray:
    """Band-limited rational resampling with an exactly rounded output length."""
    if source_rate == target_rate:
        return np.array(x, copy=True)
    ratio = Fraction(target_rate, source_rate)
    y = signal.resample_poly(
        x,
        ratio.numerator,
        ratio.denominator,
        window=np.array(_resample_kernel(ratio.numerator, ratio.denominator)),
        padtype="line",
    )
    expected = int(round(len(x) * target_rate / source_rate))
    if len(y) >= expected:
        return np.asarray(y[:expected])
    return np.pad(y, (0, expected - len(y)), mode="edge")


def _apply_lowpass(x: np.ndarray, spec: FilterSpec, fs: int) -> np.ndarray:
    """Zero-phase low-pass filtering according to the filter spec."""
    nyquist = fs / 2
    if not 0 < spec.cutoff < nyquist:
        raise ValidationError(
            f"Filter cutoff {spec.cutoff} Hz must lie strictly inside (0, {nyquist}) Hz"
        )
    edge = spec.design_edge

    if spec.family == "windowed-sinc":
        half = spec.order * math.ceil(fs / (2 * edge))
        taps = signal.firwin(2 * half + 1, edge, fs=fs, window=("kaiser", SINC_KAISER_BETA))
        padded = np.pad(x, half, mode="reflect", reflect_type="odd")
        return np.asarray(signal.oaconvolve(padded, taps, mode="valid"))

    if spec.family == "butterworth":
        sos = signal.butter(spec.order, edge, btype="low", fs=fs, output="sos")
    else:
        sos = signal.cheby1(
            spec.order, CHEBYSHEV_RIPPLE_DB, edge, btype="low", fs=fs, output="sos"
        )
    padlen = min(3 * (2 * len(sos) + 1), len(x) - 1)
    return np.asarray(signal.sosfiltfilt(sos, x, padlen=max(padlen, 0)))


def lowpass_downsample(w: Waveform, target_rate: int, spec: FilterSpec) -> Waveform:
    """
    Simulate a band-limited recording: low-pass filter, then resample down.

    Args:
        w: High-rate source (normally 48 kHz)
        target_rate: Output sampling rate in Hz
        spec: Low-pass filter applied before resampling

    Returns:
        Waveform at target_rate
    """
    if target_rate > w.sample_rate:
        raise ValidationError(
            f"Target rate {target_rate} Hz exceeds the source rate {w.sample_rate} Hz; "
            "lowpass_downsample never upsamples"
        )
    if target_rate < MIN_INPUT_RATE:
        raise ValidationError(
            f"Target rate {target_rate} Hz is below the supported minimum "
            f"{MIN_INPUT_RATE} Hz"
        )
    if target_rate == w.sample_rate:
        return Waveform(samples=np.array(w.samples, copy=True), sample_rate=target_rate)

    x = np.asarray(w.samples, dtype=np.float64)
    filtered = _apply_lowpass(x, spec, w.sample_rate)
    return Waveform(
        samples=_resample(filtered, w.sample_rate, target_rate), sample_rate=target_rate
    )


def upsample_to_48k(w: Waveform) -> Waveform:
    """
    Band-limited interpolation of a waveform to 48 kHz.

    Args:
        w: Waveform at or below 48 kHz

    Returns:
        Waveform at 48 kHz with round(len * 48000 / rate) samples
    """
    if w.sample_rate > TARGET_RATE:
        raise ValidationError(
            f"Input rate {w.sample_rate} Hz is above {TARGET_RATE} Hz"
        )
    if w.sample_rate == TARGET_RATE:
        return Waveform(samples=np.array(w.samples, copy=True), sample_rate=TARGET_RATE)
    x = np.asarray(w.samples, dtype=np.float64)
    return Waveform(samples=_resample(x, w.sample_rate, TARGET_RATE), sample_rate=TARGET_RATE)


def eval_filter_spec(target_rate: int) -> FilterSpec:
    """The fixed degradation filter used for evaluation."""
    return FilterSpec(family="windowed-sinc", order=EVAL_FILTER_ORDER, cutoff=target_rate / 2)


def sample_filter_spec(
    rng: np.random.Generator,
    target_rate: int,
    families: list[FilterFamily],
    order_range: tuple[int, int],
) -> FilterSpec:
    """
    Draw a random training degradation filter.

    Args:
        rng: Random generator
        target_rate: Rate the filter prepares for (cutoff = its Nyquist)
        families: Allowed filter families
        order_range: Inclusive order range

    Returns:
        FilterSpec
    """
    family = families[int(rng.integers(len(families)))]
    order = int(rng.integers(order_range[0], order_range[1] + 1))
    return FilterSpec(family=family, order=order, cutoff=target_rate / 2)
