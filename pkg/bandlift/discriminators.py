"""
Discriminator suite: multi-scale (MSD), multi-period (MPD) and multi-band complex-STFT
(MBD) discriminators.

Every sub-discriminator returns a :class:`DiscriminatorOutput` holding its score map and
the list of per-layer activations (the score map included) used for feature matching.
Inputs are waveforms shaped [B, 1, L].
"""

import logging
import math
from typing import NamedTuple, Optional

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn
from torch.nn.utils.parametrizations import spectral_norm, weight_norm

from bandlift.dsp import stft_tensor
from bandlift.errors import ValidationError
from bandlift.models import (
    ComplexSpectrogram,
    DiscriminatorConfig,
    MBDConfig,
    MPDConfig,
    MSDConfig,
)

logger = logging.getLogger(__name__)

LRELU_SLOPE = 0.1
MSD_MIN_FRAMES = 64


class DiscriminatorOutput(NamedTuple):
    score_map: torch.Tensor
    features: list[torch.Tensor]


def _width(channels: int, mult: float) -> int:
    return max(1, int(round(channels * mult)))


def _check_input(x: torch.Tensor, min_length: int, family: str) -> None:
    if x.dim() != 3 or x.shape[1] != 1:
        raise ValidationError(
            f"{family} expects waveforms shaped [B, 1, L], got {tuple(x.shape)}"
        )
    if x.shape[-1] < min_length:
        raise ValidationError(
            f"{family} needs at least {min_length} samples, got {x.shape[-1]}",
            user_message=f"Audio is too short for the {family} discriminator "
            f"(need {min_length} samples)",
        )


class ScaleDiscriminator(nn.Module):
    """Grouped 1-D convolution stack over a (pooled) waveform."""

    def __init__(self, channel_mult: float = 1.0, use_spectral_norm: bool = False):
        super().__init__()
        norm_f = spectral_norm if use_spectral_norm else weight_norm
        # (out_channels, kernel, stride, groups) after an input of 1 channel
        layout = [
            (16, 15, 1, 1),
            (64, 41, 4, 4),
            (256, 41, 4, 16),
            (1024, 41, 4, 64),
            (1024, 41, 4, 256),
            (1024, 5, 1, 1),
        ]
        self.convs = nn.ModuleList()
        in_ch = 1
        for out, kernel, stride, groups in layout:
            out_ch = _width(out, channel_mult)
            self.convs.append(
                norm_f(
                    nn.Conv1d(
                        in_ch,
                        out_ch,
                        kernel,
                        stride,
                        groups=math.gcd(groups, in_ch, out_ch),
                        padding=kernel // 2,
                    )
                )
            )
            in_ch = out_ch
        self.conv_post = norm_f(nn.Conv1d(in_ch, 1, 3, 1, padding=1))

    def forward(self, x: torch.Tensor) -> DiscriminatorOutput:
        fmap = []
        for layer in self.convs:
            x = F.leaky_relu(layer(x), LRELU_SLOPE)
            fmap.append(x)
        x = self.conv_post(x)
        fmap.append(x)
        return DiscriminatorOutput(x, fmap)


class MultiScaleDiscriminator(nn.Module):
    """One scale discriminator per pooling factor; scale 1 is spectrally normalized."""

    def __init__(self, cfg: MSDConfig):
        super().__init__()
        self.scales = list(cfg.scales)
        self.discriminators = nn.ModuleList(
            ScaleDiscriminator(cfg.channel_mult, use_spectral_norm=(scale == 1))
            for scale in self.scales
        )
        self.pool = nn.AvgPool1d(4, 2, padding=2)

    @property
    def min_length(self) -> int:
        return max(self.scales) * MSD_MIN_FRAMES

    def forward(self, x: torch.Tensor) -> list[DiscriminatorOutput]:
        _check_input(x, self.min_length, "MSD")
        outputs = []
        pooled = x
        current = 1
        for scale, disc in zip(self.scales, self.discriminators):
            while current < scale:
                pooled = self.pool(pooled)
                current *= 2
            outputs.append(disc(pooled))
        return outputs


def fold_periods(x: torch.Tensor, period: int) -> torch.Tensor:
    """
    Pad a waveform to a multiple of the period and fold it to [B, C, L / p, p].

    Column j of the result holds the samples whose index is congruent to j mod p.
    """
    b, c, t = x.shape
    n_pad = (period - t % period) % period
    if n_pad:
        mode = "reflect" if n_pad < t else "constant"
        x = F.pad(x, (0, n_pad), mode)
        t += n_pad
    return x.view(b, c, t // period, period)


class PeriodDiscriminator(nn.Module):
    """2-D convolutions over a period-folded waveform."""

    def __init__(
        self, period: int, kernel_size: int = 5, stride: int = 3, channel_mult: float = 1.0
    ):
        super().__init__()
        self.period = period
        widths = [_width(c, channel_mult) for c in (32, 128, 512, 1024, 1024)]
        pad = ((kernel_size - 1) // 2, 0)
        self.convs = nn.ModuleList()
        in_ch = 1
        for i, out_ch in enumerate(widths):
            s = stride if i < len(widths) - 1 else 1
            self.convs.append(
                weight_norm(nn.Conv2d(in_ch, out_ch, (kernel_size, 1), (s, 1), padding=pad))
            )
            in_ch = out_ch
        self.conv_post = weight_norm(nn.Conv2d(in_ch, 1, (3, 1), 1, padding=(1, 0)))

    def forward(self, x: torch.Tensor) -> DiscriminatorOutput:
        fmap = []
        x = fold_periods(x, self.period)
        for layer in self.convs:
            x = F.leaky_relu(layer(x), LRELU_SLOPE)
            fmap.append(x)
        x = self.conv_post(x)
        fmap.append(x)
        return DiscriminatorOutput(x, fmap)


class MultiPeriodDiscriminator(nn.Module):
    def __init__(self, cfg: MPDConfig):
        super().__init__()
        self.periods = list(cfg.periods)
        self.discriminators = nn.ModuleList(
            PeriodDiscriminator(p, channel_mult=cfg.channel_mult) for p in self.periods
        )

    @property
    def min_length(self) -> int:
        return 1

    def forward(self, x: torch.Tensor) -> list[DiscriminatorOutput]:
        _check_input(x, self.min_length, "MPD")
        return [disc(x) for disc in self.discriminators]


def band_bin_ranges(num_bins: int, edges: list[float]) -> list[tuple[int, int]]:
    """
    Frequency-bin interval [start, stop) of every band.

    Args:
        num_bins: Number of STFT bins F
        edges: Relative band edges from 0.0 to 1.0

    Returns:
        One (start, stop) pair per band
    """
    bounds = [math.floor(e * num_bins) for e in edges]
    bounds[-1] = num_bins
    ranges = list(zip(bounds[:-1], bounds[1:]))
    empty = [i for i, (lo, hi) in enumerate(ranges) if hi <= lo]
    if empty:
        raise ValidationError(
            f"Band edges {edges} leave bands {empty} empty for {num_bins} frequency bins"
        )
    return ranges


def band_split(spec: ComplexSpectrogram, edges: list[float]) -> list[np.ndarray]:
    """Split a spectrogram (T x F) into contiguous frequency sub-bands."""
    if spec.num_bins < len(edges) - 1:
        raise ValidationError(
            f"{spec.num_bins} frequency bins cannot hold {len(edges) - 1} bands"
        )
    return [spec.values[:, lo:hi] for lo, hi in band_bin_ranges(spec.num_bins, edges)]


class BandDiscriminator(nn.Module):
    """Convolution stack over the real/imaginary STFT of one frequency band."""

    def __init__(self, channels: int):
        super().__init__()
        self.convs = nn.ModuleList(
            [weight_norm(nn.Conv2d(2, channels, (3, 8), padding="same"))]
            + [
                weight_norm(
                    nn.Conv2d(
                        channels,
                        channels,
                        (3, 9),
                        stride=(1, 2),
                        dilation=(d, 1),
                        padding=(d, 4),
                    )
                )
                for d in (1, 2, 4)
            ]
        )
        self.conv_post = weight_norm(nn.Conv2d(channels, 1, (3, 3), padding=(1, 1)))

    def forward(self, x: torch.Tensor) -> DiscriminatorOutput:
        fmap = []
        for layer in self.convs:
            x = F.leaky_relu(layer(x), LRELU_SLOPE)
            fmap.append(x)
        x = self.conv_post(x)
        fmap.append(x)
        return DiscriminatorOutput(x, fmap)


class MultiBandDiscriminator(nn.Module):
    """
    One band discriminator per (STFT window, frequency band).

    Each window sees the centered STFT with hop = window / 4 laid out as [B, 2, T, F];
    sub-networks share their architecture but not their parameters.
    """

    def __init__(self, cfg: MBDConfig):
        super().__init__()
        self.window_lengths = list(cfg.window_lengths)
        self.band_edges = list(cfg.band_edges)
        self.bands = {
            w: band_bin_ranges(w // 2 + 1, self.band_edges) for w in self.window_lengths
        }
        self.discriminators = nn.ModuleList(
            nn.ModuleList(BandDiscriminator(cfg.channels) for _ in range(cfg.num_bands))
            for _ in self.window_lengths
        )

    @property
    def min_length(self) -> int:
        return max(self.window_lengths)

    def spectrogram(self, x: torch.Tensor, window: int) -> torch.Tensor:
        """[B, 1, L] -> [B, 2, T, F] real/imaginary STFT."""
        spec = stft_tensor(x.squeeze(1), window, window // 4)
        return torch.view_as_real(spec).permute(0, 3, 2, 1)

    def forward(self, x: torch.Tensor) -> list[DiscriminatorOutput]:
        _check_input(x, self.min_length, "MBD")
        outputs = []
        for window, band_discs in zip(self.window_lengths, self.discriminators):
            spec = self.spectrogram(x, window)
            for (lo, hi), disc in zip(self.bands[window], band_discs):
                outputs.append(disc(spec[..., lo:hi]))
        return outputs


class DiscriminatorSuite(nn.Module):
    """All enabled families, concatenated in the fixed order MSD, MPD, MBD."""

    def __init__(self, cfg: DiscriminatorConfig):
        super().__init__()
        self.cfg = cfg
        self.msd: Optional[MultiScaleDiscriminator] = (
            MultiScaleDiscriminator(cfg.msd) if cfg.use_msd else None
        )
        self.mpd: Optional[MultiPeriodDiscriminator] = (
            MultiPeriodDiscriminator(cfg.mpd) if cfg.use_mpd else None
        )
        self.mbd: Optional[MultiBandDiscriminator] = (
            MultiBandDiscriminator(cfg.mbd) if cfg.use_mbd else None
        )
        logger.debug(f"Discriminator suite with {cfg.num_sub_discriminators} sub-discriminators")

    def families(self) -> dict[str, Optional[nn.Module]]:
        return {"msd": self.msd, "mpd": self.mpd, "mbd": self.mbd}

    @property
    def min_length(self) -> int:
        return max(f.min_length for f in self.families().values() if f is not None)

    def forward(self, x: torch.Tensor) -> list[DiscriminatorOutput]:
        if x.shape[-1] < self.min_length:
            raise ValidationError(
                f"Discriminators need at least {self.min_length} samples, got {x.shape[-1]}"
            )
        outputs: list[DiscriminatorOutput] = []
        for family in self.families().values():
            if family is not None:
                outputs.extend(family(x))
        return outputs
