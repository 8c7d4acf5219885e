"""Data models for BandLift using Pydantic."""

import hashlib
import math
from datetime import datetime
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

TARGET_RATE = 48000
MIN_INPUT_RATE = 4000
MAX_TRAIN_RATE = 32000

FilterFamily = Literal["windowed-sinc", "butterworth", "chebyshev-1"]


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


class Waveform(BaseModel):
    """A mono sampled audio signal with its sampling rate."""

    samples: np.ndarray = Field(..., description="1-D amplitude array, nominally [-1, 1]")
    sample_rate: int = Field(..., gt=0, description="Sampling rate in Hz")

    @field_validator("samples", mode="before")
    @classmethod
    def validate_samples(cls, v: object) -> np.ndarray:
        """Ensure a finite 1-D floating-point array."""
        arr = np.asarray(v)
        if arr.ndim != 1:
            raise ValueError(f"Waveform samples must be 1-D, got shape {arr.shape}")
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("Waveform samples contain NaN or Inf")
        return arr

    @property
    def num_samples(self) -> int:
        return int(self.samples.shape[0])

    @property
    def duration(self) -> float:
        """Duration in seconds."""
        return self.num_samples / self.sample_rate

    model_config = ConfigDict(arbitrary_types_allowed=True)


class ComplexSpectrogram(BaseModel):
    """Complex STFT laid out as frames × frequency bins."""

    values: np.ndarray = Field(..., description="Complex array (T × F)")
    window_length: int = Field(..., ge=1)
    hop_length: int = Field(..., ge=1)
    sample_rate: int = Field(..., gt=0)

    @model_validator(mode="after")
    def check_layout(self) -> "ComplexSpectrogram":
        """F must equal window_length/2 + 1 and at least one frame must exist."""
        if self.values.ndim != 2:
            raise ValueError(f"Spectrogram must be 2-D, got shape {self.values.shape}")
        frames, bins = self.values.shape
        if bins != self.window_length // 2 + 1:
            raise ValueError(
                f"Expected {self.window_length // 2 + 1} frequency bins, got {bins}"
            )
        if frames < 1:
            raise ValueError("Spectrogram has no frames")
        return self

    @property
    def num_frames(self) -> int:
        return int(self.values.shape[0])

    @property
    def num_bins(self) -> int:
        return int(self.values.shape[1])

    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    model_config = ConfigDict(arbitrary_types_allowed=True)


class MelConfig(BaseModel):
    """STFT and mel filterbank settings for one mel representation."""

    n_fft: int = Field(1024, ge=2)
    hop_length: int = Field(256, ge=1)
    win_length: int = Field(1024, ge=2)
    n_mels: int = Field(80, ge=1)
    f_min: float = Field(0.0, ge=0.0)
    f_max: Optional[float] = Field(None, description="Upper edge in Hz (None = Nyquist)")
    sample_rate: int = Field(TARGET_RATE, gt=0)
    log_floor: float = Field(1e-5, gt=0.0)

    @model_validator(mode="after")
    def check_ranges(self) -> "MelConfig":
        """Check window and frequency ordering."""
        if self.win_length > self.n_fft:
            raise ValueError(
                f"win_length ({self.win_length}) must not exceed n_fft ({self.n_fft})"
            )
        if not self.f_min < self.upper_frequency <= self.sample_rate / 2:
            raise ValueError(
                f"Need f_min < f_max <= {self.sample_rate / 2} Hz, got "
                f"[{self.f_min}, {self.upper_frequency}]"
            )
        return self

    @property
    def upper_frequency(self) -> float:
        return self.f_max if self.f_max is not None else self.sample_rate / 2

    @property
    def num_bins(self) -> int:
        return self.n_fft // 2 + 1

    model_config = ConfigDict(frozen=True)


class MelSpectrogram(BaseModel):
    """Log-compressed mel magnitudes laid out as n_mels × frames."""

    values: np.ndarray
    config: MelConfig

    @model_validator(mode="after")
    def check_values(self) -> "MelSpectrogram":
        """Band count must match the config and values respect the floor."""
        if self.values.ndim != 2 or self.values.shape[0] != self.config.n_mels:
            raise ValueError(
                f"Expected mel of shape ({self.config.n_mels}, T), got {self.values.shape}"
            )
        floor = math.log(self.config.log_floor)
        if self.values.size and float(self.values.min()) < floor - 1e-6:
            raise ValueError("Mel values fall below log(log_floor)")
        return self

    @property
    def num_frames(self) -> int:
        return int(self.values.shape[1])

    model_config = ConfigDict(arbitrary_types_allowed=True)


class FilterSpec(BaseModel):
    """Low-pass filter used to simulate band-limited recordings."""

    family: FilterFamily = Field("windowed-sinc", description="Filter design family")
    order: int = Field(8, ge=1, description="IIR order or sinc zero crossings per side")
    cutoff: float = Field(..., gt=0.0, description="Cutoff frequency in Hz")
    transition: float = Field(
        0.0, ge=0.0, lt=1.0, description="Fraction of the cutoff reserved for roll-off"
    )

    @property
    def design_edge(self) -> float:
        return self.cutoff * (1.0 - self.transition)

    model_config = ConfigDict(frozen=True)


class GeneratorConfig(BaseModel):
    """Hyper-parameters of the transformer-convolutional generator."""

    n_blocks: int = Field(24, ge=0)
    embed_dim: int = Field(512, ge=1)
    n_mels: int = Field(80, ge=1)
    attention_dim: int = Field(128, ge=1, description="Shared attention basis size")
    expansion_factor: int = Field(2, ge=1, description="Hidden width / embed_dim")
    local_attention_window: int = Field(64, ge=1)
    fsmn_memory: int = Field(8, ge=1, description="Memory taps per side")
    fsmn_dilation_schedule: list[int] = Field(default_factory=lambda: [1, 2, 4, 8])
    token_conv_kernel: int = Field(17, ge=1, description="Depthwise kernel of the gating path")
    decoder_channels: int = Field(512, ge=1)
    upsample_kernels: list[int] = Field(default_factory=lambda: [16, 16, 4, 4])
    upsample_strides: Optional[list[int]] = Field(
        None, description="Transposed-conv strides (None = kernel // 2)"
    )
    mrf_kernels: list[int] = Field(default_factory=lambda: [3, 7, 11])
    mrf_dilations: list[list[list[int]]] = Field(
        default_factory=lambda: [[[1, 1], [3, 1], [5, 1]] for _ in range(3)]
    )

    @model_validator(mode="after")
    def check_decoder_layout(self) -> "GeneratorConfig":
        """Derive strides and check that kernel lists line up."""
        if self.upsample_strides is None:
            self.upsample_strides = [k // 2 for k in self.upsample_kernels]
        if len(self.upsample_strides) != len(self.upsample_kernels):
            raise ValueError("upsample_kernels and upsample_strides differ in length")
        for k, u in zip(self.upsample_kernels, self.upsample_strides):
            if u < 1 or k < u or (k - u) % 2:
                raise ValueError(
                    f"Upsampling kernel {k} with stride {u} does not give an exact "
                    "length multiple (need kernel >= stride and an even difference)"
                )
        if len(self.mrf_kernels) != len(self.mrf_dilations):
            raise ValueError("mrf_kernels and mrf_dilations differ in length")
        if any(k % 2 == 0 for k in self.mrf_kernels):
            raise ValueError(f"MRF kernels must be odd, got {self.mrf_kernels}")
        if self.token_conv_kernel % 2 == 0:
            raise ValueError("token_conv_kernel must be odd")
        if self.decoder_channels % (2 ** len(self.upsample_kernels)):
            raise ValueError(
                f"decoder_channels ({self.decoder_channels}) must stay integral after "
                f"{len(self.upsample_kernels)} halvings"
            )
        if not self.fsmn_dilation_schedule or min(self.fsmn_dilation_schedule) < 1:
            raise ValueError("fsmn_dilation_schedule needs positive dilations")
        return self

    @property
    def strides(self) -> list[int]:
        assert self.upsample_strides is not None
        return self.upsample_strides

    @property
    def hop_length(self) -> int:
        """Temporal expansion factor of the decoder."""
        return math.prod(self.strides)


class MSDConfig(BaseModel):
    """Multi-scale discriminator settings."""

    scales: list[int] = Field(default_factory=lambda: [1, 2, 4])
    channel_mult: float = Field(1.0, gt=0.0)

    @field_validator("scales")
    @classmethod
    def check_scales(cls, v: list[int]) -> list[int]:
        if not v or v[0] != 1:
            raise ValueError("MSD scales must start at 1")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("MSD scales must be strictly increasing")
        if not all(_is_power_of_two(s) for s in v):
            raise ValueError("MSD scales must be powers of two")
        return v


class MPDConfig(BaseModel):
    """Multi-period discriminator settings."""

    periods: list[int] = Field(default_factory=lambda: [2, 3, 5, 7, 11])
    channel_mult: float = Field(1.0, gt=0.0)

    @field_validator("periods")
    @classmethod
    def check_periods(cls, v: list[int]) -> list[int]:
        if not v or min(v) < 1:
            raise ValueError("MPD periods must be positive")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("MPD periods must be strictly increasing")
        for i, a in enumerate(v):
            for b in v[i + 1 :]:
                if math.gcd(a, b) != 1:
                    raise ValueError(f"MPD periods {a} and {b} are not coprime")
        return v


class MBDConfig(BaseModel):
    """Multi-band, multi-scale complex STFT discriminator settings."""

    window_lengths: list[int] = Field(default_factory=lambda: [4096, 2048, 1024, 512, 256])
    band_edges: list[float] = Field(
        default_factory=lambda: [0.0, 0.1, 0.25, 0.5, 0.75, 1.0]
    )
    channels: int = Field(32, ge=1)

    @model_validator(mode="after")
    def check_layout(self) -> "MBDConfig":
        edges = self.band_edges
        if len(edges) < 2 or edges[0] != 0.0 or edges[-1] != 1.0:
            raise ValueError("band_edges must run from 0.0 to 1.0")
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError("band_edges must be strictly increasing")
        wins = self.window_lengths
        if not wins or not all(_is_power_of_two(w) for w in wins):
            raise ValueError("MBD windows must be powers of two")
        if any(b >= a for a, b in zip(wins, wins[1:])):
            raise ValueError("MBD windows must be strictly decreasing")
        return self

    @property
    def num_bands(self) -> int:
        return len(self.band_edges) - 1


class DiscriminatorConfig(BaseModel):
    """The three discriminator families and their ablation switches."""

    msd: MSDConfig = Field(default_factory=MSDConfig)
    mpd: MPDConfig = Field(default_factory=MPDConfig)
    mbd: MBDConfig = Field(default_factory=MBDConfig)
    use_msd: bool = True
    use_mpd: bool = True
    use_mbd: bool = True

    @model_validator(mode="after")
    def check_enabled(self) -> "DiscriminatorConfig":
        if not (self.use_msd or self.use_mpd or self.use_mbd):
            raise ValueError("At least one discriminator family must be enabled")
        return self

    @property
    def num_sub_discriminators(self) -> int:
        count = 0
        if self.use_msd:
            count += len(self.msd.scales)
        if self.use_mpd:
            count += len(self.mpd.periods)
        if self.use_mbd:
            count += len(self.mbd.window_lengths) * self.mbd.num_bands
        return count


class LossWeights(BaseModel):
    """Weights of the mel and feature-matching terms in the generator objective."""

    lambda_m: float = Field(7.0, ge=0.0)
    lambda_f: float = Field(1.5, ge=0.0)


class MelScaleBank(BaseModel):
    """Mel settings of the multi-scale reconstruction loss."""

    n_mels: list[int] = Field(default_factory=lambda: [5, 10, 20, 40, 80, 160, 320])
    window_lengths: list[int] = Field(
        default_factory=lambda: [32, 64, 128, 256, 512, 1024, 2048]
    )
    sample_rate: int = Field(TARGET_RATE, gt=0)
    log_floor: float = Field(1e-5, gt=0.0)

    @model_validator(mode="after")
    def check_aligned(self) -> "MelScaleBank":
        if len(self.n_mels) != len(self.window_lengths) or not self.n_mels:
            raise ValueError("n_mels and window_lengths must be aligned and non-empty")
        if any(w % 4 for w in self.window_lengths):
            raise ValueError("Window lengths must be divisible by 4 (hop = window / 4)")
        return self

    @property
    def configs(self) -> list[MelConfig]:
        """One MelConfig per scale, hop = window / 4."""
        return [
            MelConfig(
                n_fft=w,
                win_length=w,
                hop_length=w // 4,
                n_mels=m,
                f_min=0.0,
                f_max=None,
                sample_rate=self.sample_rate,
                log_floor=self.log_floor,
            )
            for m, w in zip(self.n_mels, self.window_lengths)
        ]


class TrainConfig(BaseModel):
    """Optimizer, schedule and loop settings."""

    beta1: float = Field(0.8, gt=0.0, lt=1.0)
    beta2: float = Field(0.99, gt=0.0, lt=1.0)
    weight_decay: float = Field(0.01, ge=0.0)
    initial_lr: float = Field(2e-4, ge=0.0)
    lr_decay: float = Field(0.999, gt=0.0, le=1.0)
    batch_size: int = Field(16, ge=1)
    total_steps: int = Field(500_000, ge=0)
    seed: int = Field(1234)
    checkpoint_interval: int = Field(5000, ge=1)
    log_interval: int = Field(100, ge=1)
    num_workers: int = Field(0, ge=0, description="Data-loading workers (0 = in-process)")


class DatasetSpec(BaseModel):
    """Training data and the degradation policy applied to it."""

    manifest: Optional[Path] = Field(None, description="Newline-delimited list of WAVs")
    rate_policy: Literal["fixed", "discrete", "continuous"] = "discrete"
    fixed_rate: int = Field(8000, ge=MIN_INPUT_RATE, le=TARGET_RATE)
    discrete_rates: list[int] = Field(
        default_factory=lambda: [4000, 8000, 12000, 16000, 24000, 32000]
    )
    rate_range: tuple[int, int] = (MIN_INPUT_RATE, MAX_TRAIN_RATE)
    segment_length: int = Field(16384, ge=1)
    filter_policy: Literal["random", "eval"] = "random"
    filter_families: list[FilterFamily] = Field(
        default_factory=lambda: ["windowed-sinc", "butterworth", "chebyshev-1"]
    )
    filter_order_range: tuple[int, int] = (4, 10)

    @model_validator(mode="after")
    def check_rates(self) -> "DatasetSpec":
        low, high = self.rate_range
        if not MIN_INPUT_RATE <= low <= high <= TARGET_RATE:
            raise ValueError(f"rate_range {self.rate_range} outside [4000, 48000]")
        if any(not MIN_INPUT_RATE <= r <= TARGET_RATE for r in self.discrete_rates):
            raise ValueError("discrete_rates must lie in [4000, 48000]")
        if not self.filter_families:
            raise ValueError("filter_families must not be empty")
        lo, hi = self.filter_order_range
        if not 1 <= lo <= hi:
            raise ValueError(f"Invalid filter_order_range {self.filter_order_range}")
        return self


class ExperimentConfig(BaseModel):
    """A full experiment: every knob needed to rebuild models and data."""

    name: str = Field("bandlift", min_length=1)
    mel: MelConfig = Field(default_factory=MelConfig)
    generator: GeneratorConfig = Field(default_factory=GeneratorConfig)
    discriminators: DiscriminatorConfig = Field(default_factory=DiscriminatorConfig)
    loss: LossWeights = Field(default_factory=LossWeights)
    mel_bank: MelScaleBank = Field(default_factory=MelScaleBank)
    train: TrainConfig = Field(default_factory=TrainConfig)
    data: DatasetSpec = Field(default_factory=DatasetSpec)

    @model_validator(mode="after")
    def check_consistency(self) -> "ExperimentConfig":
        """Generator, mel and segment settings must agree on the frame rate."""
        if self.generator.n_mels != self.mel.n_mels:
            raise ValueError(
                f"generator.n_mels ({self.generator.n_mels}) != mel.n_mels "
                f"({self.mel.n_mels})"
            )
        if self.generator.hop_length != self.mel.hop_length:
            raise ValueError(
                f"Product of upsample strides ({self.generator.hop_length}) must equal "
                f"the mel hop length ({self.mel.hop_length})"
            )
        if self.data.segment_length % self.mel.hop_length:
            raise ValueError(
                f"segment_length ({self.data.segment_length}) must be a multiple of "
                f"{self.mel.hop_length}"
            )
        if self.mel.sample_rate != TARGET_RATE or self.mel_bank.sample_rate != TARGET_RATE:
            raise ValueError("Mel settings must describe 48 kHz audio")
        return self

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form."""
        payload = self.model_dump_json(exclude={"data": {"manifest"}})
        return hashlib.sha256(payload.encode()).hexdigest()


class StepMetrics(BaseModel):
    """Loss record of one training step."""

    step: int
    epoch: int
    adv_g: float
    adv_d: float
    mel: float
    fm: float
    total_g: float
    lr: float


class LsdConfig(BaseModel):
    """Spectrogram settings behind the log-spectral distance."""

    n_fft: int = Field(2048, ge=2)
    hop: int = Field(512, ge=1)
    window: int = Field(2048, ge=2)
    floor: float = Field(1e-8, gt=0.0)

    @model_validator(mode="after")
    def check_order(self) -> "LsdConfig":
        if not self.hop <= self.window <= self.n_fft:
            raise ValueError("Need hop <= window <= n_fft")
        return self

    def digest(self) -> str:
        return hashlib.md5(self.model_dump_json().encode()).hexdigest()

    model_config = ConfigDict(frozen=True)


class EvalRow(BaseModel):
    """Mean and population std of the LSD for one input sampling rate."""

    rate: int = Field(..., gt=0)
    mean_lsd: float = Field(..., ge=0.0)
    std_lsd: float = Field(0.0, ge=0.0)
    utterance_count: int = Field(..., ge=0)


class EvalReport(BaseModel):
    """Per-rate LSD summary of one system."""

    model_identifier: str
    parameter_count: Optional[int] = None
    rows: list[EvalRow] = Field(default_factory=list)
    lsd_config: LsdConfig = Field(default_factory=LsdConfig)
    lsd_config_digest: str = ""
    filter_spec: Optional[str] = None
    created_at: datetime = Field(default_factory=datetime.now)

    @model_validator(mode="after")
    def fill_digest(self) -> "EvalReport":
        if not self.lsd_config_digest:
            self.lsd_config_digest = self.lsd_config.digest()
        return self

    @property
    def aggregate(self) -> float:
        """Mean of the row means (the table's AVG column)."""
        if not self.rows:
            return 0.0
        return float(np.mean([row.mean_lsd for row in self.rows]))


class AbxAssignment(BaseModel):
    """Which model sits behind stimulus A and B of one exported pair."""

    pair_id: str
    source: str
    a: Literal["model_a", "model_b"]
    b: Literal["model_a", "model_b"]

    @model_validator(mode="after")
    def check_distinct(self) -> "AbxAssignment":
        if self.a == self.b:
            raise ValueError("A and B must come from different models")
        return self
