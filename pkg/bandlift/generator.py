"""
Transformer-convolutional generator: log-mel spectrogram in, 48 kHz waveform out.

The encoder projects mel frames to ``embed_dim`` and refines them with a stack of
attention + dilated-memory blocks. The decoder is a transposed-convolution upsampler
with multi-receptive-field residual fusion after every stage.

Tensors are batch-first: mel [B, n_mels, T], latent [B, T, embed_dim],
waveform [B, 1, T * hop_length].
"""

import logging

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn
from torch.nn.utils import parametrize
from torch.nn.utils.parametrizations import weight_norm

from bandlift.errors import ValidationError
from bandlift.models import TARGET_RATE, GeneratorConfig, MelSpectrogram, Waveform

logger = logging.getLogger(__name__)

LRELU_SLOPE = 0.1


def init_weights(m: nn.Module, mean: float = 0.0, std: float = 0.01) -> None:
    if isinstance(m, (nn.Conv1d, nn.ConvTranspose1d)):
        m.weight.data.normal_(mean, std)


def get_padding(kernel_size: int, dilation: int = 1) -> int:
    return (kernel_size * dilation - dilation) // 2


def count_parameters(module: nn.Module) -> int:
    """Number of trainable scalars in a module."""
    return sum(p.numel() for p in module.parameters() if p.requires_grad)


def _zero_layer(layer: nn.Module) -> None:
    """Zero a (possibly weight-normalized) layer so it outputs exactly zero."""
    with torch.no_grad():
        if parametrize.is_parametrized(layer, "weight"):
            # weight = g * v / |v|; zero magnitude gives a zero weight
            layer.parametrizations.weight.original0.zero_()
        else:
            layer.weight.zero_()
        if getattr(layer, "bias", None) is not None:
            layer.bias.zero_()


class OffsetScale(nn.Module):
    """Per-use scale and offset of the shared attention basis."""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.gamma = nn.Parameter(torch.ones(heads, dim))
        self.beta = nn.Parameter(torch.zeros(heads, dim))
        nn.init.normal_(self.gamma, std=0.02)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, ...]:
        out = x.unsqueeze(-2) * self.gamma + self.beta
        return out.unbind(dim=-2)


class GatedAttention(nn.Module):
    """
    Single-head gated attention with joint local and global terms.

    Queries and keys come from a shared low-dimensional basis. The local term uses
    squared-ReLU scores inside non-overlapping windows; the global term is linear
    attention over the whole sequence.
    """

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        hidden = cfg.embed_dim * cfg.expansion_factor
        self.hidden = hidden
        self.window = cfg.local_attention_window

        self.norm = nn.LayerNorm(cfg.embed_dim)
        self.to_hidden = nn.Linear(cfg.embed_dim, 2 * hidden)
        self.to_basis = nn.Linear(cfg.embed_dim, cfg.attention_dim)
        channels = 2 * hidden + cfg.attention_dim
        # depthwise convolution over time: the convolutional gating path
        self.token_conv = nn.Conv1d(
            channels,
            channels,
            cfg.token_conv_kernel,
            padding=cfg.token_conv_kernel // 2,
            groups=channels,
        )
        self.qk_offset_scale = OffsetScale(cfg.attention_dim, heads=4)
        self.to_out = nn.Linear(hidden, cfg.embed_dim)

    def _local(
        self, q: torch.Tensor, k: torch.Tensor, values: list[torch.Tensor]
    ) -> list[torch.Tensor]:
        batch, frames, dim = q.shape
        w = self.window
        pad = (-frames) % w
        if pad:
            q = F.pad(q, (0, 0, 0, pad))
            k = F.pad(k, (0, 0, 0, pad))
            values = [F.pad(v, (0, 0, 0, pad)) for v in values]
        n = (frames + pad) // w

        qw = q.reshape(batch, n, w, dim)
        kw = k.reshape(batch, n, w, dim)
        scores = F.relu(qw @ kw.transpose(-1, -2) / dim**0.5) ** 2 / w
        valid = (torch.arange(frames + pad, device=q.device) < frames).reshape(1, n, 1, w)
        scores = scores * valid.to(scores.dtype)

        out = []
        for v in values:
            vw = v.reshape(batch, n, w, -1)
            out.append((scores @ vw).reshape(batch, n * w, -1)[:, :frames])
        return out

    @staticmethod
    def _global(
        q: torch.Tensor, k: torch.Tensor, values: list[torch.Tensor]
    ) -> list[torch.Tensor]:
        frames = q.shape[1]
        out = []
        for v in values:
            kv = torch.einsum("btd,bte->bde", k, v) / frames
            out.append(torch.einsum("btd,bde->bte", q, kv))
        return out

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.norm(x)
        projected = torch.cat([F.silu(self.to_hidden(h)), F.silu(self.to_basis(h))], dim=-1)
        projected = self.token_conv(projected.transpose(1, 2)).transpose(1, 2)
        basis_dim = projected.shape[-1] - 2 * self.hidden
        u, v, basis = projected.split([self.hidden, self.hidden, basis_dim], dim=-1)

        q_local, k_local, q_global, k_global = self.qk_offset_scale(basis)
        local_v, local_u = self._local(q_local, k_local, [v, u])
        global_v, global_u = self._global(q_global, k_global, [v, u])
        att_v = local_v + global_v
        att_u = local_u + global_u

        gated = (u * att_v) * torch.sigmoid(v * att_u)
        return x + self.to_out(gated)


class DilatedFSMN(nn.Module):
    """Feedforward sequential memory with m taps per side at dilation d."""

    def __init__(self, cfg: GeneratorConfig, dilation: int):
        super().__init__()
        hidden = cfg.embed_dim * cfg.expansion_factor
        m = cfg.fsmn_memory
        self.reach = m * dilation

        self.norm = nn.LayerNorm(cfg.embed_dim)
        self.to_hidden = nn.Linear(cfg.embed_dim, hidden)
        self.to_gate = nn.Linear(cfg.embed_dim, hidden)
        self.memory = nn.Conv1d(
            hidden,
            hidden,
            2 * m + 1,
            dilation=dilation,
            padding=m * dilation,
            groups=hidden,
            bias=False,
        )
        self.to_out = nn.Linear(hidden, cfg.embed_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.norm(x)
        a = F.silu(self.to_hidden(h))
        memory = a + self.memory(a.transpose(1, 2)).transpose(1, 2)
        gated = memory * torch.sigmoid(self.to_gate(h))
        return x + self.to_out(gated)


class EncoderBlock(nn.Module):
    """One transformer block: gated attention followed by dilated FSMN memory."""

    def __init__(self, cfg: GeneratorConfig, dilation: int, attention: bool = True):
        super().__init__()
        self.attention = GatedAttention(cfg) if attention else None
        self.fsmn = DilatedFSMN(cfg, dilation)

    def zero_init_updates(self) -> None:
        if self.attention is not None:
            _zero_layer(self.attention.to_out)
        _zero_layer(self.fsmn.to_out)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.attention is not None:
            x = self.attention(x)
        return self.fsmn(x)


class ResBlock(nn.Module):
    """Residual stack of convolution pairs; each pair is (dilation d1, dilation d2)."""

    def __init__(self, channels: int, kernel_size: int, dilations: list[list[int]]):
        super().__init__()
        self.convs1 = nn.ModuleList()
        self.convs2 = nn.ModuleList()
        for d1, d2 in dilations:
            self.convs1.append(
                weight_norm(
                    nn.Conv1d(
                        channels,
                        channels,
                        kernel_size,
                        1,
                        dilation=d1,
                        padding=get_padding(kernel_size, d1),
                    )
                )
            )
            self.convs2.append(
                weight_norm(
                    nn.Conv1d(
                        channels,
                        channels,
                        kernel_size,
                        1,
                        dilation=d2,
                        padding=get_padding(kernel_size, d2),
                    )
                )
            )
        self.convs1.apply(init_weights)
        self.convs2.apply(init_weights)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for c1, c2 in zip(self.convs1, self.convs2):
            xt = F.leaky_relu(x, LRELU_SLOPE)
            xt = c1(xt)
            xt = F.leaky_relu(xt, LRELU_SLOPE)
            xt = c2(xt)
            x = xt + x
        return x


class MultiReceptiveField(nn.Module):
    """Average of parallel residual stacks with different kernels and dilations."""

    def __init__(self, channels: int, kernels: list[int], dilations: list[list[list[int]]]):
        super().__init__()
        if len(kernels) != len(dilations):
            raise ValidationError("MRF kernels and dilations must have the same length")
        if any(k % 2 == 0 for k in kernels):
            raise ValidationError(f"MRF kernel sizes must be odd, got {kernels}")
        self.blocks = nn.ModuleList(
            ResBlock(channels, k, d) for k, d in zip(kernels, dilations)
        )

    def zero_init(self) -> None:
        for block in self.blocks:
            for conv in block.convs2:
                _zero_layer(conv)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        total = sum(block(x) for block in self.blocks)
        return total / len(self.blocks)


class Generator(nn.Module):
    """Mel-to-waveform generator."""

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        schedule = cfg.fsmn_dilation_schedule

        self.input_projection = nn.Linear(cfg.n_mels, cfg.embed_dim)
        self.blocks = nn.ModuleList(
            EncoderBlock(cfg, schedule[i % len(schedule)]) for i in range(cfg.n_blocks)
        )

        channels = cfg.decoder_channels
        self.conv_pre = weight_norm(nn.Conv1d(cfg.embed_dim, channels, 7, 1, padding=3))
        self.ups = nn.ModuleList()
        self.mrfs = nn.ModuleList()
        for k, u in zip(cfg.upsample_kernels, cfg.strides):
            self.ups.append(
                weight_norm(
                    nn.ConvTranspose1d(channels, channels // 2, k, u, padding=(k - u) // 2)
                )
            )
            channels //= 2
            self.mrfs.append(MultiReceptiveField(channels, cfg.mrf_kernels, cfg.mrf_dilations))
        self.conv_post = weight_norm(nn.Conv1d(channels, 1, 7, 1, padding=3))
        self.ups.apply(init_weights)
        self.conv_post.apply(init_weights)

    @property
    def hop_length(self) -> int:
        return self.cfg.hop_length

    def zero_init_updates(self) -> None:
        """Zero every residual update path so the encoder reduces to the input projection."""
        for block in self.blocks:
            block.zero_init_updates()

    def project_input(self, mel: torch.Tensor) -> torch.Tensor:
        """[B, n_mels, T] -> [B, T, embed_dim]."""
        if mel.dim() != 3 or mel.shape[1] != self.cfg.n_mels:
            raise ValidationError(
                f"Expected mel of shape [B, {self.cfg.n_mels}, T], got {tuple(mel.shape)}"
            )
        return self.input_projection(mel.transpose(1, 2))

    def encode(self, mel: torch.Tensor) -> torch.Tensor:
        z = self.project_input(mel)
        for block in self.blocks:
            z = block(z)
        return z

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        """[B, T, embed_dim] -> [B, 1, T * hop_length] bounded in [-1, 1]."""
        if z.dim() != 3 or z.shape[-1] != self.cfg.embed_dim:
            raise ValidationError(
                f"Expected latent of shape [B, T, {self.cfg.embed_dim}], got {tuple(z.shape)}"
            )
        x = self.conv_pre(z.transpose(1, 2))
        for up, mrf in zip(self.ups, self.mrfs):
            x = F.leaky_relu(x, LRELU_SLOPE)
            x = up(x)
            x = mrf(x)
        x = F.leaky_relu(x, LRELU_SLOPE)
        x = self.conv_post(x)
        return torch.tanh(x)

    def forward(self, mel: torch.Tensor) -> torch.Tensor:
        return self.decode(self.encode(mel))

    def remove_weight_norm(self) -> None:
        """Fold weight normalization into plain weights for inference."""
        logger.info("Removing weight norm...")
        for module in self.modules():
            if parametrize.is_parametrized(module, "weight"):
                parametrize.remove_parametrizations(module, "weight")


def generate(generator: Generator, mel: MelSpectrogram) -> Waveform:
    """
    Run the generator on a single mel spectrogram.

    Args:
        generator: Trained generator (evaluation mode is set by the caller)
        mel: Log-mel input with the generator's band count

    Returns:
        48 kHz waveform of frames * hop_length samples
    """
    param = next(generator.parameters())
    x = torch.from_numpy(np.ascontiguousarray(mel.values)).to(param.dtype).to(param.device)
    with torch.no_grad():
        y = generator(x.unsqueeze(0))[0, 0]
    return Waveform(samples=y.detach().cpu().double().numpy(), sample_rate=TARGET_RATE)
