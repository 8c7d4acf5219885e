"""Least-squares adversarial, multi-scale mel and feature-matching objectives."""

from typing import Sequence, TypeVar, Union

import numpy as np
import torch

from bandlift.discriminators import DiscriminatorOutput
from bandlift.dsp import log_mel_tensor
from bandlift.errors import ValidationError
from bandlift.models import LossWeights, MelScaleBank, Waveform

Scalar = TypeVar("Scalar", float, torch.Tensor)
Signal = Union[torch.Tensor, Waveform]


def _check_aligned(
    real_outs: Sequence[DiscriminatorOutput], fake_outs: Sequence[DiscriminatorOutput]
) -> None:
    if len(real_outs) != len(fake_outs):
        raise ValidationError(
            f"Real and generated outputs are misaligned: {len(real_outs)} vs "
            f"{len(fake_outs)} sub-discriminators"
        )
    for i, (r, g) in enumerate(zip(real_outs, fake_outs)):
        if r.score_map.shape != g.score_map.shape:
            raise ValidationError(
                f"Sub-discriminator {i}: score maps differ in shape "
                f"{tuple(r.score_map.shape)} vs {tuple(g.score_map.shape)}"
            )


def adv_loss_d(
    real_outs: Sequence[DiscriminatorOutput], fake_outs: Sequence[DiscriminatorOutput]
) -> torch.Tensor:
    """
    Discriminator LS-GAN loss.

    Args:
        real_outs: Outputs on real audio
        fake_outs: Outputs on detached generated audio, same order

    Returns:
        Sum over sub-discriminators of mean((1 - D(x))^2) + mean(D(G(s))^2)
    """
    _check_aligned(real_outs, fake_outs)
    terms = [
        ((1 - r.score_map) ** 2).mean() + (g.score_map**2).mean()
        for r, g in zip(real_outs, fake_outs)
    ]
    return _total(terms)


def adv_loss_g(fake_outs: Sequence[DiscriminatorOutput]) -> torch.Tensor:
    """Generator LS-GAN loss: sum over sub-discriminators of mean((1 - D(G(s)))^2)."""
    return _total([((1 - g.score_map) ** 2).mean() for g in fake_outs])


def _total(terms: list[torch.Tensor]) -> torch.Tensor:
    if not terms:
        return torch.zeros(())
    return torch.stack(terms).sum()


def _as_batch(x: Signal) -> tuple[torch.Tensor, int | None]:
    if isinstance(x, Waveform):
        samples = torch.from_numpy(np.asarray(x.samples, dtype=np.float64))
        return samples.unsqueeze(0), x.sample_rate
    if x.dim() == 3:
        x = x.squeeze(1)
    if x.dim() == 1:
        x = x.unsqueeze(0)
    return x, None


def multiscale_mel_terms(x: Signal, x_hat: Signal, bank: MelScaleBank) -> list[torch.Tensor]:
    """
    Per-scale L1 distance between log-mel spectrograms.

    Args:
        x: Reference audio, a Waveform or a tensor [B, L] / [B, 1, L]
        x_hat: Generated audio of the same shape
        bank: Mel settings of every scale

    Returns:
        One scalar tensor per scale
    """
    ref, ref_rate = _as_batch(x)
    gen, gen_rate = _as_batch(x_hat)
    if ref.shape != gen.shape:
        raise ValidationError(
            f"Mel loss needs equal-length inputs, got {tuple(ref.shape)} and "
            f"{tuple(gen.shape)}"
        )
    for rate in (ref_rate, gen_rate):
        if rate is not None and rate != bank.sample_rate:
            raise ValidationError(f"Mel loss expects {bank.sample_rate} Hz audio, got {rate}")

    terms = []
    for config in bank.configs:
        ref_mel = log_mel_tensor(ref, config, strict=False)
        gen_mel = log_mel_tensor(gen, config, strict=False)
        terms.append(torch.mean(torch.abs(ref_mel - gen_mel)))
    return terms


def multiscale_mel_loss(x: Signal, x_hat: Signal, bank: MelScaleBank) -> torch.Tensor:
    """Sum of the per-scale mel L1 terms."""
    terms = multiscale_mel_terms(x, x_hat, bank)
    return torch.stack(terms).sum()


def feature_matching_loss(
    real_outs: Sequence[DiscriminatorOutput], fake_outs: Sequence[DiscriminatorOutput]
) -> torch.Tensor:
    """
    Feature-matching loss over every layer of every sub-discriminator.

    Each layer contributes its mean absolute difference; layers are averaged per
    sub-discriminator and sub-discriminators are summed. Real features are constants.
    """
    if len(real_outs) != len(fake_outs):
        raise ValidationError(
            f"Feature lists are misaligned: {len(real_outs)} vs {len(fake_outs)}"
        )
    terms = []
    for i, (r, g) in enumerate(zip(real_outs, fake_outs)):
        if len(r.features) != len(g.features):
            raise ValidationError(
                f"Sub-discriminator {i}: {len(r.features)} real vs {len(g.features)} "
                "generated feature layers"
            )
        if not r.features:
            continue
        per_layer = [
            torch.mean(torch.abs(rl.detach() - gl)) for rl, gl in zip(r.features, g.features)
        ]
        terms.append(torch.stack(per_layer).mean())
    return _total(terms)


def generator_loss(adv_g: Scalar, mel: Scalar, fm: Scalar, weights: LossWeights) -> Scalar:
    """adv_g + lambda_m * mel + lambda_f * fm."""
    return adv_g + weights.lambda_m * mel + weights.lambda_f * fm


def discriminator_loss(adv_d: Scalar) -> Scalar:
    return adv_d
