"""Tests for the adversarial, mel and feature-matching objectives."""

import librosa
import numpy as np
import pytest
import torch
from scipy import signal

from bandlift.discriminators import DiscriminatorOutput, DiscriminatorSuite
from bandlift.errors import ValidationError
from bandlift.generator import Generator
from bandlift.losses import (
    adv_loss_d,
    adv_loss_g,
    discriminator_loss,
    feature_matching_loss,
    generator_loss,
    multiscale_mel_loss,
    multiscale_mel_terms,
)
from bandlift.models import LossWeights, MelScaleBank, Waveform
from tests.gradcheck import sampled_gradient_agreement


def constant_outputs(value: float, count: int, shape=(2, 1, 7)) -> list[DiscriminatorOutput]:
    return [DiscriminatorOutput(torch.full(shape, value), []) for _ in range(count)]


def featured(*layers) -> DiscriminatorOutput:
    features = [torch.tensor(layer, dtype=torch.float64) for layer in layers]
    return DiscriminatorOutput(torch.zeros(1, 1, 3, dtype=torch.float64), features)


def reference_log_mel(x: np.ndarray, n_fft: int, n_mels: int, floor: float) -> np.ndarray:
    """Frame-by-frame DFT log-mel with centered reflection padding."""
    hop = n_fft // 4
    padded = np.pad(x, n_fft // 2, mode="reflect")
    window = signal.get_window("hann", n_fft, fftbins=True)
    frames = [
        np.abs(np.fft.rfft(padded[i * hop : i * hop + n_fft] * window))
        for i in range(len(x) // hop + 1)
    ]
    fb = librosa.filters.mel(
        sr=48000,
        n_fft=n_fft,
        n_mels=n_mels,
        fmin=0.0,
        fmax=24000.0,
        htk=False,
        norm="slaney",
        dtype=np.float64,
    )
    return np.log(np.maximum(fb @ np.array(frames).T, floor))


class TestAdversarial:
    """Test the least-squares adversarial losses."""

    def test_discriminator_optimum_is_zero(self):
        loss = adv_loss_d(constant_outputs(1.0, 33), constant_outputs(0.0, 33))
        assert float(loss) == 0.0

    def test_discriminator_worst_case_per_sub_discriminator(self):
        assert float(adv_loss_d(constant_outputs(0.0, 1), constant_outputs(1.0, 1))) == 2.0
        assert float(adv_loss_d(constant_outputs(0.0, 33), constant_outputs(1.0, 33))) == 66.0

    def test_all_zero_scores_cost_one_per_sub_discriminator(self):
        assert float(adv_loss_d(constant_outputs(0.0, 33), constant_outputs(0.0, 33))) == 33.0

    def test_generator_loss_values(self):
        assert float(adv_loss_g(constant_outputs(1.0, 33))) == 0.0
        assert float(adv_loss_g(constant_outputs(0.0, 1))) == 1.0
        assert float(adv_loss_g(constant_outputs(0.0, 33))) == 33.0

    def test_mean_over_score_map(self):
        scores = torch.tensor([[[0.0, 1.0, 1.0, 1.0]]])
        loss = adv_loss_g([DiscriminatorOutput(scores, [])])
        assert float(loss) == pytest.approx(0.25)

    def test_misaligned_outputs_rejected(self):
        with pytest.raises(ValidationError):
            adv_loss_d(constant_outputs(1.0, 3), constant_outputs(0.0, 2))
        with pytest.raises(ValidationError):
            adv_loss_d(constant_outputs(1.0, 1), constant_outputs(0.0, 1, shape=(2, 1, 5)))


class TestMelLoss:
    """Test the multi-scale mel reconstruction loss."""

    @pytest.fixture
    def bank(self):
        return MelScaleBank()

    def test_identical_inputs_give_zero(self, bank):
        x = torch.from_numpy(np.random.default_rng(0).normal(scale=0.1, size=(2, 4096)))
        assert float(multiscale_mel_loss(x, x.clone(), bank)) == 0.0

    def test_silence_gives_zero(self, bank):
        silence = torch.zeros(1, 1, 4096, dtype=torch.float64)
        assert float(multiscale_mel_loss(silence, silence, bank)) == 0.0

    def test_one_term_per_scale(self, bank):
        x = torch.zeros(1, 4096, dtype=torch.float64)
        assert len(multiscale_mel_terms(x, x, bank)) == 7

    def test_matches_frame_by_frame_reference(self, bank):
        rng = np.random.default_rng(1)
        x = rng.normal(scale=0.1, size=4096)
        x_hat = x + rng.normal(scale=0.05, size=4096)
        expected = 0.0
        for n_mels, window in zip(bank.n_mels, bank.window_lengths):
            ref = reference_log_mel(x, window, n_mels, bank.log_floor)
            gen = reference_log_mel(x_hat, window, n_mels, bank.log_floor)
            expected += np.mean(np.abs(ref - gen))
        got = multiscale_mel_loss(
            Waveform(samples=x, sample_rate=48000),
            Waveform(samples=x_hat, sample_rate=48000),
            bank,
        )
        assert float(got) == pytest.approx(expected, rel=1e-5)

    def test_each_term_is_its_own_single_scale_loss(self, bank):
        rng = np.random.default_rng(3)
        x = rng.normal(scale=0.1, size=4096)
        x_hat = x + rng.normal(scale=0.05, size=4096)
        ref = Waveform(samples=x, sample_rate=48000)
        gen = Waveform(samples=x_hat, sample_rate=48000)
        terms = multiscale_mel_terms(ref, gen, bank)

        for term, n_mels, window in zip(terms, bank.n_mels, bank.window_lengths):
            single = MelScaleBank(n_mels=[n_mels], window_lengths=[window])
            assert float(term) == pytest.approx(float(multiscale_mel_loss(ref, gen, single)))
            expected = np.mean(
                np.abs(
                    reference_log_mel(x, window, n_mels, bank.log_floor)
                    - reference_log_mel(x_hat, window, n_mels, bank.log_floor)
                )
            )
            assert float(term) == pytest.approx(expected, rel=1e-5)
        total = float(multiscale_mel_loss(ref, gen, bank))
        assert sum(float(t) for t in terms) == pytest.approx(total, rel=1e-12)

    def test_gradient_flows_to_generated_audio(self, bank):
        rng = np.random.default_rng(2)
        x = torch.from_numpy(rng.normal(scale=0.1, size=(1, 4096)))
        x_hat = torch.from_numpy(rng.normal(scale=0.1, size=(1, 4096))).requires_grad_(True)
        multiscale_mel_loss(x, x_hat, bank).backward()
        assert torch.isfinite(x_hat.grad).all()
        assert x_hat.grad.abs().sum() > 0

    def test_shape_mismatch_rejected(self, bank):
        with pytest.raises(ValidationError):
            multiscale_mel_loss(torch.zeros(1, 4096), torch.zeros(1, 4000), bank)

    def test_sample_rate_mismatch_rejected(self, bank):
        w = Waveform(samples=np.zeros(4096), sample_rate=16000)
        with pytest.raises(ValidationError):
            multiscale_mel_loss(w, w, bank)


class TestFeatureMatching:
    """Test the feature-matching loss."""

    def test_single_layer(self):
        loss = feature_matching_loss([featured([1.0, 2.0, 3.0])], [featured([0.0, 2.0, 3.0])])
        assert float(loss) == pytest.approx(1 / 3)

    def test_layers_are_averaged(self):
        real = featured([1.0, 2.0, 3.0], [0.0, 0.0])
        fake = featured([0.0, 2.0, 3.0], [1.0, 3.0])
        assert float(feature_matching_loss([real], [fake])) == pytest.approx((1 / 3 + 2.0) / 2)

    def test_sub_discriminators_are_summed(self):
        real = [featured([1.0]), featured([1.0])]
        fake = [featured([0.0]), featured([3.0])]
        assert float(feature_matching_loss(real, fake)) == pytest.approx(3.0)

    def test_real_features_receive_no_gradient(self):
        real_layer = torch.tensor([1.0, 2.0], requires_grad=True)
        fake_layer = torch.tensor([0.0, 0.0], requires_grad=True)
        real = DiscriminatorOutput(torch.zeros(1, 1, 2), [real_layer])
        fake = DiscriminatorOutput(torch.zeros(1, 1, 2), [fake_layer])
        feature_matching_loss([real], [fake]).backward()
        assert real_layer.grad is None
        assert fake_layer.grad is not None

    def test_misaligned_layers_rejected(self):
        with pytest.raises(ValidationError):
            feature_matching_loss([featured([1.0], [2.0])], [featured([1.0])])
        with pytest.raises(ValidationError):
            feature_matching_loss([featured([1.0])], [])


class TestCombinedObjectives:
    """Test the weighted generator and discriminator objectives."""

    def test_default_weights(self):
        assert generator_loss(1.0, 1.0, 1.0, LossWeights()) == pytest.approx(9.5)

    def test_zero_weights_leave_adversarial_term(self):
        weights = LossWeights(lambda_m=0.0, lambda_f=0.0)
        assert generator_loss(2.5, 10.0, 10.0, weights) == pytest.approx(2.5)

    def test_discriminator_objective_is_the_adversarial_loss(self):
        assert discriminator_loss(4.25) == 4.25

    def test_negative_weights_rejected(self):
        with pytest.raises(ValueError):
            LossWeights(lambda_m=-1.0)

    def test_full_generator_objective_matches_finite_differences(self, micro_config):
        torch.manual_seed(0)
        generator = Generator(micro_config.generator).double()
        suite = DiscriminatorSuite(micro_config.discriminators).double().eval()
        suite.requires_grad_(False)
        mel = torch.randn(1, micro_config.generator.n_mels, 64, dtype=torch.float64)
        target = 0.1 * torch.randn(1, 1, 4096, dtype=torch.float64)
        with torch.no_grad():
            real = suite(target)

        def objective():
            y_hat = generator(mel)[..., : target.shape[-1]]
            fake = suite(y_hat)
            return generator_loss(
                adv_loss_g(fake),
                multiscale_mel_loss(target, y_hat, micro_config.mel_bank),
                feature_matching_loss(real, fake),
                micro_config.loss,
            )

        assert sampled_gradient_agreement(generator, objective, num_samples=100) >= 0.99
