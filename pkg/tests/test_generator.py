"""Tests for the mel-to-waveform generator."""

import numpy as np
import pytest
import torch

from bandlift.config import load_preset
from bandlift.errors import ValidationError
from bandlift.generator import (
    DilatedFSMN,
    EncoderBlock,
    Generator,
    MultiReceptiveField,
    count_parameters,
    generate,
)
from bandlift.models import GeneratorConfig, MelConfig, MelSpectrogram
from tests.gradcheck import sampled_gradient_agreement


def tiny_config(**overrides) -> GeneratorConfig:
    """One block, embed 8, four mel bands, strides [2, 2]."""
    settings = dict(
        n_blocks=1,
        embed_dim=8,
        n_mels=4,
        attention_dim=4,
        local_attention_window=4,
        fsmn_memory=2,
        fsmn_dilation_schedule=[1],
        token_conv_kernel=3,
        decoder_channels=8,
        upsample_kernels=[4, 4],
        upsample_strides=[2, 2],
        mrf_kernels=[3],
        mrf_dilations=[[[1, 1]]],
    )
    settings.update(overrides)
    return GeneratorConfig(**settings)


class TestInputProjection:
    """Test the mel-to-latent projection."""

    @pytest.fixture
    def generator(self):
        torch.manual_seed(0)
        return Generator(GeneratorConfig(n_blocks=0, decoder_channels=32))

    def test_zero_input_zero_bias_gives_zero_latent(self, generator):
        with torch.no_grad():
            generator.input_projection.bias.zero_()
        z = generator.project_input(torch.zeros(1, 80, 12))
        assert torch.count_nonzero(z) == 0

    def test_latent_shape(self, generator):
        z = generator.project_input(torch.randn(1, 80, 100))
        assert z.shape == (1, 100, 512)

    def test_linear_in_the_input(self, generator):
        mel = torch.randn(1, 80, 9, dtype=torch.float64)
        generator.double()
        bias = generator.input_projection.bias
        once = generator.project_input(mel) - bias
        twice = generator.project_input(2 * mel) - bias
        torch.testing.assert_close(twice, 2 * once)

    def test_wrong_band_count_rejected(self, generator):
        with pytest.raises(ValidationError):
            generator.project_input(torch.zeros(1, 40, 10))


class TestEncoderBlocks:
    """Test the attention + FSMN blocks."""

    def test_zero_initialized_block_is_identity(self):
        torch.manual_seed(0)
        block = EncoderBlock(tiny_config(), dilation=1)
        block.zero_init_updates()
        z = torch.randn(1, 7, 8)
        assert torch.equal(block(z), z)

    def test_shape_preserved(self):
        torch.manual_seed(0)
        block = EncoderBlock(tiny_config(), dilation=2)
        assert block(torch.randn(2, 7, 8)).shape == (2, 7, 8)

    def test_fsmn_reach_is_memory_times_dilation(self):
        torch.manual_seed(0)
        fsmn = DilatedFSMN(tiny_config(fsmn_memory=2), dilation=3).double()
        z = torch.randn(1, 32, 8, dtype=torch.float64)
        t = 15
        perturbed = z.clone()
        perturbed[0, t] += 1.0
        with torch.no_grad():
            diff = (fsmn(perturbed) - fsmn(z)).abs().sum(dim=-1)[0]
        changed = torch.nonzero(diff > 1e-12).flatten().tolist()
        assert min(changed) == t - 6
        assert max(changed) == t + 6

    def test_attention_free_block_keeps_reach_local(self):
        torch.manual_seed(0)
        block = EncoderBlock(tiny_config(fsmn_memory=2), dilation=1, attention=False)
        assert block.attention is None
        z = torch.randn(1, 20, 8)
        perturbed = z.clone()
        perturbed[0, 10] += 1.0
        with torch.no_grad():
            diff = (block(perturbed) - block(z)).abs().sum(dim=-1)[0]
        assert torch.all(diff[:8] == 0)
        assert torch.all(diff[13:] == 0)

    def test_encode_without_blocks_equals_projection(self):
        torch.manual_seed(0)
        generator = Generator(tiny_config(n_blocks=0))
        mel = torch.randn(1, 4, 6)
        assert torch.equal(generator.encode(mel), generator.project_input(mel))

    def test_full_scale_widths(self):
        torch.manual_seed(0)
        generator = Generator(GeneratorConfig(n_blocks=2, decoder_channels=32))
        with torch.no_grad():
            z = generator.encode(torch.randn(1, 80, 30))
        assert z.shape == (1, 30, 512)


class TestMultiReceptiveField:
    """Test MRF fusion."""

    def test_zero_initialized_branches_pass_input_through(self):
        torch.manual_seed(0)
        mrf = MultiReceptiveField(4, [3, 7, 11], [[[1, 1], [3, 1], [5, 1]]] * 3)
        mrf.zero_init()
        x = torch.randn(1, 4, 32)
        torch.testing.assert_close(mrf(x), x)

    def test_shape_preserved(self):
        mrf = MultiReceptiveField(4, [3, 7, 11], [[[1, 1], [3, 1], [5, 1]]] * 3)
        assert mrf(torch.randn(1, 4, 32)).shape == (1, 4, 32)

    def test_k3_branch_reach(self):
        torch.manual_seed(0)
        mrf = MultiReceptiveField(4, [3], [[[1, 1], [3, 1], [5, 1]]]).double()
        x = torch.randn(1, 4, 80, dtype=torch.float64)
        perturbed = x.clone()
        perturbed[0, :, 40] += 1.0
        with torch.no_grad():
            diff = (mrf(perturbed) - mrf(x)).abs().sum(dim=1)[0]
        changed = torch.nonzero(diff > 0).flatten()
        assert changed.min() >= 40 - 12
        assert changed.max() <= 40 + 12

    def test_even_kernels_rejected(self):
        with pytest.raises(ValidationError):
            MultiReceptiveField(4, [4], [[[1, 1]]])
        with pytest.raises(ValidationError):
            MultiReceptiveField(4, [3, 5], [[[1, 1]]])


class TestDecoder:
    """Test transposed-convolution decoding."""

    def test_output_length(self):
        torch.manual_seed(0)
        generator = Generator(GeneratorConfig(n_blocks=0, decoder_channels=32))
        with torch.no_grad():
            out = generator.decode(torch.randn(1, 10, 512))
        assert out.shape == (1, 1, 2560)

    def test_output_is_bounded(self):
        torch.manual_seed(0)
        generator = Generator(tiny_config())
        with torch.no_grad():
            out = generator.decode(100 * torch.randn(2, 16, 8))
        assert out.abs().max() <= 1.0

    def test_output_projection_sees_leaky_slope_0_1(self):
        torch.manual_seed(0)
        generator = Generator(tiny_config()).eval()
        captured = {}
        generator.mrfs[-1].register_forward_hook(
            lambda module, args, out: captured.__setitem__("mrf", out)
        )
        generator.conv_post.register_forward_pre_hook(
            lambda module, args: captured.__setitem__("post", args[0])
        )
        with torch.no_grad():
            generator.decode(torch.randn(1, 6, 8))
        assert (captured["mrf"] < 0).any()
        torch.testing.assert_close(
            captured["post"], torch.nn.functional.leaky_relu(captured["mrf"], 0.1)
        )

    def test_decoder_gradient_matches_finite_differences(self):
        torch.manual_seed(0)
        generator = Generator(tiny_config()).double()
        z = torch.randn(1, 6, 8, dtype=torch.float64)
        weights = torch.randn(1, 1, 24, dtype=torch.float64)

        def loss():
            return (generator.decode(z) * weights).sum()

        assert sampled_gradient_agreement(generator, loss) >= 0.99


class TestGenerate:
    """Test end-to-end generation."""

    def check_length_law(self, config: GeneratorConfig, hop: int) -> None:
        torch.manual_seed(0)
        generator = Generator(config).eval()
        assert generator.cfg.hop_length == hop
        rng = np.random.default_rng(0)
        with torch.no_grad():
            for frames in rng.integers(1, 201, size=50):
                out = generator(torch.randn(1, config.n_mels, int(frames)))
                assert out.shape[-1] == frames * hop

    def test_length_law_on_micro_config(self, micro_config):
        self.check_length_law(micro_config.generator, 64)

    def test_length_law_on_full_scale_strides(self):
        full = load_preset("full").generator
        # narrow encoder and decoder, full-scale kernels and strides [8, 8, 2, 2]
        settings = full.model_dump()
        settings.update(n_blocks=2, embed_dim=64, attention_dim=16, decoder_channels=32)
        config = GeneratorConfig(**settings)
        assert config.strides == [8, 8, 2, 2]
        self.check_length_law(config, 256)

    def test_generate_waveform(self):
        torch.manual_seed(0)
        generator = Generator(tiny_config()).eval()
        config = MelConfig(n_fft=256, win_length=256, hop_length=4, n_mels=4)
        mel = MelSpectrogram(values=np.zeros((4, 25)), config=config)
        wav = generate(generator, mel)
        assert wav.sample_rate == 48000
        assert wav.num_samples == 100

    def test_generate_is_deterministic(self, micro_config):
        torch.manual_seed(0)
        generator = Generator(micro_config.generator).eval()
        mel = MelSpectrogram(
            values=np.random.default_rng(0).normal(size=(20, 12)) - 3.0,
            config=micro_config.mel,
        )
        assert np.array_equal(generate(generator, mel).samples, generate(generator, mel).samples)

    def test_end_to_end_gradient_matches_finite_differences(self):
        torch.manual_seed(0)
        generator = Generator(tiny_config()).double()
        mel = torch.randn(1, 4, 6, dtype=torch.float64)
        weights = torch.randn(1, 1, 24, dtype=torch.float64)

        def loss():
            return (generator(mel) * weights).sum()

        assert sampled_gradient_agreement(generator, loss) >= 0.99

    def test_every_parameter_receives_a_gradient(self, micro_config):
        torch.manual_seed(0)
        generator = Generator(micro_config.generator)
        generator(torch.randn(1, 20, 16)).pow(2).sum().backward()
        for name, p in generator.named_parameters():
            assert p.grad is not None, name
            assert torch.isfinite(p.grad).all(), name

    def test_remove_weight_norm_keeps_output(self):
        torch.manual_seed(0)
        generator = Generator(tiny_config()).eval()
        mel = torch.randn(1, 4, 5)
        with torch.no_grad():
            before = generator(mel)
            generator.remove_weight_norm()
            after = generator(mel)
        torch.testing.assert_close(before, after, rtol=1e-5, atol=1e-6)

    def test_parameter_count(self):
        assert count_parameters(Generator(tiny_config())) > 0
