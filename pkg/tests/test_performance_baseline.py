"""Performance baseline tests for BandLift.

These tests establish time and memory baselines for the signal-processing, evaluation
and training paths at micro scale, so regressions show up before a full-size run.
"""

import os
import time

import numpy as np
import psutil
import pytest
import torch

from bandlift.cache import DegradationCache
from bandlift.checkpoint import build_models
from bandlift.dsp import eval_filter_spec, lowpass_downsample, mel_spectrogram, upsample_to_48k
from bandlift.evaluator import PassThroughResolver, SuperResolver, evaluate
from bandlift.generator import Generator
from bandlift.losses import multiscale_mel_loss
from bandlift.models import MelConfig, MelScaleBank
from tests.synthetic import harmonic_utterance, write_corpus


class PerformanceMonitor:
    """Helper class to monitor performance metrics."""

    def __init__(self):
        self.process = psutil.Process(os.getpid())
        self.start_time = None
        self.start_memory = None

    def start(self):
        """Start monitoring."""
        self.start_time = time.time()
        self.start_memory = self.process.memory_info().rss / 1024 / 1024  # MB

    def stop(self) -> dict[str, float]:
        """Stop monitoring and return metrics."""
        end_time = time.time()
        end_memory = self.process.memory_info().rss / 1024 / 1024  # MB

        return {
            "execution_time_seconds": end_time - self.start_time,
            "memory_usage_mb": end_memory,
            "memory_delta_mb": end_memory - self.start_memory,
        }


class TestPerformanceBaselines:
    """Establish performance baselines for BandLift operations."""

    @pytest.fixture
    def performance_monitor(self):
        """Provide performance monitoring."""
        return PerformanceMonitor()

    def test_feature_extraction_baseline(self, performance_monitor):
        """Mel extraction of ten seconds of 48 kHz audio."""
        wav = harmonic_utterance(10.0)

        performance_monitor.start()
        mel = mel_spectrogram(wav, MelConfig())
        metrics = performance_monitor.stop()

        assert mel.values.shape == (80, 480000 // 256 + 1)
        assert metrics["execution_time_seconds"] < 5.0

        print("\n📊 Mel extraction (10 s):")
        print(f"   ⏱️  Time: {metrics['execution_time_seconds']:.3f}s")
        print(f"   💾 Memory delta: {metrics['memory_delta_mb']:.1f}MB")

    def test_resampling_baseline(self, performance_monitor):
        """Evaluation degradation and re-upsampling at every benchmark rate."""
        wav = harmonic_utterance(5.0)

        performance_monitor.start()
        for rate in (4000, 8000, 16000, 24000):
            low = lowpass_downsample(wav, rate, eval_filter_spec(rate))
            assert upsample_to_48k(low).num_samples == wav.num_samples
        metrics = performance_monitor.stop()

        assert metrics["execution_time_seconds"] < 10.0

        print("\n📊 Degrade + upsample (4 rates × 5 s):")
        print(f"   ⏱️  Time: {metrics['execution_time_seconds']:.3f}s")

    def test_mel_loss_baseline(self, performance_monitor):
        """Forward and backward pass of the seven-scale mel loss."""
        bank = MelScaleBank()
        target = torch.randn(4, 16384) * 0.1
        generated = (torch.randn(4, 16384) * 0.1).requires_grad_(True)

        performance_monitor.start()
        multiscale_mel_loss(target, generated, bank).backward()
        metrics = performance_monitor.stop()

        assert torch.isfinite(generated.grad).all()
        assert metrics["execution_time_seconds"] < 10.0

        print("\n📊 Multi-scale mel loss (4 × 16384):")
        print(f"   ⏱️  Time: {metrics['execution_time_seconds']:.3f}s")

    def test_micro_inference_baseline(self, micro_config, performance_monitor):
        """Super-resolution of two seconds of 16 kHz audio with the micro generator."""
        torch.manual_seed(0)
        resolver = SuperResolver(Generator(micro_config.generator), micro_config)
        low = lowpass_downsample(harmonic_utterance(2.0), 16000, eval_filter_spec(16000))

        performance_monitor.start()
        out = resolver.resolve(low)
        metrics = performance_monitor.stop()

        real_time_factor = metrics["execution_time_seconds"] / 2.0
        assert out.num_samples == 96000
        assert real_time_factor < 5.0

        print("\n📊 Micro inference (2 s):")
        print(f"   ⏱️  Time: {metrics['execution_time_seconds']:.3f}s")
        print(f"   📈 Real-time factor: {real_time_factor:.2f}")

    def test_micro_training_step_baseline(self, micro_config, performance_monitor):
        """One forward/backward pass of generator and discriminators at micro scale."""
        torch.manual_seed(0)
        generator, discriminators = build_models(micro_config)
        mel = torch.randn(4, 20, 65)
        target = torch.randn(4, 1, 4096) * 0.1

        performance_monitor.start()
        y_hat = generator(mel)[..., :4096]
        outputs = discriminators(torch.cat([target, y_hat]))
        sum(out.score_map.mean() for out in outputs).backward()
        metrics = performance_monitor.stop()

        assert metrics["execution_time_seconds"] < 30.0

        print("\n📊 Micro training pass (batch 4):")
        print(f"   ⏱️  Time: {metrics['execution_time_seconds']:.3f}s")
        print(f"   💾 Memory: {metrics['memory_usage_mb']:.1f}MB")

    def test_evaluation_baseline(self, temp_dir, performance_monitor):
        """Unprocessed evaluation of a small corpus at four rates, cold then cached."""
        corpus = write_corpus(temp_dir / "corpus", count=4, seconds=1.0)
        cache = DegradationCache(cache_dir=temp_dir / "cache")

        performance_monitor.start()
        cold = evaluate(PassThroughResolver(), corpus, [4000, 8000, 16000, 24000], cache=cache)
        cold_metrics = performance_monitor.stop()

        performance_monitor.start()
        warm = evaluate(PassThroughResolver(), corpus, [4000, 8000, 16000, 24000], cache=cache)
        warm_metrics = performance_monitor.stop()
        cache.close()

        assert [r.mean_lsd for r in warm.rows] == pytest.approx([r.mean_lsd for r in cold.rows])
        assert cold_metrics["execution_time_seconds"] < 30.0

        print("\n📊 Evaluation (4 utterances × 4 rates):")
        print(f"   ⏱️  Cold: {cold_metrics['execution_time_seconds']:.3f}s")
        print(f"   ⏱️  Cached: {warm_metrics['execution_time_seconds']:.3f}s")


class TestPerformanceRegression:
    """Test for performance regressions."""

    def test_no_memory_leaks(self, temp_dir):
        """Repeated evaluations don't grow memory."""
        process = psutil.Process(os.getpid())
        corpus = write_corpus(temp_dir / "corpus", count=2, seconds=0.5)
        evaluate(PassThroughResolver(), corpus, [8000])

        baseline_memory = process.memory_info().rss / 1024 / 1024
        for _ in range(10):
            evaluate(PassThroughResolver(), corpus, [8000, 16000])
        final_memory = process.memory_info().rss / 1024 / 1024
        memory_growth = final_memory - baseline_memory

        assert memory_growth < 50, f"Memory grew by {memory_growth:.1f}MB (expected <50MB)"

        print("\n📊 Memory Leak Test:")
        print(f"   📊 Baseline: {baseline_memory:.1f}MB")
        print(f"   📊 Final: {final_memory:.1f}MB")
        print(f"   📈 Growth: {memory_growth:.1f}MB")

    def test_parallel_evaluation_matches_serial(self, temp_dir):
        """Worker threads change timing only."""
        corpus = write_corpus(temp_dir / "corpus", count=4, seconds=0.5)

        start_time = time.time()
        serial = evaluate(PassThroughResolver(), corpus, [8000], workers=1)
        serial_time = time.time() - start_time

        start_time = time.time()
        parallel = evaluate(PassThroughResolver(), corpus, [8000], workers=4)
        parallel_time = time.time() - start_time

        assert np.isclose(serial.rows[0].mean_lsd, parallel.rows[0].mean_lsd)

        print("\n📊 Evaluation workers (4 utterances):")
        print(f"   ⏱️  Serial: {serial_time:.3f}s")
        print(f"   ⏱️  4 workers: {parallel_time:.3f}s")
