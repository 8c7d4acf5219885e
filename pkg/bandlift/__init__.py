"""BandLift - speech super-resolution from 4-48 kHz input to 48 kHz output."""

__version__ = "0.1.0"
__author__ = "BandLift Team"

from . import dsp, evaluator, exporter, generator, models, trainer

__all__ = ["dsp", "evaluator", "exporter", "generator", "models", "trainer"]
