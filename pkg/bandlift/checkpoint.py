"""
Checkpoint container.

A checkpoint is a single ``torch.save`` file holding the resolved experiment config, its
digest, the generator weights, the discriminator weights under one namespace per family,
both optimizer states and the loop position. Generator-only exports leave the training
sections out.
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, Optional

import torch
from torch import nn

from bandlift.config import experiment_from_dict
from bandlift.discriminators import DiscriminatorSuite
from bandlift.errors import BandLiftError, CheckpointError
from bandlift.generator import Generator, count_parameters
from bandlift.models import ExperimentConfig

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "bandlift-checkpoint"
CHECKPOINT_VERSION = 1


def build_models(config: ExperimentConfig) -> tuple[Generator, DiscriminatorSuite]:
    """Fresh generator and discriminator suite for an experiment config."""
    generator = Generator(config.generator)
    discriminators = DiscriminatorSuite(config.discriminators)
    logger.info(
        f"Built generator ({count_parameters(generator):,} parameters) and "
        f"{config.discriminators.num_sub_discriminators} sub-discriminators "
        f"({count_parameters(discriminators):,} parameters)"
    )
    return generator, discriminators


def save_checkpoint(
    path: Path,
    config: ExperimentConfig,
    generator: Generator,
    discriminators: Optional[DiscriminatorSuite] = None,
    optimizers: Optional[dict[str, torch.optim.Optimizer]] = None,
    step: int = 0,
    epoch: int = 0,
    batch_in_epoch: int = 0,
) -> Path:
    """
    Write a checkpoint atomically.

    Args:
        path: Output file
        config: Experiment config the models were built from
        generator: Generator
        discriminators: Discriminator suite (omitted for generator-only exports)
        optimizers: {"generator": ..., "discriminator": ...}
        step: Completed training steps
        epoch: Current epoch
        batch_in_epoch: Batches of the current epoch already consumed

    Returns:
        Path written
    """
    payload: dict[str, Any] = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": config.model_dump_json(),
        "config_digest": config.digest(),
        "generator": generator.state_dict(),
        "step": step,
        "epoch": epoch,
        "batch_in_epoch": batch_in_epoch,
        "rng": {"torch": torch.get_rng_state()},
    }
    if discriminators is not None:
        payload["discriminators"] = {
            name: family.state_dict() if family is not None else {}
            for name, family in discriminators.families().items()
        }
    if optimizers is not None:
        payload["optimizers"] = {name: opt.state_dict() for name, opt in optimizers.items()}

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    os.replace(tmp, path)
    logger.info(f"Saved checkpoint at step {step} to {path}")
    return path


def save_generator(path: Path, config: ExperimentConfig, generator: Generator) -> Path:
    """Generator-only checkpoint for inference."""
    return save_checkpoint(path, config, generator)


def read_checkpoint(path: Path) -> dict[str, Any]:
    """
    Load and sanity-check a checkpoint file.

    Args:
        path: Checkpoint file

    Returns:
        The raw payload dictionary
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as e:
        raise CheckpointError(
            f"Cannot read checkpoint {path}: {e}",
            user_message=f"{path.name} is not a readable checkpoint",
        ) from e
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a BandLift checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path} has container version {payload.get('version')}, "
            f"expected {CHECKPOINT_VERSION}"
        )
    return payload


def checkpoint_config(payload: dict[str, Any]) -> ExperimentConfig:
    """The experiment config stored in a checkpoint."""
    try:
        return experiment_from_dict(json.loads(payload["config"]))
    except (KeyError, json.JSONDecodeError, BandLiftError) as e:
        raise CheckpointError(f"Checkpoint carries no valid config: {e}") from e


def load_module_state(module: nn.Module, state: dict[str, Any], namespace: str) -> None:
    """
    Load a state dict after checking every name and shape against the module.

    Args:
        module: Freshly built module
        state: Saved state dict
        namespace: Name used in error messages
    """
    expected = module.state_dict()
    problems = []
    for name in sorted(set(expected) - set(state)):
        problems.append(f"missing {namespace}.{name}")
    for name in sorted(set(state) - set(expected)):
        problems.append(f"unexpected {namespace}.{name}")
    for name in sorted(set(expected) & set(state)):
        if tuple(expected[name].shape) != tuple(state[name].shape):
            problems.append(
                f"{namespace}.{name}: shape {tuple(state[name].shape)} != "
                f"{tuple(expected[name].shape)}"
            )
    if problems:
        shown = "; ".join(problems[:10])
        more = f" (+{len(problems) - 10} more)" if len(problems) > 10 else ""
        raise CheckpointError(
            f"Checkpoint does not match the configured model: {shown}{more}",
            user_message="The checkpoint was produced by a different model configuration",
        )
    module.load_state_dict(state)


def load_discriminators(
    discriminators: DiscriminatorSuite, payload: dict[str, Any]
) -> None:
    saved = payload.get("discriminators")
    if saved is None:
        raise CheckpointError("Checkpoint holds no discriminator weights")
    for name, family in discriminators.families().items():
        if family is not None:
            load_module_state(family, saved.get(name, {}), name)


def load_generator(path: Path, device: str = "cpu") -> tuple[Generator, ExperimentConfig]:
    """
    Rebuild the generator stored in a checkpoint.

    Args:
        path: Checkpoint file
        device: Torch device for the returned module

    Returns:
        (generator in eval mode, experiment config)
    """
    payload = read_checkpoint(path)
    config = checkpoint_config(payload)
    generator = Generator(config.generator)
    load_module_state(generator, payload["generator"], "generator")
    generator.to(device).eval()
    logger.info(f"Loaded generator from {path} (step {payload.get('step', 0)})")
    return generator, config
