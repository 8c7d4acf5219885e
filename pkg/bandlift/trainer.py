"""Alternating adversarial training loop."""

import logging
import math
from pathlib import Path
from typing import Optional

import torch

from bandlift.checkpoint import (
    build_models,
    load_discriminators,
    load_module_state,
    read_checkpoint,
    save_checkpoint,
)
from bandlift.config import Config, get_config, save_experiment_config
from bandlift.dataset import EpochBatcher, SuperResolutionDataset, load_batch
from bandlift.errors import CheckpointError, NumericalError
from bandlift.losses import (
    adv_loss_d,
    adv_loss_g,
    discriminator_loss,
    feature_matching_loss,
    generator_loss,
    multiscale_mel_loss,
)
from bandlift.models import ExperimentConfig, StepMetrics, TrainConfig

logger = logging.getLogger(__name__)


def lr_schedule(epoch: int, train: Optional[TrainConfig] = None) -> float:
    """Learning rate for an epoch: initial_lr * lr_decay ** epoch."""
    train = train or TrainConfig()
    if epoch < 0:
        raise ValueError(f"epoch must be non-negative, got {epoch}")
    return train.initial_lr * train.lr_decay**epoch


class Trainer:
    """
    Owns the generator, the discriminator suite and their optimizers.

    One step updates the discriminators on the detached generator output, then the
    generator against the just-updated discriminators.
    """

    def __init__(
        self,
        config: ExperimentConfig,
        dataset: SuperResolutionDataset,
        run_dir: Path,
        device: Optional[str] = None,
        app_config: Optional[Config] = None,
    ):
        """
        Initialize the trainer.

        Args:
            config: Experiment config
            dataset: Training data
            run_dir: Directory for checkpoints, metrics and the resolved config
            device: Torch device (defaults to the configured device)
            app_config: Runtime configuration (uses global if not provided)
        """
        self.config = config
        self.app_config = app_config or get_config()
        self.device = torch.device(device or self.app_config.resolve_device())
        self.dataset = dataset
        self.run_dir = Path(run_dir)
        self.checkpoint_dir = self.run_dir / "checkpoints"
        self.metrics_path = self.run_dir / "metrics.jsonl"

        train = config.train
        if self.app_config.deterministic:
            torch.use_deterministic_algorithms(True, warn_only=True)
        torch.manual_seed(train.seed)
        self.generator, self.discriminators = build_models(config)
        self.generator.to(self.device)
        self.discriminators.to(self.device)

        self.opt_g = torch.optim.AdamW(
            self.generator.parameters(),
            lr=train.initial_lr,
            betas=(train.beta1, train.beta2),
            weight_decay=train.weight_decay,
        )
        self.opt_d = torch.optim.AdamW(
            self.discriminators.parameters(),
            lr=train.initial_lr,
            betas=(train.beta1, train.beta2),
            weight_decay=train.weight_decay,
        )

        self.num_workers = (
            train.num_workers
            if self.app_config.num_workers is None
            else self.app_config.num_workers
        )
        self.batcher = EpochBatcher(len(dataset), train.batch_size, train.seed)
        self.step = 0
        self.epoch = 0
        self.batch_in_epoch = 0
        self.history: list[StepMetrics] = []
        self._last_saved: Optional[int] = None

    @property
    def optimizers(self) -> dict[str, torch.optim.Optimizer]:
        return {"generator": self.opt_g, "discriminator": self.opt_d}

    def set_lr(self, lr: float) -> None:
        for opt in (self.opt_g, self.opt_d):
            for group in opt.param_groups:
                group["lr"] = lr

    @property
    def lr(self) -> float:
        return float(self.opt_g.param_groups[0]["lr"])

    def _check_finite(self, **losses: torch.Tensor) -> None:
        values = {name: float(value.detach()) for name, value in losses.items()}
        if all(math.isfinite(v) for v in values.values()):
            return
        snapshot = {"step": self.step, "epoch": self.epoch, "lr": self.lr, **values}
        raise NumericalError(
            f"Non-finite loss at step {self.step}: {values}",
            snapshot=snapshot,
            user_message=f"Training diverged at step {self.step}",
        )

    def generator_losses(
        self, target: torch.Tensor, y_hat: torch.Tensor
    ) -> dict[str, torch.Tensor]:
        """
        Generator objective against the current discriminators.

        The discriminators run in eval mode with frozen weights, so neither their
        parameters nor their spectral-norm estimates move.

        Args:
            target: 48 kHz targets [B, 1, L]
            y_hat: Generator output aligned with the targets

        Returns:
            adv_g, fm, mel and total_g
        """
        was_training = self.discriminators.training
        self.discriminators.eval()
        self.discriminators.requires_grad_(False)
        try:
            with torch.no_grad():
                real = self.discriminators(target)
            fake = self.discriminators(y_hat)
        finally:
            self.discriminators.requires_grad_(True)
            self.discriminators.train(was_training)
        adv_g = adv_loss_g(fake)
        fm = feature_matching_loss(real, fake)
        mel_loss = multiscale_mel_loss(target, y_hat, self.config.mel_bank)
        total_g = generator_loss(adv_g, mel_loss, fm, self.config.loss)
        return {"adv_g": adv_g, "fm": fm, "mel": mel_loss, "total_g": total_g}

    def train_step(self, mel: torch.Tensor, target: torch.Tensor) -> StepMetrics:
        """
        One discriminator update followed by one generator update.

        Args:
            mel: Generator input [B, n_mels, T]
            target: 48 kHz targets [B, 1, L]

        Returns:
            Loss record of this step
        """
        mel = mel.to(self.device)
        target = target.to(self.device)
        segment = target.shape[-1]

        y_hat = self.generator(mel)[..., :segment]

        # discriminator step on the detached generator output
        real = self.discriminators(target)
        fake = self.discriminators(y_hat.detach())
        adv_d = adv_loss_d(real, fake)
        loss_d = discriminator_loss(adv_d)
        self._check_finite(adv_d=adv_d)
        self.opt_d.zero_grad()
        loss_d.backward()
        self.opt_d.step()

        # generator step against the just-updated discriminators
        g_losses = self.generator_losses(target, y_hat)
        adv_g, mel_loss, fm, total_g = (
            g_losses["adv_g"],
            g_losses["mel"],
            g_losses["fm"],
            g_losses["total_g"],
        )
        self._check_finite(adv_g=adv_g, mel=mel_loss, fm=fm, total_g=total_g)
        self.opt_g.zero_grad()
        total_g.backward()
        self.opt_g.step()

        self.step += 1
        return StepMetrics(
            step=self.step,
            epoch=self.epoch,
            adv_g=float(adv_g.detach()),
            adv_d=float(adv_d.detach()),
            mel=float(mel_loss.detach()),
            fm=float(fm.detach()),
            total_g=float(total_g.detach()),
            lr=self.lr,
        )

    def checkpoint_path(self, step: int) -> Path:
        return self.checkpoint_dir / f"step_{step:08d}.pt"

    def save(self, path: Optional[Path] = None) -> Path:
        path = save_checkpoint(
            path or self.checkpoint_path(self.step),
            self.config,
            self.generator,
            self.discriminators,
            self.optimizers,
            step=self.step,
            epoch=self.epoch,
            batch_in_epoch=self.batch_in_epoch,
        )
        self._last_saved = self.step
        return path

    def resume(self, path: Path) -> None:
        """
        Restore weights, optimizer states and loop position from a checkpoint.

        Args:
            path: Checkpoint written by a run with the same experiment config
        """
        payload = read_checkpoint(path)
        if payload.get("config_digest") != self.config.digest():
            raise CheckpointError(
                f"{path} was written with a different experiment config",
                user_message="The checkpoint does not match this experiment config",
                suggestions=["Resume with the config.resolved.yaml of the original run"],
            )
        if "optimizers" not in payload:
            raise CheckpointError(f"{path} holds no optimizer state and cannot be resumed")

        load_module_state(self.generator, payload["generator"], "generator")
        load_discriminators(self.discriminators, payload)
        self.opt_g.load_state_dict(payload["optimizers"]["generator"])
        self.opt_d.load_state_dict(payload["optimizers"]["discriminator"])
        self.step = int(payload["step"])
        self.epoch = int(payload["epoch"])
        self.batch_in_epoch = int(payload["batch_in_epoch"])
        torch.set_rng_state(payload["rng"]["torch"])
        self._last_saved = self.step
        logger.info(
            f"Resumed from {path}: step {self.step}, epoch {self.epoch}, "
            f"batch {self.batch_in_epoch}"
        )

    def _record(self, metrics: StepMetrics) -> None:
        self.history.append(metrics)
        with open(self.metrics_path, "a", encoding="utf-8") as f:
            f.write(metrics.model_dump_json() + "\n")
        if metrics.step % self.config.train.log_interval == 0:
            logger.info(
                f"(Step {metrics.step}) adv_g={metrics.adv_g:.4f} adv_d={metrics.adv_d:.4f} "
                f"mel={metrics.mel:.4f} fm={metrics.fm:.4f} total_g={metrics.total_g:.4f} "
                f"lr={metrics.lr:.3e}"
            )

    def train(self, total_steps: Optional[int] = None) -> list[Path]:
        """
        Run until `total_steps` steps have completed.

        Args:
            total_steps: Overrides config.train.total_steps

        Returns:
            Checkpoint paths written, in order
        """
        train = self.config.train
        total = train.total_steps if total_steps is None else total_steps
        self.run_dir.mkdir(parents=True, exist_ok=True)
        save_experiment_config(self.config, self.run_dir / "config.resolved.yaml")

        written: list[Path] = []
        if self._last_saved is None:
            written.append(self.save())

        self.generator.train()
        self.discriminators.train()
        while self.step < total:
            batches = self.batcher.batches(self.epoch)
            self.set_lr(lr_schedule(self.epoch, train))
            while self.batch_in_epoch < len(batches) and self.step < total:
                mel, target = load_batch(
                    self.dataset,
                    batches[self.batch_in_epoch],
                    self.epoch,
                    self.num_workers,
                )
                metrics = self.train_step(mel, target)
                self.batch_in_epoch += 1
                self._record(metrics)
                if self.step % train.checkpoint_interval == 0:
                    written.append(self.save())
            if self.batch_in_epoch >= len(batches):
                self.epoch += 1
                self.batch_in_epoch = 0
                logger.info(f"(Step {self.step}) Finished epoch {self.epoch}")

        if self._last_saved != self.step:
            written.append(self.save())
        logger.info(f"Finished training at step {self.step}")
        return written
