import dataclasses
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from ..autodiff import ops
from ..autodiff.functional import TrilinearPlan
from ..autodiff.optim import Adam
from ..autodiff.tensor import Graph, Tensor, backward, no_grad
from ..encoder.inversion_encoder import InversionEncoder
from ..errors import DivergenceError, NonFiniteError
from ..gan.discriminator import Discriminator
from ..gan.generator import Generator, sample_latents
from ..gan.losses import gan_loss_d, gan_loss_g, r1_penalty
from ..render.volume_renderer import RenderSettings, render_representation, sampling_plan
from ..runtime import use_precision
from ..world.cameras import CameraPose, sample_pose
from ..world.dataset import DatasetConfig, reference_batch
from .checkpoint import Checkpoint, load_checkpoint, model_entries, pack_rng, restore_model, save_checkpoint, unpack_rng
from .config import SSLMode, TrainConfig
from .cycle import compute_cycle, cycle_loss, laplacian_loss, local_search_pair, loss_R, loss_Z, z_cycle_gap
from .metrics_log import MetricsLog, MetricsRow


@dataclass
class StepBatch:
    """Everything one alternation round consumes"""
    z: np.ndarray
    labels: Optional[np.ndarray]
    poses: List[CameraPose]
    real_rgb: np.ndarray
    real_labels: Optional[np.ndarray]
    rng: np.random.Generator
    plan: Optional[TrilinearPlan] = None    # ray samples of `poses` into the S^3 grid


@dataclass
class FakeBatch:
    """G(z) and its render, recorded on one graph per round"""
    graph: Graph
    r: Tensor
    rgb: Tensor


@dataclass
class Inversion:
    graph: Graph
    z_star: Tensor


@dataclass
class GeneratorStep:
    loss_gan_g: float
    loss_aux: float
    loss_r: float
    z_cycle_gap: float
    r: Tensor             # detached G(z), reused by the encoder step


@dataclass
class TrainResult:
    step: int
    history: List[MetricsRow]
    metrics_path: Optional[Path] = None
    checkpoint_path: Optional[Path] = None


def aligned_dataset(config: TrainConfig, dataset: Optional[DatasetConfig]) -> DatasetConfig:
    """Dataset whose render resolution matches the training config"""
    dataset = dataset or DatasetConfig(seed=config.seed)
    return dataclasses.replace(dataset, resolution=config.resolution, image_size=config.image_size,
                               samples_per_ray=config.samples_per_ray, sigma_max=config.sigma_max)


class CGCTrainer:
    """
    Alternating D / G / E optimization with the cyclic constraint.

    Steps before `warmup_steps` train G and D on the plain GAN losses while E
    learns L_Z; afterwards G also minimizes lambda * (auxiliary term).
    Every random draw comes from one PCG64 stream that is checkpointed.
    """

    def __init__(self, config: TrainConfig, dataset: Optional[DatasetConfig] = None,
                 output_dir=None, show_progress: bool = False):
        self.config = config.check()
        self.dtype = use_precision(config.precision)
        self.dataset = aligned_dataset(config, dataset)
        self.output_dir = Path(output_dir) if output_dir is not None else None
        self.show_progress = show_progress
        self.logger = logging.getLogger(__name__)

        g_seed, d_seed, e_seed = np.random.SeedSequence([config.seed, 0x6e1]).spawn(3)
        num_classes = config.num_classes
        self.generator = Generator(config.latent_dim, config.resolution, config.channels,
                                   np.random.default_rng(g_seed), num_classes=num_classes)
        self.discriminator = Discriminator(config.image_size, np.random.default_rng(d_seed),
                                           num_classes=num_classes)
        self.encoder = InversionEncoder(config.resolution, config.channels, config.latent_dim,
                                        np.random.default_rng(e_seed), patch_size=config.patch_size,
                                        token_dim=config.token_dim, mode=config.encoder_mode,
                                        gate_sharpness=config.gate_sharpness, rho_init=config.rho_init)

        betas = tuple(config.adam_betas)
        self.opt_g = Adam(self.generator.parameters(), config.lr_g, betas, config.adam_eps)
        self.opt_d = Adam(self.discriminator.parameters(), config.lr_d, betas, config.adam_eps)
        self.opt_e = Adam(self.encoder.parameters(), config.lr_e, tuple(config.encoder_betas), config.adam_eps)

        self.settings = RenderSettings(height=config.image_size, width=config.image_size,
                                       samples_per_ray=config.samples_per_ray)
        self.rng = np.random.Generator(np.random.PCG64(config.seed))
        self.step = 0
        self.history: List[MetricsRow] = []
        self._references: Dict[int, Tuple[np.ndarray, int]] = {}

    # bookkeeping

    def log_parameter_counts(self) -> None:
        self.logger.info(f"Generator parameters: {self.generator.parameter_count()}")
        self.logger.info(f"Discriminator parameters: {self.discriminator.parameter_count()}")
        self.logger.info(f"Encoder parameters: {self.encoder.parameter_count()} "
                         f"(mode={self.config.encoder_mode.value})")

    @property
    def metrics_path(self) -> Optional[Path]:
        return self.output_dir / "metrics.csv" if self.output_dir else None

    def checkpoint(self) -> Checkpoint:
        tensors = {}
        for model in (self.generator, self.discriminator, self.encoder):
            tensors.update(model_entries(model))
        return Checkpoint(
            step=self.step,
            config={"train": self.config.to_dict(), "dataset": self.dataset.to_dict()},
            tensors=tensors,
            rng_state=pack_rng(self.rng),
        )

    def save(self, path) -> Path:
        return save_checkpoint(path, self.checkpoint())

    def restore(self, checkpoint: Checkpoint) -> None:
        for model in (self.generator, self.discriminator, self.encoder):
            restore_model(model, checkpoint.tensors)
        self.rng = unpack_rng(checkpoint.rng_state)
        self.step = int(checkpoint.step)
        self.logger.info(f"Restored checkpoint at step {self.step}")

    @classmethod
    def from_checkpoint(cls, path, output_dir=None) -> "CGCTrainer":
        checkpoint = load_checkpoint(path)
        config = TrainConfig.from_dict(checkpoint.config["train"])
        dataset = DatasetConfig.from_dict(checkpoint.config["dataset"])
        trainer = cls(config, dataset, output_dir=output_dir)
        trainer.restore(checkpoint)
        return trainer

    # one alternation round

    def reference_images(self, indices: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
        """Reference RGB (N, H, W, 3) and labels for dataset indices; each index is rendered once"""
        missing = [index for index in dict.fromkeys(indices) if index not in self._references]
        if missing:
            images, labels = reference_batch(self.dataset, missing, self.settings)
            rgb = images.numpy()[..., :3].astype(self.dtype)
            for index, image, label in zip(missing, rgb, labels):
                self._references[index] = (image, int(label))
        rgb = np.stack([self._references[index][0] for index in indices])
        labels = np.array([self._references[index][1] for index in indices], dtype=np.int64)
        return rgb, labels

    def sample_batch(self, step: int) -> StepBatch:
        config = self.config
        rng = np.random.default_rng(int(self.rng.integers(2 ** 63)))
        z = sample_latents(rng, config.batch_size, config.latent_dim, self.dtype)
        labels = rng.integers(config.num_classes, size=config.batch_size) if config.num_classes else None
        poses = [sample_pose(int(rng.integers(2 ** 63))) for _ in range(config.batch_size)]

        first = step * config.batch_size
        indices = [(first + i) % self.dataset.count for i in range(config.batch_size)]
        real_rgb, real_labels = self.reference_images(indices)
        plan = sampling_plan(poses, self.settings, (config.resolution,) * 3)
        return StepBatch(z=z, labels=labels, poses=poses, real_rgb=real_rgb,
                         real_labels=real_labels if config.num_classes else None, rng=rng, plan=plan)

    def render_fakes(self, batch: StepBatch) -> FakeBatch:
        """G(z) and its render on a fresh graph that the generator step later extends"""
        graph = Graph()
        with graph:
            r = self.generator(batch.z, batch.labels)
            rgb = render_representation(r, batch.poses, self.settings, plan=batch.plan).rgb
        return FakeBatch(graph=graph, r=r, rgb=rgb)

    def invert(self, r: Tensor) -> Inversion:
        """E(r) on its own graph; the encoder step runs backward through it"""
        graph = Graph()
        with graph:
            z_star = self.encoder(r.detach())
        return Inversion(graph=graph, z_star=z_star)

    def r1_due(self, step: int) -> bool:
        return self.config.r1_every > 0 and self.config.r1_gamma > 0 and step % self.config.r1_every == 0

    def discriminator_step(self, batch: StepBatch, step: int, fakes: Optional[FakeBatch] = None) -> float:
        if fakes is None:
            with no_grad():
                fake_rgb = render_representation(self.generator(batch.z, batch.labels), batch.poses,
                                                 self.settings, plan=batch.plan).rgb.data
        else:
            fake_rgb = fakes.rgb.data
        with Graph():
            real_logits = self.discriminator(batch.real_rgb, batch.real_labels)
            fake_logits = self.discriminator(fake_rgb, batch.labels)
            loss = gan_loss_d(real_logits, fake_logits)
            total = loss
            if self.r1_due(step):
                r1 = r1_penalty(self.discriminator, batch.real_rgb, self.config.r1_gamma, batch.real_labels)
                # lazy regularization: scale by the interval
                total = total + ops.scale(r1.surrogate, float(self.config.r1_every))
                self.logger.debug(f"step {step + 1}: R1 penalty {r1.penalty:.6g}")
            backward(total, self.discriminator.parameters())
        self.opt_d.step()
        return float(loss.data)

    def generator_step(self, batch: StepBatch, warmup: bool, fakes: Optional[FakeBatch] = None,
                       z_star: Optional[Tensor] = None) -> GeneratorStep:
        """
        Update G on its GAN loss plus the auxiliary term of the configured mode.
        `fakes` and `z_star` reuse this round's G(z) render and E(G(z)).
        """
        config = self.config
        weights = config.loss_weights
        mode = SSLMode.NONE if warmup else config.ssl_mode
        depth = config.cycle_depth
        aux = None
        measured_r = None
        gap = 0.0

        if fakes is None:
            fakes = self.render_fakes(batch)
        r = fakes.r
        with fakes.graph:
            with self.discriminator.frozen():
                loss_gan = gan_loss_g(self.discriminator(fakes.rgb, batch.labels))

            if mode == SSLMode.CGC:
                record = compute_cycle(self.generator, self.encoder, batch.z, depth, batch.labels,
                                       r=r, z_star=z_star)
                aux = ops.scale(cycle_loss(record), weights.lambda_R)
                measured_r = float(loss_R(r, record.r_star).data)
                gap = z_cycle_gap(record)
            elif mode == SSLMode.LAPLACIAN:
                aux = ops.scale(laplacian_loss(r), weights.lambda_lap)
            elif mode == SSLMode.LOCAL_SEARCH:
                _, z_near = local_search_pair(batch.z, weights.sigma_ls, batch.rng)
                aux = ops.scale(loss_R(r, self.generator(z_near, batch.labels)), weights.lambda_R)

            if measured_r is None:
                with no_grad():
                    record = compute_cycle(self.generator, self.encoder, batch.z, depth, batch.labels,
                                           r=r.detach(), z_star=z_star)
                    measured_r = float(loss_R(record.r, record.r_star).data)
                    gap = z_cycle_gap(record)

            total = loss_gan if aux is None else loss_gan + aux
            backward(total, self.generator.parameters())
        self.opt_g.step()
        return GeneratorStep(loss_gan_g=float(loss_gan.data),
                             loss_aux=float(aux.data) if aux is not None else 0.0,
                             loss_r=measured_r, z_cycle_gap=gap, r=r.detach())

    def encoder_step(self, batch: StepBatch, r: Tensor, inversion: Optional[Inversion] = None) -> float:
        if inversion is None:
            inversion = self.invert(r)
        with inversion.graph:
            loss = loss_Z(batch.z, inversion.z_star)
            backward(loss, self.encoder.parameters())
        self.opt_e.step()
        return float(loss.data)

    def train_step(self, step: int) -> MetricsRow:
        """One D / G / E round for 0-based `step`; the row is labelled step + 1"""
        started = time.perf_counter()
        warmup = step < self.config.warmup_steps
        phase = "batch"
        try:
            batch = self.sample_batch(step)
            phase = "loss_gan_d"
            fakes = self.render_fakes(batch)
            loss_d = self.discriminator_step(batch, step, fakes)
            # E is updated after G so a depth-2 cycle still sees this round's encoder
            phase = "loss_z"
            inversion = self.invert(fakes.r)
            phase = "loss_gan_g"
            g = self.generator_step(batch, warmup, fakes, z_star=inversion.z_star)
            phase = "loss_z"
            loss_z = self.encoder_step(batch, g.r, inversion)
        except NonFiniteError as exc:
            self.logger.warning(f"Divergence at step {step + 1} in {phase}: {exc}")
            raise DivergenceError(step + 1, phase, str(exc)) from exc

        values = {"loss_gan_d": loss_d, "loss_gan_g": g.loss_gan_g, "loss_z": loss_z,
                  "loss_r": g.loss_r, "loss_aux": g.loss_aux}
        for name, value in values.items():
            if not np.isfinite(value):
                self.logger.warning(f"Divergence at step {step + 1}: {name}={value}")
                raise DivergenceError(step + 1, name)

        wall_ms = (time.perf_counter() - started) * 1000.0 if self.config.log_wall_time else 0.0
        return MetricsRow(
            step=step + 1,
            loss_gan_g=g.loss_gan_g,
            loss_gan_d=loss_d,
            loss_z=loss_z,
            loss_r=g.loss_r,
            loss_aux=g.loss_aux,
            rho=float(self.encoder.rho.data),
            wall_ms=wall_ms,
            z_cycle_gap=g.z_cycle_gap if self.config.cycle_depth == 2 else None,
        )

    # loops

    def run(self, until: int, log: Optional[MetricsLog] = None) -> List[MetricsRow]:
        """Advance from the current step to `until`, checkpointing on schedule"""
        rows = []
        steps = range(self.step, until)
        for step in tqdm(steps, disable=not self.show_progress, desc="train", leave=False):
            row = self.train_step(step)
            self.step = step + 1
            rows.append(row)
            self.history.append(row)
            if log is not None:
                log.append(row)
            if self.step % self.config.log_every == 0:
                self.logger.info(
                    f"step {self.step}: loss_gan_g={row.loss_gan_g:.4f} loss_gan_d={row.loss_gan_d:.4f} "
                    f"loss_z={row.loss_z:.4f} loss_r={row.loss_r:.4f} rho={row.rho:.4f}")
            if self.output_dir and self.step % self.config.checkpoint_every == 0:
                self.save(self.output_dir / "checkpoints" / f"step_{self.step:06d}.cgck")
        return rows

    def warmup_encoder(self, log: Optional[MetricsLog] = None) -> List[MetricsRow]:
        """Run the warm-up phase: GAN losses for G and D, L_Z for E"""
        return self.run(max(self.step, self.config.warmup_steps), log)

    def train(self, resume=None) -> TrainResult:
        log = None
        if self.output_dir is not None:
            log = MetricsLog(self.metrics_path, self.config.cycle_depth)
        if resume is not None:
            self.restore(load_checkpoint(resume))
            if log is not None:
                log.truncate(self.step)
        elif log is not None:
            log.start()

        self.log_parameter_counts()
        self.warmup_encoder(log)
        self.run(self.config.total_steps, log)

        checkpoint_path = None
        if self.output_dir is not None:
            checkpoint_path = self.save(self.output_dir / "final.cgck")
        self.logger.info(f"Training finished at step {self.step}")
        return TrainResult(step=self.step, history=list(self.history),
                           metrics_path=self.metrics_path, checkpoint_path=checkpoint_path)


def train(config: TrainConfig, dataset: Optional[DatasetConfig] = None, output_dir=None,
          resume=None, show_progress: bool = False) -> TrainResult:
    """Warm-up then alternating training; writes metrics.csv and checkpoints under output_dir"""
    trainer = CGCTrainer(config, dataset, output_dir=output_dir, show_progress=show_progress)
    return trainer.train(resume=resume)
