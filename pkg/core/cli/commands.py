import dataclasses
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..autodiff.tensor import get_default_dtype, no_grad
from ..encoder.inversion_encoder import EncoderMode
from ..errors import ConfigError
from ..evaluation.discriminative_score import discriminative_score
from ..evaluation.frechet import discriminator_features, frechet_proxy
from ..evaluation.image_encoder import conditional_iou, train_image_encoder
from ..evaluation.latent_probe import SaltationStats, inversion_gap, latent_interpolation_probe, latent_probe
from ..evaluation.reports import (AblationRecord, MetricRecord, write_ablation_report, write_metric_report,
                                  write_probe_distances)
from ..evaluation.shape_classifier import train_shape_classifier
from ..gan.generator import sample_latents
from ..render.volume_renderer import render_representation
from ..runtime import get_thread_cap
from ..training.config import SSLMode
from ..training.trainer import CGCTrainer, train
from ..world.cameras import orbit_poses, sample_pose
from ..world.dataset import make_dataset, reference_batch
from ..world.formats import atomic_write_bytes
from ..world.shapes import ShapeCategory
from .experiment_config import ExperimentConfig, MetricsConfig, load_experiment
from .exports import export_views, write_run_record
from .gradcheck_battery import TOLERANCE, known_ops, run_battery


logger = logging.getLogger(__name__)

SUITES = ("iou", "ds", "probe", "frechet", "all")
ABLATION_SCALE = 0.05
DONE_MARKER = "done.json"


# train

def apply_train_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    """Flat precedence: a flag given on the command line replaces the config value"""
    changes = {}
    if getattr(args, "ssl_mode", None):
        changes["ssl_mode"] = SSLMode(args.ssl_mode)
    if getattr(args, "encoder_mode", None):
        changes["encoder_mode"] = EncoderMode(args.encoder_mode)
    for name in ("cycle_depth", "seed", "total_steps", "warmup_steps"):
        value = getattr(args, name, None)
        if value is not None:
            changes[name] = value
    if changes:
        config = config.with_train(**changes)
    if getattr(args, "output_dir", None):
        config = dataclasses.replace(config, output_dir=args.output_dir)
    return config.check()


def cmd_train(args) -> int:
    config = apply_train_overrides(load_experiment(args.config), args)
    output_dir = Path(config.output_dir)
    write_run_record(output_dir, "train", config.config_hash, config.train.seed,
                     {"config": config.to_dict()})
    result = train(config.train, config.dataset, output_dir=output_dir, resume=args.resume,
                   show_progress=args.show_progress)
    logger.info(f"Run {config.config_hash} finished at step {result.step}; checkpoint {result.checkpoint_path}")
    return 0


# eval

@dataclass
class SuiteOutput:
    values: List[Tuple[str, float]]
    probes: List[SaltationStats]


def _held_out(trainer: CGCTrainer, count: int):
    """Dataset indices past the training range"""
    start = trainer.dataset.count
    return list(make_dataset(trainer.dataset, start=start, stop=start + count))


def suite_iou(trainer: CGCTrainer, metrics: MetricsConfig) -> List[Tuple[str, float]]:
    fitted = train_image_encoder(trainer.generator, trainer.settings, metrics.image_encoder_steps,
                                 seed=metrics.seed)
    score = conditional_iou(trainer.generator, fitted.encoder, _held_out(trainer, metrics.iou_test_count),
                            threshold=trainer.config.density_threshold)
    return [("conditional_iou", score)]


@lru_cache(maxsize=4)
def shape_classifier(resolution: int, steps: int, seed: int, sigma_max: float):
    """One trained classifier per settings and process; ablation cells share it"""
    return train_shape_classifier(resolution, steps, seed=seed, sigma_max=sigma_max)


def suite_ds(trainer: CGCTrainer, metrics: MetricsConfig, label: Optional[str] = None,
             B: Optional[int] = None) -> List[Tuple[str, float]]:
    if not trainer.generator.num_classes:
        raise ConfigError(["ds suite needs a label-conditioned generator (train.num_classes > 0)"])
    classifier = shape_classifier(trainer.config.resolution, metrics.classifier_steps, metrics.seed,
                                  trainer.config.sigma_max)
    values = [("classifier_accuracy", classifier.accuracy)]
    wanted = [ShapeCategory.parse(label)] if label else list(trainer.dataset.categories)
    for category in wanted:
        if category.label >= trainer.generator.num_classes:
            raise ConfigError([f"label '{category.value}' is outside the generator's "
                               f"{trainer.generator.num_classes} classes"])
        result = discriminative_score(trainer.generator, category.label, B or metrics.ds_B,
                                      classifier.classifier.predict, trainer.config.density_threshold,
                                      seed=metrics.seed)
        values += [(f"ds_C[{category.value}]", result.C), (f"ds_B[{category.value}]", result.B),
                   (f"ds_score[{category.value}]", result.score)]
    return values


def suite_probe(trainer: CGCTrainer, metrics: MetricsConfig,
                scales: Optional[Sequence[float]] = None) -> SuiteOutput:
    rng = np.random.default_rng(np.random.SeedSequence([metrics.seed, 0x9b0e]))
    bases = sample_latents(rng, metrics.probe_points, trainer.config.latent_dim, get_default_dtype())
    values, probes = [], []
    for scale in scales or metrics.probe_scales:
        runs = [latent_probe(trainer.generator, z, metrics.probe_perturbations, scale,
                             metrics.validity_threshold, trainer.config.density_threshold,
                             seed=metrics.seed + i) for i, z in enumerate(bases)]
        probes.extend(runs)
        values += [(f"saltation_mean@{scale:g}", float(np.mean([p.mean for p in runs]))),
                   (f"saltation_max@{scale:g}", float(np.max([p.max for p in runs]))),
                   (f"valid_fraction@{scale:g}", float(np.mean([p.valid_fraction for p in runs])))]
    path = latent_interpolation_probe(trainer.generator, bases[0], bases[-1], metrics.interpolation_steps)
    values.append(("interpolation_peak_to_mean", path.peak_to_mean))
    values.append(("inversion_gap", inversion_gap(trainer.generator, trainer.encoder,
                                                  metrics.inversion_samples, seed=metrics.seed)))
    return SuiteOutput(values=values, probes=probes)


def suite_frechet(trainer: CGCTrainer, metrics: MetricsConfig) -> List[Tuple[str, float]]:
    count = metrics.frechet_samples
    rng = np.random.default_rng(np.random.SeedSequence([metrics.seed, 0xf1d]))
    real, _ = reference_batch(trainer.dataset, range(count), trainer.settings)
    z = sample_latents(rng, count, trainer.config.latent_dim, get_default_dtype())
    labels = rng.integers(trainer.config.num_classes, size=count) if trainer.config.num_classes else None
    poses = [sample_pose(int(rng.integers(2 ** 63))) for _ in range(count)]
    with no_grad():
        fake = render_representation(trainer.generator(z, labels), poses, trainer.settings)
    features_real = discriminator_features(trainer.discriminator, real.numpy()[..., :3])
    features_fake = discriminator_features(trainer.discriminator, fake.numpy()[..., :3])
    return [("frechet_proxy", frechet_proxy(features_real, features_fake))]


def parse_scales(raw: Optional[str]) -> Optional[List[float]]:
    if not raw:
        return None
    try:
        return [float(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise ConfigError([f"--scales must be comma-separated numbers, got '{raw}'"]) from None


def cmd_eval(args) -> int:
    if args.suite not in SUITES:
        raise ConfigError([f"--suite must be one of {', '.join(SUITES)}, got '{args.suite}'"])
    checkpoint = Path(args.checkpoint)
    if not checkpoint.exists():
        raise FileNotFoundError(f"Checkpoint not found: {checkpoint}")
    metrics = load_experiment(args.config).metrics if args.config else MetricsConfig()
    problems = metrics.validate()
    if problems:
        raise ConfigError(problems)

    trainer = CGCTrainer.from_checkpoint(checkpoint)
    experiment = ExperimentConfig(train=trainer.config, dataset=trainer.dataset, metrics=metrics,
                                  seeds=[trainer.config.seed])
    out_dir = Path(args.output_dir) if args.output_dir else checkpoint.parent / f"eval_{args.suite}"
    write_run_record(out_dir, "eval", experiment.config_hash, trainer.config.seed,
                     {"checkpoint": str(checkpoint), "suite": args.suite, "step": trainer.step})

    suites = ["iou", "ds", "probe", "frechet"] if args.suite == "all" else [args.suite]
    values: List[Tuple[str, float]] = []
    for suite in suites:
        logger.info(f"Running {suite} suite on {checkpoint}")
        if suite == "iou":
            values += suite_iou(trainer, metrics)
        elif suite == "ds":
            values += suite_ds(trainer, metrics, args.label, args.B)
        elif suite == "probe":
            output = suite_probe(trainer, metrics, parse_scales(args.scales))
            values += output.values
            write_probe_distances(out_dir / "probe_distances.csv", output.probes)
        else:
            values += suite_frechet(trainer, metrics)

    records = [MetricRecord(name, experiment.config_hash, trainer.config.seed, value) for name, value in values]
    write_metric_report(out_dir / "metrics.csv", records)
    for record in records:
        print(",".join(record.cells()))
    return 0


# ablate

@dataclass
class AblationCell:
    axis: str
    variant: str
    seed: int
    config: ExperimentConfig

    @property
    def key(self) -> str:
        return self.config.config_hash


def ablation_grid(config: ExperimentConfig) -> List[AblationCell]:
    """encoder_mode x 3, ssl_mode x 4 and cycle_depth x 2, each over every seed"""
    axes = [("encoder_mode", "encoder_mode", list(EncoderMode)),
            ("ssl_mode", "ssl_mode", [SSLMode.NONE, SSLMode.LAPLACIAN, SSLMode.LOCAL_SEARCH, SSLMode.CGC]),
            ("cycle_depth", "cycle_depth", [1, 2])]
    cells = []
    for axis, field_name, variants in axes:
        for variant in variants:
            for seed in config.seeds:
                cell_config = dataclasses.replace(config.with_train(**{field_name: variant, "seed": seed}),
                                                  seeds=[seed])
                name = variant.value if hasattr(variant, "value") else str(variant)
                cells.append(AblationCell(axis, name, seed, cell_config))
    return cells


def ablation_metrics(trainer: CGCTrainer, metrics: MetricsConfig) -> Dict[str, float]:
    last = trainer.history[-1]
    values = {"loss_gan_g": last.loss_gan_g, "loss_gan_d": last.loss_gan_d,
              "loss_z": last.loss_z, "loss_r": last.loss_r}
    single_scale = dataclasses.replace(metrics, probe_scales=[ABLATION_SCALE])
    values.update({name: value for name, value in suite_probe(trainer, single_scale).values
                   if name in (f"saltation_mean@{ABLATION_SCALE:g}", "inversion_gap")})
    values.update(suite_iou(trainer, metrics))
    if trainer.generator.num_classes:
        values.update(suite_ds(trainer, metrics))
    values.update(suite_frechet(trainer, metrics))
    if trainer.config.cycle_depth == 2:
        values["z_cycle_gap"] = last.z_cycle_gap
    return values


def run_ablation_cell(config_data: Dict, cell_dir: str) -> Dict[str, float]:
    """Train and score one grid cell; top-level so worker processes can run it"""
    config = ExperimentConfig.from_dict(config_data)
    cell_dir = Path(cell_dir)
    marker = cell_dir / DONE_MARKER
    if marker.exists():
        return json.loads(marker.read_text())["metrics"]
    write_run_record(cell_dir, "ablate-cell", config.config_hash, config.train.seed)
    trainer = CGCTrainer(config.train, config.dataset, output_dir=cell_dir)
    trainer.train()
    values = ablation_metrics(trainer, config.metrics)
    payload = {"config_hash": config.config_hash, "metrics": values}
    atomic_write_bytes(marker, (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode("utf-8"))
    return values


def cmd_ablate(args) -> int:
    config = load_experiment(args.config)
    if args.output_dir:
        config = dataclasses.replace(config, output_dir=args.output_dir)
    output_dir = Path(config.output_dir)
    write_run_record(output_dir, "ablate", config.config_hash, None, {"seeds": config.seeds})

    cells = ablation_grid(config)
    unique: Dict[str, AblationCell] = {}
    for cell in cells:
        unique.setdefault(cell.key, cell)
    pending = [key for key in unique if not (output_dir / "cells" / key / DONE_MARKER).exists()]
    logger.info(f"Ablation grid: {len(cells)} cells, {len(unique)} distinct runs, "
                f"{len(unique) - len(pending)} already complete")

    workers = max(1, min(args.workers, get_thread_cap(default=args.workers)))
    jobs = {key: (unique[key].config.to_dict(), str(output_dir / "cells" / key)) for key in unique}
    results: Dict[str, Dict[str, float]] = {}
    if workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {key: pool.submit(run_ablation_cell, *jobs[key]) for key in pending}
            for key, future in futures.items():
                results[key] = future.result()
    for key in unique:
        if key not in results:
            results[key] = run_ablation_cell(*jobs[key])

    records = []
    for cell in cells:
        for metric, value in sorted(results[cell.key].items()):
            records.append(AblationRecord(cell.axis, cell.variant, cell.seed, metric, value))
    write_ablation_report(output_dir / "ablation.csv", records)
    return 0


# render

def latent_source(args, latent_dim: int) -> np.ndarray:
    if args.z_file:
        z = np.loadtxt(args.z_file, dtype=np.float64).reshape(-1)
        if z.size != latent_dim:
            raise ConfigError([f"--z-file holds {z.size} values, the generator expects {latent_dim}"])
        return z
    rng = np.random.default_rng(args.z_seed)
    return sample_latents(rng, 1, latent_dim, np.float64)[0]


def cmd_render(args) -> int:
    checkpoint = Path(args.checkpoint)
    if not checkpoint.exists():
        raise FileNotFoundError(f"Checkpoint not found: {checkpoint}")
    trainer = CGCTrainer.from_checkpoint(checkpoint)
    out_dir = Path(args.output_dir) if args.output_dir else checkpoint.parent / "render"
    write_run_record(out_dir, "render", None, args.z_seed,
                     {"checkpoint": str(checkpoint), "views": args.views, "z_file": args.z_file})

    label = None
    if trainer.generator.num_classes:
        category = ShapeCategory.parse(args.label) if args.label else trainer.dataset.categories[0]
        label = category.label
    z = latent_source(args, trainer.config.latent_dim).astype(get_default_dtype())
    export = export_views(trainer.generator, z, orbit_poses(args.views, args.elevation), trainer.settings,
                          out_dir, label=label, threshold=trainer.config.density_threshold)
    print(f"{len(export.images)} views, {export.vertices} vertices, {export.faces} faces -> {out_dir}")
    return 0


# gradcheck

def cmd_gradcheck(args) -> int:
    if args.output_dir:
        write_run_record(args.output_dir, "gradcheck", None, 0, {"ops": args.op or []})
    unknown = sorted(set(args.op or []) - set(known_ops()))
    if unknown:
        raise ConfigError([f"--op: unknown op(s) {unknown}; choose from {known_ops()}"])
    results = run_battery(only=args.op)
    failed = [r for r in results if not r.passed]
    if args.json:
        print(json.dumps({"tolerance": TOLERANCE, "passed": not failed,
                          "results": [r.to_dict() for r in results]}, indent=2))
    else:
        for r in results:
            print(f"{r.name:<28} {r.error:.3e} {'ok' if r.passed else 'FAIL'}")
        print(f"{len(results) - len(failed)}/{len(results)} checks within {TOLERANCE:.0e}")
    return 1 if failed else 0
