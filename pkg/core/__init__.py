"""
CGC Lab - Core Module

This is the main core module for the desk-scale 3D-GAN lab, providing access
to every submodule needed to train and evaluate a voxel-field generator with
a cyclic generation-inversion-generation constraint.

Submodules:
- autodiff: numpy reverse-mode autodiff, layers and optimizer
- world: analytic shape families, cameras and file formats
- render: emission-absorption volume rendering
- gan: generator, discriminator and adversarial losses
- encoder: transformer + CNN inversion encoder
- training: the cycle, checkpoints, metrics CSV and trainer
- evaluation: IoU, discriminative score, latent probes, Frechet proxy
- cli: command-line surface
"""

__version__ = "0.1.0"

from .errors import (
    CGCLabError, ShapeMismatchError, GraphError, NonFiniteError,
    DivergenceError, CheckpointError, ConfigError
)

from .runtime import get_dtype, use_precision, get_thread_cap

from .autodiff import (
    Tensor, Parameter, Graph, backward, no_grad, grad_check, Module, Adam
)

from .world import (
    ShapeCategory, ShapeSpec, OccupancyGrid, CameraPose,
    sample_shape, voxelize, sample_pose, orbit_poses
)

from .world.dataset import DatasetConfig, DatasetSample, make_dataset, dump_dataset

from .render import RenderSettings, RenderedImage, render, render_representation

from .gan import Generator, Discriminator, extract_geometry

from .encoder import EncoderMode, InversionEncoder

from .training import (
    SSLMode, LossWeights, TrainConfig, CGCTrainer, TrainResult, train,
    compute_cycle, loss_Z, loss_R, save_checkpoint, load_checkpoint
)

from .evaluation import (
    iou_3d, conditional_iou, train_image_encoder, train_shape_classifier,
    discriminative_score, latent_probe, frechet_proxy
)

from .cli import ExperimentConfig, main

__all__ = [
    # Errors and runtime
    'CGCLabError', 'ShapeMismatchError', 'GraphError', 'NonFiniteError',
    'DivergenceError', 'CheckpointError', 'ConfigError',
    'get_dtype', 'use_precision', 'get_thread_cap',

    # Autodiff
    'Tensor', 'Parameter', 'Graph', 'backward', 'no_grad', 'grad_check', 'Module', 'Adam',

    # Synthetic world
    'ShapeCategory', 'ShapeSpec', 'OccupancyGrid', 'CameraPose',
    'sample_shape', 'voxelize', 'sample_pose', 'orbit_poses',
    'DatasetConfig', 'DatasetSample', 'make_dataset', 'dump_dataset',

    # Rendering and models
    'RenderSettings', 'RenderedImage', 'render', 'render_representation',
    'Generator', 'Discriminator', 'extract_geometry',
    'EncoderMode', 'InversionEncoder',

    # Training
    'SSLMode', 'LossWeights', 'TrainConfig', 'CGCTrainer', 'TrainResult', 'train',
    'compute_cycle', 'loss_Z', 'loss_R', 'save_checkpoint', 'load_checkpoint',

    # Evaluation
    'iou_3d', 'conditional_iou', 'train_image_encoder', 'train_shape_classifier',
    'discriminative_score', 'latent_probe', 'frechet_proxy',

    # Command line
    'ExperimentConfig', 'main'
]
