"""
Evaluation Submodule

This submodule scores trained generators:
- Exact voxel IoU and image-conditional IoU through a latent regressor
- 3D discriminative score with a voxel shape classifier
- Latent saltation, interpolation and inversion-gap probes
- Frechet proxy over discriminator features
- CSV reports for metrics, probes and ablations
"""

from .iou import IoUResult, iou_3d

from .image_encoder import ImageEncoder, ImageEncoderResult, train_image_encoder, conditional_iou

from .shape_classifier import ShapeClassifier, ClassifierResult, train_shape_classifier, cross_entropy

from .discriminative_score import DSResult, discriminative_score

from .latent_probe import (
    SaltationStats,
    InterpolationStats,
    latent_probe,
    latent_interpolation_probe,
    inversion_gap,
)

from .frechet import frechet_proxy, discriminator_features

from .reports import (
    MetricRecord,
    AblationRecord,
    write_metric_report,
    write_probe_distances,
    write_ablation_report,
    read_report,
)

__all__ = [
    # Geometry overlap
    'IoUResult',
    'iou_3d',
    'ImageEncoder',
    'ImageEncoderResult',
    'train_image_encoder',
    'conditional_iou',

    # Discriminative score
    'ShapeClassifier',
    'ClassifierResult',
    'train_shape_classifier',
    'cross_entropy',
    'DSResult',
    'discriminative_score',

    # Latent probes
    'SaltationStats',
    'InterpolationStats',
    'latent_probe',
    'latent_interpolation_probe',
    'inversion_gap',

    # Image quality
    'frechet_proxy',
    'discriminator_features',

    # Reports
    'MetricRecord',
    'AblationRecord',
    'write_metric_report',
    'write_probe_distances',
    'write_ablation_report',
    'read_report'
]
