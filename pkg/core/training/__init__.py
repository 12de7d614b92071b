"""
Training Submodule

This submodule runs the generator-encoder-generator training:
- Train configuration and ablation axes (SSL mode, encoder mode, cycle depth)
- Cycle record, L_Z / L_R, Laplacian and local-search alternatives
- Encoder warm-up and alternating D / G / E optimization
- Binary checkpoints and the per-step metrics CSV
"""

from .config import SSLMode, LossWeights, TrainConfig

from .cycle import (
    CycleRecord,
    compute_cycle,
    loss_Z,
    loss_R,
    cycle_loss,
    z_cycle_gap,
    density_laplacian,
    laplacian_loss,
    local_search_pair,
)

from .checkpoint import (
    Checkpoint,
    save_checkpoint,
    load_checkpoint,
    encode_checkpoint,
    decode_checkpoint,
    pack_rng,
    unpack_rng,
)

from .metrics_log import MetricsLog, MetricsRow, read_metrics, columns_for

from .trainer import CGCTrainer, TrainResult, train

__all__ = [
    # Configuration
    'SSLMode',
    'LossWeights',
    'TrainConfig',

    # Cycle and losses
    'CycleRecord',
    'compute_cycle',
    'loss_Z',
    'loss_R',
    'cycle_loss',
    'z_cycle_gap',
    'density_laplacian',
    'laplacian_loss',
    'local_search_pair',

    # Persistence
    'Checkpoint',
    'save_checkpoint',
    'load_checkpoint',
    'encode_checkpoint',
    'decode_checkpoint',
    'pack_rng',
    'unpack_rng',
    'MetricsLog',
    'MetricsRow',
    'read_metrics',
    'columns_for',

    # Training
    'CGCTrainer',
    'TrainResult',
    'train'
]
