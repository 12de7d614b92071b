"""
CLI Submodule

This submodule is the command-line surface of the lab:
- Experiment configs (train + dataset + metrics) with a stable content hash
- train, eval, ablate, render and gradcheck commands
- run.json provenance and render exports
- The gradient-check battery
"""

from .experiment_config import ExperimentConfig, MetricsConfig, load_experiment

from .gradcheck_battery import GradCheckResult, run_battery

from .main import build_parser, main

__all__ = [
    # Configuration
    'ExperimentConfig',
    'MetricsConfig',
    'load_experiment',

    # Verification
    'GradCheckResult',
    'run_battery',

    # Entry point
    'build_parser',
    'main'
]
