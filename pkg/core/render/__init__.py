"""
Rendering Submodule

This submodule turns 3D representations into images:
- Field activation (softplus density)
- Orthographic emission-absorption compositing
- Analytic reference renders for the synthetic dataset
"""

from .volume_renderer import (
    RenderSettings,
    RenderedImage,
    activate_field,
    composite,
    render,
    render_representation,
    sampling_plan,
    render_analytic,
)

__all__ = [
    'RenderSettings',
    'RenderedImage',
    'activate_field',
    'composite',
    'render',
    'render_representation',
    'sampling_plan',
    'render_analytic'
]
