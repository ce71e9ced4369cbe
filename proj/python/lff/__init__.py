"""Layer synthesis for compressive multi-layer light field displays."""

from ._core import (
    DisplayGeometry,
    FormatError,
    Modulation,
    SolveConfig,
    ValidationError,
    crop_border,
    evaluate_psnr,
    infer,
    layer_uniformity,
    network_parameter_count,
    read_layers,
    read_lightfield,
    reconstruct,
    render_scene,
    run_cli,
    set_num_threads,
    solve,
)

__all__ = [
    "DisplayGeometry",
    "FormatError",
    "Modulation",
    "SolveConfig",
    "ValidationError",
    "crop_border",
    "evaluate_psnr",
    "infer",
    "layer_uniformity",
    "network_parameter_count",
    "read_layers",
    "read_lightfield",
    "reconstruct",
    "render_scene",
    "run_cli",
    "set_num_threads",
    "solve",
]
