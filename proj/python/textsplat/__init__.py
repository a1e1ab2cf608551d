"""Text-conditioned 3D Gaussian generation."""

from ._core import (
    CheckpointError,
    Config,
    ConfigError,
    Generator,
    check,
    embed,
    export_ply,
    import_ply,
    render,
    render_turntable,
    train,
)

__all__ = [
    "CheckpointError",
    "Config",
    "ConfigError",
    "Generator",
    "check",
    "embed",
    "export_ply",
    "import_ply",
    "render",
    "render_turntable",
    "train",
]
