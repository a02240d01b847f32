"""Multi-axis MLP image restoration with a small reverse-mode autodiff engine on numpy."""

from .multistage import ModelConfig, Restorer, preset, total_loss

__all__ = ["ModelConfig", "Restorer", "preset", "total_loss"]
__version__ = "0.1.0"
