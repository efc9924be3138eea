"""Semi-supervised video deraining with a learned dynamical rain generator."""

__version__ = "0.1.0"

from .video import VideoClip

__all__ = ["VideoClip", "__version__"]
