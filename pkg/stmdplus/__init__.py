"""Small target motion detection with a directional-contrast pathway."""
from .version import __version__

__all__ = ["__version__"]
