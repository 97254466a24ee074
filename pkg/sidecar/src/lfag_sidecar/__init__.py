"""HTTP sidecar exposing embedding, NER, and generation models behind the
shared wire protocol."""

from .app import create_app
from .config import SidecarConfig

__version__ = "0.1.0"
__all__ = ["create_app", "SidecarConfig", "__version__"]
