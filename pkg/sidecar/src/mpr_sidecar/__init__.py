"""Real-model gateway service: CLIP-style dual encoder for retrieval keys and
image tokens, T5-style generator for answers, served over the four-endpoint
JSON protocol."""

from .bundle import ModelBundle, build_projection, load_bundle
from .errors import BadRequest, ImageNotFound, SidecarError
from .service import create_app

__version__ = "0.1.0"

__all__ = [
    "BadRequest",
    "ImageNotFound",
    "ModelBundle",
    "SidecarError",
    "build_projection",
    "create_app",
    "load_bundle",
    "__version__",
]
