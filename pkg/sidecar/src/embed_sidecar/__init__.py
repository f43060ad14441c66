"""Embedding micro-service speaking the /embed wire protocol.

Serves mean-pooled, L2-normalized transformer embeddings over HTTP so the
matching pipeline can point its remote embedding provider at a real encoder
without bundling model weights. The checkpoint is configuration; nothing is
downloaded by default.
"""

from .app import create_app
from .config import SidecarConfig
from .encoder import TextEncoder

__all__ = ["SidecarConfig", "TextEncoder", "create_app"]
