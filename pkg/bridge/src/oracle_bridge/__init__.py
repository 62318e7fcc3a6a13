"""Oracle bridge: real model backends behind the logits wire protocol."""

from .backends import CheckpointBackend, HashBackend, RemoteProviderBackend, make_backend
from .config import BridgeConfig, BridgeConfigError
from .dump import dump_cache
from .server import create_app, serve

__all__ = [
    "BridgeConfig",
    "BridgeConfigError",
    "CheckpointBackend",
    "HashBackend",
    "RemoteProviderBackend",
    "create_app",
    "dump_cache",
    "make_backend",
    "serve",
]
__version__ = "0.1.0"
