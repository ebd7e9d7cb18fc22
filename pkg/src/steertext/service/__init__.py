from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .engine import Engine, ModelBundle
from .sessions import SessionStore, SessionTree

__all__ = [
    "Checkpoint",
    "load_checkpoint",
    "save_checkpoint",
    "Engine",
    "ModelBundle",
    "SessionStore",
    "SessionTree",
]
