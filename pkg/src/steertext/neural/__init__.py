from . import autodiff
from .optim import AdamW, Sgd, make_optimizer
from .store import Graph, ParamStore
from .transformer import init_stack, stack_forward

__all__ = [
    "autodiff",
    "AdamW",
    "Sgd",
    "make_optimizer",
    "Graph",
    "ParamStore",
    "init_stack",
    "stack_forward",
]
