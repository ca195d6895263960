from src.autodiff.tensor import FlopCounter, Parameter, Tensor, as_tensor, backward, flop_scope, get_tape, no_grad
from src.autodiff.primitives import PRIMITIVES, forward_primitive
from src.autodiff.optim import OneCycleSchedule, OptimizerState, adamw_step
from src.autodiff.rng import make_rng

__all__ = [
    "FlopCounter",
    "Parameter",
    "Tensor",
    "as_tensor",
    "backward",
    "flop_scope",
    "get_tape",
    "no_grad",
    "PRIMITIVES",
    "forward_primitive",
    "OneCycleSchedule",
    "OptimizerState",
    "adamw_step",
    "make_rng",
]
