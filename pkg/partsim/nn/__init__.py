from partsim.nn.tensor import Tape, Tensor, as_tensor, default_dtype, precision, set_default_dtype  # noqa: F401
from partsim.nn.optim import AdamState, adam_step  # noqa: F401
from partsim.nn.checkpoint import load_checkpoint, save_checkpoint  # noqa: F401
