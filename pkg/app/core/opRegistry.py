"""
Op Registry Module

Maps every differentiable op to its forward function and analytic VJP. The
tape autodiff (autograd.py) and the gradient checker (gradcheck.py) look ops up
here, so an op is differentiable exactly when it is registered.
"""
import logging
from typing import Any, Callable, Dict, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from app.core import ops
from app.core.opTask import OpTask
from app.errors import NonFiniteError, ShapeError, UnregisteredOpError

logger = logging.getLogger(__name__)


class OpDefinition(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    task: OpTask
    forward: Callable[..., np.ndarray]
    vjp: Callable[..., Tuple[np.ndarray, ...]]
    variadic: bool = False  # concat takes any number of inputs

    def run(self, *inputs: np.ndarray, **attrs: Any) -> np.ndarray:
        out = self.forward(*inputs, **attrs)
        if not np.all(np.isfinite(out)):
            bad = tuple(int(i) for i in np.argwhere(~np.isfinite(out))[0]) if np.ndim(out) else ()
            raise NonFiniteError(f"{self.task.value} produced a non-finite value at index {bad}")
        return out


OP_REGISTRY: Dict[OpTask, OpDefinition] = {
    OpTask.CONV3D: OpDefinition(task=OpTask.CONV3D, forward=ops.conv3d, vjp=ops.conv3d_vjp),
    OpTask.TRANSPOSED_CONV3D: OpDefinition(
        task=OpTask.TRANSPOSED_CONV3D, forward=ops.transposed_conv3d, vjp=ops.transposed_conv3d_vjp
    ),
    OpTask.LEAKY_RELU: OpDefinition(task=OpTask.LEAKY_RELU, forward=ops.leaky_relu, vjp=ops.leaky_relu_vjp),
    OpTask.SOFTMAX: OpDefinition(task=OpTask.SOFTMAX, forward=ops.softmax, vjp=ops.softmax_vjp),
    OpTask.LINEAR: OpDefinition(task=OpTask.LINEAR, forward=ops.linear, vjp=ops.linear_vjp),
    OpTask.MATMUL: OpDefinition(task=OpTask.MATMUL, forward=ops.matmul, vjp=ops.matmul_vjp),
    OpTask.ADD: OpDefinition(task=OpTask.ADD, forward=ops.add, vjp=ops.add_vjp),
    OpTask.SCALE: OpDefinition(task=OpTask.SCALE, forward=ops.scale, vjp=ops.scale_vjp),
    OpTask.LAYER_NORM: OpDefinition(task=OpTask.LAYER_NORM, forward=ops.layer_norm, vjp=ops.layer_norm_vjp),
    OpTask.REARRANGE: OpDefinition(task=OpTask.REARRANGE, forward=ops.rearrange, vjp=ops.rearrange_vjp),
    OpTask.CONCAT: OpDefinition(task=OpTask.CONCAT, forward=ops.concat, vjp=ops.concat_vjp, variadic=True),
    OpTask.SLICE: OpDefinition(task=OpTask.SLICE, forward=ops.slice_axis, vjp=ops.slice_axis_vjp),
    OpTask.MSE: OpDefinition(task=OpTask.MSE, forward=ops.mse, vjp=ops.mse_vjp),
    OpTask.IDENTITY: OpDefinition(task=OpTask.IDENTITY, forward=ops.identity, vjp=ops.identity_vjp),
}


def get_op(op: Union[OpTask, str]) -> OpDefinition:
    """
    Retrieve the registered definition of an op.

    Args:
        op: OpTask member or its string value (e.g. "conv3d")

    Raises:
        UnregisteredOpError: if the op has no registered forward/backward pair
    """
    try:
        task = op if isinstance(op, OpTask) else OpTask(op)
    except ValueError:
        raise UnregisteredOpError(f"no op registered under {op!r}")
    if task not in OP_REGISTRY:
        raise UnregisteredOpError(f"no op registered under {task.value!r}")
    logger.debug("Resolved op %s", task.value)
    return OP_REGISTRY[task]


def backward(op: Union[OpTask, str], inputs: Tuple[np.ndarray, ...], upstream_grad: np.ndarray, **attrs: Any):
    """
    Analytic gradients of a registered op w.r.t. every input.

    The forward is re-evaluated at ``inputs`` so the VJP sees the same output
    it would on the tape.
    """
    definition = get_op(op)
    out = definition.run(*inputs, **attrs)
    if np.shape(upstream_grad) != np.shape(out):
        raise ShapeError(f"{definition.task.value}: upstream grad {np.shape(upstream_grad)} vs output {np.shape(out)}")
    return definition.vjp(np.asarray(upstream_grad, dtype=out.dtype), out, *inputs, **attrs)
