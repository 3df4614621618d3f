"""
Tape Autodiff

A minimal reverse-mode autodiff over the registered ops. Each ``apply`` records
the op, its attributes and its input variables; ``backprop`` walks the graph in
reverse topological order and accumulates VJPs into the leaf variables that
require gradients.

The thin wrappers at the bottom of the module (conv3d, linear, softmax, ...)
accept arrays or Variables and are what the network layers are written with.
"""
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.convSpec import ConvSpec
from app.core.opRegistry import get_op
from app.core.opTask import OpTask


class Variable:
    """Array value plus the tape entry that produced it."""

    __slots__ = ("data", "grad", "requires_grad", "parents", "task", "attrs")

    def __init__(
        self,
        data: np.ndarray,
        requires_grad: bool = False,
        parents: Tuple["Variable", ...] = (),
        task: Optional[OpTask] = None,
        attrs: Optional[Dict[str, Any]] = None,
    ):
        self.data = np.asarray(data)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.parents = parents
        self.task = task
        self.attrs = attrs or {}

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def __repr__(self) -> str:
        origin = self.task.value if self.task else "leaf"
        return f"Variable(shape={self.shape}, dtype={self.dtype}, op={origin})"


ArrayOrVariable = Union[np.ndarray, Variable]


def lift(x: ArrayOrVariable) -> Variable:
    return x if isinstance(x, Variable) else Variable(np.asarray(x))


def apply(task: OpTask, *inputs: ArrayOrVariable, **attrs: Any) -> Variable:
    """Run a registered op and record it on the tape if any input needs a gradient."""
    definition = get_op(task)
    variables = tuple(lift(x) for x in inputs)
    out = definition.run(*(v.data for v in variables), **attrs)
    if any(v.requires_grad for v in variables):
        return Variable(out, requires_grad=True, parents=variables, task=definition.task, attrs=attrs)
    return Variable(out)


def _topological_order(root: Variable) -> List[Variable]:
    order: List[Variable] = []
    visited = set()
    stack: List[Tuple[Variable, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backprop(root: Variable, upstream: Optional[np.ndarray] = None) -> None:
    """
    Accumulate d(root)/d(leaf) into ``leaf.grad`` for every leaf requiring a gradient.

    ``upstream`` defaults to ones, which for a scalar loss gives the plain gradient.
    """
    if not root.requires_grad:
        return
    grads: Dict[int, np.ndarray] = {id(root): np.ones_like(root.data) if upstream is None else np.asarray(upstream)}
    for node in reversed(_topological_order(root)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.task is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        definition = get_op(node.task)
        input_grads = definition.vjp(g, node.data, *(p.data for p in node.parents), **node.attrs)
        for parent, pg in zip(node.parents, input_grads):
            if not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


# =============================================================================
# Differentiable wrappers
# =============================================================================


def conv3d(x: ArrayOrVariable, w: ArrayOrVariable, b: ArrayOrVariable, spec: ConvSpec) -> Variable:
    return apply(OpTask.CONV3D, x, w, b, spec=spec)


def transposed_conv3d(x: ArrayOrVariable, w: ArrayOrVariable, b: ArrayOrVariable, spec: ConvSpec) -> Variable:
    return apply(OpTask.TRANSPOSED_CONV3D, x, w, b, spec=spec)


def leaky_relu(x: ArrayOrVariable, slope: float) -> Variable:
    return apply(OpTask.LEAKY_RELU, x, slope=slope)


def softmax(x: ArrayOrVariable, axis: int = -1) -> Variable:
    return apply(OpTask.SOFTMAX, x, axis=axis)


def linear(x: ArrayOrVariable, w: ArrayOrVariable) -> Variable:
    return apply(OpTask.LINEAR, x, w)


def matmul(a: ArrayOrVariable, b: ArrayOrVariable) -> Variable:
    return apply(OpTask.MATMUL, a, b)


def add(a: ArrayOrVariable, b: ArrayOrVariable) -> Variable:
    return apply(OpTask.ADD, a, b)


def scale(x: ArrayOrVariable, factor: float) -> Variable:
    return apply(OpTask.SCALE, x, factor=factor)


def layer_norm(x: ArrayOrVariable, gamma: ArrayOrVariable, beta: ArrayOrVariable, eps: float = 1e-5) -> Variable:
    return apply(OpTask.LAYER_NORM, x, gamma, beta, eps=eps)


def rearrange(x: ArrayOrVariable, pattern: str, **axes: int) -> Variable:
    return apply(OpTask.REARRANGE, x, pattern=pattern, axes=axes)


def concat(xs: Sequence[ArrayOrVariable], axis: int = -1) -> Variable:
    return apply(OpTask.CONCAT, *xs, axis=axis)


def slice_axis(x: ArrayOrVariable, axis: int, start: int, stop: int) -> Variable:
    return apply(OpTask.SLICE, x, axis=axis, start=start, stop=stop)


def mse(a: ArrayOrVariable, b: ArrayOrVariable) -> Variable:
    return apply(OpTask.MSE, a, b)
