"""
Attention Branches

Multi-head scaled dot-product attention over [L, J, d] token groups and the
three branches built on it: local block attention (LBA, windows), global
sparse attention (GSA, strided grids) and global temporal attention (GTA,
per-site temporal tokens). Every branch is pre-normalized and followed by
the residual convolutional FFN:

    X_f = Attn(LN(X))
    X_hat = X_f + W1(leaky(W2(X_f)))

There are no positional encodings.
"""
import math
from typing import Any, Dict

from pydantic import BaseModel, ConfigDict, model_validator

from app.config import network_defaults
from app.core import autograd
from app.core.autograd import ArrayOrVariable, Variable
from app.core.convSpec import ConvSpec
from app.errors import ShapeError
from app.net import partitions

Params = Dict[str, Any]


class AttentionParams(BaseModel):
    """
    Projections of one attention branch.

    ``q``, ``k``, ``v`` are [d, d] (d_q = d_k = d_v = d, split evenly across
    heads) and ``o`` the [d, d] output projection. ``gamma`` / ``beta`` are the
    per-token normalization scale and shift applied before attention.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    q: Any
    k: Any
    v: Any
    o: Any
    gamma: Any = None
    beta: Any = None

    @model_validator(mode="after")
    def _check_projection_shapes(self) -> "AttentionParams":
        if self.q.shape[1] != self.k.shape[1]:
            raise ValueError(f"query width {self.q.shape[1]} must equal key width {self.k.shape[1]}")
        if not (self.q.shape[0] == self.k.shape[0] == self.v.shape[0]):
            raise ValueError("q, k and v must project the same input width")
        if self.o.shape[0] != self.v.shape[1]:
            raise ValueError(f"output projection {self.o.shape} does not consume value width {self.v.shape[1]}")
        return self

    @classmethod
    def from_params(cls, params: Params, prefix: str) -> "AttentionParams":
        return cls(
            q=params[f"{prefix}.q"],
            k=params[f"{prefix}.k"],
            v=params[f"{prefix}.v"],
            o=params[f"{prefix}.o"],
            gamma=params[f"{prefix}.norm.gamma"],
            beta=params[f"{prefix}.norm.beta"],
        )


def attention(tokens: ArrayOrVariable, params: AttentionParams, heads: int = 1) -> Variable:
    """
    Z = softmax(Q K^T / sqrt(d_head)) V per token group and head, heads
    concatenated then output-projected.

    Args:
        tokens: [L, J, d]; attention mixes tokens only within each of the L groups
        params: projections (normalization is not applied here)
        heads: head count; d_q must be divisible by it

    Raises:
        ShapeError: token width does not match the projections, or d_q not
            divisible by ``heads``
    """
    if tokens.shape[-1] != params.q.shape[0]:
        raise ShapeError(f"token width {tokens.shape[-1]} does not match projection input {params.q.shape[0]}")
    width = params.q.shape[1]
    if width % heads or params.v.shape[1] % heads:
        raise ShapeError(f"projection widths {width}/{params.v.shape[1]} not divisible by {heads} heads")

    def split(x: Variable, e: int) -> Variable:
        return autograd.rearrange(x, "l j (n e) -> (l n) j e", n=heads, e=e)

    q = split(autograd.linear(tokens, params.q), width // heads)
    k = split(autograd.linear(tokens, params.k), width // heads)
    v = split(autograd.linear(tokens, params.v), params.v.shape[1] // heads)

    scores = autograd.matmul(q, autograd.rearrange(k, "b j e -> b e j"))
    weights = autograd.softmax(autograd.scale(scores, 1.0 / math.sqrt(width // heads)), axis=-1)
    z = autograd.matmul(weights, v)
    z = autograd.rearrange(z, "(l n) j e -> l j (n e)", n=heads, e=params.v.shape[1] // heads)
    return autograd.linear(z, params.o)


def _normalize(x: ArrayOrVariable, params: AttentionParams) -> Variable:
    return autograd.layer_norm(x, params.gamma, params.beta, eps=network_defaults.NORM_EPS)


def ffn(x: ArrayOrVariable, params: Params, prefix: str, slope: float) -> Variable:
    """X_hat = X + W1(leaky(W2(X))) with W2 a 3x3x3 and W1 a 1x1x1 convolution."""
    channels = x.shape[-1]
    hidden = autograd.conv3d(x, params[f"{prefix}.w2"], params[f"{prefix}.b2"], ConvSpec.same((3, 3, 3), channels, channels))
    hidden = autograd.leaky_relu(hidden, slope)
    out = autograd.conv3d(hidden, params[f"{prefix}.w1"], params[f"{prefix}.b1"], ConvSpec.same((1, 1, 1), channels, channels))
    return autograd.add(x, out)


def lba_attention(x: ArrayOrVariable, params: AttentionParams, s: int, heads: int) -> Variable:
    """Pre-FFN LBA output: attention inside S x S windows of each frame."""
    t, h, w, _ = x.shape
    tokens = partitions.window_partition(_normalize(x, params), s)
    return partitions.window_reverse(attention(tokens, params, heads), s, t, h, w)


def gsa_attention(x: ArrayOrVariable, params: AttentionParams, g: int, heads: int) -> Variable:
    """Pre-FFN GSA output: attention inside each of the G^2 strided grids."""
    t, h, w, _ = x.shape
    tokens = partitions.grid_partition(_normalize(x, params), g)
    return partitions.grid_reverse(attention(tokens, params, heads), g, t, h, w)


def gta_attention(x: ArrayOrVariable, params: AttentionParams, heads: int) -> Variable:
    """Pre-FFN GTA output: attention over the T frames at every spatial site."""
    t, h, w, _ = x.shape
    tokens = partitions.temporal_partition(_normalize(x, params))
    return partitions.temporal_reverse(attention(tokens, params, heads), t, h, w)


def lba_forward(x: ArrayOrVariable, params: Params, prefix: str, s: int, heads: int, slope: float) -> Variable:
    pre = lba_attention(x, AttentionParams.from_params(params, prefix), s, heads)
    return ffn(pre, params, f"{prefix}.ffn", slope)


def gsa_forward(x: ArrayOrVariable, params: Params, prefix: str, g: int, heads: int, slope: float) -> Variable:
    pre = gsa_attention(x, AttentionParams.from_params(params, prefix), g, heads)
    return ffn(pre, params, f"{prefix}.ffn", slope)


def gta_forward(x: ArrayOrVariable, params: Params, prefix: str, heads: int, slope: float) -> Variable:
    pre = gta_attention(x, AttentionParams.from_params(params, prefix), heads)
    return ffn(pre, params, f"{prefix}.ffn", slope)
