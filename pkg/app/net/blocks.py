"""
BSTFormer Block

Channels are split evenly among the enabled branches (in LBA, GSA, GTA
order). Branch k attends over its own slice plus the pre-FFN output of branch
k-1; the branch outputs are concatenated, fused by a 1x1x1 convolution and
added back to the block input.
"""
from app.core import autograd
from app.core.autograd import ArrayOrVariable, Variable
from app.core.convSpec import ConvSpec
from app.errors import ShapeError
from app.net import attention
from app.net.attention import AttentionParams, Params
from app.net.networkConfiguration import NetworkConfig


def _branch_attention(kind: str, x: Variable, params: AttentionParams, config: NetworkConfig) -> Variable:
    if kind == "lba":
        return attention.lba_attention(x, params, config.s, config.heads)
    if kind == "gsa":
        return attention.gsa_attention(x, params, config.g, config.heads)
    return attention.gta_attention(x, params, config.heads)


def block_forward(x: ArrayOrVariable, params: Params, prefix: str, config: NetworkConfig) -> Variable:
    """
    One BSTFormer block over a [T, H', W', C] feature map.

    Raises:
        ShapeError: channel count differs from the configuration
    """
    if x.shape[-1] != config.c:
        raise ShapeError(f"block {prefix} expects {config.c} channels, got {x.shape[-1]}")
    width = config.branch_channels
    outputs = []
    previous = None
    for k, kind in enumerate(config.enabled_branches):
        branch_in = autograd.slice_axis(x, -1, k * width, (k + 1) * width)
        if previous is not None:
            branch_in = autograd.add(branch_in, previous)
        pre = _branch_attention(kind, branch_in, AttentionParams.from_params(params, f"{prefix}.{kind}"), config)
        outputs.append(attention.ffn(pre, params, f"{prefix}.{kind}.ffn", config.leaky_slope))
        previous = pre
    fused = autograd.conv3d(
        autograd.concat(outputs, axis=-1),
        params[f"{prefix}.fuse.w"],
        params[f"{prefix}.fuse.b"],
        ConvSpec.same((1, 1, 1), config.c, config.c),
    )
    return autograd.add(x, fused)
