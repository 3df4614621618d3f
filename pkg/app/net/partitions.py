"""
Token Partitions

Reshape a [T, H', W', C] feature map into [L, J, C] token groups for the three
attention branches, and back. All partitions are einops rearranges recorded on
the tape, so their gradients are the inverse rearranges.

- window: L = T*H'*W'/S^2 non-overlapping S x S windows of J = S^2 tokens
- grid:   L = G^2 strided grids; grid (i, j) holds every pixel congruent to
          (i, j) mod G, across all T frames, so J = T*H'*W'/G^2
- temporal: L = H'*W' spatial sites of J = T tokens
"""
from app.core import autograd
from app.core.autograd import ArrayOrVariable, Variable
from app.errors import ShapeError


def _check_tiling(x: ArrayOrVariable, size: int, what: str) -> None:
    _, h, w, _ = x.shape
    if size < 1 or h % size or w % size:
        raise ShapeError(f"{what} {size} does not tile feature extents {h}x{w}")


def window_partition(x: ArrayOrVariable, s: int) -> Variable:
    _check_tiling(x, s, "window size")
    t, h, w, _ = x.shape
    return autograd.rearrange(x, "t (h s1) (w s2) c -> (t h w) (s1 s2) c", t=t, h=h // s, w=w // s, s1=s, s2=s)


def window_reverse(tokens: ArrayOrVariable, s: int, t: int, h: int, w: int) -> Variable:
    return autograd.rearrange(
        tokens, "(t h w) (s1 s2) c -> t (h s1) (w s2) c", t=t, h=h // s, w=w // s, s1=s, s2=s
    )


def grid_partition(x: ArrayOrVariable, g: int) -> Variable:
    _check_tiling(x, g, "grid count")
    t, h, w, _ = x.shape
    return autograd.rearrange(x, "t (h g1) (w g2) c -> (g1 g2) (t h w) c", t=t, h=h // g, w=w // g, g1=g, g2=g)


def grid_reverse(tokens: ArrayOrVariable, g: int, t: int, h: int, w: int) -> Variable:
    return autograd.rearrange(
        tokens, "(g1 g2) (t h w) c -> t (h g1) (w g2) c", t=t, h=h // g, w=w // g, g1=g, g2=g
    )


def temporal_partition(x: ArrayOrVariable) -> Variable:
    t, h, w, _ = x.shape
    return autograd.rearrange(x, "t h w c -> (h w) t c", t=t, h=h, w=w)


def temporal_reverse(tokens: ArrayOrVariable, t: int, h: int, w: int) -> Variable:
    return autograd.rearrange(tokens, "(h w) t c -> t h w c", t=t, h=h, w=w)
