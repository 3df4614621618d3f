from typing import Tuple

from pydantic import BaseModel, ConfigDict, model_validator

Triple = Tuple[int, int, int]


class ConvSpec(BaseModel):
    # Geometry of a 3D convolution over [T, H, W, C] tensors
    model_config = ConfigDict(frozen=True)

    kernel: Triple
    in_channels: int
    out_channels: int
    stride: Triple = (1, 1, 1)
    padding: Triple = (0, 0, 0)
    output_padding: Triple = (0, 0, 0)

    @model_validator(mode="after")
    def _check_extents(self) -> "ConvSpec":
        if min(self.kernel) < 1 or min(self.stride) < 1:
            raise ValueError(f"kernel {self.kernel} and stride {self.stride} extents must be >= 1")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be >= 1")
        if min(self.padding) < 0 or any(p >= k for p, k in zip(self.padding, self.kernel)):
            raise ValueError(f"padding {self.padding} must be in [0, kernel {self.kernel})")
        if min(self.output_padding) < 0 or any(o >= s for o, s in zip(self.output_padding, self.stride)):
            raise ValueError(f"output_padding {self.output_padding} must be in [0, stride {self.stride})")
        return self

    @classmethod
    def same(cls, kernel: Triple, in_channels: int, out_channels: int, stride: Triple = (1, 1, 1)) -> "ConvSpec":
        """Odd kernel with 'same' padding."""
        return cls(
            kernel=kernel,
            in_channels=in_channels,
            out_channels=out_channels,
            stride=stride,
            padding=tuple(k // 2 for k in kernel),
        )

    @property
    def weight_shape(self) -> Tuple[int, int, int, int, int]:
        return (*self.kernel, self.in_channels, self.out_channels)

    def output_extents(self, extents: Triple) -> Triple:
        return tuple(
            (n + 2 * p - k) // s + 1 for n, p, k, s in zip(extents, self.padding, self.kernel, self.stride)
        )

    def transposed_output_extents(self, extents: Triple) -> Triple:
        return tuple(
            (n - 1) * s - 2 * p + k + o
            for n, s, p, k, o in zip(extents, self.stride, self.padding, self.kernel, self.output_padding)
        )
