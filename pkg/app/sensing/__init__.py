from .domain import MaskScheme, MaskSet, Measurement, NoiseModel, QuantSpec, VideoCube
from .masks import MaskReport, degrade, gen_rs, gen_uss, load_masks, save_masks, validate
from .forward import (
    SensingMatrix,
    build_sensing_matrix,
    coarse_estimate,
    decompose_uss,
    dequantize,
    encode,
    quantize,
    vectorized_encode,
)
