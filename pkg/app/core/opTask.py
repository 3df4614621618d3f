from enum import Enum


class OpTask(Enum):

    CONV3D = "conv3d"
    TRANSPOSED_CONV3D = "transposed_conv3d"
    LEAKY_RELU = "leaky_relu"
    SOFTMAX = "softmax"
    LINEAR = "linear"
    MATMUL = "matmul"
    ADD = "add"
    SCALE = "scale"
    LAYER_NORM = "layer_norm"
    REARRANGE = "rearrange"
    CONCAT = "concat"
    SLICE = "slice"
    MSE = "mse"
    IDENTITY = "identity"
