from .tensor import (
    DimensionError, GraphError, Tape, Tensor, abs, add, broadcast_to, concat, conv1d_pointwise,
    conv3d, default_dtype, div, enable_grad, grad, grad_of_scalar_wrt, index_add, l2_normalize,
    leaky_relu, matmul, max, mean, mul, neg, no_grad, precision, reduce_max_over_points, relu,
    reshape, scale, sigmoid, signed_power, sqrt, square, sub, sum, sum_to, take, tensor, transpose,
)
from .optim import Adam, TrainingError
from .checkpoint import CheckpointError, load_arrays, save_arrays
