"""Boundary-enhanced segmentation: python surface over the C++ core."""

from ._befseg import (
    Model,
    Tensor,
    add,
    backward,
    boundary_f1,
    conv2d,
    generate_scene,
    global_avg_pool,
    matmul,
    mean_all,
    mul,
    report_metrics,
    run_verification,
    sigmoid,
    silu,
    sobel_edge,
    softmax,
    sub,
    sum_all,
    tensor,
)

__version__ = "0.1.0"

__all__ = [
    "Model",
    "Tensor",
    "add",
    "backward",
    "boundary_f1",
    "conv2d",
    "generate_scene",
    "global_avg_pool",
    "matmul",
    "mean_all",
    "mul",
    "report_metrics",
    "run_verification",
    "sigmoid",
    "silu",
    "sobel_edge",
    "softmax",
    "sub",
    "sum_all",
    "tensor",
]
