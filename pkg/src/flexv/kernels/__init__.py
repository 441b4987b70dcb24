from .geometry import (ConvGeometry, KernelConfig, KernelError, KernelPlan, Layout, pad_k,
                       partition_rows, plan_matmul, with_overrides)
from .im2col import emit_im2col, segments
from .layer import (LayerBuild, build_layer, emit_leftovers, emit_matmul, load_layer,
                    read_output, run_layer, weight_image)
from .quantize import check_quant_range, emit_quantize

__all__ = [
    "ConvGeometry", "KernelConfig", "KernelError", "KernelPlan", "LayerBuild", "Layout",
    "build_layer", "check_quant_range", "emit_im2col", "emit_leftovers", "emit_matmul",
    "emit_quantize", "load_layer", "pad_k", "partition_rows", "plan_matmul", "read_output",
    "run_layer", "segments", "weight_image", "with_overrides",
]
