"""Bit-true, cycle-approximate simulator of a RISC-V cluster with mixed-precision
dot-product and Mac&Load extensions for quantized neural network inference."""

__version__ = "0.1.0"
