"""Requantization: one multiply, one add-and-shift, one clip per accumulator."""
from __future__ import annotations

from ..isa import Program
from ..tensor import QuantParams
from .emit import Asm, loop, store_bytes
from .geometry import KernelConfig, KernelError


def check_quant_range(cfg: KernelConfig, k: int | None = None) -> None:
    """The kernels requantize in 32-bit registers; reject parameters that could overflow."""
    q = cfg.quant
    k = cfg.geom.k if k is None else k
    amax = max(abs(cfg.act.lo), abs(cfg.act.hi))
    wmax = max(abs(cfg.weight.lo), abs(cfg.weight.hi))
    acc = min(k * amax * wmax, 1 << 31)
    if abs(q.m) * acc + abs(q.b) >= 1 << 31:
        raise KernelError(
            f"m={q.m}, b={q.b} may overflow 32 bits for accumulators up to {acc}")


def emit_requant(asm: Asm, regs, q: QuantParams, m_reg: int, b_reg: int) -> None:
    clip = "p.clip" if q.out.signed else "p.clipu"
    for r in regs:
        asm(f"mul x{r}, x{r}, x{m_reg}")
    for r in regs:
        asm(f"p.addn x{r}, x{r}, x{b_reg}, {q.d}")
    for r in regs:
        asm(f"{clip} x{r}, x{r}, {q.out.bits}")


def emit_pack_store(asm: Asm, regs, po: int, ptr: int, aligned: bool) -> None:
    """Pack consecutive-filter outputs into ``regs[0]`` and store them."""
    for i, r in enumerate(regs[1:], 1):
        asm(f"p.insert x{regs[0]}, x{r}, {po}, {i * po}")
    store_bytes(asm, regs[0], ptr, len(regs) * po // 8, aligned)


def emit_quantize(cfg: KernelConfig, acc_addr: int, out_addr: int, pixels: int) -> Program:
    """Standalone program: 32-bit accumulators (pixel-major) to packed HWC outputs."""
    q, cout = cfg.quant, cfg.geom.cout
    po = q.out.bits
    if (cout * po) % 8:
        raise KernelError("output channels are not byte-aligned")
    asm = Asm("q")
    asm(f"li x1, {acc_addr:#x}", f"li x2, {out_addr:#x}", f"li x7, {q.m}", f"li x8, {q.b}")
    pix_bytes = cout * po // 8

    def body(a: Asm):
        f = 0
        while f < cout:
            n = min(4, cout - f)
            regs = list(range(3, 3 + n))
            for r in regs:
                a(f"p.lw x{r}, 4(x1!)")
            emit_requant(a, regs, q, 7, 8)
            nb = n * po // 8
            emit_pack_store(a, regs, po, 2, pix_bytes % nb == 0 and (f * po // 8) % nb == 0)
            f += n

    loop(asm, 1, pixels, body)
    return asm.program()
