"""im2col: gather the receptive field of each output pixel into a 1-D buffer.

Copies are generated per (pixel, kernel row); a kernel row that lies fully
inside the input is one contiguous HWC segment.  Padded positions are
written with zeros since buffers are reused from pixel to pixel.
"""
from __future__ import annotations

from ..isa import Program
from .emit import Asm, loop
from .geometry import ConvGeometry, KernelConfig, plan_matmul

# scratch registers, never live across kernel code
SRC, DST, T0, T1 = 26, 27, 28, 29


def segments(g: ConvGeometry, pa: int, pixel: int):
    """``(kind, dst_off, src_off, nbytes)`` runs for one flattened output pixel.

    ``kind`` is "copy" or "zero"; offsets are bytes relative to the input tensor
    and to the im2col buffer.
    """
    y, x = divmod(pixel, g.out_w)
    pix_b = g.cin * pa // 8
    row_b = g.kw * pix_b
    runs = []
    for i in range(g.kh):
        iy = y * g.stride + i - g.pad_t
        dst = i * row_b
        if not 0 <= iy < g.in_h:
            runs.append(("zero", dst, 0, row_b))
            continue
        x0 = x * g.stride - g.pad_l
        j_lo = max(0, -x0)
        j_hi = min(g.kw, g.in_w - x0)
        if j_hi <= j_lo:
            runs.append(("zero", dst, 0, row_b))
            continue
        if j_lo:
            runs.append(("zero", dst, 0, j_lo * pix_b))
        runs.append(("copy", dst + j_lo * pix_b, (iy * g.in_w + x0 + j_lo) * pix_b,
                     (j_hi - j_lo) * pix_b))
        if j_hi < g.kw:
            runs.append(("zero", dst + j_hi * pix_b, 0, (g.kw - j_hi) * pix_b))
    merged = []
    for r in runs:
        if merged and merged[-1][0] == "zero" == r[0] and merged[-1][1] + merged[-1][3] == r[1]:
            k, d, s, n = merged[-1]
            merged[-1] = (k, d, s, n + r[3])
        else:
            merged.append(r)
    return merged


def _copy(asm: Asm, src: int, dst: int, n: int) -> None:
    asm(f"li x{SRC}, {src:#x}", f"li x{DST}, {dst:#x}")
    if src % 4 == 0 and dst % 4 == 0 and n >= 4:
        words, tail = divmod(n, 4)
        loop(asm, 0, words // 2, lambda a: a(
            f"p.lw x{T0}, 4(x{SRC}!)", f"p.lw x{T1}, 4(x{SRC}!)",
            f"p.sw x{T0}, 4(x{DST}!)", f"p.sw x{T1}, 4(x{DST}!)"))
        if words % 2:
            asm(f"p.lw x{T0}, 4(x{SRC}!)", f"p.sw x{T0}, 4(x{DST}!)")
    else:
        tail = n
    loop(asm, 0, tail // 2, lambda a: a(
        f"p.lbu x{T0}, 1(x{SRC}!)", f"p.lbu x{T1}, 1(x{SRC}!)",
        f"p.sb x{T0}, 1(x{DST}!)", f"p.sb x{T1}, 1(x{DST}!)"))
    if tail % 2:
        asm(f"p.lbu x{T0}, 1(x{SRC}!)", f"p.sb x{T0}, 1(x{DST}!)")


def _zero(asm: Asm, dst: int, n: int) -> None:
    asm(f"li x{DST}, {dst:#x}")
    if dst % 4 == 0 and n >= 4:
        words, tail = divmod(n, 4)
        loop(asm, 0, words // 2, lambda a: a(f"p.sw x0, 4(x{DST}!)", f"p.sw x0, 4(x{DST}!)"))
        if words % 2:
            asm(f"p.sw x0, 4(x{DST}!)")
    else:
        tail = n
    for _ in range(tail):
        asm(f"p.sb x0, 1(x{DST}!)")


def emit_im2col_pixel(asm: Asm, g: ConvGeometry, pa: int, pixel: int, in_addr: int,
                      buf: int) -> None:
    for kind, d, s, n in segments(g, pa, pixel):
        if kind == "copy":
            _copy(asm, in_addr + s, buf + d, n)
        else:
            _zero(asm, buf + d, n)


def emit_im2col(cfg: KernelConfig, pixels=None, core: int = 0) -> Program:
    """Standalone program filling core ``core``'s buffers for ``pixels`` (one per buffer)."""
    plan = plan_matmul(cfg)
    bufs = plan.layout.buffers[core]
    if pixels is None:
        lo, hi = plan.partition[core]
        pixels = list(range(lo, min(hi, lo + len(bufs))))
    if len(pixels) > len(bufs):
        raise ValueError(f"{len(pixels)} pixels for {len(bufs)} buffers")
    asm = Asm("im")
    for p, buf in zip(pixels, bufs):
        emit_im2col_pixel(asm, cfg.geom, cfg.act.bits, p, plan.layout.input, buf)
    return asm.program()
