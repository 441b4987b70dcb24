"""MatMul kernel generators.

Register use, main Mac&Load kernel (4 filters x 4 pixels):
    x1-x16   accumulators, acc[pixel p][filter f] = x(1 + 4p + f)
    x17/x18  requant multiplier / bias
    x19-x22  output pointers, one per pixel
    x23      weight base of the next filter block, x25 its step
    x24      first im2col buffer of the core

Generic kernel (F <= 4 filters x P <= 2 pixels), used by the baseline and for
leftover filters and pixels:
    x1-x8    accumulators, same indexing
    x9-x12   filter pointers       x13-x14  im2col pointers
    x15-x18  weight words          x19-x20  activation words
    x21-x24  unpacked weights      x25-x26  unpacked activations
    x27/x31  unpack scratch        x28-x29  output pointers
    x30      filter pointer fix-up between blocks (3 filter rows)
"""
from __future__ import annotations

from ..isa import CSRS
from .emit import Asm, loop
from .geometry import KernelConfig, KernelPlan
from .quantize import emit_pack_store, emit_requant

# Per-container unpack sequence lengths for the software baseline, by field
# width.  2-bit fields first isolate their byte (srli + andi) before the
# shared extract/insert sequence; see docs/kernels.md.
UNPACK_BYTE_ISOLATE = {2: True, 4: False}


def out_addr(cfg: KernelConfig, plan: KernelPlan, pixel: int, f: int) -> int:
    return plan.layout.output + (pixel * cfg.geom.cout + f) * cfg.quant.out.bits // 8


def emit_csr_setup(asm: Asm, plan: KernelPlan, names=None) -> None:
    for name in names or plan.csr:
        asm(f"csrwi {name}, {plan.csr[name] & 0xFFFFFFFF:#x}")


def emit_flexv_main(asm: Asm, cfg: KernelConfig, plan: KernelPlan, bufs, pixels, n_fb: int) -> None:
    """Filter-block loop of the 4x4 Mac&Load kernel over four im2col buffers."""
    po = cfg.quant.out.bits
    q = cfg.quant
    nb = 4 * po // 8
    asm(f"li x17, {q.m}", f"li x18, {q.b}", f"li x24, {bufs[0]:#x}",
        f"li x25, {4 * plan.fsize}", f"li x23, {plan.layout.weights:#x}")
    aligned = []
    for p, pix in enumerate(pixels):
        a = out_addr(cfg, plan, pix, 0)
        asm(f"li x{19 + p}, {a:#x}")
        aligned.append(a % nb == 0)

    def inner(a: Asm):
        a("ml.sdotp.a w0, a0, x1", "ml.sdotp w1, a0, x2", "ml.sdotp w2, a0, x3",
          "ml.sdotp w3, a0, x4")
        a("ml.sdotp.a w0, a1, x5", "ml.sdotp w1, a1, x6", "ml.sdotp w2, a1, x7",
          "ml.sdotp w3, a1, x8")
        a("ml.sdotp.a w0, a0, x9", "ml.sdotp w1, a0, x10", "ml.sdotp w2, a0, x11",
          "ml.sdotp w3, a0, x12")
        a("nn.lw a0")
        a("ml.sdotp.w w0, a1, x13", "ml.sdotp.w w1, a1, x14", "ml.sdotp.w w2, a1, x15",
          "ml.sdotp.wc w3, a1, x16")

    def block(a: Asm):
        a("csrw w_addr, x23", "csrw a_addr, x24", "add x23, x23, x25")
        for r in range(1, 17):
            a(f"mv x{r}, x0")
        a("nn.lw w0", "nn.lw w1", "nn.lw w2", "nn.lw w3", "nn.lw a0")
        loop(a, 0, plan.k_iters, inner)
        emit_requant(a, range(1, 17), q, 17, 18)
        for p in range(4):
            emit_pack_store(a, [1 + 4 * p + f for f in range(4)], po, 19 + p, aligned[p])

    loop(asm, 1, n_fb, block)


def _unpack(asm: Asm, dst: int, src: int, bits: int, q: int, signed: bool) -> None:
    """Container ``q`` (four ``bits``-wide fields) of ``src`` into 8-bit lanes of ``dst``."""
    ext = "p.extract" if signed else "p.extractu"
    off = 4 * q * bits
    if UNPACK_BYTE_ISOLATE.get(bits):
        asm(f"srli x31, x{src}, {off}", "andi x31, x31, 255")
        src, off = 31, 0
    asm(f"{ext} x{dst}, x{src}, {bits}, {off}")
    for lane in range(1, 4):
        asm(f"{ext} x27, x{src}, {bits}, {off + lane * bits}", f"p.insert x{dst}, x27, 8, {8 * lane}")


def _pv_op(cfg: KernelConfig) -> str:
    if cfg.act.signed:
        return "pv.sdotsp.b"
    return "pv.sdotusp.b" if cfg.weight.signed else "pv.sdotup.b"


def emit_generic(asm: Asm, cfg: KernelConfig, plan: KernelPlan, bufs, pixels, f0: int,
                 nf: int, plain_sdotp: bool) -> None:
    """All filters ``f0 .. f0+nf-1`` against up to two im2col buffers."""
    P = len(bufs)
    assert 1 <= P <= 2 and len(pixels) == P
    po = cfg.quant.out.bits
    pa, pw = cfg.act.bits, cfg.weight.bits
    full, left = divmod(nf, 4)
    if full:
        _generic_blocks(asm, cfg, plan, bufs, pixels, f0, 4, full, plain_sdotp, pa, pw, po)
    if left:
        _generic_blocks(asm, cfg, plan, bufs, pixels, f0 + 4 * full, left, 1, plain_sdotp,
                        pa, pw, po)


def _generic_blocks(asm, cfg, plan, bufs, pixels, f0, F, nblk, plain, pa, pw, po):
    P = len(bufs)
    q = cfg.quant
    nb = F * po // 8
    lay = plan.layout
    for i in range(F):
        asm(f"li x{9 + i}, {lay.weights + (f0 + i) * plan.fsize:#x}")
    aligned = []
    for p in range(P):
        a = out_addr(cfg, plan, pixels[p], f0)
        asm(f"li x{28 + p}, {a:#x}")
        aligned.append(a % nb == 0)
    if nblk > 1:
        asm(f"li x30, {(4 - 1) * plan.fsize}")
    accs = [[1 + 4 * p + f for f in range(F)] for p in range(P)]
    ratio = pa // pw
    pv = _pv_op(cfg)

    def chunk_plain(a: Asm):
        for i in range(F):
            a(f"p.lw x{15 + i}, 4(x{9 + i}!)")
        for s in range(ratio):
            for p in range(P):
                a(f"p.lw x{19 + p}, 4(x{13 + p}!)")
            for p in range(P):
                for i in range(F):
                    last = p == P - 1 and i == F - 1
                    a(f"sdotp{'.c' if last else ''} x{accs[p][i]}, x{19 + p}, x{15 + i}")

    def chunk_sw(a: Asm):
        for i in range(F):
            a(f"p.lw x{15 + i}, 4(x{9 + i}!)")
        per_aword = 8 // pa
        for c in range(8 // pw):
            sub = c % per_aword
            if sub == 0:
                for p in range(P):
                    a(f"p.lw x{19 + p}, 4(x{13 + p}!)")
            if pw == 8:
                wregs = [15 + i for i in range(F)]
            else:
                wregs = [21 + i for i in range(F)]
                for i in range(F):
                    _unpack(a, 21 + i, 15 + i, pw, c, cfg.weight.signed)
            if pa == 8:
                aregs = [19 + p for p in range(P)]
            else:
                aregs = [25 + p for p in range(P)]
                for p in range(P):
                    _unpack(a, 25 + p, 19 + p, pa, sub, cfg.act.signed)
            for p in range(P):
                for i in range(F):
                    a(f"{pv} x{accs[p][i]}, x{aregs[p]}, x{wregs[i]}")

    def block(a: Asm):
        for p in range(P):
            a(f"li x{13 + p}, {bufs[p]:#x}")
        for row in accs:
            for r in row:
                a(f"mv x{r}, x0")
        loop(a, 0, plan.chunks, chunk_plain if plain else chunk_sw)
        a(f"li x15, {q.m}", f"li x16, {q.b}")
        flat = [r for row in accs for r in row]
        emit_requant(a, flat, q, 15, 16)
        for p in range(P):
            emit_pack_store(a, accs[p], po, 28 + p, aligned[p])
        if nblk > 1:
            for i in range(F):
                a(f"add x{9 + i}, x{9 + i}, x30")

    loop(asm, 1, nblk, block)


def core_csrs(cfg: KernelConfig) -> list[str]:
    """CSRs a core program must initialise for its mode."""
    if cfg.mode == "xpulpv2":
        return []
    names = ["simd_fmt", "simd_sign", "mix_skip"]
    if cfg.unroll == "4x4":
        names += ["macload_en", "w_stride", "w_skip", "w_rollback", "a_stride", "a_skip",
                  "a_rollback"]
    assert all(n in CSRS for n in names)
    return names
