"""Whole-layer programs: per-core partition, loader and result extraction."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..engine import Tcdm, functional_only_run, run_cluster
from ..engine.report import CycleReport
from ..isa import Program
from ..tensor import LayerSpec, PackedTensor, pack, unpack
from .emit import Asm
from .geometry import ConvGeometry, KernelConfig, KernelPlan, plan_matmul
from .im2col import emit_im2col_pixel
from .matmul import core_csrs, emit_csr_setup, emit_flexv_main, emit_generic
from .quantize import check_quant_range


@dataclass(frozen=True)
class LayerBuild:
    cfg: KernelConfig
    plan: KernelPlan
    programs: tuple

    @property
    def macs(self) -> int:
        return self.cfg.geom.macs


def _pairs(pix, bufs):
    for i in range(0, len(pix), 2):
        yield bufs[i:i + 2][:len(pix[i:i + 2])], pix[i:i + 2]


def emit_matmul(cfg: KernelConfig, plan: KernelPlan | None = None, core: int = 0) -> Program:
    """Complete program for one core: im2col, MatMul, requantization, barrier."""
    plan = plan or plan_matmul(cfg)
    check_quant_range(cfg, plan.kpad)
    g, pa = cfg.geom, cfg.act.bits
    lo, hi = plan.partition[core]
    bufs = plan.layout.buffers[core]
    nbuf = len(bufs)
    asm = Asm(f"c{core}_")
    if hi > lo:
        emit_csr_setup(asm, plan, core_csrs(cfg))
    mac_load = cfg.mode == "flexv" and cfg.unroll == "4x4"
    plain = cfg.mode == "flexv"
    n_fb, left = divmod(g.cout, 4)
    for start in range(lo, hi, nbuf):
        pix = list(range(start, min(start + nbuf, hi)))
        asm.comment(f"pixels {pix[0]}..{pix[-1]}")
        for p, buf in zip(pix, bufs):
            emit_im2col_pixel(asm, g, pa, p, plan.layout.input, buf)
        if mac_load and len(pix) == 4:
            if n_fb:
                emit_flexv_main(asm, cfg, plan, bufs, pix, n_fb)
            if left:
                for b, ps in _pairs(pix, bufs):
                    emit_generic(asm, cfg, plan, b, ps, 4 * n_fb, left, plain)
        else:
            for b, ps in _pairs(pix, bufs):
                emit_generic(asm, cfg, plan, b, ps, 0, g.cout, plain)
    asm("barrier")
    return asm.program()


def emit_leftovers(cfg: KernelConfig, core: int = 0) -> Program:
    """Only the leftover passes (remainder filters and pixels) of ``core``'s program."""
    plan = plan_matmul(cfg)
    g = cfg.geom
    lo, hi = plan.partition[core]
    bufs = plan.layout.buffers[core]
    nbuf = len(bufs)
    n_fb, left = divmod(g.cout, 4)
    F, P = cfg.main_unroll
    asm = Asm(f"lo{core}_")
    plain = cfg.mode == "flexv"
    for start in range(lo, hi, nbuf):
        pix = list(range(start, min(start + nbuf, hi)))
        full_group = len(pix) == nbuf
        if full_group and left:
            for b, ps in _pairs(pix, bufs):
                emit_generic(asm, cfg, plan, b, ps, 4 * n_fb, left, plain)
        elif not full_group:
            for b, ps in _pairs(pix, bufs):
                emit_generic(asm, cfg, plan, b, ps, 0, g.cout, plain)
    return asm.program()


def build_layer(cfg: KernelConfig) -> LayerBuild:
    plan = plan_matmul(cfg)
    progs = tuple(emit_matmul(cfg, plan, c) for c in range(cfg.cores))
    return LayerBuild(cfg, plan, progs)


def weight_image(cfg: KernelConfig, plan: KernelPlan, weights: PackedTensor) -> bytes:
    """Filter-major weights, each filter row zero-padded to the chunk size."""
    g = cfg.geom
    vals = unpack(weights).reshape(g.cout, g.k)
    padded = np.zeros((g.cout, plan.kpad), np.int64)
    padded[:, :g.k] = vals
    return pack(padded.reshape(-1), cfg.weight).data


def load_layer(build: LayerBuild, tcdm: Tcdm, input: PackedTensor, weights: PackedTensor) -> None:
    lay = build.plan.layout
    if len(input.data) != lay.input_bytes:
        raise ValueError(f"input has {len(input.data)} bytes, layer expects {lay.input_bytes}")
    tcdm.write(lay.input, input.data)
    tcdm.write(lay.weights, weight_image(build.cfg, build.plan, weights))


def read_output(build: LayerBuild, tcdm: Tcdm) -> PackedTensor:
    g, lay = build.cfg.geom, build.plan.layout
    data = tcdm.read(lay.output, lay.output_bytes)
    return PackedTensor((g.out_h, g.out_w, g.cout), build.cfg.quant.out, data)


def run_layer(cfg_or_layer, input: PackedTensor, weights: PackedTensor, *, timing=None,
              functional: bool = False, build: LayerBuild | None = None, **cfg_kw):
    """Simulate one layer; returns ``(output tensor, CycleReport or None)``."""
    cfg = cfg_or_layer
    if isinstance(cfg, LayerSpec):
        cfg = KernelConfig.from_layer(cfg, **cfg_kw)
    build = build or build_layer(cfg)
    tcdm = Tcdm()
    load_layer(build, tcdm, input, weights)
    if functional:
        functional_only_run(list(build.programs), cfg.cores, tcdm)
        return read_output(build, tcdm), None
    report, _ = run_cluster(list(build.programs), cfg.cores, tcdm, timing=timing,
                            macs=cfg.geom.macs)
    return read_output(build, tcdm), report


def geometry_tensors(geom: ConvGeometry, cfg: KernelConfig, rng: np.random.Generator):
    """Random input and weights shaped for ``geom``."""
    from ..tensor import random_tensor
    x = random_tensor(rng, (geom.in_h, geom.in_w, geom.cin), cfg.act)
    w = random_tensor(rng, (geom.cout, geom.kh, geom.kw, geom.cin), cfg.weight)
    return x, w
