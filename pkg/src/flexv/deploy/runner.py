"""Layer-by-layer network execution over tiled kernels.

Each layer is tiled into L1, every tile becomes one cluster kernel call, and
the DMA model overlaps transfers with compute.  Kernel timing does not depend
on data, so tiles with identical configurations are simulated once and the
result reused.  Depthwise layers are run as independent single-channel
convolutions (one per channel), which keeps them inside the conv kernels.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..engine.report import CycleReport, merge_reports
from ..kernels import KernelConfig, build_layer, run_layer
from ..tensor import PackedTensor, pack, random_tensor
from .dma import DmaModel, pipeline_cycles
from .network import (NetworkSpec, ResolvedLayer, depthwise_channel, depthwise_filter,
                      memory_footprint,
                      network_tensors, reference_network)
from .tiling import DEFAULT_BUDGET, TilePlan, check_plan, solve_tiling


@dataclass
class LayerResult:
    name: str
    kind: str
    macs: int
    cycles: int
    compute_cycles: int
    dma_cycles: int
    n_tiles: int
    tile: tuple
    l1_bytes: int
    report: CycleReport

    @property
    def mac_per_cycle(self) -> float:
        return self.macs / self.cycles if self.cycles else 0.0

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind, "macs": self.macs, "cycles": self.cycles,
                "compute_cycles": self.compute_cycles, "dma_cycles": self.dma_cycles,
                "mac_per_cycle": self.mac_per_cycle, "n_tiles": self.n_tiles,
                "tile": list(self.tile), "l1_bytes": self.l1_bytes,
                "report": self.report.to_dict()}


@dataclass
class NetworkResult:
    name: str
    mode: str
    cores: int
    layers: list
    footprint: int
    output: PackedTensor | None = None
    bit_exact: bool | None = None
    mismatches: list = field(default_factory=list)

    @property
    def cycles(self) -> int:
        return sum(r.cycles for r in self.layers)

    @property
    def macs(self) -> int:
        return sum(r.macs for r in self.layers)

    @property
    def mac_per_cycle(self) -> float:
        return self.macs / self.cycles if self.cycles else 0.0

    def to_dict(self) -> dict:
        return {"schema_version": 1, "network": self.name, "mode": self.mode,
                "cores": self.cores, "model": "geometry-proxy", "cycles": self.cycles,
                "macs": self.macs, "mac_per_cycle": self.mac_per_cycle,
                "footprint_bytes": self.footprint, "bit_exact": self.bit_exact,
                "mismatches": self.mismatches,
                "layers": [r.to_dict() for r in self.layers]}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


class TileCache:
    """CycleReports of already simulated kernel configurations."""

    def __init__(self):
        self.reports = {}
        self.hits = 0

    def get(self, cfg):
        r = self.reports.get(cfg)
        if r is not None:
            self.hits += 1
        return r


def _pad_channels(v: np.ndarray, c: int) -> np.ndarray:
    if v.shape[-1] == c:
        return v
    pad = [(0, 0)] * (v.ndim - 1) + [(0, c - v.shape[-1])]
    return np.pad(v, pad)


def _tile_operands(plan: TilePlan, tile, xv: np.ndarray, wv: np.ndarray, act, weight):
    g = tile.geom
    xs = _pad_channels(xv[tile.iy:tile.iy + g.in_h, tile.ix:tile.ix + g.in_w], plan.cin)
    ws = _pad_channels(wv[tile.oc:tile.oc + tile.tc], plan.cin)
    return pack(xs.reshape(-1), act, xs.shape), pack(ws.reshape(-1), weight, ws.shape)


def run_conv(spec, plan: TilePlan, x: PackedTensor | None, w: PackedTensor | None, *,
             mode: str, cores: int, timing, cache: TileCache, rng=None):
    """All tiles of one convolution.  Returns (output or None, per-tile reports)."""
    exact = x is not None
    xv = x.values() if exact else None
    wv = w.values() if exact else None
    out = np.zeros(spec.output_shape, np.int64) if exact else None
    reports = []
    for t in plan.tiles:
        cfg = KernelConfig(t.geom, spec.act, spec.weight, spec.quant, mode, cores=cores)
        rep = cache.get(cfg)
        if exact:
            xt, wt = _tile_operands(plan, t, xv, wv, spec.act, spec.weight)
        elif rep is None:
            g = t.geom
            xt = random_tensor(rng, (g.in_h, g.in_w, g.cin), spec.act)
            wt = random_tensor(rng, (g.cout, g.kh, g.kw, g.cin), spec.weight)
        if rep is None:
            y, rep = run_layer(cfg, xt, wt, timing=timing)
            cache.reports[cfg] = rep
        elif exact:
            y, _ = run_layer(cfg, xt, wt, functional=True, build=_build(cache, cfg))
        if exact:
            out[t.oy:t.oy + t.th, t.ox:t.ox + t.tw, t.oc:t.oc + t.tc] = y.values()
        reports.append(rep)
    if exact:
        out = pack(out.reshape(-1), spec.quant.out, spec.output_shape)
    return out, reports


def _build(cache: TileCache, cfg):
    b = getattr(cache, "builds", None)
    if b is None:
        b = cache.builds = {}
    if cfg not in b:
        b[cfg] = build_layer(cfg)
    return b[cfg]


def run_layer_tiled(r: ResolvedLayer, x, w, *, mode="flexv", cores=8, budget=DEFAULT_BUDGET,
                    dma: DmaModel | None = None, timing=None, cache=None, rng=None):
    """One network layer; ``x``/``w`` of None selects the performance-only path."""
    dma = dma or DmaModel()
    cache = cache or TileCache()
    rng = rng if rng is not None else np.random.default_rng(0)
    if r.kind == "depthwise":
        spec = r.channel_spec()
        plan = solve_tiling(spec, budget, mode, cores)
        check_plan(plan)
        chans = r.spec.cin
        if x is not None:
            outs = []
            for c in range(chans):
                y, reps = run_conv(spec, plan, depthwise_channel(x, c), depthwise_filter(w, c),
                                   mode=mode, cores=cores, timing=timing, cache=cache)
                outs.append(y.values())
            v = np.concatenate(outs, axis=-1)
            y = pack(v.reshape(-1), r.spec.quant.out, v.shape)
        else:
            y, reps = run_conv(spec, plan, None, None, mode=mode, cores=cores, timing=timing,
                               cache=cache, rng=rng)
    else:
        plan = solve_tiling(r.spec, budget, mode, cores)
        check_plan(plan)
        chans = 1
        y, reps = run_conv(r.spec, plan, x, w, mode=mode, cores=cores, timing=timing,
                           cache=cache, rng=rng)
    cycles, busy = pipeline_cycles(plan, [rep.total_cycles for rep in reps], dma)
    compute = sum(rep.total_cycles for rep in reps)
    report = merge_reports(reps * chans, macs=r.macs)
    res = LayerResult(r.name, r.kind, r.macs, cycles * chans, compute * chans, busy * chans,
                      plan.n_tiles * chans, (plan.th, plan.tw, plan.tc), plan.l1_bytes, report)
    return y, res


def run_network(net: NetworkSpec, mode: str = "flexv", cores: int = 8,
                budget: int = DEFAULT_BUDGET, dma: DmaModel | None = None, exact: bool = True,
                timing=None, seed: int | None = None, cache: TileCache | None = None
                ) -> NetworkResult:
    """Execute ``net`` tile by tile.

    With ``exact`` every tile runs on the chained activations and the final
    tensor is compared with the golden network; otherwise only one tile per
    distinct kernel configuration is simulated, on random data.  A ``cache``
    may be shared between runs that use the same timing.
    """
    dma = dma or DmaModel()
    cache = cache if cache is not None else TileCache()
    resolved = net.resolve()
    rng = np.random.default_rng(net.seed if seed is None else seed)
    acts, weights = {}, {}
    if exact:
        x0, weights = network_tensors(net, seed)
        acts[None] = x0
    results, last = [], None
    for r in resolved:
        xin = acts.get(r.source) if exact else None
        y, res = run_layer_tiled(r, xin, weights.get(r.name), mode=mode, cores=cores,
                                 budget=budget, dma=dma, timing=timing, cache=cache, rng=rng)
        if exact:
            acts[r.name] = y
        results.append(res)
        last = r.name
    out = NetworkResult(net.name, mode, cores, results, memory_footprint(net))
    if exact:
        out.output = acts[last]
        gold = reference_network(net, acts[None], weights)
        for r in resolved:
            a, b = acts[r.name].data, gold[r.name].data
            if a != b:
                i = next(k for k in range(min(len(a), len(b))) if a[k] != b[k])
                out.mismatches.append({"layer": r.name, "byte": i, "got": a[i],
                                       "expected": b[i]})
        out.bit_exact = not out.mismatches
    return out
