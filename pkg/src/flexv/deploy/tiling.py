"""L2 -> L1 tiling: a branch-and-bound search over output tile shapes.

A tile covers ``th x tw`` output pixels and ``tc`` output channels; input
channels are never split.  Everything resident at once must fit the L1
budget: two input tiles and two output tiles (double buffering, one of each
when a single tile covers the layer), the weights of the current channel block
(two copies when the layer has several channel blocks) and the im2col buffers
of the cores that receive rows of the tile.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..kernels.geometry import ConvGeometry, pad_k
from ..tensor import LayerSpec

DEFAULT_BUDGET = 64 * 1024


class TilingError(ValueError):
    pass


@dataclass(frozen=True)
class Tile:
    oy: int
    ox: int
    oc: int
    th: int
    tw: int
    tc: int
    iy: int
    ix: int
    geom: ConvGeometry
    in_bytes: int
    w_bytes: int
    out_bytes: int
    loads_weights: bool


@dataclass(frozen=True)
class TilePlan:
    layer: LayerSpec
    th: int
    tw: int
    tc: int
    cin: int
    budget: int
    l1_bytes: int
    tiles: tuple
    mode: str = "flexv"
    cores: int = 8
    slots: int = 2

    @property
    def n_tiles(self) -> int:
        return len(self.tiles)

    @property
    def transfers(self) -> list:
        """``(tile index, direction, bytes)`` for every DMA transfer."""
        out = []
        for i, t in enumerate(self.tiles):
            out.append((i, "in", t.in_bytes))
            if t.loads_weights:
                out.append((i, "weights", t.w_bytes))
            out.append((i, "out", t.out_bytes))
        return out


def aligned_cin(layer: LayerSpec) -> int:
    """Smallest channel count >= cin whose rows are byte-aligned for both operands."""
    c = layer.cin
    while (c * layer.act.bits) % 8 or (c * layer.weight.bits) % 8:
        c += 1
    return c


def _n_bufs(mode: str) -> int:
    return 4 if mode == "flexv" else 2


def _in_extent(n: int, s: int, k: int, size: int) -> int:
    return min(size, (n - 1) * s + k)


def tile_bytes(layer: LayerSpec, th: int, tw: int, tc: int, cin: int | None = None,
               mode: str = "flexv", cores: int = 8) -> int:
    """Worst-case resident L1 bytes for a tile shape."""
    cin = aligned_cin(layer) if cin is None else cin
    pa, pw, po = layer.act.bits, layer.weight.bits, layer.quant.out.bits
    ih = _in_extent(th, layer.stride, layer.kh, layer.in_h)
    iw = _in_extent(tw, layer.stride, layer.kw, layer.in_w)
    kpad = pad_k(layer.kh * layer.kw * cin, pw)
    in_b = ih * iw * cin * pa // 8
    w_b = tc * kpad * pw // 8
    out_b = th * tw * tc * po // 8
    bufs = min(cores, th) * _n_bufs(mode) * kpad * pa // 8
    w_slots = 1 if tc >= layer.cout else 2
    io_slots = 1 if (th >= layer.out_h and tw >= layer.out_w and w_slots == 1) else 2
    return io_slots * (in_b + out_b) + w_slots * w_b + bufs


def _tc_candidates(layer: LayerSpec) -> list[int]:
    po = layer.quant.out.bits
    step = 8 // math.gcd(po, 8)
    cands = {layer.cout}
    cands.update(range(step, layer.cout, step))
    return sorted(cands, reverse=True)


def solve_tiling(layer: LayerSpec, l1_budget: int = DEFAULT_BUDGET, mode: str = "flexv",
                 cores: int = 8) -> TilePlan:
    """Largest output tile that fits; ties go to fewer tiles, then wider channel blocks."""
    cin = aligned_cin(layer)
    oh, ow = layer.out_h, layer.out_w
    best, best_key = None, None

    def fits(th, tw, tc):
        return tile_bytes(layer, th, tw, tc, cin, mode, cores) <= l1_budget

    if fits(oh, ow, layer.cout):
        return make_plan(layer, oh, ow, layer.cout, l1_budget, mode, cores)
    # below a whole-layer tile the footprint is monotone in every dimension
    for tc in _tc_candidates(layer):
        if best_key and tc * oh * ow < best_key[0]:
            break
        for th in range(oh, 0, -1):
            if best_key and tc * th * ow < best_key[0]:
                break
            if not fits(th, 1, tc):
                continue
            lo, hi = 1, ow
            while lo < hi:
                mid = (lo + hi + 1) // 2
                if fits(th, mid, tc):
                    lo = mid
                else:
                    hi = mid - 1
            tw = lo
            n = math.ceil(oh / th) * math.ceil(ow / tw) * math.ceil(layer.cout / tc)
            key = (th * tw * tc, -n, tc)
            if best_key is None or key > best_key:
                best, best_key = (th, tw, tc), key
    if best is None:
        raise TilingError(
            f"no tile of {layer.in_h}x{layer.in_w}x{layer.cin}->{layer.cout} fits "
            f"{l1_budget} bytes (minimum {tile_bytes(layer, 1, 1, _tc_candidates(layer)[-1], cin, mode, cores)})")
    th, tw, tc = best
    return make_plan(layer, th, tw, tc, l1_budget, mode, cores)


def tile_geometry(layer: LayerSpec, oy: int, ox: int, th: int, tw: int, tc: int, cin: int):
    s, p = layer.stride, layer.padding
    y0, y1 = oy * s - p, (oy + th - 1) * s - p + layer.kh
    x0, x1 = ox * s - p, (ox + tw - 1) * s - p + layer.kw
    iy, iy_end = max(0, y0), min(layer.in_h, y1)
    ix, ix_end = max(0, x0), min(layer.in_w, x1)
    if iy_end <= iy or ix_end <= ix:
        raise TilingError("tile lies entirely in the padding")
    g = ConvGeometry(iy_end - iy, ix_end - ix, cin, tc, layer.kh, layer.kw, s,
                     iy - y0, ix - x0, y1 - iy_end, x1 - ix_end)
    assert g.out_h == th and g.out_w == tw, (g, th, tw)
    return iy, ix, g


def make_plan(layer: LayerSpec, th: int, tw: int, tc: int, budget: int = DEFAULT_BUDGET,
              mode: str = "flexv", cores: int = 8) -> TilePlan:
    cin = aligned_cin(layer)
    pa, pw, po = layer.act.bits, layer.weight.bits, layer.quant.out.bits
    kpad = pad_k(layer.kh * layer.kw * cin, pw)
    tiles = []
    for oc in range(0, layer.cout, tc):
        tcc = min(tc, layer.cout - oc)
        first = True
        for oy in range(0, layer.out_h, th):
            thh = min(th, layer.out_h - oy)
            for ox in range(0, layer.out_w, tw):
                tww = min(tw, layer.out_w - ox)
                iy, ix, g = tile_geometry(layer, oy, ox, thh, tww, tcc, cin)
                tiles.append(Tile(oy, ox, oc, thh, tww, tcc, iy, ix, g,
                                  g.in_h * g.in_w * cin * pa // 8, tcc * kpad * pw // 8,
                                  thh * tww * tcc * po // 8, first))
                first = False
    l1 = tile_bytes(layer, th, tw, tc, cin, mode, cores)
    return TilePlan(layer, th, tw, tc, cin, budget, l1, tuple(tiles), mode, cores)


def check_plan(plan: TilePlan) -> None:
    """Fit, alignment and exact-coverage checks; raises TilingError on violation."""
    layer = plan.layer
    if plan.l1_bytes > plan.budget:
        raise TilingError(f"plan needs {plan.l1_bytes} bytes, budget {plan.budget}")
    if (plan.cin * layer.act.bits) % 8 or (plan.cin * layer.weight.bits) % 8:
        raise TilingError("input channel rows are not byte-aligned")
    cover = np.zeros((layer.out_h, layer.out_w, layer.cout), np.int32)
    for t in plan.tiles:
        if (t.tc * layer.quant.out.bits) % 8:
            raise TilingError(f"output tile at {t.oy},{t.ox},{t.oc} is not byte-aligned")
        if tile_bytes(layer, t.th, t.tw, t.tc, plan.cin, plan.mode, plan.cores) > plan.budget:
            raise TilingError(f"tile at {t.oy},{t.ox},{t.oc} overflows the budget")
        cover[t.oy:t.oy + t.th, t.ox:t.ox + t.tw, t.oc:t.oc + t.tc] += 1
        g = t.geom
        if (g.out_h, g.out_w, g.cout) != (t.th, t.tw, t.tc):
            raise TilingError("tile geometry does not produce its output window")
        s = layer.stride
        if t.iy != max(0, t.oy * s - layer.padding) or t.ix != max(0, t.ox * s - layer.padding):
            raise TilingError("input window misplaced")
    if cover.min() != 1 or cover.max() != 1:
        raise TilingError("tiles do not cover the output exactly once")
