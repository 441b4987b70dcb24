"""Double-buffered DMA cost model for L2 <-> L1 transfers."""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class DmaModel:
    bandwidth: int = 8
    startup: int = 10

    def cycles(self, nbytes: int) -> int:
        if nbytes <= 0:
            return 0
        return self.startup + -(-nbytes // self.bandwidth)


def pipeline_cycles(plan, compute, dma: DmaModel) -> tuple[int, int]:
    """Layer cycles with transfers overlapped with compute.

    While tile ``i`` computes, the DMA fetches tile ``i+1`` and writes back tile
    ``i-1``; each step costs the slower of the two.  Returns ``(total, dma busy)``.
    """
    tiles = plan.tiles
    n = len(tiles)

    def load(i):
        t = tiles[i]
        return dma.cycles(t.in_bytes) + (dma.cycles(t.w_bytes) if t.loads_weights else 0)

    total = load(0)
    busy = total
    for i in range(n):
        bg = (load(i + 1) if i + 1 < n else 0) + (dma.cycles(tiles[i - 1].out_bytes) if i else 0)
        busy += bg
        total += max(compute[i], bg)
    tail = dma.cycles(tiles[-1].out_bytes)
    return total + tail, busy + tail
