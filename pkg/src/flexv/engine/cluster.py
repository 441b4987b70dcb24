"""Schedulers: timed cluster co-simulation and the functional fast path.

Cores advance independently through instructions that do not touch the
TCDM.  Memory accesses are arbitrated in global time order: a heap keyed by
``(cycle, rotating priority)`` decides which core may access a bank next, and
a bank already granted in the same cycle pushes the later request back by one
cycle.
"""
from __future__ import annotations

import heapq
from typing import Sequence

from ..isa import Program
from .core import K_BARRIER, K_BRANCH, CoreState
from .memory import Tcdm
from .report import CycleReport
from .timing import TimingConfig, load_timing


class SimulationError(Exception):
    pass


class WatchdogError(SimulationError):
    pass


class BarrierDeadlock(SimulationError):
    pass


DEFAULT_LIMIT = 200_000_000


def _hwloop(c: CoreState, npc: int) -> int:
    if npc == c.e0 and c.c0:
        if c.c0 > 1:
            c.c0 -= 1
            return c.s0
        c.c0 = 0
    if npc == c.e1 and c.c1:
        if c.c1 > 1:
            c.c1 -= 1
            return c.s1
        c.c1 = 0
    return npc


def _make_cores(programs, tcdm, n_cores):
    if isinstance(programs, Program):
        programs = [programs] * n_cores
    if len(programs) != n_cores:
        raise ValueError(f"{len(programs)} programs for {n_cores} cores")
    cores = []
    for i, p in enumerate(programs):
        c = CoreState(i, tcdm)
        c.bind(p)
        cores.append(c)
    return cores


def _slice(c: CoreState, top, n_cores, bank_t, tm: TimingConfig, limit):
    """Run core ``c`` until it must yield to the core at heap head ``top``.

    Returns "yield", "barrier" or "done".
    """
    code, reads, kind, ismem, n = c.code, c.reads, c.kind, c.ismem, c.n
    lu, bp, iss, hb = tm.load_use, tm.branch_taken, tm.issue, tm.hwloop_backedge
    contention = tm.contention
    pc, t = c.pc, c.t
    first = True
    cid = c.id
    while True:
        if pc >= n:
            c.pc, c.t = pc, t
            return "done"
        if ismem[pc] and not first and top is not None:
            tt, tp = top
            if t > tt or (t == tt and (cid - t) % n_cores > tp):
                c.pc, c.t = pc, t
                return "yield"
        first = False
        ld = c.ld
        if ld >= 0:
            c.ld = -1
            if ld in reads[pc]:
                t += lu
                c.stall_load_use += lu
        k = kind[pc]
        if k == K_BARRIER:
            c.pc, c.t = pc, t
            return "barrier"
        c.bank = -1
        c.pc = pc
        npc = code[pc]()
        b = c.bank
        if b >= 0 and contention:
            bt = bank_t[b]
            if bt >= t:
                d = bt + 1 - t
                t += d
                c.stall_bank += d
            bank_t[b] = t
        t += iss
        c.instructions += 1
        if k == K_BRANCH and npc != pc + 1:
            t += bp
            c.stall_branch += bp
        if npc == c.e0 or npc == c.e1:
            e = npc
            npc = _hwloop(c, npc)
            if npc != e:
                t += hb
        pc = npc
        if t > limit:
            c.pc, c.t = pc, t
            raise WatchdogError(f"core {cid} exceeded {limit} cycles")


def run_cluster(programs, n_cores: int = 8, tcdm: Tcdm | None = None,
                timing: TimingConfig | None = None, limit: int = DEFAULT_LIMIT,
                setup=None, macs: int | None = None) -> tuple[CycleReport, list]:
    """Co-simulate ``n_cores`` cores over a shared TCDM.

    ``programs`` is one Program for all cores or one per core.  ``setup`` is an
    optional callback ``setup(cores)`` run before simulation (e.g. to seed
    registers).  Returns the report and the final core states.
    """
    tm = timing or load_timing()
    tcdm = tcdm or Tcdm()
    cores = _make_cores(programs, tcdm, n_cores)
    for p in ({id(c.program): c.program for c in cores}).values():
        tcdm.load_segments(p.data)
    if setup:
        setup(cores)
    bank_t = [-1] * 16
    heap = [(0, c.id % n_cores, c.id) for c in cores]
    heapq.heapify(heap)
    waiting: dict[int, int] = {}
    finished = 0
    while heap:
        _, _, cid = heapq.heappop(heap)
        c = cores[cid]
        top = (heap[0][0], heap[0][1]) if heap else None
        st = _slice(c, top, n_cores, bank_t, tm, limit)
        if st == "yield":
            heapq.heappush(heap, (c.t, (cid - c.t) % n_cores, cid))
        elif st == "done":
            c.done = True
            finished += 1
            if waiting:
                raise BarrierDeadlock(f"core {cid} finished while cores {sorted(waiting)} "
                                      "wait at a barrier")
        else:
            waiting[cid] = c.t
            if len(waiting) == n_cores - finished:
                if finished:
                    raise BarrierDeadlock("barrier reached by fewer cores than the cluster size")
                release = max(waiting.values()) + tm.barrier
                for wid, arr in waiting.items():
                    w = cores[wid]
                    w.stall_barrier += release - arr - 1
                    w.instructions += 1
                    w.t = release
                    w.pc += 1
                    if w.pc == w.e0 or w.pc == w.e1:
                        w.pc = _hwloop(w, w.pc)
                    heapq.heappush(heap, (release, (wid - release) % n_cores, wid))
                waiting.clear()
    if waiting:
        raise BarrierDeadlock("cores left waiting at a barrier")
    return _report(cores, tm, macs), cores


def _report(cores, tm, macs):
    per_core = [{"core": c.id, "cycles": c.t + tm.pipeline_fill, "instructions": c.instructions,
                 "stalls": c.stalls(), "lane_macs": c.lane_macs} for c in cores]
    total = max(pc["cycles"] for pc in per_core)
    return CycleReport.build(total, per_core, macs)


def run_core(program: Program, core: int = 0, tcdm: Tcdm | None = None,
             timing: TimingConfig | None = None, limit: int = DEFAULT_LIMIT, setup=None):
    """Timed single-core run; ``core`` sets ``mhartid``."""
    tcdm = tcdm or Tcdm()
    tm = timing or load_timing()
    c = CoreState(core, tcdm)
    c.bind(program)
    tcdm.load_segments(program.data)
    if setup:
        setup([c])
    bank_t = [-1] * 16
    while True:
        st = _slice(c, None, 1, bank_t, tm, limit)
        if st == "done":
            break
        arr = c.t
        c.t = arr + tm.barrier
        c.stall_barrier += tm.barrier - 1
        c.instructions += 1
        c.pc += 1
        if c.pc == c.e0 or c.pc == c.e1:
            c.pc = _hwloop(c, c.pc)
    return _report([c], tm, None), c


def functional_only_run(programs, n_cores: int = 1, tcdm: Tcdm | None = None,
                        setup=None, limit: int = DEFAULT_LIMIT) -> Tcdm:
    """Architectural execution with no timing; cores run phase by phase between barriers."""
    tcdm = tcdm or Tcdm()
    cores = _make_cores(programs, tcdm, n_cores)
    for p in ({id(c.program): c.program for c in cores}).values():
        tcdm.load_segments(p.data)
    if setup:
        setup(cores)
    active = list(cores)
    steps = 0
    while active:
        at_barrier = []
        for c in active:
            code, kind, n, pc = c.code, c.kind, c.n, c.pc
            while pc < n:
                if kind[pc] == K_BARRIER:
                    break
                npc = code[pc]()
                if npc == c.e0 or npc == c.e1:
                    npc = _hwloop(c, npc)
                pc = npc
                steps += 1
                if steps > limit:
                    raise WatchdogError(f"functional run exceeded {limit} steps")
            c.pc = pc
            if pc < n:
                at_barrier.append(c)
        if at_barrier and len(at_barrier) != len(active):
            raise BarrierDeadlock("barrier reached by a subset of the running cores")
        for c in at_barrier:
            c.pc += 1
            if c.pc == c.e0 or c.pc == c.e1:
                c.pc = _hwloop(c, c.pc)
        active = at_barrier
    return tcdm
