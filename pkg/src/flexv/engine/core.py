"""Per-core architectural state and instruction compilation.

Each instruction is compiled once into a zero-argument closure bound to one
core.  The closure performs the architectural update and returns the next pc.
Memory-touching closures record the accessed bank in ``core.bank`` and loads
record their destination in ``core.ld``; the schedulers in ``cluster`` turn
those into stalls.
"""
from __future__ import annotations

from operator import mul

from ..datapath import lanes
from ..isa import (CSR_BY_ADDR, NN_BASE, CsrError, CsrFile, IllegalInstruction,
                   Program, decode, decode_simd_fmt)
from ..mlc import MlcChannelState
from .memory import MemoryFault, Tcdm

M32 = 0xFFFFFFFF
SIGN = 0x80000000

# static instruction classes used by the schedulers
K_PLAIN, K_BRANCH, K_BARRIER = 0, 1, 2


def make_dot(pa, a_signed, pw, w_signed):
    """Specialised ``(a_word, w_word, acc, count) -> acc'`` for one SIMD format."""
    ratio = pa // pw
    n = 32 // pa
    if ratio == 1:
        def dot(a, w, acc, count):
            v = acc + sum(map(mul, lanes(a, pa, a_signed), lanes(w, pw, w_signed)))
            return ((v + SIGN) & M32) - SIGN
        return dot
    cache: dict = {}

    def dot(a, w, acc, count):
        key = (w << 2) | (count % ratio)
        ws = cache.get(key)
        if ws is None:
            g = count % ratio
            ws = cache[key] = lanes(w, pw, w_signed)[g * n:(g + 1) * n]
            if len(cache) > 1 << 20:
                cache.clear()
        v = acc + sum(map(mul, lanes(a, pa, a_signed), ws))
        return ((v + SIGN) & M32) - SIGN
    return dot


class CoreState:
    """Registers, CSRs, MPC, MLC, hardware loops and stall counters of one core."""

    def __init__(self, core_id: int, tcdm: Tcdm):
        self.id = core_id
        self.tcdm = tcdm
        self.r = [0] * 32
        self.nn = [0] * 6
        self.csr = CsrFile(mhartid=core_id)
        self.mpc = 0
        self.mpc_limit = 1
        self.mlc_w = MlcChannelState()
        self.mlc_a = MlcChannelState()
        self.dot = None
        self.dot_err = "simd_fmt not configured"
        self.pa = 0
        self.s0 = self.e0 = self.c0 = 0
        self.s1 = self.e1 = self.c1 = 0
        self.e0 = self.e1 = -1
        self.pc = 0
        self.t = 0
        self.bank = -1
        self.ld = -1
        self.done = False
        self.instructions = 0
        self.lane_macs = 0
        self.stall_load_use = 0
        self.stall_branch = 0
        self.stall_bank = 0
        self.stall_barrier = 0
        self.code = ()
        self.reads = ()
        self.kind = ()
        self.ismem = ()
        self.n = 0

    # -- CSR side effects ----------------------------------------------------

    def _refresh_format(self):
        csr = self.csr
        self.dot = None
        try:
            pa, pw = decode_simd_fmt(csr.simd_fmt)
        except CsrError:
            self.dot_err = f"simd_fmt {csr.simd_fmt:#x} is not a valid format"
            return
        ratio = pa // pw
        skip = csr.mix_skip or 1
        if skip != ratio:
            self.dot_err = f"mix_skip={csr.mix_skip} inconsistent with a{pa}w{pw}"
            return
        self.pa = pa
        self.mpc_limit = skip
        self.dot = make_dot(pa, bool(csr.simd_sign & 1), pw, bool(csr.simd_sign & 2))

    def in_hwloop(self, pc: int) -> bool:
        return (self.c0 > 0 and self.s0 <= pc < self.e0) or (self.c1 > 0 and self.s1 <= pc < self.e1)

    def csr_write(self, addr: int, value: int, pc: int) -> None:
        name = CSR_BY_ADDR.get(addr)
        if name is None:
            raise IllegalInstruction(f"write to unknown CSR {addr:#x}")
        name = name.name
        if name == "simd_fmt" and self.in_hwloop(pc):
            raise IllegalInstruction("simd_fmt written inside an active hardware loop")
        if name in ("w_stride", "w_rollback", "a_stride", "a_rollback"):
            value = ((value + SIGN) & M32) - SIGN
        elif name in ("w_addr", "a_addr"):
            value &= M32
        try:
            self.csr.write(addr, value)
        except CsrError as e:
            raise IllegalInstruction(str(e)) from None
        if name in ("simd_fmt", "simd_sign", "mix_skip"):
            self._refresh_format()
            if name == "simd_fmt":
                self.mpc = 0
                self.mlc_w.reset_iter()
                self.mlc_a.reset_iter()
        elif name[0] in "wa" and name[1] == "_":
            ch = self.mlc_w if name[0] == "w" else self.mlc_a
            field = name[2:]
            if field == "addr":
                ch.set_base(value)
            else:
                ch.configure(**{field: value})

    def csr_read(self, addr: int) -> int:
        name = CSR_BY_ADDR.get(addr)
        if name is None:
            raise IllegalInstruction(f"read of unknown CSR {addr:#x}")
        name = name.name
        if name == "mpc_cnt":
            return self.mpc
        if name == "w_addr":
            return self.mlc_w.addr
        if name == "a_addr":
            return self.mlc_a.addr
        return self.csr.read(addr)

    # -- program binding -----------------------------------------------------

    def bind(self, prog: Program) -> None:
        self.program = prog
        self.code = tuple(compile_instruction(self, prog, i) for i in range(len(prog)))
        dec = [decode(ins) for ins in prog.instructions]
        self.reads = tuple(frozenset(r for r in d.reads if r != 0) for d in dec)
        self.kind = tuple(K_BARRIER if ins.op == "barrier" else
                          K_BRANCH if d.unit == "branch" else K_PLAIN
                          for ins, d in zip(prog.instructions, dec))
        self.ismem = tuple(d.mem is not None for d in dec)
        self.n = len(prog)
        self.pc = prog.entry

    def stalls(self) -> dict:
        return {"load_use": self.stall_load_use, "branch": self.stall_branch,
                "bank_conflict": self.stall_bank, "barrier": self.stall_barrier}


def _fault(addr, n):
    kind = "misaligned" if addr & (n - 1) else "out-of-range"
    return MemoryFault(f"{kind} {n}-byte access at {addr & M32:#x}")


def compile_instruction(c: CoreState, prog: Program, i: int):
    ins = prog.instructions[i]
    op = ins.op
    r = c.r
    nn = c.nn
    mem = c.tcdm
    base, size = mem.base, mem.size
    w32, w16, buf = mem.w32, mem.w16, mem.buf
    rd, rs1, rs2, imm = ins.rd, ins.rs1, ins.rs2, ins.imm
    nxt = i + 1

    # ALU -------------------------------------------------------------------
    if op in _RR:
        f = _RR[op]
        if rd == 0:
            return lambda: nxt
        def ex():
            v = f(r[rs1], r[rs2])
            r[rd] = ((v + SIGN) & M32) - SIGN
            return nxt
        return ex
    if op in _RI:
        f = _RI[op]
        if rd == 0:
            return lambda: nxt
        if op == "addi":
            def ex():
                v = r[rs1] + imm
                r[rd] = ((v + SIGN) & M32) - SIGN
                return nxt
            return ex
        def ex():
            v = f(r[rs1], imm)
            r[rd] = ((v + SIGN) & M32) - SIGN
            return nxt
        return ex
    if op == "lui":
        val = (((imm << 12) + SIGN) & M32) - SIGN
        def ex():
            if rd:
                r[rd] = val
            return nxt
        return ex
    if op in ("p.extract", "p.extractu", "p.insert"):
        ln, off = imm, ins.imm2
        mask = (1 << ln) - 1
        if op == "p.extractu":
            def ex():
                if rd:
                    r[rd] = ((r[rs1] >> off) & mask)
                    if r[rd] & SIGN:
                        r[rd] -= 1 << 32
                return nxt
            return ex
        if op == "p.extract":
            half = 1 << (ln - 1)
            def ex():
                if rd:
                    v = (r[rs1] >> off) & mask
                    r[rd] = v - (half << 1) if v & half else v
                return nxt
            return ex
        fmask = (mask << off) & M32
        def ex():
            if rd:
                v = (r[rd] & ~fmask & M32) | ((r[rs1] & mask) << off)
                r[rd] = ((v + SIGN) & M32) - SIGN
            return nxt
        return ex
    if op in ("p.clip", "p.clipu"):
        if op == "p.clipu":
            lo, hi = 0, (1 << imm) - 1
        else:
            lo, hi = -(1 << (imm - 1)), (1 << (imm - 1)) - 1
        def ex():
            if rd:
                v = r[rs1]
                r[rd] = lo if v < lo else hi if v > hi else v
            return nxt
        return ex
    if op == "p.addn":
        def ex():
            if rd:
                v = ((r[rs1] + r[rs2] + SIGN) & M32) - SIGN
                r[rd] = v >> imm
            return nxt
        return ex

    # loads / stores ----------------------------------------------------------
    if op in _LOADS:
        width, signed = _LOADS[op]
        post = op.startswith("p.")
        return _make_load(c, r, base, size, w32, w16, buf, rd, rs1, imm, width, signed, post, nxt)
    if op in _STORES:
        width = _STORES[op]
        post = op.startswith("p.")
        return _make_store(c, r, base, size, w32, w16, buf, rs2, rs1, imm, width, post, nxt)

    # control flow ------------------------------------------------------------
    if op in _BR:
        cond = _BR[op]
        tgt = prog.labels[ins.target]
        def ex():
            return tgt if cond(r[rs1], r[rs2]) else nxt
        return ex
    if op == "jal":
        tgt = prog.labels[ins.target]
        def ex():
            if rd:
                r[rd] = nxt
            return tgt
        return ex
    if op == "barrier":
        return lambda: nxt

    # hardware loops ------------------------------------------------------------
    if op.startswith("lp."):
        lvl = ins.imm2
        tgt = prog.labels[ins.target] if ins.target is not None else None
        s, e, cnt = (("s0", "e0", "c0"), ("s1", "e1", "c1"))[lvl]
        if op in ("lp.setup", "lp.setupi"):
            def ex():
                n = r[rs1] & M32 if op == "lp.setup" else imm
                setattr(c, s, nxt)
                setattr(c, e, tgt)
                setattr(c, cnt, n)
                return nxt if n > 0 else tgt
            return ex
        if op in ("lp.count", "lp.counti"):
            def ex():
                setattr(c, cnt, r[rs1] & M32 if op == "lp.count" else imm)
                return nxt
            return ex
        if op == "lp.starti":
            def ex():
                setattr(c, s, tgt)
                return nxt
            return ex
        def ex():
            setattr(c, e, tgt)
            return nxt
        return ex

    # CSRs ----------------------------------------------------------------------
    if op == "csrw":
        def ex():
            c.csr_write(ins.csr, r[rs1], i)
            return nxt
        return ex
    if op == "csrwi":
        def ex():
            c.csr_write(ins.csr, imm, i)
            return nxt
        return ex
    if op == "csrr":
        def ex():
            v = c.csr_read(ins.csr)
            if rd:
                r[rd] = ((v + SIGN) & M32) - SIGN
            return nxt
        return ex

    # dot products ------------------------------------------------------------
    if op.startswith("pv.sdot"):
        a_s, w_s = _PV[op]
        def ex():
            v = r[rd] + sum(map(mul, lanes(r[rs1], 8, a_s), lanes(r[rs2], 8, w_s)))
            c.lane_macs += 4
            if rd:
                r[rd] = ((v + SIGN) & M32) - SIGN
            return nxt
        return ex
    if op == "sdotp":
        adv = "c" in ins.flags
        def ex():
            dot = c.dot
            if dot is None:
                raise IllegalInstruction(f"sdotp: {c.dot_err}")
            v = dot(r[rs1] & M32, r[rs2] & M32, r[rd], c.mpc)
            c.lane_macs += 32 // c.pa
            if rd:
                r[rd] = v
            if adv:
                c.mpc = (c.mpc + 1) % c.mpc_limit
            return nxt
        return ex
    if op == "ml.sdotp":
        return _make_ml(c, ins, r, nn, base, size, w32, nxt)
    if op == "nn.lw":
        slot = rd
        ch = c.mlc_a if slot >= 4 else c.mlc_w
        reg = NN_BASE + slot
        def ex():
            addr = ch.next()
            off = addr - base
            if off < 0 or off + 4 > size or off & 3:
                raise _fault(addr, 4)
            nn[slot] = w32[off >> 2]
            c.bank = (off >> 2) & 15
            c.ld = reg
            return nxt
        return ex
    raise IllegalInstruction(f"no implementation for {op!r}")


def _make_ml(c, ins, r, nn, base, size, w32, nxt):
    j, a_i, rd = ins.rs2, ins.rs1, ins.rd
    a_slot = 4 + a_i
    adv = "c" in ins.flags
    a_load = "a" in ins.flags
    w_load = "w" in ins.flags
    a_next = 4 + (a_i + 1) % 2
    cha, chw = c.mlc_a, c.mlc_w

    def ex():
        if not c.csr.macload_en:
            raise IllegalInstruction("ml.sdotp issued with macload_en = 0")
        dot = c.dot
        if dot is None:
            raise IllegalInstruction(f"ml.sdotp: {c.dot_err}")
        cnt = c.mpc
        v = dot(nn[a_slot], nn[j], r[rd], cnt)
        c.lane_macs += 32 // c.pa
        if rd:
            r[rd] = v
        if a_load:
            addr = cha.next()
            off = addr - base
            if off < 0 or off + 4 > size or off & 3:
                raise _fault(addr, 4)
            nn[a_next] = w32[off >> 2]
            c.bank = (off >> 2) & 15
            c.ld = NN_BASE + a_next
        elif w_load and cnt == c.mpc_limit - 1:
            addr = chw.next()
            off = addr - base
            if off < 0 or off + 4 > size or off & 3:
                raise _fault(addr, 4)
            nn[j] = w32[off >> 2]
            c.bank = (off >> 2) & 15
            c.ld = NN_BASE + j
        if adv:
            c.mpc = (cnt + 1) % c.mpc_limit
        return nxt
    return ex


def _make_load(c, r, base, size, w32, w16, buf, rd, rs1, imm, width, signed, post, nxt):
    off_imm = 0 if post else imm
    inc = imm if post else 0
    amask = width - 1

    def ex():
        addr = r[rs1] + off_imm
        off = addr - base
        if off < 0 or off + width > size or off & amask:
            raise _fault(addr, width)
        if width == 4:
            v = w32[off >> 2]
            if v & SIGN:
                v -= 1 << 32
        elif width == 2:
            v = w16[off >> 1]
            if signed and v & 0x8000:
                v -= 0x10000
        else:
            v = buf[off]
            if signed and v & 0x80:
                v -= 0x100
        if post:
            r[rs1] = ((r[rs1] + inc + SIGN) & M32) - SIGN
        if rd:
            r[rd] = v
            c.ld = rd
        c.bank = (off >> 2) & 15
        return nxt
    return ex


def _make_store(c, r, base, size, w32, w16, buf, rs2, rs1, imm, width, post, nxt):
    off_imm = 0 if post else imm
    inc = imm if post else 0
    amask = width - 1

    def ex():
        addr = r[rs1] + off_imm
        off = addr - base
        if off < 0 or off + width > size or off & amask:
            raise _fault(addr, width)
        v = r[rs2]
        if width == 4:
            w32[off >> 2] = v & M32
        elif width == 2:
            w16[off >> 1] = v & 0xFFFF
        else:
            buf[off] = v & 0xFF
        if post:
            r[rs1] = ((r[rs1] + inc + SIGN) & M32) - SIGN
        c.bank = (off >> 2) & 15
        return nxt
    return ex


def _sra(a, b):
    return a >> (b & 31)


_RR = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "and": lambda a, b: a & b,
    "or": lambda a, b: a | b,
    "xor": lambda a, b: a ^ b,
    "sll": lambda a, b: a << (b & 31),
    "srl": lambda a, b: (a & M32) >> (b & 31),
    "sra": _sra,
    "slt": lambda a, b: int(a < b),
    "sltu": lambda a, b: int((a & M32) < (b & M32)),
    "mul": lambda a, b: a * b,
}
_RI = {
    "addi": lambda a, b: a + b,
    "andi": lambda a, b: a & b,
    "ori": lambda a, b: a | b,
    "xori": lambda a, b: a ^ b,
    "slti": lambda a, b: int(a < b),
    "sltiu": lambda a, b: int((a & M32) < (b & M32)),
    "slli": lambda a, b: a << b,
    "srli": lambda a, b: (a & M32) >> b,
    "srai": lambda a, b: a >> b,
}
_BR = {
    "beq": lambda a, b: a == b,
    "bne": lambda a, b: a != b,
    "blt": lambda a, b: a < b,
    "bge": lambda a, b: a >= b,
    "bltu": lambda a, b: (a & M32) < (b & M32),
    "bgeu": lambda a, b: (a & M32) >= (b & M32),
}
_LOADS = {"lw": (4, True), "lh": (2, True), "lhu": (2, False), "lb": (1, True), "lbu": (1, False),
          "p.lw": (4, True), "p.lh": (2, True), "p.lhu": (2, False), "p.lb": (1, True),
          "p.lbu": (1, False)}
_STORES = {"sw": 4, "sh": 2, "sb": 1, "p.sw": 4, "p.sh": 2, "p.sb": 1}
_PV = {"pv.sdotup.b": (False, False), "pv.sdotusp.b": (False, True), "pv.sdotsp.b": (True, True)}
