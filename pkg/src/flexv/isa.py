"""Virtual instruction set: opcode table, text assembly, decoding and CSR state.

Programs are sequences of decoded :class:`Instruction` records; there is no
binary encoding.  The text grammar is one instruction per line, ``name:``
labels and ``#`` comments.  The ``.data <addr>`` section takes ``.word``,
``.byte`` and ``.zero`` directives until ``.text``.

Register names: ``x0``..``x31`` for the general-purpose file, ``w0``..``w3``
and ``a0``..``a1`` for the NN register file (so ABI aliases are not accepted).
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

from .tensor import Precision

NN_BASE = 32
NN_NAMES = ("w0", "w1", "w2", "w3", "a0", "a1")


class IsaError(Exception):
    pass


class AsmError(IsaError):
    def __init__(self, msg: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


class IllegalInstruction(IsaError):
    pass


class CsrError(IsaError):
    pass


@dataclass(frozen=True)
class OpInfo:
    fmt: str
    unit: str
    summary: str


# fmt codes: operand syntax
#   R     rd, rs1, rs2            I    rd, rs1, imm           U   rd, imm
#   LD    rd, imm(rs1)            PLD  rd, imm(rs1!)          ST  rs2, imm(rs1)
#   PST   rs2, imm(rs1!)          B    rs1, rs2, label        J   rd, label
#   BF    rd, rs1, len, off       CLIP rd, rs1, bits          ADDN rd, rs1, rs2, shift
#   SDOT  rd, rs1, rs2            ML   wJ, aI, rd             NNLW nn
#   CSRW  csr, rs1                CSRWI csr, imm              CSRR rd, csr
#   LPS   L, rs1, label           LPSI L, imm, label          LPC L, rs1
#   LPCI  L, imm                  LPL  L, label               N   (none)
OPS: dict[str, OpInfo] = {}


def _op(names, fmt, unit, summary):
    for n in names.split():
        OPS[n] = OpInfo(fmt, unit, summary)


_op("add sub and or xor sll srl sra slt sltu", "R", "alu", "register-register ALU operation")
_op("mul", "R", "mul", "low 32 bits of the signed product")
_op("addi andi ori xori slti sltiu", "I", "alu", "register-immediate ALU operation")
_op("slli srli srai", "I", "alu", "shift by immediate")
_op("lui", "U", "alu", "rd = imm << 12")
_op("lw lh lhu lb lbu", "LD", "lsu", "load from rs1 + imm")
_op("p.lw p.lh p.lhu p.lb p.lbu", "PLD", "lsu", "load from rs1, then rs1 += imm")
_op("sw sh sb", "ST", "lsu", "store rs2 to rs1 + imm")
_op("p.sw p.sh p.sb", "PST", "lsu", "store rs2 to rs1, then rs1 += imm")
_op("beq bne blt bge bltu bgeu", "B", "branch", "conditional branch to label")
_op("jal", "J", "branch", "rd = pc + 1; jump to label")
_op("p.extract", "BF", "alu", "rd = sign-extended rs1[off+len-1:off]")
_op("p.extractu", "BF", "alu", "rd = zero-extended rs1[off+len-1:off]")
_op("p.insert", "BF", "alu", "rd[off+len-1:off] = rs1[len-1:0], other bits kept")
_op("p.clip", "CLIP", "alu", "clip to the signed range of `bits` bits")
_op("p.clipu", "CLIP", "alu", "clip to [0, 2^bits - 1]")
_op("p.addn", "ADDN", "alu", "rd = (rs1 + rs2) >>arith shift")
_op("pv.sdotup.b", "R", "dotp", "rd += 4-lane 8-bit dot product, unsigned x unsigned")
_op("pv.sdotusp.b", "R", "dotp", "rd += 4-lane 8-bit dot product, unsigned rs1 x signed rs2")
_op("pv.sdotsp.b", "R", "dotp", "rd += 4-lane 8-bit dot product, signed x signed")
_op("sdotp", "SDOT", "dotp", "virtual SIMD dot product, format from simd_fmt")
_op("ml.sdotp", "ML", "dotp", "virtual Mac&Load dot product on NN-RF operands")
_op("nn.lw", "NNLW", "mlc", "load NN-RF register from the MLC channel address")
_op("csrw", "CSRW", "csr", "write CSR from register")
_op("csrwi", "CSRWI", "csr", "write CSR with immediate")
_op("csrr", "CSRR", "csr", "read CSR into rd")
_op("lp.setup", "LPS", "hwloop", "hardware loop L: body up to label, count from rs1")
_op("lp.setupi", "LPSI", "hwloop", "hardware loop L: body up to label, immediate count")
_op("lp.count", "LPC", "hwloop", "set loop L count from rs1")
_op("lp.counti", "LPCI", "hwloop", "set loop L count to imm")
_op("lp.starti", "LPL", "hwloop", "set loop L start to label")
_op("lp.endi", "LPL", "hwloop", "set loop L end (exclusive) to label")
_op("barrier", "N", "sync", "wait for all cluster cores")

LOAD_WIDTH = {"lw": 4, "lh": 2, "lhu": 2, "lb": 1, "lbu": 1}
STORE_WIDTH = {"sw": 4, "sh": 2, "sb": 1}
ML_FLAGS = ("", "a", "w", "c", "ac", "wc")
SDOTP_FLAGS = ("", "c")


# ---------------------------------------------------------------------------
# CSRs

@dataclass(frozen=True)
class CsrInfo:
    name: str
    addr: int
    readonly: bool
    doc: str


CSRS = {c.name: c for c in (
    CsrInfo("simd_fmt", 0x7C0, False,
            "SIMD format: bits[3:0] activation code, bits[7:4] weight code (1=8b, 2=4b, 3=2b)"),
    CsrInfo("simd_sign", 0x7C1, False, "bit0: activations signed, bit1: weights signed"),
    CsrInfo("mix_skip", 0x7C2, False, "weight container reuse count (1, 2 or 4; 0 acts as 1)"),
    CsrInfo("macload_en", 0x7C3, False, "1 enables ml.sdotp"),
    CsrInfo("w_stride", 0x7C4, False, "MLC weight inner stride (bytes, signed)"),
    CsrInfo("w_rollback", 0x7C5, False, "MLC weight rollback addend (bytes, signed)"),
    CsrInfo("w_skip", 0x7C6, False, "MLC weight inner iterations"),
    CsrInfo("a_stride", 0x7C7, False, "MLC activation inner stride (bytes, signed)"),
    CsrInfo("a_rollback", 0x7C8, False, "MLC activation rollback addend (bytes, signed)"),
    CsrInfo("a_skip", 0x7C9, False, "MLC activation inner iterations"),
    CsrInfo("w_addr", 0x7CA, False, "MLC weight pointer; writing it also clears the inner counter"),
    CsrInfo("a_addr", 0x7CB, False, "MLC activation pointer; writing it also clears the inner counter"),
    CsrInfo("mpc_cnt", 0x7CC, True, "mixed-precision controller counter"),
    CsrInfo("mhartid", 0xF14, True, "core index within the cluster"),
)}
CSR_BY_ADDR = {c.addr: c for c in CSRS.values()}

FMT_CODES = {1: 8, 2: 4, 3: 2}
FMT_CODE_OF = {v: k for k, v in FMT_CODES.items()}


def simd_fmt_code(pa: int, pw: int) -> int:
    """CSR value for activation width ``pa`` and weight width ``pw``."""
    return FMT_CODE_OF[pa] | (FMT_CODE_OF[pw] << 4)


def decode_simd_fmt(value: int) -> tuple[int, int]:
    a, w = value & 0xF, (value >> 4) & 0xF
    if a not in FMT_CODES or w not in FMT_CODES:
        raise CsrError(f"invalid simd_fmt value {value:#x}")
    return FMT_CODES[a], FMT_CODES[w]


def csr_addr(name_or_addr) -> int:
    if isinstance(name_or_addr, str):
        if name_or_addr in CSRS:
            return CSRS[name_or_addr].addr
        raise CsrError(f"unknown CSR {name_or_addr!r}")
    if name_or_addr in CSR_BY_ADDR:
        return name_or_addr
    raise CsrError(f"unknown CSR id {name_or_addr:#x}")


@dataclass
class CsrFile:
    """Control-status registers driving bit-scalable execution and the MLC."""
    simd_fmt: int = 0
    simd_sign: int = 0
    mix_skip: int = 0
    macload_en: int = 0
    w_stride: int = 0
    w_rollback: int = 0
    w_skip: int = 0
    a_stride: int = 0
    a_rollback: int = 0
    a_skip: int = 0
    w_addr: int = 0
    a_addr: int = 0
    mpc_cnt: int = 0
    mhartid: int = 0

    def read(self, csr) -> int:
        return getattr(self, CSR_BY_ADDR[csr_addr(csr)].name)

    def write(self, csr, value: int) -> str:
        """Validate and store; returns the CSR name so callers can apply side effects."""
        info = CSR_BY_ADDR[csr_addr(csr)]
        if info.readonly:
            raise CsrError(f"CSR {info.name} is read-only")
        name = info.name
        if name == "simd_fmt":
            pa, pw = decode_simd_fmt(value)
            if pa < pw:
                raise CsrError(f"a{pa}w{pw}: activations narrower than weights are not supported")
        elif name == "mix_skip" and value not in (0, 1, 2, 4):
            raise CsrError(f"mix_skip must be 1, 2 or 4, got {value}")
        elif name == "macload_en" and value not in (0, 1):
            raise CsrError("macload_en is a single bit")
        elif name in ("w_skip", "a_skip") and value < 1:
            raise CsrError(f"{name} must be >= 1")
        elif name == "simd_sign" and value & ~3:
            raise CsrError("simd_sign uses bits 0 and 1 only")
        setattr(self, name, value)
        return name

    @property
    def simd_format(self) -> tuple[Precision, Precision]:
        pa, pw = decode_simd_fmt(self.simd_fmt)
        return Precision(pa, bool(self.simd_sign & 1)), Precision(pw, bool(self.simd_sign & 2))


class GpRegisterFile:
    def __init__(self):
        self._r = [0] * 32

    def __getitem__(self, i: int) -> int:
        return self._r[i]

    def __setitem__(self, i: int, v: int) -> None:
        if i:
            self._r[i] = ((v + 0x80000000) & 0xFFFFFFFF) - 0x80000000

    def as_list(self) -> list:
        return self._r


class NnRegisterFile:
    """w0..w3 and a0..a1; written only through NN loads."""

    def __init__(self):
        self._r = [0] * 6

    def __getitem__(self, i: int) -> int:
        return self._r[i]

    def load(self, slot: int, word: int) -> None:
        self._r[slot] = word & 0xFFFFFFFF

    def as_list(self) -> list:
        return self._r


# ---------------------------------------------------------------------------
# Instructions and programs

@dataclass(frozen=True)
class Instruction:
    op: str
    rd: int = 0
    rs1: int = 0
    rs2: int = 0
    imm: int = 0
    imm2: int = 0
    csr: int = 0
    target: str | None = None
    flags: str = ""
    line: int | None = field(default=None, compare=False)

    @property
    def info(self) -> OpInfo:
        return OPS[self.op]

    @property
    def mnemonic(self) -> str:
        return f"{self.op}.{self.flags}" if self.flags else self.op


@dataclass(frozen=True)
class Program:
    instructions: tuple
    labels: dict = field(default_factory=dict)
    entry: int = 0
    data: tuple = ()

    def __len__(self):
        return len(self.instructions)

    def __getitem__(self, i):
        return self.instructions[i]

    def target(self, ins: Instruction) -> int:
        return self.labels[ins.target]


_REG = re.compile(r"^x([0-9]|[12][0-9]|3[01])$")
_MEM = re.compile(r"^(-?(?:0x[0-9a-fA-F]+|\d+))?\((x\d+)(!?)\)$")
_LABEL = re.compile(r"^[A-Za-z_.$][\w.$]*$")


def _reg(tok: str, line) -> int:
    m = _REG.match(tok)
    if not m:
        raise AsmError(f"expected register x0..x31, got {tok!r}", line)
    return int(m.group(1))


def _nn(tok: str, kind: str | None, line) -> int:
    if tok not in NN_NAMES or (kind and tok[0] != kind):
        want = {"w": "w0..w3", "a": "a0..a1"}.get(kind, "an NN register")
        raise AsmError(f"expected {want}, got {tok!r}", line)
    return NN_NAMES.index(tok) - (4 if tok[0] == "a" else 0)


def _imm(tok: str, line, lo=None, hi=None) -> int:
    try:
        v = int(tok, 0)
    except ValueError:
        raise AsmError(f"malformed immediate {tok!r}", line) from None
    if (lo is not None and v < lo) or (hi is not None and v > hi):
        raise AsmError(f"immediate {v} outside [{lo}, {hi}]", line)
    return v


def _label(tok: str, line) -> str:
    if not _LABEL.match(tok):
        raise AsmError(f"malformed label {tok!r}", line)
    return tok


def _csr(tok: str, line) -> int:
    try:
        return csr_addr(tok if not tok[0].isdigit() else int(tok, 0))
    except (CsrError, ValueError):
        raise AsmError(f"unknown CSR {tok!r}", line) from None


S12 = (-2048, 2047)


def _split_ops(rest: str) -> list[str]:
    return [t.strip() for t in rest.split(",")] if rest.strip() else []


def _expect(ops, n, line, mnem):
    if len(ops) != n:
        raise AsmError(f"{mnem} takes {n} operands, got {len(ops)}", line)


def _parse_mem(tok: str, post: bool, line) -> tuple[int, int]:
    m = _MEM.match(tok.replace(" ", ""))
    if not m:
        raise AsmError(f"malformed memory operand {tok!r}", line)
    if bool(m.group(3)) != post:
        raise AsmError("post-increment operand needs 'imm(rs!)'" if post
                       else "unexpected post-increment marker", line)
    off = _imm(m.group(1) or "0", line, *S12)
    return off, _reg(m.group(2), line)


def li_sequence(rd: int, value: int) -> list[Instruction]:
    """``lui``/``addi`` pair loading a 32-bit constant."""
    value = ((value + 0x80000000) & 0xFFFFFFFF) - 0x80000000
    if -2048 <= value < 2048:
        return [Instruction("addi", rd=rd, rs1=0, imm=value)]
    hi = ((value + 0x800) >> 12) & 0xFFFFF
    lo = value - (((hi << 12) + 0x80000000 & 0xFFFFFFFF) - 0x80000000)
    out = [Instruction("lui", rd=rd, imm=hi)]
    if lo:
        out.append(Instruction("addi", rd=rd, rs1=rd, imm=lo))
    return out


def parse_instruction(mnem: str, ops: list[str], line=None) -> list[Instruction]:
    """Parse one source instruction; pseudo-instructions may expand to several."""
    if mnem == "li":
        _expect(ops, 2, line, mnem)
        return li_sequence(_reg(ops[0], line), _imm(ops[1], line, -(1 << 31), (1 << 32) - 1))
    if mnem == "mv":
        _expect(ops, 2, line, mnem)
        return [Instruction("addi", rd=_reg(ops[0], line), rs1=_reg(ops[1], line), line=line)]
    if mnem == "nop":
        _expect(ops, 0, line, mnem)
        return [Instruction("addi", line=line)]
    base, flags = mnem, ""
    if mnem not in OPS:
        for b in ("ml.sdotp", "sdotp"):
            if mnem.startswith(b + "."):
                base, flags = b, mnem[len(b) + 1:]
        if base == "ml.sdotp" and flags not in ML_FLAGS:
            raise AsmError(f"unknown Mac&Load variant {mnem!r}", line)
        if base == "sdotp" and flags not in SDOTP_FLAGS:
            raise AsmError(f"unknown sdotp variant {mnem!r}", line)
    if mnem == "csrw" and len(ops) == 2 and not _REG.match(ops[1]):
        base = "csrwi"
    info = OPS.get(base)
    if info is None:
        raise AsmError(f"unknown mnemonic {mnem!r}", line)
    f = info.fmt
    I = lambda **kw: [Instruction(base, flags=flags, line=line, **kw)]
    if f in ("R", "SDOT"):
        _expect(ops, 3, line, mnem)
        return I(rd=_reg(ops[0], line), rs1=_reg(ops[1], line), rs2=_reg(ops[2], line))
    if f == "I":
        _expect(ops, 3, line, mnem)
        rng = (0, 31) if base in ("slli", "srli", "srai") else S12
        return I(rd=_reg(ops[0], line), rs1=_reg(ops[1], line), imm=_imm(ops[2], line, *rng))
    if f == "U":
        _expect(ops, 2, line, mnem)
        return I(rd=_reg(ops[0], line), imm=_imm(ops[1], line, 0, 0xFFFFF))
    if f in ("LD", "PLD"):
        _expect(ops, 2, line, mnem)
        off, rs1 = _parse_mem(ops[1], f == "PLD", line)
        return I(rd=_reg(ops[0], line), rs1=rs1, imm=off)
    if f in ("ST", "PST"):
        _expect(ops, 2, line, mnem)
        off, rs1 = _parse_mem(ops[1], f == "PST", line)
        return I(rs2=_reg(ops[0], line), rs1=rs1, imm=off)
    if f == "B":
        _expect(ops, 3, line, mnem)
        return I(rs1=_reg(ops[0], line), rs2=_reg(ops[1], line), target=_label(ops[2], line))
    if f == "J":
        _expect(ops, 2, line, mnem)
        return I(rd=_reg(ops[0], line), target=_label(ops[1], line))
    if f == "BF":
        _expect(ops, 4, line, mnem)
        ln, off = _imm(ops[2], line, 1, 32), _imm(ops[3], line, 0, 31)
        if ln + off > 32:
            raise AsmError("bit field exceeds 32 bits", line)
        return I(rd=_reg(ops[0], line), rs1=_reg(ops[1], line), imm=ln, imm2=off)
    if f == "CLIP":
        _expect(ops, 3, line, mnem)
        return I(rd=_reg(ops[0], line), rs1=_reg(ops[1], line), imm=_imm(ops[2], line, 1, 31))
    if f == "ADDN":
        _expect(ops, 4, line, mnem)
        return I(rd=_reg(ops[0], line), rs1=_reg(ops[1], line), rs2=_reg(ops[2], line),
                 imm=_imm(ops[3], line, 0, 31))
    if f == "ML":
        _expect(ops, 3, line, mnem)
        return I(rs2=_nn(ops[0], "w", line), rs1=_nn(ops[1], "a", line), rd=_reg(ops[2], line))
    if f == "NNLW":
        _expect(ops, 1, line, mnem)
        return I(rd=_nn(ops[0], None, line) + (4 if ops[0].startswith("a") else 0))
    if f == "CSRW":
        _expect(ops, 2, line, mnem)
        return I(csr=_csr(ops[0], line), rs1=_reg(ops[1], line))
    if f == "CSRWI":
        _expect(ops, 2, line, mnem)
        return I(csr=_csr(ops[0], line), imm=_imm(ops[1], line, -(1 << 31), (1 << 32) - 1))
    if f == "CSRR":
        _expect(ops, 2, line, mnem)
        return I(rd=_reg(ops[0], line), csr=_csr(ops[1], line))
    if f in ("LPS", "LPSI", "LPC", "LPCI", "LPL"):
        want = {"LPS": 3, "LPSI": 3, "LPC": 2, "LPCI": 2, "LPL": 2}[f]
        _expect(ops, want, line, mnem)
        lvl = _imm(ops[0], line, 0, 1)
        if f == "LPS":
            return I(imm2=lvl, rs1=_reg(ops[1], line), target=_label(ops[2], line))
        if f == "LPSI":
            return I(imm2=lvl, imm=_imm(ops[1], line, 0, 0xFFFFF), target=_label(ops[2], line))
        if f == "LPC":
            return I(imm2=lvl, rs1=_reg(ops[1], line))
        if f == "LPCI":
            return I(imm2=lvl, imm=_imm(ops[1], line, 0, 0xFFFFF))
        return I(imm2=lvl, target=_label(ops[1], line))
    if f == "N":
        _expect(ops, 0, line, mnem)
        return I()
    raise AsmError(f"unhandled format {f}", line)  # pragma: no cover


def format_instruction(ins: Instruction) -> str:
    f = OPS[ins.op].fmt
    m = ins.mnemonic
    x = lambda r: f"x{r}"
    if f in ("R", "SDOT"):
        return f"{m} {x(ins.rd)}, {x(ins.rs1)}, {x(ins.rs2)}"
    if f == "I":
        return f"{m} {x(ins.rd)}, {x(ins.rs1)}, {ins.imm}"
    if f == "U":
        return f"{m} {x(ins.rd)}, {ins.imm:#x}"
    if f == "LD":
        return f"{m} {x(ins.rd)}, {ins.imm}({x(ins.rs1)})"
    if f == "PLD":
        return f"{m} {x(ins.rd)}, {ins.imm}({x(ins.rs1)}!)"
    if f == "ST":
        return f"{m} {x(ins.rs2)}, {ins.imm}({x(ins.rs1)})"
    if f == "PST":
        return f"{m} {x(ins.rs2)}, {ins.imm}({x(ins.rs1)}!)"
    if f == "B":
        return f"{m} {x(ins.rs1)}, {x(ins.rs2)}, {ins.target}"
    if f == "J":
        return f"{m} {x(ins.rd)}, {ins.target}"
    if f == "BF":
        return f"{m} {x(ins.rd)}, {x(ins.rs1)}, {ins.imm}, {ins.imm2}"
    if f == "CLIP":
        return f"{m} {x(ins.rd)}, {x(ins.rs1)}, {ins.imm}"
    if f == "ADDN":
        return f"{m} {x(ins.rd)}, {x(ins.rs1)}, {x(ins.rs2)}, {ins.imm}"
    if f == "ML":
        return f"{m} w{ins.rs2}, a{ins.rs1}, {x(ins.rd)}"
    if f == "NNLW":
        return f"{m} {NN_NAMES[ins.rd]}"
    name = CSR_BY_ADDR[ins.csr].name if f in ("CSRW", "CSRWI", "CSRR") else None
    if f == "CSRW":
        return f"{m} {name}, {x(ins.rs1)}"
    if f == "CSRWI":
        return f"{m} {name}, {ins.imm:#x}"
    if f == "CSRR":
        return f"{m} {x(ins.rd)}, {name}"
    if f == "LPS":
        return f"{m} {ins.imm2}, {x(ins.rs1)}, {ins.target}"
    if f == "LPSI":
        return f"{m} {ins.imm2}, {ins.imm}, {ins.target}"
    if f == "LPC":
        return f"{m} {ins.imm2}, {x(ins.rs1)}"
    if f == "LPCI":
        return f"{m} {ins.imm2}, {ins.imm}"
    if f == "LPL":
        return f"{m} {ins.imm2}, {ins.target}"
    return m


def assemble(source: str) -> Program:
    """Two-pass assembly of program text into a :class:`Program`."""
    instrs: list[Instruction] = []
    labels: dict[str, int] = {}
    data: list[tuple[int, bytearray]] = []
    in_data = False
    for lineno, raw in enumerate(source.splitlines(), 1):
        text = raw.split("#", 1)[0].strip()
        while text:
            m = re.match(r"^([A-Za-z_.$][\w.$]*):\s*(.*)$", text)
            if not m or m.group(1).startswith((".data", ".text")):
                break
            if in_data:
                raise AsmError("labels are not allowed in the data section", lineno)
            name = m.group(1)
            if name in labels:
                raise AsmError(f"duplicate label {name!r}", lineno)
            labels[name] = len(instrs)
            text = m.group(2).strip()
        if not text:
            continue
        head, _, rest = text.partition(" ")
        head = head.lower()
        if head == ".data":
            in_data = True
            data.append((_imm(rest.strip(), lineno, 0, 0xFFFFFFFF), bytearray()))
            continue
        if head == ".text":
            in_data = False
            continue
        if in_data:
            seg = data[-1][1]
            if head == ".word":
                for t in _split_ops(rest):
                    seg += (_imm(t, lineno, -(1 << 31), (1 << 32) - 1) & 0xFFFFFFFF).to_bytes(4, "little")
            elif head == ".byte":
                for t in _split_ops(rest):
                    seg.append(_imm(t, lineno, -128, 255) & 0xFF)
            elif head == ".zero":
                seg += bytes(_imm(rest.strip(), lineno, 0, 1 << 20))
            else:
                raise AsmError(f"unknown data directive {head!r}", lineno)
            continue
        instrs.extend(parse_instruction(head, _split_ops(rest), lineno))
    for ins in instrs:
        if ins.target is not None and ins.target not in labels:
            raise AsmError(f"unresolved label {ins.target!r}", ins.line)
    prog = Program(tuple(instrs), labels, 0, tuple((a, bytes(b)) for a, b in data))
    check_program(prog)
    return prog


def check_program(prog: Program) -> None:
    n = len(prog)
    for name, idx in prog.labels.items():
        if not 0 <= idx <= n:
            raise AsmError(f"label {name!r} outside program")
    for i, ins in enumerate(prog.instructions):
        if ins.op in ("lp.setup", "lp.setupi") and prog.labels[ins.target] <= i + 1:
            raise AsmError("hardware loop body is empty or precedes its setup", ins.line)


def disassemble(prog: Program) -> str:
    by_index: dict[int, list[str]] = {}
    for name, idx in prog.labels.items():
        by_index.setdefault(idx, []).append(name)
    out = []
    for i, ins in enumerate(prog.instructions):
        out.extend(f"{name}:" for name in by_index.get(i, ()))
        out.append(f"    {format_instruction(ins)}")
    out.extend(f"{name}:" for name in by_index.get(len(prog), ()))
    for addr, blob in prog.data:
        out.append(f".data {addr:#x}")
        for j in range(0, len(blob), 16):
            out.append("    .byte " + ", ".join(f"{b:#04x}" for b in blob[j:j + 16]))
        out.append(".text")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Decoding

@dataclass(frozen=True)
class Decoded:
    op: str
    unit: str
    reads: tuple
    writes: tuple
    mem: str | None = None
    precision: str = "static"
    lanes: int | None = None
    fmt: tuple | None = None
    writeback: int | None = None


def nn_id(slot_kind: str, idx: int) -> int:
    return NN_BASE + (idx if slot_kind == "w" else 4 + idx)


def decode(ins: Instruction, csr: CsrFile | None = None) -> Decoded:
    """Resolve an instruction to its functional unit and operand sources.

    Virtual SIMD instructions (``sdotp``, ``ml.sdotp``) resolve their lane
    count from ``csr.simd_fmt`` when a CSR snapshot is given; otherwise the
    precision is left deferred.
    """
    info = OPS.get(ins.op)
    if info is None:
        raise IllegalInstruction(f"unknown opcode {ins.op!r}")
    f, op = info.fmt, ins.op
    wr = lambda *r: tuple(x for x in r if x != 0)
    if f == "R":
        reads = (ins.rs1, ins.rs2) + ((ins.rd,) if info.unit == "dotp" else ())
        lanes = 4 if info.unit == "dotp" else None
        return Decoded(op, info.unit, reads, wr(ins.rd), lanes=lanes,
                       fmt=(8, 8) if lanes else None)
    if f in ("I", "CLIP"):
        return Decoded(op, info.unit, (ins.rs1,), wr(ins.rd))
    if f == "BF":
        reads = (ins.rs1, ins.rd) if op == "p.insert" else (ins.rs1,)
        return Decoded(op, info.unit, reads, wr(ins.rd))
    if f == "ADDN":
        return Decoded(op, info.unit, (ins.rs1, ins.rs2), wr(ins.rd))
    if f == "U":
        return Decoded(op, info.unit, (), wr(ins.rd))
    if f == "LD":
        return Decoded(op, "lsu", (ins.rs1,), wr(ins.rd), mem="load")
    if f == "PLD":
        return Decoded(op, "lsu", (ins.rs1,), wr(ins.rd, ins.rs1), mem="load")
    if f == "ST":
        return Decoded(op, "lsu", (ins.rs1, ins.rs2), (), mem="store")
    if f == "PST":
        return Decoded(op, "lsu", (ins.rs1, ins.rs2), wr(ins.rs1), mem="store")
    if f == "B":
        return Decoded(op, "branch", (ins.rs1, ins.rs2), ())
    if f == "J":
        return Decoded(op, "branch", (), wr(ins.rd))
    if f in ("SDOT", "ML"):
        if f == "ML":
            reads = (nn_id("w", ins.rs2), nn_id("a", ins.rs1), ins.rd)
            wb = None
            if "a" in ins.flags:
                wb = nn_id("a", (ins.rs1 + 1) % 2)
            elif "w" in ins.flags:
                wb = nn_id("w", ins.rs2)
            writes = wr(ins.rd) + ((wb,) if wb is not None else ())
            mem = "load" if wb is not None else None
        else:
            reads, writes, mem, wb = (ins.rs1, ins.rs2, ins.rd), wr(ins.rd), None, None
        if csr is None:
            return Decoded(op, "dotp", reads, writes, mem=mem, precision="csr", writeback=wb)
        if f == "ML" and not csr.macload_en:
            raise IllegalInstruction("ml.sdotp issued with macload_en = 0")
        try:
            pa, pw = decode_simd_fmt(csr.simd_fmt)
        except CsrError:
            raise IllegalInstruction(f"{op} with invalid simd_fmt {csr.simd_fmt:#x}") from None
        if max(csr.mix_skip, 1) != pa // pw:
            raise IllegalInstruction(f"{op}: mix_skip={csr.mix_skip} does not match a{pa}w{pw}")
        return Decoded(op, "dotp", reads, writes, mem=mem, precision="csr",
                       lanes=32 // pa, fmt=(pa, pw), writeback=wb)
    if f == "NNLW":
        return Decoded(op, "mlc", (), (NN_BASE + ins.rd,), mem="load", writeback=NN_BASE + ins.rd)
    if f == "CSRW":
        return Decoded(op, "csr", (ins.rs1,), ())
    if f == "CSRWI":
        return Decoded(op, "csr", (), ())
    if f == "CSRR":
        return Decoded(op, "csr", (), wr(ins.rd))
    if f in ("LPS", "LPC"):
        return Decoded(op, "hwloop", (ins.rs1,), ())
    if f in ("LPSI", "LPCI", "LPL"):
        return Decoded(op, "hwloop", (), ())
    return Decoded(op, info.unit, (), ())


def with_flags(ins: Instruction, flags: str) -> Instruction:
    return replace(ins, flags=flags)
