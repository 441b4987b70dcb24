import pytest

from flexv.isa import (CSRS, OPS, AsmError, CsrError, CsrFile, IllegalInstruction, assemble, decode,
                       decode_simd_fmt, disassemble, li_sequence, simd_fmt_code)

SRC = """
    li x5, 0x10000000
    li x6, -3
    lp.setupi 0, 4, end
    p.lw x7, 4(x5!)
    sdotp.c x8, x7, x7
end:
    ml.sdotp.ac w0, a1, x9
    ml.sdotp.wc w3, a0, x16
    nn.lw w2
    nn.lw a1
    csrwi simd_fmt, 0x21
    p.extractu x10, x7, 4, 8
    p.insert x10, x7, 2, 30
    p.addn x11, x11, x12, 7
    p.clipu x11, x11, 4
    pv.sdotusp.b x12, x7, x7
    barrier
.data 0x10000000
    .word 1, 2, -1
    .byte 7
"""


def test_roundtrip():
    prog = assemble(SRC)
    again = assemble(disassemble(prog))
    assert again.instructions == prog.instructions
    assert again.labels == prog.labels
    assert again.data == prog.data


def test_abi_names_rejected():
    with pytest.raises(AsmError) as e:
        assemble("add a0, a1, a2")
    assert e.value.line == 1


def test_unknown_mnemonic_and_label():
    with pytest.raises(AsmError):
        assemble("frob x1, x2")
    with pytest.raises(AsmError):
        assemble("beq x1, x2, nowhere")


def test_empty_hwloop_rejected():
    with pytest.raises(AsmError):
        assemble("lp.setupi 0, 3, e\ne:\n")


def test_li_expansion():
    assert len(li_sequence(1, 5)) == 1
    assert len(li_sequence(1, 0x12345678)) == 2


def test_simd_fmt_encoding():
    assert simd_fmt_code(8, 4) == 0x21
    assert decode_simd_fmt(0x33) == (2, 2)
    with pytest.raises(CsrError):
        decode_simd_fmt(0x44)


def test_csr_file_validation():
    c = CsrFile()
    assert c.write("simd_fmt", simd_fmt_code(4, 2)) == "simd_fmt"
    with pytest.raises(CsrError):
        c.write("simd_fmt", simd_fmt_code(2, 4))
    with pytest.raises(CsrError):
        c.write("mpc_cnt", 1)
    with pytest.raises(CsrError):
        c.write("mix_skip", 3)
    with pytest.raises(CsrError):
        c.write(0x123, 0)
    c.write(0x7C1, 2)
    a, w = c.simd_format
    assert (a.bits, a.signed, w.bits, w.signed) == (4, False, 2, True)


def test_decode_resolves_virtual_sdotp():
    prog = assemble("sdotp x1, x2, x3\nml.sdotp.a w1, a0, x4")
    csr = CsrFile()
    csr.write("simd_fmt", simd_fmt_code(8, 2))
    with pytest.raises(IllegalInstruction):
        decode(prog[0], csr)  # mix_skip still disagrees with the format
    csr.write("mix_skip", 4)
    d = decode(prog[0], csr)
    assert d.unit == "dotp" and d.fmt == (8, 2) and d.lanes == 4
    with pytest.raises(IllegalInstruction):
        decode(prog[1], csr)  # Mac&Load disabled
    csr.write("macload_en", 1)
    d = decode(prog[1], csr)
    assert d.writeback is not None and d.mem == "load"


def test_tables_cover_mnemonics_and_csrs():
    for m in ("ml.sdotp", "sdotp", "nn.lw", "p.lw", "lp.setupi", "pv.sdotsp.b", "barrier"):
        assert m in OPS
    assert {c.addr for c in CSRS.values()} >= set(range(0x7C0, 0x7CD))
