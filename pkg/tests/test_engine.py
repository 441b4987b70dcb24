import pytest

from flexv.engine import (TCDM_BASE, BarrierDeadlock, CycleReport, MemoryFault, Tcdm,
                          WatchdogError, bank_of, functional_only_run, load_timing, merge_reports,
                          run_cluster, run_core)
from flexv.isa import IllegalInstruction, assemble


def run(src, **kw):
    prog = assemble(src)
    rep, core = run_core(prog, **kw)
    return rep, core


def test_alu_and_li():
    _, c = run("li x1, 0x12345678\naddi x2, x1, -8\nsub x3, x2, x1\nmul x4, x3, x3")
    assert c.r[1] == 0x12345678 and c.r[3] == -8 and c.r[4] == 64


def test_x0_is_hardwired():
    _, c = run("addi x0, x0, 5\nadd x1, x0, x0")
    assert c.r[0] == 0 and c.r[1] == 0


def test_post_increment_load_store():
    src = f"""
    li x1, {TCDM_BASE:#x}
    li x2, 7
    p.sw x2, 4(x1!)
    p.sw x2, 4(x1!)
    li x1, {TCDM_BASE:#x}
    p.lw x3, 4(x1!)
    lw x4, 0(x1)
    """
    _, c = run(src)
    assert c.r[3] == 7 and c.r[4] == 7 and c.r[1] == TCDM_BASE + 4


def test_hwloop_nested_and_zero_count():
    src = """
    lp.setupi 1, 3, outer
    lp.setupi 0, 4, inner
    addi x1, x1, 1
inner:
    addi x2, x2, 1
outer:
    lp.counti 0, 0
    lp.starti 0, s
    lp.endi 0, e
s:  addi x3, x3, 1
e:
    """
    _, c = run(src)
    assert c.r[1] == 12 and c.r[2] == 3 and c.r[3] == 1


def test_branch_and_load_use_costs():
    tm = load_timing()
    rep, _ = run("addi x1, x0, 1\naddi x2, x0, 2")
    base = rep.total_cycles
    assert base == 2 + tm.pipeline_fill
    rep, _ = run("beq x0, x0, t\naddi x1, x0, 1\nt:\naddi x2, x0, 2")
    assert rep.total_cycles == 2 + tm.branch_taken + tm.pipeline_fill
    assert rep.stalls["branch"] == tm.branch_taken
    rep, _ = run(f"li x1, {TCDM_BASE:#x}\nlw x2, 0(x1)\naddi x3, x2, 1")
    assert rep.stalls["load_use"] == tm.load_use


def test_timing_override_and_range_check():
    tm = load_timing(branch_taken=3)
    rep, _ = run("beq x0, x0, t\nnop\nt:\nnop", timing=tm)
    assert rep.stalls["branch"] == 3
    with pytest.raises(ValueError):
        load_timing(barrier=1000)


def test_bank_conflict_between_cores():
    src = f"li x1, {TCDM_BASE:#x}\nlw x2, 0(x1)\nbarrier"
    rep, _ = run_cluster([assemble(src)] * 2, 2)
    assert rep.stalls["bank_conflict"] == 1
    rep, _ = run_cluster([assemble(src)] * 2, 2, timing=load_timing(contention=False))
    assert rep.stalls["bank_conflict"] == 0
    assert bank_of(TCDM_BASE + 4) == 1 and bank_of(TCDM_BASE + 64) == 0


def test_barrier_release():
    tm = load_timing()
    fast = assemble("barrier")
    slow = assemble("nop\nnop\nnop\nbarrier")
    rep, cores = run_cluster([fast, slow], 2)
    assert cores[0].t == cores[1].t == 3 + tm.barrier


def test_barrier_deadlock():
    with pytest.raises(BarrierDeadlock):
        run_cluster([assemble("barrier"), assemble("nop")], 2)


def test_watchdog():
    with pytest.raises(WatchdogError):
        run("l: jal x0, l", limit=100)


def test_memory_fault():
    with pytest.raises(MemoryFault):
        run("lw x1, 0(x0)")


def test_illegal_ml_sdotp_without_macload():
    with pytest.raises(IllegalInstruction):
        run("csrwi simd_fmt, 0x11\ncsrwi mix_skip, 1\nml.sdotp w0, a0, x1")


def test_simd_fmt_write_inside_hwloop_is_illegal():
    with pytest.raises(IllegalInstruction):
        run("lp.setupi 0, 2, e\ncsrwi simd_fmt, 0x11\ne:")


def test_mac_load_streams_operands():
    # a8w8: four weight words, activation words at stride 4
    src = f"""
.data {TCDM_BASE:#x}
    .word 0x01010101, 0x02020202
.data {TCDM_BASE + 0x100:#x}
    .word 0x01010101, 0x01010101, 0x01010101, 0x01010101
.text
    csrwi simd_fmt, 0x11
    csrwi mix_skip, 1
    csrwi macload_en, 1
    csrwi w_skip, 1
    csrwi a_skip, 1
    csrwi w_stride, 4
    csrwi w_rollback, 4
    csrwi a_stride, 4
    csrwi a_rollback, 4
    li x5, {TCDM_BASE + 0x100:#x}
    csrw w_addr, x5
    li x5, {TCDM_BASE:#x}
    csrw a_addr, x5
    nn.lw w0
    nn.lw a0
    ml.sdotp.a w0, a0, x1
    ml.sdotp w0, a1, x2
    """
    rep, c = run(src)
    assert c.r[1] == 4 and c.r[2] == 8
    assert rep.lane_macs == 8


def test_functional_run_matches_timed_image():
    src = f"li x1, {TCDM_BASE:#x}\ncsrr x2, mhartid\nslli x3, x2, 2\nadd x1, x1, x3\n" \
          "addi x2, x2, 10\nsw x2, 0(x1)\nbarrier\nlw x4, 4(x1)\n"
    prog = assemble(src)
    t1, t2 = Tcdm(), Tcdm()
    run_cluster(prog, 4, t1)
    functional_only_run(prog, 4, t2)
    assert t1.image() == t2.image()


def test_report_serialisation():
    rep, _ = run("nop\nnop")
    again = CycleReport.from_dict(rep.to_dict())
    assert again == rep
    assert rep.to_csv().splitlines()[0].startswith("scope,cycles")
    m = merge_reports([rep, rep])
    assert m.total_cycles == 2 * rep.total_cycles and m.schema_version == 1
