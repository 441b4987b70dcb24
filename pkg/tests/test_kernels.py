import numpy as np
import pytest

from flexv.bench import verify_case
from flexv.engine import Tcdm, run_core
from flexv.kernels import (ConvGeometry, KernelConfig, KernelError, build_layer,
                           check_quant_range, emit_im2col, emit_quantize, load_layer,
                           plan_matmul, run_layer, with_overrides)
from flexv.tensor import (I2, I4, I8, U2, U4, U8, LayerSpec, QuantParams, pack, quantize_array,
                          random_tensor, reference_im2col, reference_layer, unpack_bytes)

PAIRS = [(U2, I2), (U4, I2), (U4, I4), (U8, I2), (U8, I4), (U8, I8)]


@pytest.mark.parametrize("mode", ["flexv", "xpulpv2"])
@pytest.mark.parametrize("act,weight", PAIRS, ids=lambda p: str(p))
def test_layer_bit_exact_with_leftovers(act, weight, mode):
    # 5 filters (one leftover) and 3x5 = 15 pixels (odd per core)
    spec = LayerSpec(3, 5, 16, 5, 3, 3, 1, 1, act, weight, QuantParams(3, -7, 9, U8))
    rng = np.random.default_rng(7)
    x = random_tensor(rng, spec.input_shape, act)
    w = random_tensor(rng, spec.weight_shape, weight)
    y, rep = run_layer(spec, x, w, mode=mode, cores=3)
    assert y.data == reference_layer(spec, x, w).data
    assert rep.macs == spec.macs and rep.total_cycles > 0


def test_sub_byte_outputs_and_stride():
    spec = LayerSpec(7, 6, 8, 8, 3, 3, 2, 0, U8, I4, QuantParams(1, 3, 6, U2))
    rng = np.random.default_rng(8)
    x = random_tensor(rng, spec.input_shape, U8)
    w = random_tensor(rng, spec.weight_shape, I4)
    y, _ = run_layer(spec, x, w, functional=True, mode="flexv", cores=2)
    assert y.data == reference_layer(spec, x, w).data


def test_im2col_program():
    spec = LayerSpec(4, 4, 8, 4, 3, 3, 1, 1, U4, I4)
    cfg = KernelConfig.from_layer(spec, cores=1)
    rng = np.random.default_rng(9)
    x = random_tensor(rng, spec.input_shape, U4)
    build = build_layer(cfg)
    tcdm = Tcdm()
    load_layer(build, tcdm, x, random_tensor(rng, spec.weight_shape, I4))
    run_core(emit_im2col(cfg, [0, 5]), tcdm=tcdm)
    bufs = build.plan.layout.buffers[0]
    for pix, buf in ((0, bufs[0]), (5, bufs[1])):
        ref = reference_im2col(spec, x, divmod(pix, 4)).data
        assert tcdm.read(buf, len(ref)) == ref


def test_quantize_program():
    cfg = KernelConfig(ConvGeometry(1, 3, 4, 6, 1, 1, 1, 0, 0, 0, 0), U8, I8,
                       QuantParams(5, -100, 3, U4), cores=1)
    acc = np.array([[-50, 0, 17, 1000, 12, 80]] * 3, np.int64)
    tcdm = Tcdm()
    base = tcdm.base
    tcdm.write(base, b"".join(int(v).to_bytes(4, "little", signed=True) for v in acc.ravel()))
    run_core(emit_quantize(cfg, base, base + 0x100, 3), tcdm=tcdm)
    got = unpack_bytes(tcdm.read(base + 0x100, 9), U4, 18)
    assert got.tolist() == quantize_array(acc, cfg.quant).ravel().tolist()


def test_quant_overflow_guard():
    cfg = KernelConfig(ConvGeometry(4, 4, 64, 4), U8, I8, QuantParams(1 << 12, 0, 20))
    with pytest.raises(KernelError):
        check_quant_range(cfg)
    with pytest.raises(KernelError):
        build_layer(cfg)


def test_config_validation():
    g = ConvGeometry(4, 4, 8, 4)
    with pytest.raises(KernelError):
        KernelConfig(g, U2, I4)
    with pytest.raises(KernelError):
        KernelConfig(g, mode="xpulpv2", unroll="4x4")
    with pytest.raises(KernelError):
        KernelConfig(g, cores=9)
    with pytest.raises(KernelError):
        plan_matmul(KernelConfig(ConvGeometry(4, 4, 3, 4), U4, I4))
    with pytest.raises(KernelError):
        plan_matmul(KernelConfig(ConvGeometry(64, 64, 64, 64)))


def test_plan_csrs():
    cfg = KernelConfig(ConvGeometry(4, 4, 32, 8), U8, I4)
    plan = plan_matmul(cfg)
    assert plan.csr["simd_fmt"] == 0x21 and plan.csr["mix_skip"] == 2
    assert plan.csr["w_rollback"] == 4 - 3 * plan.fsize
    assert plan.k_iters == plan.kpad * 8 // 32
    with pytest.raises(KernelError):
        plan_matmul(with_overrides(cfg, bogus=1))


def test_injected_stride_fault_is_diagnosed():
    spec = LayerSpec(4, 4, 8, 8, 3, 3, 1, 1, U8, I8, QuantParams(1, 0, 8, U8))
    cfg = KernelConfig.from_layer(spec, cores=1)
    assert verify_case(cfg, 1).passed
    bad = with_overrides(cfg, a_stride=plan_matmul(cfg).bufsize + 4)
    r = verify_case(bad, 1, layer=spec)
    assert not r.passed
    assert r.address == build_layer(cfg).plan.layout.output + r.first_byte
    assert "first diverging byte" in r.describe()


def test_load_layer_checks_size():
    cfg = KernelConfig(ConvGeometry(4, 4, 8, 4), cores=1)
    with pytest.raises(ValueError):
        load_layer(build_layer(cfg), Tcdm(), pack([0] * 8, U8), pack([0] * 288, I8))
