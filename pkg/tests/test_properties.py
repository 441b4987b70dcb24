"""Randomized property suites; each runs at least 1000 generated cases."""
import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from flexv.deploy import TilingError, check_plan, solve_tiling, tile_bytes
from flexv.engine import Tcdm, functional_only_run, run_cluster
from flexv.kernels import KernelConfig, build_layer, load_layer
from flexv.tensor import (LayerSpec, Precision, QuantParams, pack, quantize_array,
                          random_tensor, reference_quantize, unpack)

N = 1000
CASES = settings(max_examples=N, deadline=None, derandomize=True,
                 suppress_health_check=[HealthCheck.too_slow])

precisions = st.builds(Precision, st.sampled_from([2, 4, 8]), st.booleans())


@st.composite
def tensors(draw):
    p = draw(precisions)
    per = 8 // p.bits
    inner = per * draw(st.integers(1, 8))
    outer = draw(st.integers(1, 6))
    vals = draw(st.lists(st.integers(p.lo, p.hi), min_size=outer * inner,
                         max_size=outer * inner))
    return p, (outer, inner), vals


@CASES
@given(tensors())
def test_pack_unpack_roundtrip(case):
    p, shape, vals = case
    t = pack(vals, p, shape)
    assert unpack(t).tolist() == vals
    assert len(t.data) == len(vals) * p.bits // 8
    assert pack(unpack(t), p, shape) == t


quant = st.builds(QuantParams, st.integers(0, 1 << 10), st.integers(-(1 << 20), 1 << 20),
                  st.integers(0, 31), precisions)


@CASES
@given(quant, st.lists(st.integers(-(1 << 31), (1 << 31) - 1), min_size=2, max_size=16))
def test_quantize_range_and_monotonic(q, accs):
    out = quantize_array(np.array(accs), q)
    assert out.min() >= q.out.lo and out.max() <= q.out.hi
    order = np.argsort(accs, kind="stable")
    assert np.all(np.diff(out[order]) >= 0)  # m >= 0: non-decreasing in acc
    assert [reference_quantize(a, q) for a in accs] == out.tolist()


PAIRS = [(2, 2), (4, 2), (4, 4), (8, 2), (8, 4), (8, 8)]


@st.composite
def tiny_layers(draw):
    pa, pw = draw(st.sampled_from(PAIRS))
    act, weight = Precision(pa), Precision(pw, True)
    step = 8 // pw
    k = draw(st.sampled_from([1, 3]))
    pad = draw(st.integers(0, 1)) if k == 3 else 0
    lo = max(1, k - 2 * pad)
    h, w = draw(st.integers(lo, lo + 3)), draw(st.integers(lo, lo + 3))
    spec = LayerSpec(h, w, step * draw(st.integers(1, 2)), draw(st.integers(1, 6)), k, k,
                     draw(st.integers(1, 2)), pad, act, weight,
                     QuantParams(1, draw(st.integers(-8, 8)), draw(st.integers(0, 8)),
                                 Precision(8)))
    mode = draw(st.sampled_from(["flexv", "xpulpv2"]))
    return spec, mode, draw(st.integers(1, 4)), draw(st.integers(0, 2 ** 32 - 1))


@CASES
@given(tiny_layers())
def test_timing_does_not_change_function(case):
    spec, mode, cores, seed = case
    cfg = KernelConfig.from_layer(spec, mode=mode, cores=cores)
    build = build_layer(cfg)
    rng = np.random.default_rng(seed)
    x = random_tensor(rng, spec.input_shape, spec.act)
    w = random_tensor(rng, spec.weight_shape, spec.weight)
    timed, func = Tcdm(), Tcdm()
    for t in (timed, func):
        load_layer(build, t, x, w)
    run_cluster(list(build.programs), cores, timed)
    functional_only_run(list(build.programs), cores, func)
    assert timed.image() == func.image()


@st.composite
def tiling_cases(draw):
    pa, pw = draw(st.sampled_from(PAIRS))
    po = draw(st.sampled_from([2, 4, 8]))
    k = draw(st.sampled_from([1, 3, 5]))
    pad = draw(st.integers(0, k // 2))
    lo = max(1, k - 2 * pad)
    spec = LayerSpec(draw(st.integers(lo, 20)), draw(st.integers(lo, 20)),
                     draw(st.integers(1, 40)), (8 // po) * draw(st.integers(1, 12)), k, k,
                     draw(st.integers(1, 2)), pad, Precision(pa), Precision(pw, True),
                     QuantParams(1, 0, 0, Precision(po)))
    mode = draw(st.sampled_from(["flexv", "xpulpv2"]))
    return spec, draw(st.integers(256, 48 * 1024)), mode, draw(st.integers(1, 8))


@CASES
@given(tiling_cases())
def test_tiling_fits_and_covers(case):
    spec, budget, mode, cores = case
    try:
        plan = solve_tiling(spec, budget, mode, cores)
    except TilingError:
        step = 8 // spec.quant.out.bits
        assert tile_bytes(spec, 1, 1, min(step, spec.cout), mode=mode, cores=cores) > budget
        return
    check_plan(plan)
    assert plan.l1_bytes <= budget
