import json

import numpy as np
import pytest

from flexv.deploy import (DmaModel, NetworkError, TilingError, bundled_networks, check_plan,
                         load_network, memory_footprint, parse_network, pipeline_cycles,
                         run_network, solve_tiling, tile_bytes)
from flexv.kernels import run_layer
from flexv.tensor import I4, I8, U4, U8, LayerSpec, QuantParams

Q8 = QuantParams(1, 0, 8, U8)


def small_net(**over):
    doc = {"name": "small", "input": {"shape": [10, 9, 8], "precision": "u8"}, "seed": 5,
           "layers": [
               {"name": "c1", "cout": 12, "kh": 3, "padding": 1, "act": "u8", "weight": "i4",
                "quant": {"m": 3, "b": -20, "d": 8, "out": "u4"}},
               {"name": "c2", "cout": 8, "kh": 3, "stride": 2, "padding": 1, "act": "u4",
                "weight": "i2", "quant": {"m": 1, "b": 4, "d": 4, "out": "u8"}},
               {"name": "dw", "type": "depthwise", "kh": 3, "padding": 1, "act": "u8",
                "weight": "i8", "quant": {"m": 1, "b": 0, "d": 7, "out": "u8"}},
               {"name": "pw", "cout": 6, "kh": 1, "act": "u8", "weight": "i8",
                "quant": {"m": 1, "b": 0, "d": 8, "out": "u8"}}]}
    doc.update(over)
    return doc


def test_whole_layer_fits_64k():
    layer = LayerSpec(16, 16, 32, 64, act=U8, weight=I8, quant=Q8)
    plan = solve_tiling(layer, 64 * 1024)
    assert plan.n_tiles == 1
    check_plan(plan)


def test_small_budget_gives_multi_tile_plan():
    layer = LayerSpec(16, 16, 32, 64, act=U8, weight=I8, quant=Q8)
    plan = solve_tiling(layer, 8 * 1024)
    assert plan.n_tiles > 1 and plan.l1_bytes <= 8 * 1024
    check_plan(plan)


def test_alignment_pads_channels():
    layer = LayerSpec(8, 8, 3, 8, act=U4, weight=I4, quant=QuantParams(1, 0, 4, U4))
    plan = solve_tiling(layer)
    assert plan.cin == 4
    assert all(t.geom.cin == 4 for t in plan.tiles)
    check_plan(plan)


def test_infeasible_budget():
    with pytest.raises(TilingError):
        solve_tiling(LayerSpec(16, 16, 32, 64), 512)


def test_tiles_are_objective_optimal_for_tiny_layer():
    layer = LayerSpec(6, 6, 8, 4, act=U8, weight=I8, quant=Q8)
    budget = 1800
    plan = solve_tiling(layer, budget, cores=1)
    best = max(th * tw * tc for th in range(1, 7) for tw in range(1, 7) for tc in range(1, 5)
               if tile_bytes(layer, th, tw, tc, cores=1) <= budget)
    assert plan.th * plan.tw * plan.tc == best


def test_dma_model():
    d = DmaModel()
    assert d.cycles(0) == 0 and d.cycles(1) == 11 and d.cycles(64) == 18


def test_pipeline_overlaps_transfers():
    layer = LayerSpec(16, 16, 32, 64, act=U8, weight=I8, quant=Q8)
    plan = solve_tiling(layer, 8 * 1024)
    n = plan.n_tiles
    total, busy = pipeline_cycles(plan, [10 ** 6] * n, DmaModel())
    assert total < n * 10 ** 6 + busy
    assert total >= n * 10 ** 6


def test_schema_errors_carry_pointer():
    doc = small_net()
    doc["layers"][1]["weight"] = "i3"
    with pytest.raises(NetworkError, match=r"^/layers/1/weight"):
        parse_network(doc)
    with pytest.raises(NetworkError, match=r"^/: 'layers'"):
        parse_network({"name": "x", "input": {"shape": [1, 1, 1], "precision": "u8"}})


def test_precision_chaining_checked():
    doc = small_net()
    doc["layers"][1]["act"] = "u8"
    with pytest.raises(NetworkError, match="producer precision"):
        parse_network(doc)


def test_depthwise_needs_8_bits():
    doc = small_net()
    doc["layers"][2]["weight"] = "i4"
    with pytest.raises(NetworkError, match="depthwise"):
        parse_network(doc)


def test_footprint_single_weight():
    doc = {"name": "one", "input": {"shape": [1, 1, 1], "precision": "u8"},
           "layers": [{"name": "l", "cout": 1, "kh": 1, "act": "u8", "weight": "i8"}]}
    assert memory_footprint(parse_network(doc)) == 1 + 12


@pytest.mark.parametrize("mode", ["flexv", "xpulpv2"])
@pytest.mark.parametrize("budget", [64 * 1024, 2500])
def test_run_network_bit_exact(mode, budget):
    net = parse_network(small_net())
    res = run_network(net, mode=mode, cores=4, budget=budget)
    assert res.bit_exact, res.mismatches
    assert res.output.shape == (5, 5, 6)
    assert all(ly.l1_bytes <= budget for ly in res.layers)


def test_performance_mode_matches_exact_timing():
    net = parse_network(small_net())
    a = run_network(net, cores=4, budget=2500)
    b = run_network(net, cores=4, budget=2500, exact=False)
    assert a.cycles == b.cycles and b.bit_exact is None


def test_one_layer_net_matches_kernel_benchmark():
    doc = {"name": "one", "input": {"shape": [8, 8, 16], "precision": "u8"}, "layers": [
        {"name": "c", "cout": 16, "kh": 3, "padding": 1, "act": "u8", "weight": "i4",
         "quant": {"m": 1, "b": 0, "d": 8, "out": "u8"}}]}
    net = parse_network(doc)
    res = run_network(net, cores=8)
    spec = net.resolve()[0].spec
    rng = np.random.default_rng(0)
    from flexv.tensor import random_tensor
    _, rep = run_layer(spec, random_tensor(rng, spec.input_shape, spec.act),
                       random_tensor(rng, spec.weight_shape, spec.weight), cores=8)
    ly = res.layers[0]
    assert ly.n_tiles == 1 and ly.compute_cycles == rep.total_cycles


def test_bundled_networks_resolve():
    names = bundled_networks()
    assert {"resnet20-4b2b.json", "mnv1-8b.json", "mnv1-8b4b.json"} <= set(names)
    for n in names:
        net = load_network(n)
        assert net.macs > 0


def test_network_report_json():
    res = run_network(parse_network(small_net()), cores=2, exact=False)
    doc = json.loads(res.to_json())
    assert doc["model"] == "geometry-proxy" and len(doc["layers"]) == 4
    assert doc["layers"][0]["report"]["schema_version"] == 1
