import pytest

from flexv.datapath import (DotpRequest, MpcState, dotp, lanes, mpc_advance, simd_sdotp,
                            slice_route)
from flexv.tensor import I2, I4, I8, U2, U4, U8


def test_lanes_lsb_first_and_sign():
    assert lanes(0x000000FF, 8, False) == (255, 0, 0, 0)
    assert lanes(0x000000FF, 8, True) == (-1, 0, 0, 0)
    assert lanes(0x00000021, 4, False)[:2] == (1, 2)
    assert len(lanes(0, 2, False)) == 16


def test_slice_route_selects_group():
    # a8w4: word holds 8 weights, group 1 is the upper half
    w = 0x87654321
    assert slice_route(w, 8, 4, 0, False) == (1, 2, 3, 4)
    assert slice_route(w, 8, 4, 1, False) == (5, 6, 7, 8)
    assert slice_route(w, 8, 4, 3, False) == (5, 6, 7, 8)


def test_slice_route_rejects_narrow_activations():
    with pytest.raises(ValueError):
        slice_route(0, 2, 4)


def test_dotp_wraps_32_bits():
    a = 0x7F7F7F7F
    w = 0x7F7F7F7F
    acc = 0x7FFFFFFF
    out = dotp(a, w, acc, 8, True, 8, True)
    assert out == ((acc + 4 * 127 * 127 + 2 ** 31) % 2 ** 32) - 2 ** 31


def test_simd_sdotp_request():
    req = DotpRequest(0x01010101, 0xFFFFFFFF, 10, U8, I8)
    assert simd_sdotp(req) == 10 - 4
    req = DotpRequest(0x11111111, 0x0000FFFF, 0, U4, I2, mpc_count=0)
    assert simd_sdotp(req) == -8
    assert simd_sdotp(DotpRequest(0x11111111, 0x0000FFFF, 0, U4, I2, 1)) == 0
    assert simd_sdotp(DotpRequest(0x55555555, 0x55555555, 0, U2, U2)) == 16
    assert simd_sdotp(DotpRequest(0x11111111, 0x11111111, 0, U4, I4)) == 8


def test_mpc_cycles_through_groups():
    s = MpcState(reuse_limit=4)
    seen = []
    for _ in range(8):
        seen.append((s.count, s.last_use))
        s.advance()
    assert [c for c, _ in seen] == [0, 1, 2, 3] * 2
    assert [lu for _, lu in seen] == [False, False, False, True] * 2
    s.reset(2)
    assert s.count == 0 and s.reuse_limit == 2


def test_mpc_advance_is_pure():
    s = MpcState(1, 2)
    n = mpc_advance(s)
    assert s.count == 1 and n.count == 0 and n.wrapped
    assert mpc_advance(s, consumes_weights=False).count == 1
