from flexv.mlc import MlcChannelState, MlcState, mlc_next, rollback_for


def walk(ch, n):
    return [ch.next() for _ in range(n)]


def test_inner_then_rollback():
    ch = MlcChannelState()
    ch.configure(stride=36, rollback=rollback_for(36, 4, 4), skip=4)
    ch.set_base(0x1000)
    got = walk(ch, 8)
    assert got == [0x1000, 0x1024, 0x1048, 0x106C, 0x1004, 0x1028, 0x104C, 0x1070]


def test_skip_zero_acts_as_one():
    ch = MlcChannelState(skip=0, rollback=4, stride=100)
    assert walk(ch, 3) == [0, 4, 8]


def test_negative_rollback_wraps_32_bits():
    ch = MlcChannelState(addr=4, skip=1, rollback=-8)
    assert walk(ch, 2) == [4, 0xFFFFFFFC]


def test_set_base_resets_inner_counter():
    ch = MlcChannelState(stride=4, rollback=100, skip=3)
    ch.next()
    ch.set_base(0)
    assert walk(ch, 4) == [0, 4, 8, 108]


def test_pure_step():
    ch = MlcChannelState(addr=8, stride=4, skip=2)
    a, nxt = mlc_next(ch)
    assert a == 8 and nxt.addr == 12 and ch.addr == 8


def test_state_channels():
    s = MlcState()
    assert s.channel("w") is s.weights and s.channel("a") is s.acts
