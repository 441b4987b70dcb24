"""Mac&Load controller: two-level strided address generation.

Each channel (weights, activations) walks ``skip`` inner steps of ``stride``
bytes, then applies ``rollback`` once and starts the next inner run.  The
rollback is a signed full-width addend so the pointer can move backwards.
"""
from __future__ import annotations

from dataclasses import dataclass, field

MASK32 = 0xFFFFFFFF


def _s32(v: int) -> int:
    return ((v + 0x80000000) & MASK32) - 0x80000000


@dataclass
class MlcChannelState:
    addr: int = 0
    iter: int = 0
    stride: int = 0
    rollback: int = 0
    skip: int = 1

    def set_base(self, address: int) -> None:
        self.addr = address & MASK32
        self.iter = 0

    def reset_iter(self) -> None:
        self.iter = 0

    def configure(self, stride=None, rollback=None, skip=None) -> None:
        if stride is not None:
            self.stride = _s32(stride)
        if rollback is not None:
            self.rollback = _s32(rollback)
        if skip is not None:
            if skip < 0:
                raise ValueError("skip must be non-negative")
            self.skip = skip
        self.iter = 0

    def next(self) -> int:
        """Emit the current address and step the pattern (a skip of 0 acts as 1)."""
        out = self.addr
        if self.iter < max(self.skip, 1) - 1:
            self.addr = (self.addr + self.stride) & MASK32
            self.iter += 1
        else:
            self.addr = (self.addr + self.rollback) & MASK32
            self.iter = 0
        return out


def mlc_next(ch: MlcChannelState) -> tuple[int, MlcChannelState]:
    """Pure step: ``(address, new_state)`` leaving ``ch`` untouched."""
    nxt = MlcChannelState(ch.addr, ch.iter, ch.stride, ch.rollback, ch.skip)
    return nxt.next(), nxt


def mlc_set_base(ch: MlcChannelState, address: int) -> None:
    ch.set_base(address)


def mlc_reset_iter(ch: MlcChannelState) -> None:
    ch.reset_iter()


@dataclass
class MlcState:
    weights: MlcChannelState = field(default_factory=MlcChannelState)
    acts: MlcChannelState = field(default_factory=MlcChannelState)

    def channel(self, name: str) -> MlcChannelState:
        return self.weights if name == "w" else self.acts


def rollback_for(stride: int, skip: int, outer_step: int) -> int:
    """Rollback that undoes ``skip - 1`` inner strides and adds ``outer_step``."""
    return outer_step - (skip - 1) * stride
