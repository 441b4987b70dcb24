"""Bit-true model of the mixed-precision dot-product unit.

A 32-bit activation word carries ``n = 32 / pa`` lanes.  When weights are
narrower than activations, one weight word holds ``pa / pw`` groups of ``n``
weights; the mixed-precision controller's counter picks which group feeds the
current dot product (group 0 is the least-significant one).
"""
from __future__ import annotations

from dataclasses import dataclass
from operator import mul

from .tensor import Precision

_LANES: dict = {}
_SLICES: dict = {}


def lanes(word: int, bits: int, signed: bool) -> tuple:
    """Split a 32-bit word into ``32 // bits`` lanes, LSB-first."""
    table = _LANES.get((bits, signed))
    if table is None:
        table = _LANES[(bits, signed)] = {}
    word &= 0xFFFFFFFF
    out = table.get(word)
    if out is None:
        mask = (1 << bits) - 1
        half = 1 << (bits - 1)
        vals = [(word >> s) & mask for s in range(0, 32, bits)]
        if signed:
            vals = [v - (half << 1) if v & half else v for v in vals]
        out = table[word] = tuple(vals)
        if len(table) > 1 << 20:
            table.clear()
    return out


def slice_route(op_b: int, pa: int, pw: int, count: int = 0, signed: bool = True) -> tuple:
    """Weights routed to the dot-product sub-unit for activation width ``pa``.

    Returns ``32 // pa`` values: the ``count``-th consecutive group of ``pw``-bit
    fields in ``op_b``.  With ``pa == pw`` the whole word is used and ``count``
    is ignored.
    """
    if pa < pw:
        raise ValueError("activation precision narrower than weight precision")
    n = 32 // pa
    ratio = pa // pw
    key = (op_b & 0xFFFFFFFF, pa, pw, count % ratio, signed)
    out = _SLICES.get(key)
    if out is None:
        full = lanes(op_b, pw, signed)
        g = count % ratio
        out = _SLICES[key] = full[g * n:(g + 1) * n]
        if len(_SLICES) > 1 << 20:
            _SLICES.clear()
    return out


def dotp(op_a: int, op_b: int, acc: int, pa: int, a_signed: bool,
         pw: int, w_signed: bool, count: int = 0) -> int:
    """``acc + sum(a_i * w_i)`` with 32-bit signed wraparound."""
    a = lanes(op_a, pa, a_signed)
    w = slice_route(op_b, pa, pw, count, w_signed) if pw != pa else lanes(op_b, pw, w_signed)
    v = acc + sum(map(mul, a, w))
    return ((v + 0x80000000) & 0xFFFFFFFF) - 0x80000000


@dataclass(frozen=True)
class DotpRequest:
    op_a: int
    op_b: int
    acc: int
    pa: Precision
    pw: Precision
    mpc_count: int = 0


def simd_sdotp(req: DotpRequest) -> int:
    return dotp(req.op_a, req.op_b, req.acc, req.pa.bits, req.pa.signed,
                req.pw.bits, req.pw.signed, req.mpc_count)


@dataclass
class MpcState:
    """Mixed-precision controller counter (``MPC_CNT``)."""
    count: int = 0
    reuse_limit: int = 1
    wrapped: bool = False

    def advance(self) -> bool:
        limit = max(self.reuse_limit, 1)
        self.count = (self.count + 1) % limit
        self.wrapped = self.count == 0
        return self.wrapped

    @property
    def last_use(self) -> bool:
        """True when the current weight container is on its final use."""
        return self.count == max(self.reuse_limit, 1) - 1

    def reset(self, reuse_limit: int | None = None) -> None:
        if reuse_limit is not None:
            self.reuse_limit = reuse_limit
        self.count = 0
        self.wrapped = False


def mpc_advance(state: MpcState, consumes_weights: bool = True) -> MpcState:
    """Pure form of :meth:`MpcState.advance`."""
    nxt = MpcState(state.count, state.reuse_limit, False)
    if consumes_weights:
        nxt.advance()
    return nxt
