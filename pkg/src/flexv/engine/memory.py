"""Shared, word-interleaved TCDM."""
from __future__ import annotations

TCDM_BASE = 0x1000_0000
TCDM_SIZE = 128 * 1024
N_BANKS = 16


class MemoryFault(Exception):
    pass


def bank_of(addr: int) -> int:
    return ((addr - TCDM_BASE) >> 2) % N_BANKS


class Tcdm:
    def __init__(self, size: int = TCDM_SIZE, base: int = TCDM_BASE):
        self.base = base
        self.size = size
        self.buf = bytearray(size)
        self.w32 = memoryview(self.buf).cast("I")
        self.w16 = memoryview(self.buf).cast("H")

    def _off(self, addr: int, n: int) -> int:
        off = addr - self.base
        if off < 0 or off + n > self.size:
            raise MemoryFault(f"access of {n} bytes at {addr:#x} outside TCDM")
        return off

    def write(self, addr: int, data) -> None:
        off = self._off(addr, len(data))
        self.buf[off:off + len(data)] = bytes(data)

    def read(self, addr: int, n: int) -> bytes:
        off = self._off(addr, n)
        return bytes(self.buf[off:off + n])

    def load_segments(self, segments) -> None:
        for addr, blob in segments:
            self.write(addr, blob)

    def read_word(self, addr: int) -> int:
        off = self._off(addr, 4)
        if off & 3:
            raise MemoryFault(f"misaligned word access at {addr:#x}")
        return self.w32[off >> 2]

    def image(self) -> bytes:
        return bytes(self.buf)

    def copy(self) -> "Tcdm":
        t = Tcdm(self.size, self.base)
        t.buf[:] = self.buf
        return t
