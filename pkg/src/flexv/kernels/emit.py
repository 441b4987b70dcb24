"""Small assembly-text builder shared by the generators."""
from __future__ import annotations

from ..isa import Program, assemble


class Asm:
    def __init__(self, prefix: str = "L"):
        self.lines: list[str] = []
        self._n = 0
        self.prefix = prefix

    def __call__(self, *lines: str) -> "Asm":
        self.lines.extend(f"    {ln}" for ln in lines)
        return self

    def label(self, hint: str = "") -> str:
        self._n += 1
        return f".{self.prefix}{hint}{self._n}"

    def place(self, name: str) -> "Asm":
        self.lines.append(f"{name}:")
        return self

    def comment(self, text: str) -> "Asm":
        self.lines.append(f"    # {text}")
        return self

    def extend(self, other: "Asm") -> "Asm":
        self.lines.extend(other.lines)
        return self

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"

    def program(self) -> Program:
        return assemble(self.text())


def loop(asm: Asm, level: int, count: int, body) -> None:
    """Hardware loop around ``body(asm)``; a single trip is emitted inline."""
    if count <= 0:
        return
    if count == 1:
        body(asm)
        return
    end = asm.label("e")
    asm(f"lp.setupi {level}, {count}, {end}")
    body(asm)
    asm.place(end)


def store_bytes(asm: Asm, reg: int, ptr: int, nbytes: int, aligned: bool) -> None:
    """Store the low ``nbytes`` of ``reg`` at ``ptr`` and advance ``ptr`` (clobbers ``reg``)."""
    if aligned and nbytes in (1, 2, 4):
        op = {1: "p.sb", 2: "p.sh", 4: "p.sw"}[nbytes]
        asm(f"{op} x{reg}, {nbytes}(x{ptr}!)")
        return
    for i in range(nbytes):
        asm(f"p.sb x{reg}, 1(x{ptr}!)")
        if i + 1 < nbytes:
            asm(f"srli x{reg}, x{reg}, 8")
