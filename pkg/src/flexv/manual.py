"""ISA manual, rendered from the tables the simulator executes from."""
from __future__ import annotations

import json
from dataclasses import fields
from importlib import resources

from . import __version__
from .deploy.dma import DmaModel
from .engine.timing import TimingConfig
from .isa import CSRS, FMT_CODES, ML_FLAGS, OPS, SDOTP_FLAGS

SYNTAX = {
    "R": "rd, rs1, rs2", "I": "rd, rs1, imm", "U": "rd, imm", "LD": "rd, imm(rs1)",
    "PLD": "rd, imm(rs1!)", "ST": "rs2, imm(rs1)", "PST": "rs2, imm(rs1!)",
    "B": "rs1, rs2, label", "J": "rd, label", "BF": "rd, rs1, len, off",
    "CLIP": "rd, rs1, bits", "ADDN": "rd, rs1, rs2, shift", "SDOT": "rd, rs1, rs2",
    "ML": "wJ, aI, rd", "NNLW": "wJ | aI", "CSRW": "csr, rs1", "CSRWI": "csr, imm",
    "CSRR": "rd, csr", "LPS": "L, rs1, label", "LPSI": "L, imm, label", "LPC": "L, rs1",
    "LPCI": "L, imm", "LPL": "L, label", "N": "",
}

PSEUDO = (("li rd, imm", "lui/addi sequence (one addi when imm fits 12 bits)"),
          ("mv rd, rs1", "addi rd, rs1, 0"),
          ("nop", "addi x0, x0, 0"),
          ("csrw csr, imm", "csrwi"))

DMA_RANGES = {"bandwidth": (4, 16), "startup": (5, 50)}


def _timing() -> dict:
    return json.loads(resources.files("flexv.data").joinpath("timing.json").read_text())


def render() -> str:
    t = _timing()
    out = [f"# Flex-V simulator ISA manual (flexv {__version__})", "",
           "Generated by `flexv-sim isa-manual`; do not edit by hand.", "",
           "Registers: `x0`..`x31` (no ABI aliases), NN register file `w0`..`w3`, `a0`..`a1`.",
           "", "## Instructions", "", "| mnemonic | operands | unit | semantics |",
           "|---|---|---|---|"]
    for name in sorted(OPS):
        op = OPS[name]
        out.append(f"| `{name}` | `{SYNTAX[op.fmt]}` | {op.unit} | {op.summary} |")
    out += ["", "Suffixes:", "",
            "- `sdotp` takes " + ", ".join(f"`sdotp{'.' + f if f else ''}`" for f in SDOTP_FLAGS)
            + "; `.c` advances the mixed-precision controller.",
            "- `ml.sdotp` takes " + ", ".join(f"`ml.sdotp{'.' + f if f else ''}`" for f in ML_FLAGS)
            + ". `a`: load the next activation word into the other a-register. "
            "`w`: reload `wJ` when the controller is on its last count. `c`: advance the controller.",
            "", "Pseudo-instructions:", ""]
    for a, b in PSEUDO:
        out.append(f"- `{a}` expands to {b}")
    out += ["", "## CSRs", "", "| name | address | access | meaning |", "|---|---|---|---|"]
    for c in sorted(CSRS.values(), key=lambda c: c.addr):
        out.append(f"| `{c.name}` | `{c.addr:#05x}` | {'ro' if c.readonly else 'rw'} | {c.doc} |")
    out += ["", "`simd_fmt` codes: " + ", ".join(f"{k} = {v}-bit" for k, v in FMT_CODES.items())
            + ". Activations must be at least as wide as weights.", "",
            "## Timing constants", "",
            "Values from `data/timing.json`; overrides outside the range are rejected.", "",
            "| constant | value | calibration range | meaning |", "|---|---|---|---|"]
    notes, ranges = t.get("notes", {}), t.get("ranges", {})
    for f in fields(TimingConfig):
        v = t.get(f.name, f.default)
        lo_hi = ranges.get(f.name)
        rng = f"[{lo_hi[0]}, {lo_hi[1]}]" if lo_hi else "-"
        out.append(f"| `{f.name}` | {json.dumps(v)} | {rng} | {notes.get(f.name, '')} |")
    d = DmaModel()
    out += ["", "## DMA model", "",
            "Transfer cycles = startup + ceil(bytes / bandwidth); transfers overlap compute.", "",
            "| constant | value | calibration range |", "|---|---|---|",
            f"| `bandwidth` (bytes/cycle) | {d.bandwidth} | {list(DMA_RANGES['bandwidth'])} |",
            f"| `startup` (cycles) | {d.startup} | {list(DMA_RANGES['startup'])} |", ""]
    return "\n".join(out)
