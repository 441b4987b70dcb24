"""Cycle reports and their JSON/CSV serialisation."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

SCHEMA_VERSION = 1
STALL_KINDS = ("load_use", "branch", "bank_conflict", "barrier")


@dataclass
class CycleReport:
    total_cycles: int
    instructions: int
    stalls: dict
    macs: int
    lane_macs: int
    mac_per_cycle: float
    per_core: list = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def build(cls, total_cycles, per_core, macs=None):
        stalls = {k: sum(c["stalls"][k] for c in per_core) for k in STALL_KINDS}
        lane = sum(c["lane_macs"] for c in per_core)
        macs = lane if macs is None else macs
        return cls(total_cycles, sum(c["instructions"] for c in per_core), stalls, macs, lane,
                   macs / total_cycles if total_cycles else 0.0, per_core)

    def with_macs(self, macs: int) -> "CycleReport":
        return CycleReport(self.total_cycles, self.instructions, dict(self.stalls), macs,
                           self.lane_macs, macs / self.total_cycles if self.total_cycles else 0.0,
                           self.per_core)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "CycleReport":
        return cls(**d)

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["scope", "cycles", "instructions", *STALL_KINDS, "lane_macs", "macs",
                    "mac_per_cycle"])
        w.writerow(["total", self.total_cycles, self.instructions,
                    *(self.stalls[k] for k in STALL_KINDS), self.lane_macs, self.macs,
                    f"{self.mac_per_cycle:.6f}"])
        for c in self.per_core:
            w.writerow([f"core{c['core']}", c["cycles"], c["instructions"],
                        *(c["stalls"][k] for k in STALL_KINDS), c["lane_macs"], "", ""])
        return out.getvalue()


def merge_reports(reports, macs=None) -> CycleReport:
    """Sequential composition: cycles and counters add up."""
    reports = list(reports)
    total = sum(r.total_cycles for r in reports)
    stalls = {k: sum(r.stalls[k] for r in reports) for k in STALL_KINDS}
    lane = sum(r.lane_macs for r in reports)
    m = sum(r.macs for r in reports) if macs is None else macs
    return CycleReport(total, sum(r.instructions for r in reports), stalls, m, lane,
                       m / total if total else 0.0, [])
