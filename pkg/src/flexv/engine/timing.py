"""Timing constants for the cycle model, loaded from ``data/timing.json``."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from importlib import resources


@dataclass(frozen=True)
class TimingConfig:
    issue: int = 1
    branch_taken: int = 2
    load_use: int = 1
    hwloop_backedge: int = 0
    barrier: int = 20
    pipeline_fill: int = 3
    contention: bool = True

    def check(self, ranges: dict) -> "TimingConfig":
        for name, (lo, hi) in ranges.items():
            v = getattr(self, name)
            if not lo <= v <= hi:
                raise ValueError(f"timing constant {name}={v} outside calibration range [{lo}, {hi}]")
        return self

    def with_(self, **kw) -> "TimingConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


def load_ranges() -> dict:
    raw = json.loads(resources.files("flexv.data").joinpath("timing.json").read_text())
    return {k: tuple(v) for k, v in raw.get("ranges", {}).items()}


def load_timing(path=None, **overrides) -> TimingConfig:
    """Read the committed timing file (or ``path``) and apply ``overrides``."""
    if path is None:
        text = resources.files("flexv.data").joinpath("timing.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    raw = json.loads(text)
    names = {f.name for f in fields(TimingConfig)}
    cfg = TimingConfig(**{k: v for k, v in raw.items() if k in names})
    cfg = replace(cfg, **overrides)
    return cfg.check({k: tuple(v) for k, v in raw.get("ranges", {}).items()})
