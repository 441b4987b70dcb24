from .cluster import (BarrierDeadlock, SimulationError, WatchdogError, functional_only_run,
                      run_cluster, run_core)
from .core import CoreState
from .memory import TCDM_BASE, TCDM_SIZE, MemoryFault, Tcdm, bank_of
from .report import CycleReport, merge_reports
from .timing import TimingConfig, load_timing

__all__ = [
    "BarrierDeadlock", "CoreState", "CycleReport", "MemoryFault", "SimulationError",
    "TCDM_BASE", "TCDM_SIZE", "Tcdm", "TimingConfig", "WatchdogError", "bank_of",
    "functional_only_run", "load_timing", "merge_reports", "run_cluster", "run_core",
]
