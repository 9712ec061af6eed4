"""Deadline-aware multi-task inference scheduling over a shared KV cache.

A control-loop simulator for robot policies that pair a fast action expert
with a slow language expert on one backbone. The KV manager owns every
request's attention cache so a single observation prefill can serve both
experts and partially decoded language requests survive across control
frames, where they are batched together. Two interchangeable backends
drive it: a small real transformer for functional equivalence checks and
an analytical cost model for timing studies.
"""

from .backend import (
    ActionChunk,
    BackendConfig,
    CostModelBackend,
    CostModelParams,
    Observation,
    ToyBackend,
    make_backend,
)
from .kv_manager import BatchedState, GenerationState, KvCache, KvLayer, KvManager
from .metrics import MetricsReport, speedup, summarize, warmup_frame_count
from .rng import SplitMix64
from .scheduler import VARIANTS, FrameResult, FrameTrace
from .sim_engine import (
    PACINGS,
    SimConfig,
    SimResult,
    TranscriptEntry,
    run_simulation,
    transcript_to_json,
)
from .verify import SuiteReport, run_all_suites
from .workload import PATTERNS, Arrival, WorkloadSpec, generate_arrivals

__version__ = "0.1.0"

__all__ = [
    "ActionChunk",
    "Arrival",
    "BackendConfig",
    "BatchedState",
    "CostModelBackend",
    "CostModelParams",
    "FrameResult",
    "FrameTrace",
    "GenerationState",
    "KvCache",
    "KvLayer",
    "KvManager",
    "MetricsReport",
    "Observation",
    "PACINGS",
    "PATTERNS",
    "SimConfig",
    "SimResult",
    "SplitMix64",
    "SuiteReport",
    "ToyBackend",
    "TranscriptEntry",
    "VARIANTS",
    "WorkloadSpec",
    "generate_arrivals",
    "make_backend",
    "run_all_suites",
    "run_simulation",
    "speedup",
    "summarize",
    "transcript_to_json",
    "warmup_frame_count",
    "__version__",
]
