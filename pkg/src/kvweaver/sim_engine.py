"""Virtual-clock simulation driver.

run_simulation() advances frame by frame: it feeds each frame's arrivals to
the chosen scheduler variant, collects FrameTraces and, on the toy backend,
a per-request transcript (final tokens plus the action chunk). After the
arrival horizon it keeps running zero-arrival frames until every persisted
request has drained, so token accounting is exact rather than truncated.

Identical configs produce byte-identical results; transcript_to_json gives
a canonical serialization for checking exactly that.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .backend import (
    ActionChunk,
    BackendConfig,
    CostModelParams,
    make_backend,
)
from .kv_manager import KvManager
from .scheduler import (
    VARIANTS,
    FrameTrace,
    run_frame_isolated_parallel,
    run_frame_isolated_sequential,
    run_frame_shared_no_batch,
    run_frame_unified,
)
from .workload import WorkloadSpec, generate_arrivals

__all__ = [
    "SimConfig",
    "TranscriptEntry",
    "SimResult",
    "run_simulation",
    "transcript_to_json",
]

PACINGS = ("LatencyBound", "FixedPeriod")


@dataclass(frozen=True, slots=True)
class SimConfig:
    variant: str = "Unified"
    backend_kind: str = "Toy"
    backend_config: BackendConfig = field(default_factory=BackendConfig)
    cost_params: CostModelParams = field(default_factory=CostModelParams)
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    k: int = 4
    f_min_hz: float = 30.0
    pacing: str = "LatencyBound"
    period_us: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(
                f"unknown variant {self.variant!r}, expected one of {VARIANTS}"
            )
        if self.backend_kind not in ("Toy", "CostModel"):
            raise ValueError(
                f"unknown backend kind {self.backend_kind!r} (use Toy or CostModel)"
            )
        if self.variant == "IsolatedParallel" and self.backend_kind == "Toy":
            raise ValueError(
                "IsolatedParallel is latency-model only and cannot run on the toy backend"
            )
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.f_min_hz <= 0:
            raise ValueError(f"f_min_hz must be positive, got {self.f_min_hz}")
        if self.pacing not in PACINGS:
            raise ValueError(
                f"unknown pacing {self.pacing!r}, expected one of {PACINGS}"
            )
        if self.pacing == "FixedPeriod" and self.period_us < 1:
            raise ValueError("FixedPeriod pacing needs period_us >= 1")


@dataclass(frozen=True, slots=True)
class TranscriptEntry:
    request_id: int
    arrival_frame: int
    completion_frame: int
    tokens: tuple[int, ...]
    action: ActionChunk


@dataclass(slots=True)
class SimResult:
    traces: tuple[FrameTrace, ...]
    transcript: dict[int, TranscriptEntry]


def run_simulation(config: SimConfig) -> SimResult:
    backend = make_backend(config.backend_kind, config.backend_config,
                           config.cost_params)
    arrivals = generate_arrivals(config.workload, config.backend_config.vocab)
    by_frame: dict[int, list] = {}
    for a in arrivals:
        by_frame.setdefault(a.frame, []).append(a)

    manager = KvManager()
    carries = config.variant == "Unified"
    keep_transcript = config.backend_kind == "Toy"
    pending: dict[int, tuple[int, ActionChunk]] = {}  # rid -> (arrival frame, chunk)
    transcript: dict[int, TranscriptEntry] = {}
    traces: list[FrameTrace] = []
    next_isolated_id = 0
    horizon = config.workload.num_frames
    # every live request drains within ceil(max budget / k) extra frames
    guard = horizon + math.ceil(config.workload.max_budget / config.k) + 2

    t = 0
    while t < horizon or (carries and manager.active_ids()):
        if t > guard:
            raise RuntimeError(
                f"drain did not converge by frame {t}; "
                f"{len(manager.active_ids())} requests still live"
            )
        frame_arrivals = by_frame.get(t, [])
        if config.variant == "Unified":
            res = run_frame_unified(t, frame_arrivals, manager, backend,
                                    config.k, config.f_min_hz)
        elif config.variant == "SharedNoBatch":
            res = run_frame_shared_no_batch(t, frame_arrivals, manager, backend,
                                            config.f_min_hz)
        elif config.variant == "IsolatedSequential":
            res = run_frame_isolated_sequential(t, frame_arrivals, backend,
                                                config.f_min_hz, next_isolated_id)
            next_isolated_id += len(frame_arrivals)
        else:
            res = run_frame_isolated_parallel(t, frame_arrivals, backend,
                                              config.f_min_hz, next_isolated_id)
            next_isolated_id += len(frame_arrivals)

        traces.append(res.trace)
        if keep_transcript:
            for rid, chunk in res.actions:
                pending[rid] = (t, chunk)
            for rid, tokens in res.finished:
                arrived, chunk = pending.pop(rid)
                transcript[rid] = TranscriptEntry(
                    request_id=rid, arrival_frame=arrived, completion_frame=t,
                    tokens=tokens, action=chunk,
                )
        t += 1

    if pending:
        raise RuntimeError(
            f"requests never completed: {sorted(pending)}"
        )
    return SimResult(traces=tuple(traces), transcript=transcript)


def transcript_to_json(result: SimResult) -> str:
    """Canonical transcript serialization (stable key order, full floats)."""
    payload = {
        str(rid): {
            "arrival_frame": e.arrival_frame,
            "completion_frame": e.completion_frame,
            "tokens": list(e.tokens),
            "action": e.action.actions.tolist(),
        }
        for rid, e in result.transcript.items()
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))
