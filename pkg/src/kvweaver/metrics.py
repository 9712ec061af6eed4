"""Reduction of frame traces to reported quantities.

Conventions:
- Steady-state reports drop the first ceil(max budget / k) warmup frames
  and stop at the last action-bearing frame, so the drain tail (batches
  shrinking after the final arrival) does not dilute steady statistics.
  Full-horizon reports (include_warmup=True) cover every executed frame.
- avg_batch_size is token-weighted (each decoded token reports the batch
  it was decoded in); avg_batch_size_frames is the plain per-frame mean
  including frames that decoded nothing. The former is what the result
  tables emit, the latter is the queueing-theory statistic that converges
  to arrival_rate x N / k under Poisson traffic.
- Rates are Hz (converted from integer microseconds at the edge).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .sim_engine import SimConfig, SimResult

__all__ = ["MetricsReport", "summarize", "speedup", "steady_window_bounds"]


@dataclass(frozen=True, slots=True)
class MetricsReport:
    action_freq_hz: float
    token_throughput: float
    avg_batch_size: float
    deadline_miss_rate: float
    per_request_action_freq: float
    warmup_frames: int
    avg_batch_size_frames: float
    actions_per_second: float
    frames_observed: int
    window: str  # "steady" or "full"


def _elapsed_us(trace, config: SimConfig) -> int:
    # FixedPeriod: the robot idles out the remainder of early frames
    if config.pacing == "FixedPeriod":
        return max(trace.total_us, config.period_us)
    return trace.total_us


def warmup_frame_count(config: SimConfig) -> int:
    return math.ceil(config.workload.max_budget / config.k)


def steady_window_bounds(result: SimResult, config: SimConfig) -> tuple[int, int]:
    """Half-open [start, end) frame window used by steady-state reports.

    Falls back to the full horizon when the run is shorter than its
    warmup (nothing steady ever happened; better to report everything
    than nothing).
    """
    n = len(result.traces)
    start = warmup_frame_count(config)
    if start >= n:
        return 0, n
    end = n
    for i in range(n - 1, -1, -1):
        if result.traces[i].actions_emitted > 0:
            end = i + 1
            break
    else:
        end = n
    if end <= start:
        return 0, n
    return start, end


def summarize(result: SimResult, config: SimConfig,
              include_warmup: bool = False) -> MetricsReport:
    if not result.traces:
        raise ValueError("cannot summarize an empty result")
    if include_warmup:
        start, end = 0, len(result.traces)
        window = "full"
    else:
        start, end = steady_window_bounds(result, config)
        window = "steady"
    frames = result.traces[start:end]
    h = config.backend_config.H

    sum_elapsed = 0
    sum_tokens = 0
    sum_actions = 0
    token_weighted_m = 0
    sum_m = 0
    action_frames = 0
    action_elapsed = 0
    misses = 0
    per_request_sum = 0.0
    arrivals = 0
    for tr in frames:
        e = _elapsed_us(tr, config)
        sum_elapsed += e
        sum_tokens += tr.tokens_emitted
        sum_actions += tr.actions_emitted
        token_weighted_m += tr.batch_size_m * tr.tokens_emitted
        sum_m += tr.batch_size_m
        if tr.actions_emitted > 0:
            if e == 0:
                raise ValueError(
                    f"frame {tr.frame} emitted actions in zero time; "
                    f"cost parameters are degenerate"
                )
            action_frames += 1
            action_elapsed += e
            if not tr.deadline_met:
                misses += 1
            per_request_sum += tr.arrival_count * (h * 1_000_000 / e)
            arrivals += tr.arrival_count

    if action_frames:
        action_freq = h * 1_000_000 * action_frames / action_elapsed
    else:
        action_freq = 0.0
    return MetricsReport(
        action_freq_hz=action_freq,
        token_throughput=(1_000_000 * sum_tokens / sum_elapsed) if sum_elapsed else 0.0,
        avg_batch_size=(token_weighted_m / sum_tokens) if sum_tokens else 0.0,
        deadline_miss_rate=(misses / action_frames) if action_frames else 0.0,
        per_request_action_freq=(per_request_sum / arrivals) if arrivals else 0.0,
        warmup_frames=warmup_frame_count(config),
        avg_batch_size_frames=(sum_m / len(frames)) if frames else 0.0,
        actions_per_second=(1_000_000 * sum_actions / sum_elapsed) if sum_elapsed else 0.0,
        frames_observed=len(frames),
        window=window,
    )


def speedup(ours: MetricsReport, baseline: MetricsReport) -> float:
    """Ratio of action frequencies. With the cost model's constant frames
    this equals the inverse ratio of frame latencies."""
    if baseline.action_freq_hz == 0:
        raise ValueError("baseline produced no actions; speedup undefined")
    return ours.action_freq_hz / baseline.action_freq_hz
