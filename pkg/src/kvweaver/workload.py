"""Arrival stream generation.

A workload turns a seed into a frame-indexed list of arrivals, each
carrying an observation and a decode budget. Draws are ordered so streams
are bit-reproducible: for every frame, first the arrival count, then per
arrival the budget (patterns that randomize it) followed by the
observation tokens.
"""

from __future__ import annotations

from dataclasses import dataclass

from .backend import Observation
from .rng import SplitMix64

__all__ = ["WorkloadSpec", "Arrival", "generate_arrivals", "PATTERNS"]

PATTERNS = ("OnePerFrame", "Uniform", "Poisson", "MixedLength")


@dataclass(frozen=True, slots=True)
class WorkloadSpec:
    """What arrives when.

    pattern:
      OnePerFrame  one request per frame, budget default_N
      Uniform      a fixed rate of r requests every frame
      Poisson      per-frame counts drawn Poisson(lam), Knuth product method
      MixedLength  one request per frame; budget long_N w.p. p_long else short_N
    """

    pattern: str = "OnePerFrame"
    default_N: int = 12
    obs_len: int = 800
    num_frames: int = 40
    seed: int = 1
    lam: float = 0.5
    r: int = 1
    short_N: int = 10
    long_N: int = 50
    p_long: float = 0.3

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise ValueError(
                f"unknown pattern {self.pattern!r}, expected one of {PATTERNS}"
            )
        if self.num_frames < 0:
            raise ValueError("num_frames must be nonnegative")
        if self.obs_len < 1:
            raise ValueError("obs_len must be >= 1")
        if min(self.default_N, self.short_N, self.long_N) < 1:
            raise ValueError("decode budgets must be >= 1")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.r < 0:
            raise ValueError("r must be nonnegative")
        if not (0.0 <= self.p_long <= 1.0):
            raise ValueError("p_long must lie in [0, 1]")

    @property
    def arrivals_per_frame(self) -> float:
        """Mean arrival rate; the `lambda` column of result rows."""
        if self.pattern == "Uniform":
            return float(self.r)
        if self.pattern == "Poisson":
            return self.lam
        return 1.0

    @property
    def max_budget(self) -> int:
        """Largest budget this spec can assign. Bounds warmup length."""
        if self.pattern == "MixedLength":
            if self.p_long >= 1.0:
                return self.long_N
            if self.p_long <= 0.0:
                return self.short_N
            return max(self.short_N, self.long_N)
        return self.default_N


@dataclass(frozen=True, slots=True)
class Arrival:
    frame: int
    observation: Observation
    n_tokens: int

    def __post_init__(self):
        if self.n_tokens < 1:
            raise ValueError("n_tokens must be >= 1")


def _count_for_frame(spec: WorkloadSpec, rng: SplitMix64) -> int:
    if spec.pattern == "Uniform":
        return spec.r
    if spec.pattern == "Poisson":
        return rng.poisson(spec.lam)
    return 1  # OnePerFrame and MixedLength


def _budget(spec: WorkloadSpec, rng: SplitMix64) -> int:
    if spec.pattern == "MixedLength":
        return spec.long_N if rng.uniform() < spec.p_long else spec.short_N
    return spec.default_N


def generate_arrivals(spec: WorkloadSpec, vocab: int = 64) -> list[Arrival]:
    """Deterministic in (spec, vocab); same seed, same stream."""
    rng = SplitMix64(spec.seed)
    out: list[Arrival] = []
    for frame in range(spec.num_frames):
        for _ in range(_count_for_frame(spec, rng)):
            n_tokens = _budget(spec, rng)
            obs_tokens = tuple(rng.below(vocab) for _ in range(spec.obs_len))
            out.append(
                Arrival(
                    frame=frame,
                    observation=Observation(obs_tokens=obs_tokens, frame=frame),
                    n_tokens=n_tokens,
                )
            )
    return out
