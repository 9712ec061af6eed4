"""Per-frame execution flows.

Four variants of the same job, one frame at a time:

  Unified             one prefill per new observation, shared by the action
                      and language experts; language requests persist in the
                      manager and all active ones advance k tokens per frame
                      in a single batched decode.
  SharedNoBatch       the prefill is shared within the frame, but language
                      runs to completion immediately at batch size 1;
                      nothing carries across frames.
  IsolatedSequential  action and language each prefill the observation
                      themselves (two prefills), language runs to
                      completion at batch size 1.
  IsolatedParallel    cost-model only: both isolated paths run concurrently
                      and the frame costs max(path latencies) times a
                      contention factor.

Every function returns the frame's action chunks, completed transcripts
and a FrameTrace with the latency split. All times are integer
microseconds; IsolatedParallel's total is the contended maximum, which is
why the trace carries total_us separately from the component sum.
"""

from __future__ import annotations

from dataclasses import dataclass

from .backend import ActionChunk, CostModelBackend, ToyBackend
from .kv_manager import BatchedState, GenerationState, KvManager
from .workload import Arrival

__all__ = [
    "VARIANTS",
    "FrameTrace",
    "FrameResult",
    "run_frame_unified",
    "run_frame_shared_no_batch",
    "run_frame_isolated_sequential",
    "run_frame_isolated_parallel",
]

VARIANTS = ("Unified", "SharedNoBatch", "IsolatedSequential", "IsolatedParallel")

Backend = ToyBackend | CostModelBackend


@dataclass(frozen=True, slots=True)
class FrameTrace:
    """One frame's accounting.

    latency_components is (prefill, denoise, decode, overhead) in
    microseconds. total_us equals their sum except under IsolatedParallel,
    where paths overlap. deadline_met compares the frame's action rate
    (H per total_us) against the configured floor; frames that emit no
    actions trivially meet it.
    """

    frame: int
    prefill_count: int
    latency_components: tuple[int, int, int, int]
    batch_size_m: int
    tokens_emitted: int
    actions_emitted: int
    completed_ids: tuple[int, ...]
    deadline_met: bool
    total_us: int
    arrival_count: int

    def __post_init__(self):
        if any(c < 0 for c in self.latency_components):
            raise ValueError("latency components must be nonnegative")

    @property
    def prefill_us(self) -> int:
        return self.latency_components[0]

    @property
    def denoise_us(self) -> int:
        return self.latency_components[1]

    @property
    def decode_us(self) -> int:
        return self.latency_components[2]

    @property
    def overhead_us(self) -> int:
        return self.latency_components[3]


@dataclass(frozen=True, slots=True)
class FrameResult:
    actions: tuple[tuple[int, ActionChunk], ...]  # (request id, chunk) per arrival
    trace: FrameTrace
    finished: tuple[tuple[int, tuple[int, ...]], ...]  # (request id, final tokens)


def _deadline_met(h: int, total_us: int, actions_emitted: int, f_min_hz: float) -> bool:
    if actions_emitted == 0 or total_us == 0:
        return True
    return h * 1_000_000 / total_us >= f_min_hz


def _zero_trace(t: int) -> FrameTrace:
    return FrameTrace(
        frame=t, prefill_count=0, latency_components=(0, 0, 0, 0),
        batch_size_m=0, tokens_emitted=0, actions_emitted=0,
        completed_ids=(), deadline_met=True, total_us=0, arrival_count=0,
    )


def _admit(arrival: Arrival, t: int, backend: Backend):
    """Prefill once, denoise the action chunk off the shared cache."""
    kv = backend.prefill(arrival.observation)
    chunk = backend.action_denoise(kv, backend.config.S)
    state = GenerationState(
        kv=kv, tokens=(), terminated=False, created_frame=t,
        max_len=arrival.n_tokens,
    )
    return kv, chunk, state


def run_frame_unified(t: int, arrivals: list[Arrival], manager: KvManager,
                      backend: Backend, k: int, f_min_hz: float) -> FrameResult:
    """One shared prefill per arrival, then one batched decode of k steps
    over every active request (the new ones included), then update or evict
    each request by its termination flag."""
    if not arrivals and not manager.active_ids():
        return FrameResult(actions=(), trace=_zero_trace(t), finished=())

    prefill_us = denoise_us = 0
    actions = []
    for arrival in arrivals:
        _, chunk, state = _admit(arrival, t, backend)
        rid = manager.store(state)
        actions.append((rid, chunk))
        prefill_us += backend.prefill_latency_us(len(arrival.observation.obs_tokens))
        denoise_us += backend.denoise_latency_us(backend.config.S)

    decode_us = tokens_emitted = 0
    completed: list[int] = []
    finished: list[tuple[int, tuple[int, ...]]] = []
    active = manager.active_ids()
    m = len(active)
    if m:
        states = [manager.retrieve(rid) for rid in active]
        batched = manager.batch(states, active)
        out = backend.batched_language_decode(batched, k)
        advanced = [
            len(out.token_buffers[i]) - len(batched.token_buffers[i])
            for i in range(m)
        ]
        tokens_emitted = sum(advanced)
        # the cost model prices the scheduled k; the toy pays for steps run
        steps = k if backend.kind == "CostModel" else max(advanced)
        decode_us = backend.decode_latency_us(steps, m)
        for i, new_state in enumerate(manager.unbatch(out)):
            rid = out.request_ids[i]
            if new_state.terminated:
                finished.append((rid, new_state.tokens))
                completed.append(rid)
                manager.remove(rid)
            else:
                manager.update(rid, new_state)

    total = prefill_us + denoise_us + decode_us
    actions_emitted = backend.config.H * len(arrivals)
    trace = FrameTrace(
        frame=t, prefill_count=len(arrivals),
        latency_components=(prefill_us, denoise_us, decode_us, 0),
        batch_size_m=m, tokens_emitted=tokens_emitted,
        actions_emitted=actions_emitted, completed_ids=tuple(completed),
        deadline_met=_deadline_met(backend.config.H, total, actions_emitted, f_min_hz),
        total_us=total, arrival_count=len(arrivals),
    )
    return FrameResult(actions=tuple(actions), trace=trace, finished=tuple(finished))


def _decode_to_completion(rid: int, state: GenerationState, backend: Backend):
    """Single-request decode of the whole remaining budget within the frame."""
    batched = BatchedState(
        kv_batch=(state.kv,), token_buffers=(state.tokens,), flags=(False,),
        request_ids=(rid,), max_lens=(state.max_len,), created_frames=(state.created_frame,),
    )
    budget = state.max_len - len(state.tokens)
    out = backend.batched_language_decode(batched, budget)
    if not out.flags[0]:
        raise RuntimeError(f"request {rid} failed to finish a full-budget decode")
    advanced = len(out.token_buffers[0]) - len(state.tokens)
    steps = budget if backend.kind == "CostModel" else advanced
    return out.token_buffers[0], advanced, backend.decode_latency_us(steps, 1)


def run_frame_shared_no_batch(t: int, arrivals: list[Arrival], manager: KvManager,
                              backend: Backend, f_min_hz: float) -> FrameResult:
    """Shared prefill, but every language request is decoded to completion
    inside its arrival frame at batch size 1."""
    if not arrivals:
        return FrameResult(actions=(), trace=_zero_trace(t), finished=())

    prefill_us = denoise_us = decode_us = tokens_emitted = 0
    actions, completed, finished = [], [], []
    for arrival in arrivals:
        _, chunk, state = _admit(arrival, t, backend)
        rid = manager.store(state)
        actions.append((rid, chunk))
        prefill_us += backend.prefill_latency_us(len(arrival.observation.obs_tokens))
        denoise_us += backend.denoise_latency_us(backend.config.S)
        tokens, advanced, d_us = _decode_to_completion(rid, state, backend)
        decode_us += d_us
        tokens_emitted += advanced
        finished.append((rid, tokens))
        completed.append(rid)
        manager.remove(rid)

    total = prefill_us + denoise_us + decode_us
    actions_emitted = backend.config.H * len(arrivals)
    trace = FrameTrace(
        frame=t, prefill_count=len(arrivals),
        latency_components=(prefill_us, denoise_us, decode_us, 0),
        batch_size_m=1, tokens_emitted=tokens_emitted,
        actions_emitted=actions_emitted, completed_ids=tuple(completed),
        deadline_met=_deadline_met(backend.config.H, total, actions_emitted, f_min_hz),
        total_us=total, arrival_count=len(arrivals),
    )
    return FrameResult(actions=tuple(actions), trace=trace, finished=tuple(finished))


def run_frame_isolated_sequential(t: int, arrivals: list[Arrival], backend: Backend,
                                  f_min_hz: float, first_request_id: int) -> FrameResult:
    """No sharing at all: the action expert and the language expert each
    prefill the same observation (two prefills per arrival), then language
    decodes its full budget at batch size 1, all within the frame."""
    if not arrivals:
        return FrameResult(actions=(), trace=_zero_trace(t), finished=())

    prefill_us = denoise_us = decode_us = tokens_emitted = 0
    actions, completed, finished = [], [], []
    rid = first_request_id
    for arrival in arrivals:
        p_len = len(arrival.observation.obs_tokens)
        kv_action = backend.prefill(arrival.observation)
        kv_language = backend.prefill(arrival.observation)  # redundant on purpose
        prefill_us += 2 * backend.prefill_latency_us(p_len)
        chunk = backend.action_denoise(kv_action, backend.config.S)
        denoise_us += backend.denoise_latency_us(backend.config.S)
        actions.append((rid, chunk))
        state = GenerationState(
            kv=kv_language, tokens=(), terminated=False, created_frame=t,
            max_len=arrival.n_tokens,
        )
        tokens, advanced, d_us = _decode_to_completion(rid, state, backend)
        decode_us += d_us
        tokens_emitted += advanced
        finished.append((rid, tokens))
        completed.append(rid)
        rid += 1

    total = prefill_us + denoise_us + decode_us
    actions_emitted = backend.config.H * len(arrivals)
    trace = FrameTrace(
        frame=t, prefill_count=2 * len(arrivals),
        latency_components=(prefill_us, denoise_us, decode_us, 0),
        batch_size_m=1, tokens_emitted=tokens_emitted,
        actions_emitted=actions_emitted, completed_ids=tuple(completed),
        deadline_met=_deadline_met(backend.config.H, total, actions_emitted, f_min_hz),
        total_us=total, arrival_count=len(arrivals),
    )
    return FrameResult(actions=tuple(actions), trace=trace, finished=tuple(finished))


def run_frame_isolated_parallel(t: int, arrivals: list[Arrival], backend: Backend,
                                f_min_hz: float, first_request_id: int) -> FrameResult:
    """Both isolated paths share the accelerator concurrently; each frame
    costs the slower path times the contention factor. Latency model only,
    so the exact toy backend refuses to run it."""
    if backend.kind != "CostModel":
        raise ValueError("IsolatedParallel is a latency model; it needs the cost backend")
    if not arrivals:
        return FrameResult(actions=(), trace=_zero_trace(t), finished=())

    cost = backend.cost
    prefill_us = denoise_us = decode_us = tokens_emitted = 0
    total = 0
    actions, completed, finished = [], [], []
    rid = first_request_id
    for arrival in arrivals:
        p_len = len(arrival.observation.obs_tokens)
        kv_action = backend.prefill(arrival.observation)
        kv_language = backend.prefill(arrival.observation)  # language path's own prefill
        chunk = backend.action_denoise(kv_action, backend.config.S)
        actions.append((rid, chunk))
        state = GenerationState(
            kv=kv_language, tokens=(), terminated=False,
            created_frame=t, max_len=arrival.n_tokens,
        )
        tokens, advanced, d_us = _decode_to_completion(rid, state, backend)
        p_us = backend.prefill_latency_us(p_len)
        a_us = backend.denoise_latency_us(backend.config.S)
        prefill_us += 2 * p_us
        denoise_us += a_us
        decode_us += d_us
        tokens_emitted += advanced
        action_path = p_us + a_us
        language_path = p_us + d_us
        total += round(max(action_path, language_path) * cost.c_contention)
        finished.append((rid, tokens))
        completed.append(rid)
        rid += 1

    actions_emitted = backend.config.H * len(arrivals)
    trace = FrameTrace(
        frame=t, prefill_count=2 * len(arrivals),
        latency_components=(prefill_us, denoise_us, decode_us, 0),
        batch_size_m=1, tokens_emitted=tokens_emitted,
        actions_emitted=actions_emitted, completed_ids=tuple(completed),
        deadline_met=_deadline_met(backend.config.H, total, actions_emitted, f_min_hz),
        total_us=total, arrival_count=len(arrivals),
    )
    return FrameResult(actions=tuple(actions), trace=trace, finished=tuple(finished))
