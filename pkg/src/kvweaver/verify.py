"""Self-checking oracle suites.

These are the executable correctness arguments for the whole package:

  batching       tokens decoded inside a batch match decoding each request
                 alone, over randomized ragged batches
  reference      cached incremental decoding matches a from-scratch
                 recompute of the full sequence every step (the one route
                 that shares no cache plumbing with the decode path)
  resumption     splitting a decode across calls reproduces the one-shot
                 result, tokens and caches bit for bit
  sharing        denoising an action chunk off a cache leaves it untouched
                 and does not perturb the language tokens decoded after it
  manager        randomized store/update/remove/batch sequences against a
                 plain dict model of what the manager should contain
  cost           engine traces match independently recomputed per-frame
                 latency formulas, the speedup ratio matches its closed
                 form, and token throughput satisfies tau = B*k/T
  littles_law    measured mean batch size under Poisson arrivals matches
                 arrival_rate * N / k

Each suite returns a SuiteReport; failures carry enough context (request
ids, scenario seeds) to reproduce the failing case. The CLI `verify` verb
runs them all; the test suite runs them at acceptance sizes. Suites accept
a backend factory so tests can inject deliberately broken backends and
prove the oracles catch them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .backend import BackendConfig, CostModelParams, Observation, ToyBackend
from .kv_manager import BatchedState, GenerationState, KvCache, KvManager
from .metrics import summarize, speedup
from .rng import SplitMix64
from .sim_engine import SimConfig, run_simulation
from .workload import WorkloadSpec

__all__ = [
    "SuiteReport",
    "suite_batching",
    "suite_reference",
    "suite_resumption",
    "suite_sharing",
    "suite_manager",
    "suite_cost",
    "suite_littles_law",
    "run_all_suites",
]

BackendFactory = Callable[[BackendConfig], ToyBackend]


@dataclass(slots=True)
class SuiteReport:
    name: str
    cases: int
    failures: list[str]

    @property
    def ok(self) -> bool:
        return not self.failures


def _single_batch(state: GenerationState, rid: int) -> BatchedState:
    return BatchedState(
        kv_batch=(state.kv,), token_buffers=(state.tokens,),
        flags=(state.terminated,), request_ids=(rid,),
        max_lens=(state.max_len,), created_frames=(state.created_frame,),
    )


def _state_from(out: BatchedState, i: int) -> GenerationState:
    return GenerationState(
        kv=out.kv_batch[i], tokens=out.token_buffers[i],
        terminated=out.flags[i], created_frame=out.created_frames[i],
        max_len=out.max_lens[i],
    )


def _random_live_request(backend: ToyBackend, rng: SplitMix64, history: int,
                         slack: int) -> tuple[GenerationState, tuple[int, ...]]:
    """A non-terminated request with `history` decoded tokens and room for
    `slack` more, plus the observation tokens behind it. Natural EOS can
    foreclose a history; retry with a fresh observation when it does."""
    for _ in range(60):
        p_len = 2 + rng.below(7)
        obs = Observation(
            obs_tokens=tuple(rng.below(backend.config.vocab) for _ in range(p_len)),
            frame=0,
        )
        kv = backend.prefill(obs)
        state = GenerationState(kv=kv, tokens=(), terminated=False,
                                created_frame=0, max_len=history + slack)
        if history == 0:
            return state, obs.obs_tokens
        out = backend.batched_language_decode(_single_batch(state, 0), history)
        if out.flags[0]:
            continue
        return _state_from(out, 0), obs.obs_tokens
    # pathological weight draws can terminate every history immediately;
    # fall back to a fresh request so the scenario still runs
    state = GenerationState(kv=backend.prefill(obs), tokens=(), terminated=False,
                            created_frame=0, max_len=history + slack)
    return state, obs.obs_tokens


def _scenario_backend(rng: SplitMix64,
                      backend_factory: BackendFactory | None) -> ToyBackend:
    cfg = BackendConfig(seed=rng.below(1 << 32))
    return backend_factory(cfg) if backend_factory else ToyBackend(cfg)


# ---------------------------------------------------------------------------


def suite_batching(scenarios: int = 60, seed: int = 1101,
                   backend_factory: BackendFactory | None = None) -> SuiteReport:
    """Every request decoded in-batch equals the same request decoded alone."""
    rng = SplitMix64(seed)
    failures = []
    for sc in range(scenarios):
        backend = _scenario_backend(rng, backend_factory)
        m = 1 + rng.below(8)
        k = 1 + rng.below(8)
        states = [
            _random_live_request(backend, rng, history=rng.below(5), slack=k)[0]
            for _ in range(m)
        ]
        mgr = KvManager()
        batched = mgr.batch(states, list(range(m)))
        out = backend.batched_language_decode(batched, k)
        for i, state in enumerate(states):
            solo = backend.batched_language_decode(_single_batch(state, i), k)
            if out.token_buffers[i] != solo.token_buffers[0]:
                failures.append(
                    f"scenario {sc} request {i}: batch tokens "
                    f"{out.token_buffers[i]} != solo {solo.token_buffers[0]}"
                )
            if out.flags[i] != solo.flags[0]:
                failures.append(
                    f"scenario {sc} request {i}: batch flag {out.flags[i]} "
                    f"!= solo {solo.flags[0]}"
                )
    return SuiteReport("batching", scenarios, failures)


def suite_reference(scenarios: int = 40, seed: int = 1102,
                    backend_factory: BackendFactory | None = None) -> SuiteReport:
    """Cached decode vs. full recompute of the whole prefix each step."""
    rng = SplitMix64(seed)
    failures = []
    for sc in range(scenarios):
        backend = _scenario_backend(rng, backend_factory)
        k = 1 + rng.below(8)
        state, obs_tokens = _random_live_request(backend, rng,
                                                 history=rng.below(4), slack=k)
        out = backend.batched_language_decode(_single_batch(state, sc), k)
        got = out.token_buffers[0][len(state.tokens):]

        eos = backend.config.eos_token
        want = []
        seq = list(obs_tokens) + [eos] + list(state.tokens)
        n = len(state.tokens)
        for _ in range(k):
            pick = int(np.argmax(backend.recompute_logits(tuple(seq))))
            want.append(pick)
            n += 1
            if pick == eos or n == state.max_len:
                break
            seq.append(pick)
        if list(got) != want:
            failures.append(
                f"scenario {sc} request {sc}: cached decode {list(got)} "
                f"!= recompute {want}"
            )
    return SuiteReport("reference", scenarios, failures)


def suite_resumption(scenarios: int = 60, seed: int = 1103,
                     backend_factory: BackendFactory | None = None) -> SuiteReport:
    """decode(k1) then decode(k2) equals one decode(k1+k2), caches included."""
    rng = SplitMix64(seed)
    failures = []
    for sc in range(scenarios):
        backend = _scenario_backend(rng, backend_factory)
        k1 = 1 + rng.below(6)
        k2 = 1 + rng.below(6)
        state, _ = _random_live_request(backend, rng, history=rng.below(4),
                                        slack=k1 + k2)
        first = backend.batched_language_decode(_single_batch(state, sc), k1)
        if first.flags[0]:
            resumed = _state_from(first, 0)
        else:
            second = backend.batched_language_decode(
                _single_batch(_state_from(first, 0), sc), k2
            )
            resumed = _state_from(second, 0)
        oneshot = _state_from(
            backend.batched_language_decode(_single_batch(state, sc), k1 + k2), 0
        )
        if resumed.tokens != oneshot.tokens:
            failures.append(
                f"scenario {sc} request {sc}: resumed tokens {resumed.tokens} "
                f"!= one-shot {oneshot.tokens}"
            )
        elif resumed.terminated != oneshot.terminated:
            failures.append(
                f"scenario {sc} request {sc}: resumed flag {resumed.terminated} "
                f"!= one-shot {oneshot.terminated}"
            )
        elif resumed.kv != oneshot.kv:
            failures.append(
                f"scenario {sc} request {sc}: resumed cache differs from "
                f"one-shot cache (seq_len {resumed.kv.seq_len} vs "
                f"{oneshot.kv.seq_len})"
            )
    return SuiteReport("resumption", scenarios, failures)


def suite_sharing(scenarios: int = 40, seed: int = 1104,
                  backend_factory: BackendFactory | None = None) -> SuiteReport:
    """action_denoise reads the cache without perturbing later decoding."""
    rng = SplitMix64(seed)
    failures = []
    for sc in range(scenarios):
        backend = _scenario_backend(rng, backend_factory)
        p_len = 2 + rng.below(7)
        obs = Observation(
            obs_tokens=tuple(rng.below(backend.config.vocab) for _ in range(p_len)),
            frame=0,
        )
        k = 1 + rng.below(8)
        s_steps = 1 + rng.below(10)

        shared_kv = backend.prefill(obs)
        snapshot = [
            (layer.keys.copy(), layer.values.copy()) for layer in shared_kv.layers
        ]
        chunk_shared = backend.action_denoise(shared_kv, s_steps)
        for li, layer in enumerate(shared_kv.layers):
            if not (np.array_equal(layer.keys, snapshot[li][0])
                    and np.array_equal(layer.values, snapshot[li][1])):
                failures.append(
                    f"scenario {sc}: denoise mutated cache layer {li}"
                )
        shared_state = GenerationState(kv=shared_kv, tokens=(), terminated=False,
                                       created_frame=0, max_len=k)
        shared_out = backend.batched_language_decode(_single_batch(shared_state, sc), k)

        fresh_kv = backend.prefill(obs)
        chunk_fresh = backend.action_denoise(fresh_kv, s_steps)
        fresh_state = GenerationState(kv=fresh_kv, tokens=(), terminated=False,
                                      created_frame=0, max_len=k)
        fresh_out = backend.batched_language_decode(_single_batch(fresh_state, sc), k)

        if shared_out.token_buffers[0] != fresh_out.token_buffers[0]:
            failures.append(
                f"scenario {sc} request {sc}: tokens after shared denoise "
                f"{shared_out.token_buffers[0]} != fresh-prefill tokens "
                f"{fresh_out.token_buffers[0]}"
            )
        if chunk_shared != chunk_fresh:
            failures.append(
                f"scenario {sc}: action chunk changed under sharing"
            )
    return SuiteReport("sharing", scenarios, failures)


# ---------------------------------------------------------------------------


def _dummy_state(rng: SplitMix64, layers: int = 2) -> GenerationState:
    prefill = 1 + rng.below(10)
    n_tokens = rng.below(5)
    max_len = n_tokens + 1 + rng.below(6)
    seq = prefill + n_tokens
    kv = KvCache(layers=(seq,) * layers, seq_len=seq, backend_tag="manager-check")
    return GenerationState(
        kv=kv, tokens=tuple(rng.below(64) for _ in range(n_tokens)),
        terminated=False, created_frame=rng.below(100), max_len=max_len,
    )


def _extend_state(state: GenerationState, extra: int,
                  rng: SplitMix64) -> GenerationState:
    tokens = state.tokens + tuple(rng.below(64) for _ in range(extra))
    seq = state.kv.seq_len + extra
    kv = KvCache(layers=(seq,) * state.kv.num_layers, seq_len=seq,
                 backend_tag=state.kv.backend_tag)
    return GenerationState(
        kv=kv, tokens=tokens, terminated=len(tokens) == state.max_len,
        created_frame=state.created_frame, max_len=state.max_len,
    )


def suite_manager(cases: int = 400, seed: int = 1105) -> SuiteReport:
    """Randomized op sequences against a dict model of the manager."""
    rng = SplitMix64(seed)
    failures = []
    mgr = KvManager()
    model: dict[int, GenerationState] = {}
    stores = 0

    def check(cond: bool, msg: str) -> None:
        if not cond:
            failures.append(msg)

    for case in range(cases):
        op = rng.below(100)
        live = sorted(model)
        if op < 30 or not live:
            state = _dummy_state(rng)
            rid = mgr.store(state)
            check(rid == stores, f"case {case}: store returned {rid}, wanted {stores}")
            stores += 1
            model[rid] = state
        elif op < 50:
            rid = live[rng.below(len(live))]
            check(mgr.retrieve(rid) == model[rid],
                  f"case {case}: retrieve({rid}) returned a different state")
        elif op < 75:
            rid = live[rng.below(len(live))]
            old = model[rid]
            extra = min(1 + rng.below(4), old.max_len - len(old.tokens))
            new = _extend_state(old, extra, rng)
            mgr.update(rid, new)
            model[rid] = new
            if new.terminated:
                mgr.remove(rid)
                del model[rid]
        elif op < 90:
            rid = live[rng.below(len(live))]
            mgr.remove(rid)
            del model[rid]
            try:
                mgr.retrieve(rid)
                failures.append(f"case {case}: retrieve({rid}) after remove succeeded")
            except KeyError:
                pass
        else:
            pick = [r for r in live if not model[r].terminated][: 1 + rng.below(16)]
            if pick:
                batched = mgr.batch([model[r] for r in pick], pick)
                back = mgr.unbatch(batched)
                for j, r in enumerate(pick):
                    if back[j] != model[r]:
                        failures.append(
                            f"case {case}: batch/unbatch altered request {r}"
                        )

        check(mgr.active_ids() == sorted(model),
              f"case {case}: active_ids {mgr.active_ids()} != model {sorted(model)}")
        gauge = sum(s.kv.seq_len for s in model.values())
        check(mgr.live_positions == gauge,
              f"case {case}: gauge {mgr.live_positions} != expected {gauge}")
    return SuiteReport("manager", cases, failures)


# ---------------------------------------------------------------------------


def _expected_unified_frames(budgets: list[int], horizon: int, k: int,
                             p_us: int, d_us: int,
                             cost: CostModelParams) -> list[tuple[int, int, int, int]]:
    """Independent queue walk: per frame (prefill, denoise, decode, m)."""
    live: list[int] = []
    out = []
    t = 0
    while t < horizon or live:
        arrived = 1 if t < horizon else 0
        if arrived:
            live.append(budgets[t])
        m = len(live)
        decode = k * (cost.c_decode_base + cost.c_decode_per_request * m) if m else 0
        out.append((arrived * p_us, arrived * d_us, decode, m))
        live = [b - k for b in live if b - k > 0]
        t += 1
    return out


def suite_cost(seed: int = 1106) -> SuiteReport:
    """Trace latencies vs. independently recomputed formulas, the speedup
    closed form and the tau = B*k/T identity."""
    failures = []
    cost = CostModelParams()
    wl = WorkloadSpec(pattern="OnePerFrame", default_N=12, obs_len=800,
                      num_frames=14, seed=3)
    base_cfg = dict(backend_kind="CostModel", cost_params=cost, workload=wl, k=4)
    p_us = cost.c_prefill_per_token * wl.obs_len
    d_us = BackendConfig().S * cost.c_denoise_per_step
    n, k = wl.default_N, 4
    cases = 0

    uni = run_simulation(SimConfig(variant="Unified", **base_cfg))
    expected = _expected_unified_frames([n] * wl.num_frames, wl.num_frames, k,
                                        p_us, d_us, cost)
    cases += 1
    if len(uni.traces) != len(expected):
        failures.append(
            f"unified ran {len(uni.traces)} frames, queue model says {len(expected)}"
        )
    else:
        for tr, (ep, ed, edec, em) in zip(uni.traces, expected):
            if (tr.prefill_us, tr.denoise_us, tr.decode_us, tr.batch_size_m) \
                    != (ep, ed, edec, em):
                failures.append(
                    f"unified frame {tr.frame}: components "
                    f"{tr.latency_components} m={tr.batch_size_m}, expected "
                    f"({ep}, {ed}, {edec}) m={em}"
                )
                break

    per_req = cost.c_decode_base + cost.c_decode_per_request
    expectations = {
        "SharedNoBatch": p_us + d_us + n * per_req,
        "IsolatedSequential": 2 * p_us + d_us + n * per_req,
        "IsolatedParallel": round(
            max(p_us + d_us, p_us + n * per_req) * cost.c_contention
        ),
    }
    results = {}
    for variant, want in expectations.items():
        res = run_simulation(SimConfig(variant=variant, **base_cfg))
        results[variant] = res
        cases += 1
        bad = [tr for tr in res.traces if tr.total_us != want]
        if bad:
            failures.append(
                f"{variant} frame {bad[0].frame}: total {bad[0].total_us} us, "
                f"formula says {want}"
            )

    cfg_uni = SimConfig(variant="Unified", **base_cfg)
    cfg_iso = SimConfig(variant="IsolatedSequential", **base_cfg)
    rep_uni = summarize(uni, cfg_uni)
    rep_iso = summarize(results["IsolatedSequential"], cfg_iso)
    t_uni = p_us + d_us + k * (cost.c_decode_base + cost.c_decode_per_request * (n // k))
    closed = expectations["IsolatedSequential"] / t_uni
    measured = speedup(rep_uni, rep_iso)
    cases += 1
    if abs(measured - closed) > 1e-9 * closed:
        failures.append(
            f"speedup {measured!r} differs from closed form {closed!r}"
        )
    cases += 1
    tau_identity = rep_uni.avg_batch_size * k * rep_uni.action_freq_hz \
        / BackendConfig().H
    if abs(rep_uni.token_throughput - tau_identity) > 1e-9 * tau_identity:
        failures.append(
            f"tau {rep_uni.token_throughput!r} != B*k/T {tau_identity!r}"
        )
    return SuiteReport("cost", cases, failures)


def suite_littles_law(lams: tuple[float, ...] = (0.5,), frames: int = 20000,
                      tol: float = 0.05, seed: int = 1107) -> SuiteReport:
    failures = []
    n, k = 20, 5
    for lam in lams:
        wl = WorkloadSpec(pattern="Poisson", lam=lam, default_N=n, obs_len=100,
                          num_frames=frames, seed=seed)
        cfg = SimConfig(variant="Unified", backend_kind="CostModel",
                        workload=wl, k=k)
        rep = summarize(run_simulation(cfg), cfg)
        want = lam * n / k
        if abs(rep.avg_batch_size_frames - want) > tol * want:
            failures.append(
                f"lam={lam}: mean batch {rep.avg_batch_size_frames:.4f} "
                f"outside {tol:.0%} of {want:.4f}"
            )
    return SuiteReport("littles_law", len(lams), failures)


def run_all_suites(seed: int = 0) -> list[SuiteReport]:
    return [
        suite_batching(60, seed=seed + 1101),
        suite_reference(40, seed=seed + 1102),
        suite_resumption(60, seed=seed + 1103),
        suite_sharing(40, seed=seed + 1104),
        suite_manager(400, seed=seed + 1105),
        suite_cost(seed=seed + 1106),
        suite_littles_law(seed=seed + 1107),
    ]
