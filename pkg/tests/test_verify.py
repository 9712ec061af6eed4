"""The oracle suites must pass on the real backend and, just as
importantly, fail loudly when fed deliberately broken backends. Each fault
below models a realistic cache-management bug."""

from __future__ import annotations

import numpy as np

from kvweaver import BatchedState, ToyBackend
from kvweaver.kv_manager import KvCache, KvLayer
from kvweaver.verify import (
    run_all_suites,
    suite_batching,
    suite_cost,
    suite_littles_law,
    suite_manager,
    suite_reference,
    suite_resumption,
    suite_sharing,
)


def rebuilt(out: BatchedState, kv_batch=None, token_buffers=None) -> BatchedState:
    return BatchedState(
        kv_batch=kv_batch or out.kv_batch,
        token_buffers=token_buffers or out.token_buffers,
        flags=out.flags, request_ids=out.request_ids,
        max_lens=out.max_lens, created_frames=out.created_frames,
    )


class BatchTamperBackend(ToyBackend):
    """Changes a decoded token, but only when m > 1: the classic bug where
    batched execution fails to isolate requests."""

    def batched_language_decode(self, batched, k):
        out = super().batched_language_decode(batched, k)
        if batched.size < 2:
            return out
        bufs = list(out.token_buffers)
        first = list(bufs[0])
        if len(first) > len(batched.token_buffers[0]):
            first[-1] = (first[-1] + 1) % self.config.vocab
            bufs[0] = tuple(first)
            return rebuilt(out, token_buffers=tuple(bufs))
        return out


class StaleCacheBackend(ToyBackend):
    """Zeroes the final appended KV row after each decode call, modeling a
    lost cache write. A single call looks fine; resuming from the state
    does not."""

    def batched_language_decode(self, batched, k):
        out = super().batched_language_decode(batched, k)
        caches = []
        for kv, old in zip(out.kv_batch, batched.kv_batch):
            if kv.seq_len > old.seq_len:
                layers = []
                for layer in kv.layers:
                    keys = layer.keys.copy()
                    vals = layer.values.copy()
                    keys[-1] = 0.0
                    vals[-1] = 0.0
                    layers.append(KvLayer(keys=keys, values=vals))
                kv = KvCache(layers=tuple(layers), seq_len=kv.seq_len,
                             backend_tag=kv.backend_tag)
            caches.append(kv)
        return rebuilt(out, kv_batch=tuple(caches))


class DriftingDenoiseBackend(ToyBackend):
    """action_denoise output depends on hidden mutable state, violating
    the read-only sharing contract."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._calls = 0

    def action_denoise(self, kv, S):
        chunk = super().action_denoise(kv, S)
        self._calls += 1
        drifted = chunk.actions + 1e-3 * self._calls
        from kvweaver import ActionChunk

        return ActionChunk(actions=drifted)


class TestSuitesPassOnRealBackend:
    def test_all_suites_green(self):
        reports = run_all_suites(seed=0)
        assert [r.name for r in reports] == [
            "batching", "reference", "resumption", "sharing",
            "manager", "cost", "littles_law",
        ]
        for rep in reports:
            assert rep.ok, f"{rep.name}: {rep.failures[:2]}"

    def test_seed_changes_scenarios_but_not_outcome(self):
        for seed in (1, 77):
            for rep in run_all_suites(seed=seed):
                assert rep.ok, f"seed {seed}, {rep.name}: {rep.failures[:2]}"


class TestSuitesCatchInjectedFaults:
    def test_batching_suite_catches_cross_request_leakage(self):
        rep = suite_batching(scenarios=30, backend_factory=BatchTamperBackend)
        assert not rep.ok
        assert any("request" in msg for msg in rep.failures)

    def test_resumption_suite_catches_lost_cache_writes(self):
        rep = suite_resumption(scenarios=30, backend_factory=StaleCacheBackend)
        assert not rep.ok
        assert any("resumed" in msg for msg in rep.failures)

    def test_sharing_suite_catches_stateful_denoise(self):
        rep = suite_sharing(scenarios=10, backend_factory=DriftingDenoiseBackend)
        assert not rep.ok
        assert any("action chunk" in msg for msg in rep.failures)

    def test_single_call_hides_the_stale_cache_bug(self):
        # the same fault passes the batching suite, which is exactly why
        # the resumption oracle exists
        rep = suite_batching(scenarios=20, backend_factory=StaleCacheBackend)
        assert rep.ok


class TestStandaloneSuites:
    def test_manager_suite_case_count(self):
        rep = suite_manager(cases=150, seed=5)
        assert rep.ok
        assert rep.cases == 150

    def test_cost_suite(self):
        rep = suite_cost()
        assert rep.ok
        assert rep.cases >= 6

    def test_reference_suite(self):
        assert suite_reference(scenarios=15).ok

    def test_littles_law_short(self):
        rep = suite_littles_law(lams=(0.5,), frames=4000, tol=0.08)
        assert rep.ok


class TestFaultMechanics:
    def test_batch_tamper_leaves_solo_untouched(self):
        # sanity on the fault itself: it must only fire in batches
        from kvweaver import BackendConfig, Observation

        cfg = BackendConfig()
        good = ToyBackend(cfg)
        bad = BatchTamperBackend(cfg)
        kv_g = good.prefill(Observation(obs_tokens=(1, 2), frame=0))
        kv_b = bad.prefill(Observation(obs_tokens=(1, 2), frame=0))
        solo_g = good.batched_language_decode(
            BatchedState(kv_batch=(kv_g,), token_buffers=((),), flags=(False,),
                         request_ids=(0,), max_lens=(6,), created_frames=(0,)), 6)
        solo_b = bad.batched_language_decode(
            BatchedState(kv_batch=(kv_b,), token_buffers=((),), flags=(False,),
                         request_ids=(0,), max_lens=(6,), created_frames=(0,)), 6)
        assert solo_g.token_buffers == solo_b.token_buffers

    def test_stale_cache_corrupts_only_new_rows(self):
        from kvweaver import BackendConfig, Observation

        cfg = BackendConfig()
        bad = StaleCacheBackend(cfg)
        kv = bad.prefill(Observation(obs_tokens=(1, 2, 3), frame=0))
        out = bad.batched_language_decode(
            BatchedState(kv_batch=(kv,), token_buffers=((),), flags=(False,),
                         request_ids=(0,), max_lens=(9,), created_frames=(0,)), 2)
        new_kv = out.kv_batch[0]
        assert not new_kv.layers[0].keys[-1].any()
        np.testing.assert_array_equal(new_kv.layers[0].keys[:3],
                                      kv.layers[0].keys)
