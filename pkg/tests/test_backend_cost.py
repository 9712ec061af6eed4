"""Tests for the analytical cost-model backend."""

from __future__ import annotations

import pytest

from kvweaver import (
    BackendConfig,
    BatchedState,
    CostModelBackend,
    CostModelParams,
    Observation,
    ToyBackend,
)

CFG = BackendConfig()
COST = CostModelParams()  # 25 / 3000 / 5900 / 100, contention 1.6


@pytest.fixture()
def backend() -> CostModelBackend:
    return CostModelBackend(CFG, COST)


def batch_of(backend, lens_and_budgets) -> BatchedState:
    caches, buffers = [], []
    for p_len, _ in lens_and_budgets:
        obs = Observation(obs_tokens=tuple([1] * p_len), frame=0)
        caches.append(backend.prefill(obs))
        buffers.append(())
    m = len(lens_and_budgets)
    return BatchedState(
        kv_batch=tuple(caches), token_buffers=tuple(buffers),
        flags=(False,) * m, request_ids=tuple(range(m)),
        max_lens=tuple(b for _, b in lens_and_budgets),
        created_frames=(0,) * m,
    )


# ---------------------------------------------------------------------------
# latency arithmetic


class TestLatency:
    def test_prefill_linear_in_tokens(self, backend):
        assert backend.prefill_latency_us(800) == 20_000
        assert backend.prefill_latency_us(0) == 0
        assert backend.prefill_latency_us(1) == 25

    def test_denoise_linear_in_steps(self, backend):
        assert backend.denoise_latency_us(10) == 30_000
        assert backend.denoise_latency_us(1) == 3_000

    def test_decode_affine_grid(self, backend):
        for k in (1, 2, 4, 7, 30):
            for m in (1, 2, 3, 8, 40):
                want = k * (5900 + 100 * m)
                assert backend.decode_latency_us(k, m) == want

    def test_all_integer_microseconds(self, backend):
        assert isinstance(backend.decode_latency_us(3, 5), int)
        assert isinstance(backend.prefill_latency_us(17), int)

    def test_param_validation(self):
        with pytest.raises(ValueError, match="c_decode_base"):
            CostModelParams(c_decode_base=-1)
        with pytest.raises(ValueError, match="c_contention"):
            CostModelParams(c_contention=0.5)
        with pytest.raises(ValueError, match="c_prefill_per_token"):
            CostModelParams(c_prefill_per_token=2.5)


# ---------------------------------------------------------------------------
# functional shell


class TestCostDecode:
    def test_prefill_counts_positions(self, backend):
        kv = backend.prefill(Observation(obs_tokens=(1, 2, 3), frame=0))
        assert kv.seq_len == 3
        assert kv.layers == (3,) * CFG.L

    def test_decode_advances_and_clamps(self, backend):
        out = backend.batched_language_decode(batch_of(backend, [(4, 10), (4, 3)]), 5)
        assert len(out.token_buffers[0]) == 5
        assert out.flags[0] is False
        assert len(out.token_buffers[1]) == 3  # clamped at its budget
        assert out.flags[1] is True
        assert out.kv_batch[0].seq_len == 9
        assert out.kv_batch[1].seq_len == 7

    def test_synthetic_tokens_skip_eos(self, backend):
        # termination must be budget-driven, so the token counter never
        # emits the EOS id
        out = backend.batched_language_decode(batch_of(backend, [(2, 70)]), 70)
        tokens = out.token_buffers[0]
        assert len(tokens) == 70
        assert CFG.eos_token not in tokens
        assert out.flags[0] is True

    def test_split_decode_equals_single_call(self, backend):
        a = backend.batched_language_decode(batch_of(backend, [(3, 8)]), 3)
        resumed = BatchedState(
            kv_batch=a.kv_batch, token_buffers=a.token_buffers, flags=(False,),
            request_ids=(0,), max_lens=(8,), created_frames=(0,),
        )
        b = backend.batched_language_decode(resumed, 5)
        single = backend.batched_language_decode(batch_of(backend, [(3, 8)]), 8)
        assert b.token_buffers == single.token_buffers
        assert b.flags == single.flags
        assert b.kv_batch[0].seq_len == single.kv_batch[0].seq_len

    def test_action_chunk_is_zero_placeholder(self, backend):
        kv = backend.prefill(Observation(obs_tokens=(1,), frame=0))
        chunk = backend.action_denoise(kv, CFG.S)
        assert chunk.actions.shape == (CFG.H, CFG.action_dim)
        assert not chunk.actions.any()

    def test_rejects_toy_cache(self, backend):
        toy = ToyBackend(CFG)
        kv = toy.prefill(Observation(obs_tokens=(1, 2), frame=0))
        with pytest.raises(ValueError, match="fed to"):
            backend.batched_language_decode(
                BatchedState(kv_batch=(kv,), token_buffers=((),), flags=(False,),
                             request_ids=(0,), max_lens=(5,), created_frames=(0,)),
                1,
            )

    def test_kind_and_tag(self, backend):
        assert backend.kind == "CostModel"
        assert backend.backend_tag.startswith("cost/")
