"""Unit tests for KV cache ownership: store/retrieve/update/remove and
batch/unbatch round-trips."""

from __future__ import annotations

import numpy as np
import pytest

from kvweaver import BatchedState, GenerationState, KvCache, KvLayer, KvManager
from kvweaver.rng import SplitMix64

D_MODEL = 8
TAG = "toy/test"


def make_cache(seq_len: int, layers: int = 2, fill: float = 0.5) -> KvCache:
    blocks = tuple(
        KvLayer(
            keys=np.full((seq_len, D_MODEL), fill + i),
            values=np.full((seq_len, D_MODEL), fill - i),
        )
        for i in range(layers)
    )
    return KvCache(layers=blocks, seq_len=seq_len, backend_tag=TAG)


def make_state(seq_len: int = 4, tokens: tuple[int, ...] = (),
               max_len: int = 10, terminated: bool = False,
               fill: float = 0.5) -> GenerationState:
    return GenerationState(
        kv=make_cache(seq_len, fill=fill), tokens=tokens, terminated=terminated,
        created_frame=0, max_len=max_len,
    )


def extend(state: GenerationState, new_tokens: tuple[int, ...],
           terminated: bool = False) -> GenerationState:
    grown = make_cache(state.kv.seq_len + len(new_tokens))
    return GenerationState(
        kv=grown, tokens=state.tokens + new_tokens, terminated=terminated,
        created_frame=state.created_frame, max_len=state.max_len,
    )


# ---------------------------------------------------------------------------
# value objects


class TestKvLayer:
    def test_arrays_are_read_only(self):
        layer = KvLayer(keys=np.zeros((3, D_MODEL)), values=np.zeros((3, D_MODEL)))
        with pytest.raises(ValueError):
            layer.keys[0, 0] = 1.0

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="matching 2-d"):
            KvLayer(keys=np.zeros((3, D_MODEL)), values=np.zeros((4, D_MODEL)))

    def test_equality_is_by_value(self):
        a = KvLayer(keys=np.ones((2, D_MODEL)), values=np.zeros((2, D_MODEL)))
        b = KvLayer(keys=np.ones((2, D_MODEL)), values=np.zeros((2, D_MODEL)))
        c = KvLayer(keys=np.ones((2, D_MODEL)) * 2, values=np.zeros((2, D_MODEL)))
        assert a == b
        assert a != c


class TestKvCache:
    def test_layer_length_disagreement_rejected(self):
        good = KvLayer(keys=np.zeros((3, D_MODEL)), values=np.zeros((3, D_MODEL)))
        bad = KvLayer(keys=np.zeros((2, D_MODEL)), values=np.zeros((2, D_MODEL)))
        with pytest.raises(ValueError, match="layer 1 reports seq_len 2"):
            KvCache(layers=(good, bad), seq_len=3, backend_tag=TAG)

    def test_int_layers_for_cost_backend(self):
        kv = KvCache(layers=(5, 5), seq_len=5, backend_tag="cost/test")
        assert kv.num_layers == 2

    def test_needs_a_layer(self):
        with pytest.raises(ValueError, match="at least one layer"):
            KvCache(layers=(), seq_len=0, backend_tag=TAG)

    def test_equality(self):
        assert make_cache(3) == make_cache(3)
        assert make_cache(3) != make_cache(4)


class TestGenerationState:
    def test_prefill_len(self):
        st = make_state(seq_len=6, tokens=(1, 2))
        assert st.prefill_len == 4

    def test_at_max_len_must_be_terminated(self):
        with pytest.raises(ValueError, match="must be terminated"):
            make_state(seq_len=6, tokens=(1, 2, 3), max_len=3)

    def test_terminated_needs_tokens(self):
        with pytest.raises(ValueError, match="must have emitted"):
            make_state(seq_len=4, tokens=(), terminated=True)

    def test_cache_shorter_than_tokens_rejected(self):
        with pytest.raises(ValueError, match="cannot hold"):
            make_state(seq_len=1, tokens=(1, 2, 3))


# ---------------------------------------------------------------------------
# lifecycle


class TestStoreRetrieve:
    def test_ids_are_sequential_from_zero(self):
        mgr = KvManager()
        assert [mgr.store(make_state()) for _ in range(4)] == [0, 1, 2, 3]

    def test_ids_never_reused_after_remove(self):
        # id of a new request = number created so far, removals included
        mgr = KvManager()
        for _ in range(5):
            mgr.store(make_state())
        for rid in (0, 2, 4):
            mgr.remove(rid)
        assert mgr.store(make_state()) == 5
        assert mgr.created_count == 6
        assert mgr.active_ids() == [1, 3, 5]

    def test_retrieve_returns_the_same_state(self):
        mgr = KvManager()
        st = make_state(seq_len=7, tokens=(3, 1))
        rid = mgr.store(st)
        got = mgr.retrieve(rid)
        assert got is st

    def test_retrieve_unknown_id(self):
        mgr = KvManager()
        with pytest.raises(KeyError, match="unknown request id 9"):
            mgr.retrieve(9)

    def test_store_terminated_rejected(self):
        mgr = KvManager()
        with pytest.raises(ValueError, match="terminated"):
            mgr.store(make_state(seq_len=5, tokens=(1,), terminated=True))

    def test_remove_unknown_id(self):
        mgr = KvManager()
        mgr.store(make_state())
        mgr.remove(0)
        with pytest.raises(KeyError, match="unknown request id 0"):
            mgr.remove(0)


class TestUpdate:
    def test_valid_extension(self):
        mgr = KvManager()
        st = make_state(seq_len=4)
        rid = mgr.store(st)
        grown = extend(st, (5, 6))
        mgr.update(rid, grown)
        assert mgr.retrieve(rid).tokens == (5, 6)
        assert mgr.retrieve(rid).kv.seq_len == 6

    def test_token_prefix_violation(self):
        mgr = KvManager()
        st = make_state(seq_len=4, tokens=())
        rid = mgr.store(st)
        mgr.update(rid, extend(st, (5, 6)))
        bad = GenerationState(kv=make_cache(6), tokens=(9, 6), terminated=False,
                              created_frame=0, max_len=10)
        with pytest.raises(ValueError, match="drops decoded tokens"):
            mgr.update(rid, bad)

    def test_cache_shrink_rejected(self):
        mgr = KvManager()
        rid = mgr.store(make_state(seq_len=4))
        with pytest.raises(ValueError, match="shrinks the cache"):
            mgr.update(rid, make_state(seq_len=3))

    def test_misaligned_growth_rejected(self):
        # one new token must mean exactly one new cache position
        mgr = KvManager()
        st = make_state(seq_len=4)
        rid = mgr.store(st)
        bad = GenerationState(kv=make_cache(7), tokens=(5,), terminated=False,
                              created_frame=0, max_len=10)
        with pytest.raises(ValueError, match="prefill length changed"):
            mgr.update(rid, bad)

    def test_backend_switch_rejected(self):
        mgr = KvManager()
        st = make_state(seq_len=4)
        rid = mgr.store(st)
        other = KvCache(layers=(5, 5), seq_len=5, backend_tag="cost/test")
        bad = GenerationState(kv=other, tokens=(1,), terminated=False,
                              created_frame=0, max_len=10)
        with pytest.raises(ValueError, match="switches backend"):
            mgr.update(rid, bad)


class TestCapacity:
    def test_live_positions_accounting(self):
        mgr = KvManager()
        mgr.store(make_state(seq_len=4))
        mgr.store(make_state(seq_len=9))
        assert mgr.live_positions == 13
        mgr.remove(0)
        assert mgr.live_positions == 9

    def test_store_over_capacity_rejected(self):
        mgr = KvManager(capacity_positions=10)
        mgr.store(make_state(seq_len=6))
        with pytest.raises(ValueError, match="capacity exceeded"):
            mgr.store(make_state(seq_len=5))
        # exact fit is fine
        mgr.store(make_state(seq_len=4))
        assert mgr.live_positions == 10


# ---------------------------------------------------------------------------
# batching


class TestBatchUnbatch:
    def test_ragged_batch_keeps_per_request_lengths(self):
        mgr = KvManager()
        states = [make_state(seq_len=s) for s in (8, 4, 1)]
        ids = [mgr.store(s) for s in states]
        batched = mgr.batch(states, ids)
        assert batched.size == 3
        assert [kv.seq_len for kv in batched.kv_batch] == [8, 4, 1]
        assert batched.request_ids == (0, 1, 2)

    def test_roundtrip_reconstructs_states(self):
        mgr = KvManager()
        states = [
            make_state(seq_len=5, tokens=(1,)),
            make_state(seq_len=3, tokens=()),
        ]
        ids = [mgr.store(s) for s in states]
        back = mgr.unbatch(mgr.batch(states, ids))
        for orig, got in zip(states, back):
            assert got.kv == orig.kv
            assert got.tokens == orig.tokens
            assert got.max_len == orig.max_len
            assert got.created_frame == orig.created_frame

    def test_empty_batch_rejected(self):
        mgr = KvManager()
        with pytest.raises(ValueError, match="zero requests"):
            mgr.batch([], [])

    def test_terminated_member_rejected(self):
        mgr = KvManager()
        ok = make_state()
        done = make_state(seq_len=5, tokens=(1,), terminated=True)
        with pytest.raises(ValueError, match="request 7 is terminated"):
            mgr.batch([ok, done], [3, 7])

    def test_length_mismatch_rejected(self):
        mgr = KvManager()
        with pytest.raises(ValueError, match="2 states but 1 ids"):
            mgr.batch([make_state(), make_state()], [0])

    def test_batched_state_validates_lengths(self):
        st = make_state()
        with pytest.raises(ValueError, match="flags has 2"):
            BatchedState(
                kv_batch=(st.kv,), token_buffers=((),), flags=(False, False),
                request_ids=(0,), max_lens=(10,), created_frames=(0,),
            )

    def test_randomized_roundtrips(self):
        rng = SplitMix64(99)
        for _ in range(25):
            mgr = KvManager()
            m = 1 + rng.below(16)
            states = [
                make_state(seq_len=1 + rng.below(12),
                           max_len=20, fill=rng.uniform())
                for _ in range(m)
            ]
            ids = [mgr.store(s) for s in states]
            back = mgr.unbatch(mgr.batch(states, ids))
            assert len(back) == m
            for orig, got in zip(states, back):
                assert got.kv == orig.kv
