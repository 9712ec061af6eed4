"""Ownership of in-flight generation state.

The manager is the single place where partially decoded requests live
between frames. It knows nothing about models; it stores opaque KV caches,
hands them back unchanged, concatenates them into batches and accounts for
the positions they occupy.

Request ids are plain ints, assigned sequentially from zero and never
reused: the id of a new request equals the total number of requests created
so far, regardless of how many were removed in between.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "KvLayer",
    "KvCache",
    "GenerationState",
    "BatchedState",
    "KvManager",
]


def _frozen_array(a: np.ndarray) -> np.ndarray:
    # prefilled positions must never be mutated by later decoding
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, slots=True, eq=False)
class KvLayer:
    """One layer's keys and values, each shaped [seq_len, d_model].

    Arrays are read-only; decoding produces a new KvLayer with rows
    appended rather than writing into an existing one.
    """

    keys: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "keys", _frozen_array(self.keys))
        object.__setattr__(self, "values", _frozen_array(self.values))
        if self.keys.shape != self.values.shape or self.keys.ndim != 2:
            raise ValueError(
                f"layer keys/values must be matching 2-d blocks, got "
                f"{self.keys.shape} vs {self.values.shape}"
            )

    @property
    def seq_len(self) -> int:
        return self.keys.shape[0]

    def __eq__(self, other):
        if not isinstance(other, KvLayer):
            return NotImplemented
        return np.array_equal(self.keys, other.keys) and np.array_equal(
            self.values, other.values
        )


@dataclass(frozen=True, slots=True, eq=False)
class KvCache:
    """Per-request attention context.

    layers holds one entry per model layer: a KvLayer of vectors for the
    toy backend, or a bare position count (int) for the cost backend.
    backend_tag names the producing backend; a cache is only meaningful to
    a backend with the same tag.
    """

    layers: tuple
    seq_len: int
    backend_tag: str

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if len(self.layers) == 0:
            raise ValueError("KvCache needs at least one layer")
        for i, layer in enumerate(self.layers):
            got = layer if isinstance(layer, int) else layer.seq_len
            if got != self.seq_len:
                raise ValueError(
                    f"layer {i} reports seq_len {got}, cache says {self.seq_len}"
                )
        if self.seq_len < 0:
            raise ValueError("seq_len must be nonnegative")

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def __eq__(self, other):
        if not isinstance(other, KvCache):
            return NotImplemented
        return (
            self.backend_tag == other.backend_tag
            and self.seq_len == other.seq_len
            and self.layers == other.layers
        )


@dataclass(frozen=True, slots=True)
class GenerationState:
    """Resumable decode state of one request.

    kv.seq_len always equals prefill length + len(tokens): every decoded
    token extended the cache by exactly one position. terminated means the
    request emitted its end token or exhausted max_len.
    """

    kv: KvCache
    tokens: tuple[int, ...]
    terminated: bool
    created_frame: int
    max_len: int

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if self.max_len < 1:
            raise ValueError(f"max_len must be >= 1, got {self.max_len}")
        if len(self.tokens) > self.max_len:
            raise ValueError(
                f"{len(self.tokens)} tokens exceed max_len {self.max_len}"
            )
        if len(self.tokens) == self.max_len and not self.terminated:
            raise ValueError("state at max_len must be terminated")
        if self.terminated and not self.tokens:
            raise ValueError("terminated state must have emitted tokens")
        if self.kv.seq_len < len(self.tokens):
            raise ValueError(
                f"cache of length {self.kv.seq_len} cannot hold "
                f"{len(self.tokens)} decoded tokens plus a prefill"
            )

    @property
    def prefill_len(self) -> int:
        return self.kv.seq_len - len(self.tokens)


@dataclass(frozen=True, slots=True)
class BatchedState:
    """m generation states stacked for one batched decode call.

    The four core tuples follow request order; kv caches keep their ragged
    lengths (physical padding is the backend's business). max_lens and
    created_frames ride along so unbatch() can rebuild each GenerationState
    exactly.
    """

    kv_batch: tuple[KvCache, ...]
    token_buffers: tuple[tuple[int, ...], ...]
    flags: tuple[bool, ...]
    request_ids: tuple[int, ...]
    max_lens: tuple[int, ...]
    created_frames: tuple[int, ...]

    def __post_init__(self):
        m = len(self.kv_batch)
        if m < 1:
            raise ValueError("batched state must contain at least one request")
        for name in ("token_buffers", "flags", "request_ids", "max_lens", "created_frames"):
            if len(getattr(self, name)) != m:
                raise ValueError(
                    f"length mismatch: kv_batch has {m} entries, "
                    f"{name} has {len(getattr(self, name))}"
                )

    @property
    def size(self) -> int:
        return len(self.kv_batch)


@dataclass
class KvManager:
    """Store / retrieve / update / remove plus batch / unbatch.

    capacity_positions, when set, caps the total live KV positions; a store
    that would exceed it is rejected. There is no implicit eviction: state
    leaves only through remove().
    """

    capacity_positions: int | None = None
    _states: dict[int, GenerationState] = field(default_factory=dict, repr=False)
    _created: int = 0

    # ------------------------------------------------------------------
    # lifecycle

    def store(self, state: GenerationState) -> int:
        if state.terminated:
            raise ValueError("refusing to store a terminated state")
        if self.capacity_positions is not None:
            if self.live_positions + state.kv.seq_len > self.capacity_positions:
                raise ValueError(
                    f"capacity exceeded: {self.live_positions} live positions "
                    f"+ {state.kv.seq_len} new > cap {self.capacity_positions}"
                )
        rid = self._created
        self._created += 1
        self._states[rid] = state
        return rid

    def retrieve(self, rid: int) -> GenerationState:
        try:
            return self._states[rid]
        except KeyError:
            raise KeyError(f"unknown request id {rid}") from None

    def update(self, rid: int, state: GenerationState) -> None:
        old = self.retrieve(rid)
        if state.tokens[: len(old.tokens)] != old.tokens:
            raise ValueError(
                f"update for request {rid} drops decoded tokens "
                f"(old buffer is not a prefix of the new one)"
            )
        if state.kv.seq_len < old.kv.seq_len:
            raise ValueError(
                f"update for request {rid} shrinks the cache "
                f"({old.kv.seq_len} -> {state.kv.seq_len})"
            )
        # each appended token must have appended exactly one cache position
        if state.prefill_len != old.prefill_len:
            raise ValueError(
                f"update for request {rid} breaks the cache/token alignment: "
                f"prefill length changed {old.prefill_len} -> {state.prefill_len}"
            )
        if state.kv.backend_tag != old.kv.backend_tag:
            raise ValueError(
                f"update for request {rid} switches backend "
                f"({old.kv.backend_tag!r} -> {state.kv.backend_tag!r})"
            )
        self._states[rid] = state

    def remove(self, rid: int) -> None:
        if rid not in self._states:
            raise KeyError(f"unknown request id {rid}")
        del self._states[rid]

    def active_ids(self) -> list[int]:
        return sorted(self._states)

    @property
    def live_positions(self) -> int:
        """Live KV positions (per sequence; multiply by L for per-layer slots)."""
        return sum(s.kv.seq_len for s in self._states.values())

    @property
    def created_count(self) -> int:
        return self._created

    # ------------------------------------------------------------------
    # batching

    def batch(self, states: list[GenerationState], ids: list[int]) -> BatchedState:
        if not states or not ids:
            raise ValueError("cannot batch zero requests")
        if len(states) != len(ids):
            raise ValueError(
                f"{len(states)} states but {len(ids)} ids"
            )
        for rid, state in zip(ids, states):
            if state.terminated:
                raise ValueError(f"request {rid} is terminated, cannot batch it")
        return BatchedState(
            kv_batch=tuple(s.kv for s in states),
            token_buffers=tuple(s.tokens for s in states),
            flags=tuple(s.terminated for s in states),
            request_ids=tuple(ids),
            max_lens=tuple(s.max_len for s in states),
            created_frames=tuple(s.created_frame for s in states),
        )

    def unbatch(self, batched: BatchedState) -> list[GenerationState]:
        return [
            GenerationState(
                kv=batched.kv_batch[i],
                tokens=batched.token_buffers[i],
                terminated=batched.flags[i],
                created_frame=batched.created_frames[i],
                max_len=batched.max_lens[i],
            )
            for i in range(batched.size)
        ]
