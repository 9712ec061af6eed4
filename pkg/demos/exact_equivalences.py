"""Show the three equivalences the scheduler relies on, on the toy model:
shared prefills leave the cache untouched, batched decode emits the same
tokens as one-at-a-time decode, and chunked decoding across frames lands on
the same tokens and the same KV cache as a single uninterrupted pass."""

import numpy as np

from kvweaver import (
    BackendConfig,
    BatchedState,
    GenerationState,
    Observation,
    ToyBackend,
)

OBS = ((5, 2, 7, 1), (9, 9, 3), (4, 0, 6, 2, 8))
BUDGET = 8
K = 3


def fresh_state(backend, obs_tokens, budget=BUDGET):
    kv = backend.prefill(Observation(obs_tokens=obs_tokens, frame=0))
    return GenerationState(kv=kv, tokens=(), terminated=False,
                           created_frame=0, max_len=budget)


def batch_of(states):
    return BatchedState(
        kv_batch=tuple(s.kv for s in states),
        token_buffers=tuple(s.tokens for s in states),
        flags=tuple(s.terminated for s in states),
        request_ids=tuple(range(len(states))),
        max_lens=tuple(s.max_len for s in states),
        created_frames=tuple(s.created_frame for s in states),
    )


def decode_all(backend, state, k):
    # keep stepping until the budget is used or EOS; batch of one
    while not state.terminated and len(state.tokens) < state.max_len:
        out = backend.batched_language_decode(batch_of([state]), k)
        state = GenerationState(kv=out.kv_batch[0], tokens=out.token_buffers[0],
                                terminated=out.flags[0], created_frame=0,
                                max_len=state.max_len)
    return state


def main():
    backend = ToyBackend(BackendConfig(vocab=16, seed=21))

    print("1. sharing: denoising reads the prefill cache without mutating it")
    state = fresh_state(backend, OBS[0])
    before = [(layer.keys.copy(), layer.values.copy())
              for layer in state.kv.layers]
    chunk_a = backend.action_denoise(state.kv, S=10)
    chunk_b = backend.action_denoise(state.kv, S=10)
    untouched = all(
        np.array_equal(k0, layer.keys) and np.array_equal(v0, layer.values)
        for (k0, v0), layer in zip(before, state.kv.layers)
    )
    print(f"   cache untouched after two denoise passes: {untouched}")
    print(f"   both passes agree: {chunk_a == chunk_b}")

    print("2. batching: batched tokens == solo tokens, request by request")
    states = [fresh_state(backend, obs) for obs in OBS]
    out = backend.batched_language_decode(batch_of(states), K)
    for i, obs in enumerate(OBS):
        solo = decode_all(backend, fresh_state(backend, obs), BUDGET)
        match = out.token_buffers[i] == solo.tokens[:K]
        print(f"   request {i}: batched {out.token_buffers[i]} vs "
              f"solo prefix {solo.tokens[:K]}  match={match}")

    print("3. resumption: three chunks of 2 == one pass of 6")
    split = decode_all(backend, fresh_state(backend, OBS[2], budget=6), 2)
    single = decode_all(backend, fresh_state(backend, OBS[2], budget=6), 6)
    same_tokens = split.tokens == single.tokens
    same_cache = all(
        np.array_equal(a.keys, b.keys) and np.array_equal(a.values, b.values)
        for a, b in zip(split.kv.layers, single.kv.layers)
    )
    print(f"   tokens equal: {same_tokens}, caches bit-identical: {same_cache}")


if __name__ == "__main__":
    main()
