"""Walk through the KV manager's lifecycle: store, batch, decode, update,
and eviction on completion."""

from kvweaver import (
    BackendConfig,
    GenerationState,
    KvManager,
    Observation,
    ToyBackend,
)

BUDGET = 6


def admit(manager, backend, obs_tokens, frame):
    kv = backend.prefill(Observation(obs_tokens=obs_tokens, frame=frame))
    state = GenerationState(kv=kv, tokens=(), terminated=False,
                            created_frame=frame, max_len=BUDGET)
    rid = manager.store(state)
    print(f"  stored request {rid}: prefill of {kv.seq_len} positions")
    return rid


def main():
    backend = ToyBackend(BackendConfig())
    manager = KvManager()

    print("frame 0: two requests arrive")
    admit(manager, backend, (3, 1, 4), frame=0)
    admit(manager, backend, (1, 5, 9, 2, 6), frame=0)
    print(f"  live positions: {manager.live_positions}")

    print("frame 0: batched decode, k=2")
    ids = manager.active_ids()
    states = [manager.retrieve(rid) for rid in ids]
    out = backend.batched_language_decode(manager.batch(states, ids), 2)
    for i, state in enumerate(manager.unbatch(out)):
        rid = ids[i]
        if state.terminated:
            manager.remove(rid)
            print(f"  request {rid} finished: {state.tokens}")
        else:
            manager.update(rid, state)
            print(f"  request {rid} now holds {state.tokens}, "
                  f"cache {state.kv.seq_len} positions")

    print("frame 1: one more arrival, then decode to completion")
    admit(manager, backend, (8, 8), frame=1)
    frame = 1
    while manager.active_ids():
        ids = manager.active_ids()
        states = [manager.retrieve(rid) for rid in ids]
        out = backend.batched_language_decode(manager.batch(states, ids), 2)
        done = []
        for i, state in enumerate(manager.unbatch(out)):
            if state.terminated:
                manager.remove(ids[i])
                done.append((ids[i], state.tokens))
            else:
                manager.update(ids[i], state)
        print(f"  frame {frame}: batch of {len(ids)}, finished {done}")
        frame += 1

    print(f"ids are never reused: next request would get id "
          f"{manager.created_count}")


if __name__ == "__main__":
    main()
