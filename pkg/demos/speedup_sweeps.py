"""Sweep response budget N and chunk size k on the latency model and print
the speedup of the unified scheduler over the isolated sequential baseline.

Longer responses amortize better (speedup grows with N); larger decode
chunks spend more of each frame on the shared batched decode (speedup
falls as k grows at fixed N).
"""

from kvweaver import (
    BackendConfig,
    CostModelParams,
    SimConfig,
    WorkloadSpec,
    run_simulation,
    speedup,
    summarize,
)

N_VALUES = (5, 10, 20, 30, 40)
K_VALUES = (1, 2, 5, 10, 15, 30)
FRAMES = 80


def run_one(variant, n, k):
    config = SimConfig(
        variant=variant,
        backend_kind="CostModel",
        backend_config=BackendConfig(),
        cost_params=CostModelParams(),
        workload=WorkloadSpec(pattern="OnePerFrame", default_N=n,
                              obs_len=800, num_frames=FRAMES, seed=1),
        k=k,
    )
    return summarize(run_simulation(config), config)


def steady_speedup(n, k):
    unified = run_one("Unified", n, k)
    isolated = run_one("IsolatedSequential", n, k)
    return speedup(unified, isolated)


def main():
    print(f"budget sweep at k=5 (frames={FRAMES})")
    print("    N   speedup")
    last = 0.0
    for n in N_VALUES:
        s = steady_speedup(n, 5)
        marker = "rising" if s > last else "NOT RISING"
        print(f"  {n:3d}   {s:.6f}  {marker}")
        last = s

    print(f"chunk sweep at N=30 (frames={FRAMES})")
    print("    k   speedup")
    last = float("inf")
    for k in K_VALUES:
        s = steady_speedup(30, k)
        marker = "falling" if s < last else "NOT FALLING"
        print(f"  {k:3d}   {s:.6f}  {marker}")
        last = s

    print("k=30 sanity: one frame drains the whole budget, so speedup is")
    print(f"  250000/230000 = {250000 / 230000:.6f}")


if __name__ == "__main__":
    main()
