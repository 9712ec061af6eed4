"""Validate the steady-state batch size under Poisson arrivals against
Little's law.

Each arrival needs ceil(N/k) frames of residence, so the mean number of
live requests per frame should approach lambda * N / k once the queue
reaches steady state.
"""

from kvweaver import (
    BackendConfig,
    CostModelParams,
    SimConfig,
    WorkloadSpec,
    run_simulation,
    summarize,
)

LAMBDAS = (0.25, 0.5, 1.0)
N = 20
K = 5
FRAMES = 20000


def mean_batch(lam):
    config = SimConfig(
        variant="Unified",
        backend_kind="CostModel",
        backend_config=BackendConfig(),
        cost_params=CostModelParams(),
        workload=WorkloadSpec(pattern="Poisson", default_N=N, obs_len=100,
                              num_frames=FRAMES, lam=lam, seed=9),
        k=K,
    )
    report = summarize(run_simulation(config), config)
    return report.avg_batch_size_frames


def main():
    print(f"N={N}, k={K}, {FRAMES} frames of Poisson arrivals")
    print("lambda   measured   lambda*N/k   error")
    for lam in LAMBDAS:
        measured = mean_batch(lam)
        expected = lam * N / K
        err = abs(measured - expected) / expected
        print(f"{lam:6.2f}   {measured:8.4f}   {expected:10.4f}   {err:6.2%}")


if __name__ == "__main__":
    main()
