"""Trace the unified scheduler frame by frame on the reference workload
(one arrival per frame, N=12, k=4) and check the steady-state frame time
against the hand-computed value.

Once the pipeline fills, each frame carries one prefill, one denoise, and a
batched decode over ceil(N/k)=3 live requests, so

    T = 800*25 + 10*3000 + 4*(5900 + 100*3) = 74800 us

and the isolated baseline pays two prefills plus a full-budget decode:

    T_iso = 2*800*25 + 10*3000 + 12*(5900 + 100) = 142000 us
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

EXPECTED_STEADY_US = 74800
EXPECTED_ISOLATED_US = 142000
FRAMES = 12


def reference_config(variant):
    return SimConfig(
        variant=variant,
        backend_kind="CostModel",
        backend_config=BackendConfig(),
        cost_params=CostModelParams(),
        workload=WorkloadSpec(pattern="OnePerFrame", default_N=12,
                              obs_len=800, num_frames=FRAMES, seed=1),
        k=4,
    )


def main():
    config = reference_config("Unified")
    result = run_simulation(config)

    print("frame  m  prefill  denoise  decode   total   completed")
    for trace in result.traces:
        print(f"{trace.frame:5d} {trace.batch_size_m:2d} "
              f"{trace.prefill_us:8d} {trace.denoise_us:8d} "
              f"{trace.decode_us:7d} {trace.total_us:7d}   "
              f"{list(trace.completed_ids)}")

    steady = [t.total_us for t in result.traces if t.batch_size_m == 3]
    print(f"steady frame time: {steady[0]} us, "
          f"expected: {EXPECTED_STEADY_US} us")

    report = summarize(result, config)
    h = config.backend_config.H
    print(f"aggregate action rate: {report.action_freq_hz:.2f} Hz "
          f"({h}e6/{EXPECTED_STEADY_US} = {h * 1e6 / EXPECTED_STEADY_US:.2f})")

    iso_config = reference_config("IsolatedSequential")
    iso_report = summarize(run_simulation(iso_config), iso_config)
    print(f"isolated frame time: {round(h * 1e6 / iso_report.action_freq_hz)} "
          f"us, expected: {EXPECTED_ISOLATED_US} us")
    print(f"speedup: {speedup(report, iso_report):.6f}, "
          f"expected: {EXPECTED_ISOLATED_US / EXPECTED_STEADY_US:.6f}")


if __name__ == "__main__":
    main()
