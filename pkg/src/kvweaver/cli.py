"""Command-line front end.

    kvweaver run    --config run.ini  [--seed S] [--out DIR]
    kvweaver sweep  --config sweep.ini [--seed S] [--out DIR]
                    [--jobs J] [--no-svg]
    kvweaver verify [--seed S]

run executes one simulation and prints the metrics summary plus one CSV
row (written under --out when given, along with the per-frame trace and,
for the toy backend, the transcript). sweep crosses the [sweep] axes over
the base config, writes results.csv and, unless --no-svg, line charts of
action frequency and token throughput against the swept axis. verify runs
the oracle suites and fails loudly on any violation.

--jobs parallelizes sweep runs across processes; the KVWEAVER_JOBS
environment variable is the fallback when the flag is absent. Exit codes:
0 success, 1 verification failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .config import ConfigError, SweepSpec, load_sim_config, load_sweep_spec
from .metrics import MetricsReport, speedup, steady_window_bounds, summarize
from .sim_engine import SimConfig, SimResult, run_simulation, transcript_to_json
from .svg import line_chart
from .workload import generate_arrivals

__all__ = ["main", "CSV_COLUMNS", "CSV_VERSION_COMMENT"]

CSV_COLUMNS = [
    "run_id", "variant", "backend", "N", "k", "H", "S", "lambda", "pattern",
    "seed", "frames", "f_per_request_hz", "f_aggregate_hz", "tau_tok_per_s",
    "avg_batch", "deadline_miss_rate", "warmup_frames", "speedup_vs_isolated",
]
CSV_VERSION_COMMENT = "# kvweaver-csv v1"
CSV_NOTE_COMMENT = "# avg_batch is the token-weighted mean batch size"


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _n_cell(config: SimConfig) -> str:
    """Tokens per request; MixedLength reports the realized mean budget."""
    wl = config.workload
    if wl.pattern == "MixedLength":
        arrivals = generate_arrivals(wl, config.backend_config.vocab)
        if not arrivals:
            return _fmt(0.0)
        return _fmt(sum(a.n_tokens for a in arrivals) / len(arrivals))
    return str(wl.default_N)


@dataclass(slots=True)
class RunRecord:
    row: list[str]
    variant: str
    n_value: int
    k_value: int
    lam_value: float
    f_aggregate: float
    tau: float


def _speedup_vs_isolated(config: SimConfig, report: MetricsReport) -> float:
    if config.variant == "IsolatedSequential":
        return 1.0
    twin_cfg = replace(config, variant="IsolatedSequential")
    return speedup(report, summarize(run_simulation(twin_cfg), twin_cfg))


def _csv_row(run_id: str, config: SimConfig, result: SimResult,
             report: MetricsReport, spd: float) -> list[str]:
    wl = config.workload
    return [
        run_id,
        config.variant,
        config.backend_kind,
        _n_cell(config),
        str(config.k),
        str(config.backend_config.H),
        str(config.backend_config.S),
        _fmt(wl.arrivals_per_frame),
        wl.pattern,
        str(wl.seed),
        str(len(result.traces)),
        _fmt(report.per_request_action_freq),
        _fmt(report.action_freq_hz),
        _fmt(report.token_throughput),
        _fmt(report.avg_batch_size),
        _fmt(report.deadline_miss_rate),
        str(report.warmup_frames),
        _fmt(spd),
    ]


def _execute_run(payload: tuple[str, SimConfig]) -> RunRecord:
    """One simulation plus its IsolatedSequential twin for the speedup
    column. Top-level so sweep workers can pickle it."""
    run_id, config = payload
    result = run_simulation(config)
    report = summarize(result, config)
    spd = _speedup_vs_isolated(config, report)
    wl = config.workload
    return RunRecord(
        row=_csv_row(run_id, config, result, report, spd),
        variant=config.variant, n_value=wl.default_N,
        k_value=config.k, lam_value=wl.arrivals_per_frame,
        f_aggregate=report.action_freq_hz, tau=report.token_throughput,
    )


def _write_csv(path: Path, rows: list[list[str]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(CSV_VERSION_COMMENT + "\n")
        fh.write(CSV_NOTE_COMMENT + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# run


def _print_summary(config: SimConfig, result: SimResult,
                   report: MetricsReport, spd: float) -> None:
    start, end = steady_window_bounds(result, config)
    window = result.traces[start:end]
    completions = (
        sum(len(tr.completed_ids) for tr in window) / len(window) if window else 0.0
    )
    full = summarize(result, config, include_warmup=True)
    print(
        f"variant={config.variant} backend={config.backend_kind} "
        f"pattern={config.workload.pattern} frames={len(result.traces)}"
    )
    print(
        f"steady window: frames [{start}, {end}) "
        f"(warmup={report.warmup_frames}, drain excluded)"
    )
    print(f"  f_aggregate_hz        = {_fmt(report.action_freq_hz)}")
    print(f"  f_per_request_hz      = {_fmt(report.per_request_action_freq)}")
    print(f"  actions_per_second    = {_fmt(report.actions_per_second)}")
    print(f"  tau_tok_per_s         = {_fmt(report.token_throughput)}")
    print(
        f"  avg_batch             = {_fmt(report.avg_batch_size)} "
        f"(token-weighted; per-frame mean {_fmt(report.avg_batch_size_frames)})"
    )
    print(f"  completions_per_frame = {_fmt(completions)}")
    print(f"  deadline_miss_rate    = {_fmt(report.deadline_miss_rate)}")
    print(f"  speedup_vs_isolated   = {_fmt(spd)}")
    print(
        f"full horizon: f_aggregate_hz={_fmt(full.action_freq_hz)} "
        f"tau_tok_per_s={_fmt(full.token_throughput)}"
    )
    misses = [tr.frame for tr in result.traces
              if tr.actions_emitted > 0 and not tr.deadline_met]
    if misses:
        print(
            f"note: {len(misses)} action frames below f_min="
            f"{config.f_min_hz} Hz (first at frame {misses[0]}); "
            f"infeasible but reported"
        )


def _trace_rows(result: SimResult) -> list[list[str]]:
    rows = []
    for tr in result.traces:
        rows.append([
            str(tr.frame), str(tr.arrival_count), str(tr.prefill_count),
            str(tr.prefill_us), str(tr.denoise_us), str(tr.decode_us),
            str(tr.overhead_us), str(tr.total_us), str(tr.batch_size_m),
            str(tr.tokens_emitted), str(tr.actions_emitted),
            ";".join(str(c) for c in tr.completed_ids),
            str(int(tr.deadline_met)),
        ])
    return rows


_TRACE_COLUMNS = [
    "frame", "arrivals", "prefills", "prefill_us", "denoise_us", "decode_us",
    "overhead_us", "total_us", "batch_size_m", "tokens_emitted",
    "actions_emitted", "completed_ids", "deadline_met",
]


def cmd_run(args) -> int:
    config = load_sim_config(args.config, args.seed)
    result = run_simulation(config)
    report = summarize(result, config)
    spd = _speedup_vs_isolated(config, report)
    row = _csv_row("r0000", config, result, report, spd)
    _print_summary(config, result, report, spd)
    print(",".join(CSV_COLUMNS))
    print(",".join(row))
    if args.out:
        out = Path(args.out)
        _write_csv(out / "metrics.csv", [row])
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "trace.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(_TRACE_COLUMNS)
            writer.writerows(_trace_rows(result))
        if config.backend_kind == "Toy":
            (out / "transcript.json").write_text(
                transcript_to_json(result), encoding="utf-8"
            )
        print(f"wrote metrics.csv and trace.csv under {out}")
    return 0


# ---------------------------------------------------------------------------
# sweep


def _sweep_configs(spec: SweepSpec) -> list[tuple[str, SimConfig]]:
    variants = spec.axes.get("variant", [spec.base.variant])
    ns = spec.axes.get("N", [spec.base.workload.default_N])
    ks = spec.axes.get("k", [spec.base.k])
    lams = spec.axes.get("lambda", [spec.base.workload.lam])
    total = len(variants) * len(ns) * len(ks) * len(lams)
    if total > spec.max_runs:
        raise ConfigError(
            f"sweep would launch {total} runs, above the max_runs cap "
            f"{spec.max_runs}"
        )
    out = []
    i = 0
    for variant in variants:
        for n in ns:
            for k in ks:
                for lam in lams:
                    wl = replace(spec.base.workload, default_N=n, lam=lam)
                    try:
                        cfg = replace(spec.base, variant=variant, k=k, workload=wl)
                    except ValueError as e:
                        raise ConfigError(f"sweep point invalid: {e}") from None
                    out.append((f"r{i:04d}", cfg))
                    i += 1
    return out


def _resolve_jobs(args) -> int:
    if args.jobs is not None:
        jobs = args.jobs
    else:
        raw = os.environ.get("KVWEAVER_JOBS", "1")
        try:
            jobs = int(raw)
        except ValueError:
            raise ConfigError(
                f"KVWEAVER_JOBS must be an integer, got {raw!r}"
            ) from None
    if jobs < 1:
        raise ConfigError(f"--jobs must be >= 1, got {jobs}")
    return jobs


def _chart_axis(spec: SweepSpec) -> tuple[str, str] | None:
    """First numeric axis with more than one value: (axis key, x label)."""
    for key, label in (("N", "N tokens per request"), ("k", "k tokens per frame"),
                       ("lambda", "arrivals per frame")):
        if len(spec.axes.get(key, [])) > 1:
            return key, label
    return None


def cmd_sweep(args) -> int:
    spec = load_sweep_spec(args.config, args.seed)
    payloads = _sweep_configs(spec)
    jobs = _resolve_jobs(args)
    if jobs == 1:
        records = [_execute_run(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_execute_run, payloads))

    out = Path(args.out) if args.out else Path(spec.output_dir)
    _write_csv(out / "results.csv", [r.row for r in records])
    written = [out / "results.csv"]

    axis = _chart_axis(spec)
    if axis and not args.no_svg:
        key, x_label = axis
        getter = {"N": lambda r: float(r.n_value), "k": lambda r: float(r.k_value),
                  "lambda": lambda r: r.lam_value}[key]
        f_series: dict[str, list[tuple[float, float]]] = {}
        tau_series: dict[str, list[tuple[float, float]]] = {}
        for r in records:
            f_series.setdefault(r.variant, []).append((getter(r), r.f_aggregate))
            tau_series.setdefault(r.variant, []).append((getter(r), r.tau))
        f_path = out / f"f_vs_{key}.svg"
        tau_path = out / f"tau_vs_{key}.svg"
        f_path.write_text(
            line_chart(f"Action frequency vs {key}", x_label,
                       "f_aggregate (Hz)", f_series),
            encoding="utf-8",
        )
        tau_path.write_text(
            line_chart(f"Token throughput vs {key}", x_label,
                       "tau (tokens/s)", tau_series),
            encoding="utf-8",
        )
        written += [f_path, tau_path]

    print(f"sweep: {len(records)} runs")
    for path in written:
        print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# verify


def cmd_verify(args) -> int:
    from .verify import run_all_suites  # deferred; pulls in the toy backend

    reports = run_all_suites(seed=args.seed or 0)
    failed = False
    for rep in reports:
        status = "ok" if rep.ok else "FAIL"
        print(f"{rep.name:<12} cases={rep.cases:<6} failures={len(rep.failures):<4} {status}")
        if not rep.ok:
            failed = True
    if failed:
        print("\nfailing cases (first 5 per suite):")
        for rep in reports:
            for msg in rep.failures[:5]:
                print(f"  [{rep.name}] {msg}")
        return 1
    return 0


# ---------------------------------------------------------------------------


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="kvweaver",
        description="Deadline-aware multi-task inference scheduling simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one simulation")
    p_run.add_argument("--config", required=True, help="run config (INI)")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the workload seed")
    p_run.add_argument("--out", default=None, help="directory for result files")

    p_sweep = sub.add_parser("sweep", help="cross-product parameter sweep")
    p_sweep.add_argument("--config", required=True, help="sweep config (INI)")
    p_sweep.add_argument("--seed", type=int, default=None,
                         help="override the workload seed")
    p_sweep.add_argument("--out", default=None,
                         help="output directory (default: [sweep] output_dir)")
    p_sweep.add_argument("--jobs", type=int, default=None,
                         help="parallel runs (fallback: KVWEAVER_JOBS, then 1)")
    p_sweep.add_argument("--no-svg", action="store_true",
                         help="skip chart emission")

    p_verify = sub.add_parser("verify", help="run the oracle suites")
    p_verify.add_argument("--seed", type=int, default=None,
                          help="base seed for the randomized suites")

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        return cmd_verify(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
