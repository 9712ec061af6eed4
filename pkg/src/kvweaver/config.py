"""INI-style run configuration.

A run file has up to four sections; every key is optional and falls back
to the package default. A sweep file adds a [sweep] section whose axes
cross-product over the base run.

    [run]
    variant = Unified              ; Unified | SharedNoBatch |
                                   ; IsolatedSequential | IsolatedParallel
    backend = CostModel            ; Toy | CostModel
    k = 4                          ; decode steps per frame
    f_min = 30.0                   ; deadline floor, Hz
    pacing = LatencyBound          ; LatencyBound | FixedPeriod
    period_us = 0                  ; frame period when FixedPeriod

    [backend]
    L / d_model / n_heads / vocab / eos_token / action_dim / H / S / seed

    [cost]                         ; integer microseconds
    c_prefill_per_token / c_denoise_per_step / c_decode_base /
    c_decode_per_request / c_contention (float >= 1)

    [workload]
    pattern = OnePerFrame          ; OnePerFrame | Uniform | Poisson | MixedLength
    default_N / obs_len / num_frames / seed
    lambda = 0.5                   ; Poisson rate
    r = 1                          ; Uniform arrivals per frame
    short_N = 10 / long_N = 50 / p_long = 0.3   ; MixedLength split

    [sweep]
    N = 5,10,20,30,40              ; axes; any of N, k, variant, lambda
    k = 1,2,5
    variant = Unified,IsolatedSequential
    lambda = 0.25,0.5,1.0
    max_runs = 10000               ; cross-product cap
    output_dir = sweep_out

Unknown sections or keys are rejected with the offending name so typos
fail loudly instead of silently running defaults.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace

from .backend import BackendConfig, CostModelParams
from .sim_engine import PACINGS, SimConfig
from .workload import PATTERNS, WorkloadSpec

__all__ = ["ConfigError", "SweepSpec", "load_sim_config", "load_sweep_spec"]


class ConfigError(Exception):
    """Configuration problems; the CLI maps these to exit code 2."""


_SECTIONS = {
    "run": {"variant", "backend", "k", "f_min", "pacing", "period_us"},
    "backend": {"L", "d_model", "n_heads", "vocab", "eos_token",
                "action_dim", "H", "S", "seed"},
    "cost": {"c_prefill_per_token", "c_denoise_per_step", "c_decode_base",
             "c_decode_per_request", "c_contention"},
    "workload": {"pattern", "default_N", "obs_len", "num_frames", "seed",
                 "lambda", "r", "short_N", "long_N", "p_long"},
    "sweep": {"N", "k", "variant", "lambda", "max_runs", "output_dir"},
}


@dataclass(frozen=True, slots=True)
class SweepSpec:
    base: SimConfig
    axes: dict[str, list] = field(default_factory=dict)
    max_runs: int = 10_000
    output_dir: str = "sweep_out"


def _read(path: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case-sensitive (N vs n matters)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path!r}: {e}") from None
    except configparser.Error as e:
        # configparser messages carry line numbers
        raise ConfigError(f"malformed config {path!r}: {e}") from None
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(
                f"unknown section [{section}]; expected one of "
                f"{sorted(_SECTIONS)}"
            )
        for key in cp[section]:
            if key not in _SECTIONS[section]:
                raise ConfigError(
                    f"unknown key {key!r} in [{section}]; allowed: "
                    f"{sorted(_SECTIONS[section])}"
                )
    return cp


def _get(cp, section: str, key: str, parse, default):
    if not cp.has_section(section) or key not in cp[section]:
        return default
    raw = cp[section][key].strip()
    try:
        return parse(raw)
    except ValueError:
        raise ConfigError(
            f"[{section}] {key}: cannot parse {raw!r} as {parse.__name__}"
        ) from None


def _build_sim_config(cp, seed_override: int | None) -> SimConfig:
    try:
        backend_config = BackendConfig(
            L=_get(cp, "backend", "L", int, 2),
            d_model=_get(cp, "backend", "d_model", int, 32),
            n_heads=_get(cp, "backend", "n_heads", int, 2),
            vocab=_get(cp, "backend", "vocab", int, 64),
            eos_token=_get(cp, "backend", "eos_token", int, 0),
            action_dim=_get(cp, "backend", "action_dim", int, 4),
            H=_get(cp, "backend", "H", int, 10),
            S=_get(cp, "backend", "S", int, 10),
            seed=_get(cp, "backend", "seed", int, 7),
        )
    except ValueError as e:
        raise ConfigError(f"[backend]: {e}") from None
    try:
        cost = CostModelParams(
            c_prefill_per_token=_get(cp, "cost", "c_prefill_per_token", int, 25),
            c_denoise_per_step=_get(cp, "cost", "c_denoise_per_step", int, 3000),
            c_decode_base=_get(cp, "cost", "c_decode_base", int, 5900),
            c_decode_per_request=_get(cp, "cost", "c_decode_per_request", int, 100),
            c_contention=_get(cp, "cost", "c_contention", float, 1.6),
        )
    except ValueError as e:
        raise ConfigError(f"[cost]: {e}") from None
    try:
        workload = WorkloadSpec(
            pattern=_get(cp, "workload", "pattern", str, "OnePerFrame"),
            default_N=_get(cp, "workload", "default_N", int, 12),
            obs_len=_get(cp, "workload", "obs_len", int, 800),
            num_frames=_get(cp, "workload", "num_frames", int, 40),
            seed=_get(cp, "workload", "seed", int, 1),
            lam=_get(cp, "workload", "lambda", float, 0.5),
            r=_get(cp, "workload", "r", int, 1),
            short_N=_get(cp, "workload", "short_N", int, 10),
            long_N=_get(cp, "workload", "long_N", int, 50),
            p_long=_get(cp, "workload", "p_long", float, 0.3),
        )
        if workload.pattern not in PATTERNS:
            raise ValueError(f"unknown pattern {workload.pattern!r}")
    except ValueError as e:
        raise ConfigError(f"[workload]: {e}") from None
    if seed_override is not None:
        workload = replace(workload, seed=seed_override)
    try:
        return SimConfig(
            variant=_get(cp, "run", "variant", str, "Unified"),
            backend_kind=_get(cp, "run", "backend", str, "CostModel"),
            backend_config=backend_config,
            cost_params=cost,
            workload=workload,
            k=_get(cp, "run", "k", int, 4),
            f_min_hz=_get(cp, "run", "f_min", float, 30.0),
            pacing=_get(cp, "run", "pacing", str, "LatencyBound"),
            period_us=_get(cp, "run", "period_us", int, 0),
        )
    except ValueError as e:
        raise ConfigError(f"[run]: {e}") from None


def load_sim_config(path: str, seed_override: int | None = None) -> SimConfig:
    return _build_sim_config(_read(path), seed_override)


def _parse_list(raw: str, parse, section_key: str) -> list:
    items = [x.strip() for x in raw.split(",") if x.strip()]
    if not items:
        raise ConfigError(f"{section_key}: empty axis")
    try:
        return [parse(x) for x in items]
    except ValueError:
        raise ConfigError(
            f"{section_key}: cannot parse {raw!r} as a {parse.__name__} list"
        ) from None


def load_sweep_spec(path: str, seed_override: int | None = None) -> SweepSpec:
    cp = _read(path)
    base = _build_sim_config(cp, seed_override)
    axes: dict[str, list] = {}
    if cp.has_section("sweep"):
        sw = cp["sweep"]
        if "variant" in sw:
            axes["variant"] = _parse_list(sw["variant"], str, "[sweep] variant")
        if "N" in sw:
            axes["N"] = _parse_list(sw["N"], int, "[sweep] N")
        if "k" in sw:
            axes["k"] = _parse_list(sw["k"], int, "[sweep] k")
        if "lambda" in sw:
            axes["lambda"] = _parse_list(sw["lambda"], float, "[sweep] lambda")
            if base.workload.pattern != "Poisson":
                raise ConfigError(
                    "[sweep] lambda: sweeping the arrival rate needs "
                    "pattern = Poisson in [workload]"
                )
    max_runs = _get(cp, "sweep", "max_runs", int, 10_000)
    output_dir = _get(cp, "sweep", "output_dir", str, "sweep_out")
    if max_runs < 1:
        raise ConfigError("[sweep] max_runs must be >= 1")
    return SweepSpec(base=base, axes=axes, max_runs=max_runs,
                     output_dir=output_dir)
