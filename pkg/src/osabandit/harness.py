"""Batch experiment driver: config files, seeded runs across workers, CSV and SVG output.

Config files are INI-style::

    [model]
    preset = homogeneous        ; or heterogeneous; or give theta/p_d/p_f
    theta = 0.9, 0.8, 0.657
    p_d = 0.8                   ; scalar or one value per channel
    p_f = 0.3
    n_channels = 5              ; optional truncation to the first channels
    reward_unit = 1.0

    [experiment]
    name = fig5
    case = partial              ; full | partial
    policy = alg3               ; alg1 | alg2 | alg3 | alg4
    k = 1                       ; access width, or a list such as 1, 3, 5, 7
    m = 4                       ; sensing width (partial only)
    slots = 100000
    runs = 500
    master_seed = 2024
    checkpoints = default       ; or an explicit list of slots
    benchmark = paired          ; paired | analytic
    sweep_cap =                 ; alg4 only; empty means no cap

    [alg1.fit]
    starts = 8
    max_iter = 500
    gtol = 1e-9
    warm_steps = 1
    refit_every = 1000

    [output]
    out_dir = results
    per_run_csv = false
    plot = true
"""
from __future__ import annotations

import configparser
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .genie import GenieValue, genie_best_set_partial, genie_value_full
from .model import ChannelModel, reference_model
from .policies import POLICY_NAMES, FitOptions, make_policy
from .regret import RegretTrace, RunLog, default_checkpoints, regret_trace
from .simulate import simulate

log = logging.getLogger(__name__)

BATCH_RUNS = 250
CSV_HEADER = "slot,mean_regret,stderr_regret,mean_regret_over_log,runs"


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    model: ChannelModel
    policy: str
    k: tuple[int, ...] = (1,)
    m: int | None = None
    case: str = "full"
    slots: int = 10_000
    runs: int = 100
    master_seed: int = 0
    checkpoints: tuple[int, ...] | None = None
    benchmark: str = "paired"
    sweep_cap: int | None = None
    fit: FitOptions = field(default_factory=FitOptions)
    name: str = "experiment"
    out_dir: Path = Path("results")
    per_run_csv: bool = False
    plot: bool = True

    def validate(self) -> None:
        n = self.model.n_channels
        if self.policy not in POLICY_NAMES:
            raise ConfigError(f"policy must be one of {POLICY_NAMES}, got {self.policy!r}")
        if self.case not in ("full", "partial"):
            raise ConfigError("case must be 'full' or 'partial'")
        if (self.case == "full") != (self.policy in ("alg1", "alg2")):
            raise ConfigError(f"policy {self.policy} does not match case {self.case!r}")
        if self.runs < 1 or self.slots < 1:
            raise ConfigError("runs and slots must be positive")
        if not self.k:
            raise ConfigError("at least one access width k is required")
        for k in self.k:
            if self.case == "full" and not 1 <= k <= n:
                raise ConfigError(f"need 1 <= k <= N={n}, got k={k}")
            if self.case == "partial" and (self.m is None or not 1 <= k <= self.m <= n):
                raise ConfigError(f"need 1 <= k <= m <= N={n}, got k={k}, m={self.m}")
        if self.policy == "alg3" and self.slots < math.ceil(n / self.m) + 1:
            raise ConfigError("horizon shorter than the initial sensing sweep")
        if self.benchmark not in ("paired", "analytic"):
            raise ConfigError("benchmark must be 'paired' or 'analytic'")
        if self.checkpoints is not None:
            cps = np.asarray(self.checkpoints)
            if cps.size and (cps[0] < 1 or cps[-1] > self.slots or np.any(np.diff(cps) <= 0)):
                raise ConfigError("checkpoints must be strictly increasing within [1, slots]")

    def checkpoint_array(self) -> np.ndarray:
        if self.checkpoints is None:
            return default_checkpoints(self.slots)
        return np.asarray(self.checkpoints, dtype=np.int64)


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(",", " ").split())


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Read an INI config; ``overrides`` (flag values, ``None`` = unset) win over the file."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if path is not None:
        if not parser.read(path):
            raise ConfigError(f"cannot read config file {path}")
    try:
        cfg = _from_parser(parser, overrides or {})
    except (ValueError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    cfg.validate()
    return cfg


def _from_parser(parser, overrides) -> ExperimentConfig:
    get = lambda sec, key, default=None: parser.get(sec, key, fallback=default) if parser.has_section(sec) else default

    preset = get("model", "preset")
    if preset:
        model = reference_model(preset)
    else:
        model = ChannelModel(
            _floats(get("model", "theta", ",".join(map(str, reference_model().theta)))),
            _floats(get("model", "p_d", "0.8")),
            _floats(get("model", "p_f", "0.3")),
        )
    if get("model", "n_channels"):
        model = model.truncated(int(get("model", "n_channels")))
    model = model.with_reward_unit(float(get("model", "reward_unit", "1.0")))

    exp = lambda key, default=None: get("experiment", key, default)
    policy = overrides.get("policy") or exp("policy", "alg2")
    case = exp("case") or ("full" if policy in ("alg1", "alg2") else "partial")
    if overrides.get("policy"):
        case = "full" if policy in ("alg1", "alg2") else "partial"
    k = overrides.get("k") or _ints(exp("k", "1"))
    m = overrides.get("m") or (int(exp("m")) if exp("m") else None)
    cps = exp("checkpoints", "default").strip()
    sweep_cap = exp("sweep_cap")
    fit = FitOptions(
        starts=int(get("alg1.fit", "starts", "8")),
        max_iter=int(get("alg1.fit", "max_iter", "500")),
        gtol=float(get("alg1.fit", "gtol", "1e-9")),
        warm_steps=int(get("alg1.fit", "warm_steps", "1")),
        refit_every=int(get("alg1.fit", "refit_every", "1000")),
    )
    pick = lambda key, default: overrides[key] if overrides.get(key) is not None else default
    return ExperimentConfig(
        model=model,
        policy=policy,
        k=tuple(k) if not isinstance(k, int) else (k,),
        m=m,
        case=case,
        slots=pick("slots", int(float(exp("slots", "10000")))),
        runs=pick("runs", int(exp("runs", "100"))),
        master_seed=pick("seed", int(exp("master_seed", "0"))),
        checkpoints=None if cps in ("", "default") else _ints(cps),
        benchmark=exp("benchmark", "paired"),
        sweep_cap=int(float(sweep_cap)) if sweep_cap else None,
        fit=fit,
        name=exp("name", "experiment"),
        out_dir=Path(pick("out_dir", get("output", "out_dir", "results"))),
        per_run_csv=parser.getboolean("output", "per_run_csv", fallback=False) if parser.has_section("output") else False,
        plot=parser.getboolean("output", "plot", fallback=True) if parser.has_section("output") else True,
    )


def genie_for(config: ExperimentConfig, k: int) -> GenieValue:
    if config.case == "full":
        return genie_value_full(config.model, k)
    return genie_best_set_partial(config.model, config.m, k)


def _run_batch(args) -> tuple[RunLog, int]:
    config, k, genie, run_indices = args
    made = []

    def factory(runs):
        made.append(make_policy(config.policy, config.model, k, config.m, runs, config.fit, config.sweep_cap))
        return made[0]

    runlog = simulate(config.model, factory, genie, config.slots, run_indices, config.master_seed,
                      config.checkpoint_array())
    sweeping = getattr(made[0], "in_sweep", None)
    unfinished = 0 if sweeping is None else int(np.sum(sweeping & ~runlog.failed))
    return runlog, unfinished


def worker_count(default: int | None = None) -> int:
    env = os.environ.get("OSA_WORKERS")
    if env:
        return max(int(env), 1)
    return default or os.cpu_count() or 1


def run_logs(config: ExperimentConfig, k: int, workers: int | None = None) -> tuple[RunLog, GenieValue]:
    """Simulate every run for access width ``k``.

    Runs are cut into fixed batches of ``BATCH_RUNS`` consecutive indices, so
    the numbers do not depend on how many workers process the batches.
    Raises ``ConfigError`` if an alg4 run is still in its initial sweep at the
    horizon.
    """
    genie = genie_for(config, k)
    batches = [np.arange(s, min(s + BATCH_RUNS, config.runs)) for s in range(0, config.runs, BATCH_RUNS)]
    jobs = [(config, k, genie, b) for b in batches]
    workers = min(worker_count() if workers is None else workers, len(jobs))
    if workers <= 1:
        logs = [_run_batch(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            logs = list(pool.map(_run_batch, jobs))
    unfinished = sum(u for _, u in logs)
    if unfinished:
        raise ConfigError(f"horizon of {config.slots} slots ends inside the alg4 sweep for {unfinished} run(s)")
    return RunLog.concatenate([lg for lg, _ in logs]), genie


@dataclass
class ExperimentResult:
    traces: dict[int, RegretTrace]
    failed_runs: dict[int, list[int]]
    files: list[Path]

    @property
    def any_failed(self) -> bool:
        return any(self.failed_runs.values())


def run_experiment(config: ExperimentConfig, workers: int | None = None) -> ExperimentResult:
    """Run every configured access width, write CSV (and SVG) artifacts, return the traces."""
    config.validate()
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    traces, failed, files = {}, {}, []
    for k in config.k:
        runlog, genie = run_logs(config, k, workers)
        failed[k] = [int(r) for r in runlog.run_indices[runlog.failed]]
        if failed[k]:
            log.warning("k=%d: %d run(s) aborted by the sweep cap and left out of the aggregate", k, len(failed[k]))
        trace = regret_trace(runlog, genie, benchmark=config.benchmark)
        traces[k] = trace
        stem = config.name if len(config.k) == 1 else f"{config.name}_k{k}"
        files.append(emit_csv(trace, out / f"{stem}.csv"))
        if config.per_run_csv:
            files.append(emit_per_run_csv(trace, runlog.run_indices[~runlog.failed], out / f"{stem}_runs.csv"))
    if config.plot:
        files.append(write_svg(traces, out / f"{config.name}.svg", config))
    return ExperimentResult(traces, failed, files)


def format_value(x: float) -> str:
    """Decimal with 12 significant digits; zero prints as 0.000000000000, NaN as empty."""
    if np.isnan(x):
        return ""
    if x == 0:
        return "0." + "0" * 12
    s = np.format_float_positional(float(x), precision=12, unique=False, fractional=False, trim="k")
    return s + "0" if s.endswith(".") else s


def emit_csv(trace: RegretTrace, path) -> Path:
    """Aggregate rows: slot, mean R, stderr R, mean R/ln t, runs.

    Undefined values (R/ln t at t = 1, statistics of zero runs) are left empty.
    """
    path = Path(path)
    lines = [CSV_HEADER]
    mean, se, rol = trace.mean_regret, trace.stderr_regret, trace.mean_regret_over_log
    for i, slot in enumerate(trace.slots):
        lines.append(f"{int(slot)},{format_value(mean[i])},{format_value(se[i])},{format_value(rol[i])},{trace.runs}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def emit_per_run_csv(trace: RegretTrace, run_indices, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="\n") as fh:
        fh.write("run,slot,regret\n")
        for r, row in zip(run_indices, trace.regret):
            for slot, value in zip(trace.slots, row):
                fh.write(f"{int(r)},{int(slot)},{format_value(value)}\n")
    return path


def read_csv(path) -> dict[str, np.ndarray]:
    """Parse an aggregate CSV back into columns (absent values become NaN)."""
    with open(path) as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"unexpected header {header!r}")
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    cols = CSV_HEADER.split(",")
    out = {}
    for j, name in enumerate(cols):
        vals = [r[j] for r in rows]
        if name in ("slot", "runs"):
            out[name] = np.array([int(v) for v in vals], dtype=np.int64)
        else:
            out[name] = np.array([float(v) if v else np.nan for v in vals])
    return out


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def write_svg(traces: dict[int, RegretTrace], path, config: ExperimentConfig | None = None,
              width: int = 640, height: int = 420) -> Path:
    """Mean R(t) (full sensing) or mean R(t)/ln t (partial sensing) against log t."""
    path = Path(path)
    over_log = config is not None and config.case == "partial"
    ylabel = "mean R(t) / ln t" if over_log else "mean R(t)"
    series = {}
    for k, tr in traces.items():
        y = tr.mean_regret_over_log if over_log else tr.mean_regret
        ok = (tr.slots >= 1) & np.isfinite(y)
        series[k] = (np.log10(tr.slots[ok].astype(float)), y[ok])
    xs = np.concatenate([s[0] for s in series.values()]) if series else np.array([0.0, 1.0])
    ys = np.concatenate([s[1] for s in series.values()]) if series else np.array([0.0, 1.0])
    x0, x1 = (math.floor(xs.min()), math.ceil(xs.max())) if xs.size else (0, 1)
    x1 = max(x1, x0 + 1)
    y0, y1 = (min(0.0, float(ys.min())), float(ys.max())) if ys.size else (0.0, 1.0)
    if y1 <= y0:
        y1 = y0 + 1.0
    left, right, top, bottom = 70, 20, 30, 50
    pw, ph = width - left - right, height - top - bottom
    px = lambda x: left + (x - x0) / (x1 - x0) * pw
    py = lambda y: top + ph - (y - y0) / (y1 - y0) * ph

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for e in range(x0, x1 + 1):
        x = px(e)
        parts.append(f'<line x1="{x:.2f}" y1="{top + ph}" x2="{x:.2f}" y2="{top + ph + 5}" stroke="black"/>')
        parts.append(f'<text x="{x:.2f}" y="{top + ph + 18}" text-anchor="middle">1e{e}</text>')
    for i in range(6):
        yv = y0 + (y1 - y0) * i / 5
        y = py(yv)
        parts.append(f'<line x1="{left - 5}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="black"/>')
        parts.append(f'<text x="{left - 8}" y="{y + 4:.2f}" text-anchor="end">{yv:.3g}</text>')
    parts.append(f'<text x="{left + pw / 2}" y="{height - 10}" text-anchor="middle">slot t (log scale)</text>')
    parts.append(f'<text x="15" y="{top + ph / 2}" text-anchor="middle" '
                 f'transform="rotate(-90 15 {top + ph / 2})">{ylabel}</text>')
    if config is not None:
        parts.append(f'<text x="{left + pw / 2}" y="18" text-anchor="middle">{config.name}: {config.policy}, '
                     f'{config.runs} runs</text>')
    for i, (k, (lx, y)) in enumerate(series.items()):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(lx, y))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = top + 15 + 16 * i
        parts.append(f'<line x1="{left + 10}" y1="{ly}" x2="{left + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{left + 35}" y="{ly + 4}">K={k}</text>')
    parts.append("</svg>")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")
    return path


def with_overrides(config: ExperimentConfig, **kw) -> ExperimentConfig:
    """Copy of ``config`` with fields replaced and revalidated."""
    out = replace(config, **kw)
    out.validate()
    return out
