"""Seeded batch runs, metrics CSVs and learning-curve data."""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import yaml

from ..agent import AgentConfig, evaluate_policy, run_online
from ..errors import ConfigError
from ..exploration import write_bonus_trace
from ..latent import save_model
from ..pomdp import TabularPomdp, WindowPolicy, WindowSpace, dump_policy
from .config import ExperimentConfig

METRICS_FORMAT = "lvrep-metrics"
METRICS_VERSION = 1
METRICS_COLUMNS = ("runId", "episode", "return", "planningValue", "modelTV", "meanBonus",
                   "wallClockMs")
CURVE_COLUMNS = ("episode", "mean", "stderr", "nRuns")
SUMMARY_COLUMNS = ("variant", "nRuns", "medianFinalReturn", "q25", "q75")


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(float(x))


@dataclass
class RunOutput:
    run_id: str
    variant: str
    seed: int
    rows: list[tuple]
    final_return: float
    bonus_rows: list[tuple[int, int, float, float]]
    model: object | None
    policy: WindowPolicy


def run_id(variant: str, seed: int) -> str:
    return f"{variant}-s{seed}"


def execute_run(pomdp: TabularPomdp, agent: AgentConfig, variant: str, seed: int,
                final_eval_episodes: int, record_wall_clock: bool = False) -> RunOutput:
    """One (variant, seed) run; a pure function of its arguments unless wall clock is recorded."""
    rid = run_id(variant, seed)
    cfg = replace(agent, seed=seed, fit=replace(agent.fit, seed=seed),
                  bonus_enabled=(variant == "bonusOn"))
    final_seed = seed + 1_000_003
    if variant == "uniformBaseline":
        space = WindowSpace(pomdp.n_obs, pomdp.n_actions, cfg.L)
        pi = WindowPolicy.uniform(space, pomdp.horizon)
        rows = []
        for k in range(1, cfg.K + 1):
            t0 = time.perf_counter()
            ret, _ = evaluate_policy(pomdp, pi, cfg.eval_episodes, seed * 100_003 + k)
            ms = (time.perf_counter() - t0) * 1e3 if record_wall_clock else 0.0
            rows.append((rid, k, ret, None, None, None, ms))
        final, _ = evaluate_policy(pomdp, pi, final_eval_episodes, final_seed)
        return RunOutput(rid, variant, seed, rows, final, [], None, pi)
    t0 = time.perf_counter()
    res = run_online(pomdp, cfg)
    elapsed = (time.perf_counter() - t0) * 1e3 / cfg.K if record_wall_clock else 0.0
    rows = [(rid, lg.episode, lg.ret, lg.planning_value, lg.model_tv, lg.bonus_mean, elapsed)
            for lg in res.logs]
    bonus_rows = [(lg.episode, h, mean, mx) for lg in res.logs
                  for h, (mean, mx) in enumerate(lg.step_bonus)]
    final, _ = evaluate_policy(pomdp, res.policies[-1], final_eval_episodes, final_seed)
    return RunOutput(rid, variant, seed, rows, final, bonus_rows, res.model, res.policies[-1])


def _run_task(args):
    return execute_run(*args)


def run_experiment(cfg: ExperimentConfig, pomdp: TabularPomdp) -> list[RunOutput]:
    tasks = [(pomdp, cfg.agent, v, s, cfg.final_eval_episodes, cfg.record_wall_clock)
             for v in cfg.variants for s in cfg.seeds]
    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outputs = list(pool.map(_run_task, tasks))
    else:
        outputs = [_run_task(t) for t in tasks]
    return sorted(outputs, key=lambda o: o.run_id)


def write_metrics(rows: Iterable[tuple], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        f.write(f"# {METRICS_FORMAT} v{METRICS_VERSION}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(METRICS_COLUMNS)
        for rid, ep, ret, pv, tv, mb, ms in rows:
            w.writerow([rid, ep, _fmt(ret), _fmt(pv), _fmt(tv), _fmt(mb), _fmt(ms)])


def read_metrics(path: str | Path) -> list[dict[str, str]]:
    """Parse a metrics CSV, rejecting unknown versions and column layouts."""
    with open(path, newline="") as f:
        first = f.readline().strip()
        if first != f"# {METRICS_FORMAT} v{METRICS_VERSION}":
            raise ConfigError(f"unsupported metrics header {first!r}")
        reader = csv.reader(f)
        header = next(reader, None)
        if tuple(header or ()) != METRICS_COLUMNS:
            raise ConfigError(f"metrics columns {header} do not match {list(METRICS_COLUMNS)}")
        rows = []
        for line in reader:
            if len(line) != len(METRICS_COLUMNS):
                raise ConfigError(f"malformed metrics row {line}")
            rows.append(dict(zip(METRICS_COLUMNS, line)))
    return rows


def variant_of(run: str) -> str:
    return run.rsplit("-s", 1)[0]


def learning_curves(rows: Sequence[dict[str, str]]) -> dict[str, list[tuple[int, float, float, int]]]:
    """Per-variant mean and standard error of the return at each episode.

    Sums use ``math.fsum`` over sorted values so the result does not depend
    on row order.
    """
    by: dict[str, dict[int, list[float]]] = {}
    for r in rows:
        by.setdefault(variant_of(r["runId"]), {}).setdefault(int(r["episode"]), []).append(
            float(r["return"]))
    curves = {}
    for variant in sorted(by):
        pts = []
        for ep in sorted(by[variant]):
            vals = sorted(by[variant][ep])
            n = len(vals)
            mean = math.fsum(vals) / n
            se = math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / (n - 1) / n) if n > 1 else 0.0
            pts.append((ep, mean, se, n))
        curves[variant] = pts
    return curves


def write_curves(curves: dict[str, list[tuple[int, float, float, int]]], out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for variant, pts in curves.items():
        path = out_dir / f"curve_{variant}.csv"
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(CURVE_COLUMNS)
            for ep, mean, se, n in pts:
                w.writerow([ep, repr(mean), repr(se), n])
        paths.append(path)
    return paths


def summarize(outputs: Sequence[RunOutput], variants: Sequence[str]) -> list[tuple[str, int, float, float, float]]:
    table = []
    for v in variants:
        finals = np.array([o.final_return for o in outputs if o.variant == v])
        q25, med, q75 = np.percentile(finals, [25, 50, 75])
        table.append((v, len(finals), float(med), float(q25), float(q75)))
    return table


def write_summary(table, path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for v, n, med, q25, q75 in table:
            w.writerow([v, n, repr(med), repr(q25), repr(q75)])


def write_artifacts(cfg: ExperimentConfig, outputs: Sequence[RunOutput], out_dir: Path) -> dict[str, Path]:
    """Config snapshot, metrics, summary, and per-run model, policy and bonus trace."""
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.yaml").write_text(yaml.safe_dump(cfg.raw, sort_keys=False))
    metrics = out_dir / "metrics.csv"
    write_metrics([row for o in outputs for row in o.rows], metrics)
    summary = out_dir / "summary.csv"
    write_summary(summarize(outputs, cfg.variants), summary)
    runs = out_dir / "runs"
    runs.mkdir(exist_ok=True)
    for o in outputs:
        dump_policy(o.policy, runs / f"{o.run_id}.policy.yaml")
        if o.model is not None:
            save_model(o.model, runs / f"{o.run_id}.model.yaml")
            write_bonus_trace(o.bonus_rows, runs / f"{o.run_id}.bonus.csv")
    return {"metrics": metrics, "summary": summary}
