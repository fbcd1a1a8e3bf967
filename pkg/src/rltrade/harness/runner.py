"""
Run configured experiments, sweep grids of hyperparameters, and write the
results as CSV.

Replicate i of a run with seed s draws everything from
``SeedSequence(s + i)``, split into one stream for the environment and one
for the agent, so a replicate's output does not depend on how many
replicates run or in which process.
"""
from __future__ import annotations

import csv
import io
import itertools
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from rltrade.agents import run_episode
from rltrade.environments import MdpEnv
from rltrade.harness.config import ExperimentConfig, InvalidValueError, UnknownNameError, resolved_params
from rltrade.harness.registry import ALGORITHMS, ENVIRONMENTS

RECORD_COLUMNS = ("replicate", "episode", "return", "steps", "rms_error")
METRICS = ("return", "steps", "rms_error")


@dataclass(frozen=True)
class RunRecord:
    replicate: int
    episode: int
    episode_return: float
    steps: int
    rms_error: float | None
    # kept in memory only; writing it would make output CSVs differ between runs
    wall_time: float = field(default=0.0, compare=False)

    def metric(self, name: str):
        return {"return": self.episode_return, "steps": self.steps, "rms_error": self.rms_error}[name]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[RunRecord]

    def summary(self) -> list[dict[str, Any]]:
        """Per-episode mean and (population) std across replicates."""
        by_episode: dict[int, list[RunRecord]] = {}
        for rec in self.records:
            by_episode.setdefault(rec.episode, []).append(rec)
        rows = []
        for ep in sorted(by_episode):
            recs = by_episode[ep]
            ret = np.array([r.episode_return for r in recs])
            steps = np.array([r.steps for r in recs], dtype=float)
            rms = [r.rms_error for r in recs if r.rms_error is not None]
            rows.append({
                "episode": ep,
                "n": len(recs),
                "return_mean": float(ret.mean()),
                "return_std": float(ret.std()),
                "steps_mean": float(steps.mean()),
                "rms_mean": float(np.mean(rms)) if rms else None,
                "rms_std": float(np.std(rms)) if rms else None,
            })
        return rows

    def final_rms(self) -> float | None:
        last = max(r.episode for r in self.records)
        rms = [r.rms_error for r in self.records if r.episode == last and r.rms_error is not None]
        return float(np.mean(rms)) if rms else None

    def mean_return(self) -> float:
        return float(np.mean([r.episode_return for r in self.records]))


def build(cfg: ExperimentConfig):
    """Instantiate (env, mdp or None, agent, algorithm params) for one replicate."""
    env_p, algo_p = resolved_params(cfg)
    try:
        env, mdp, gamma = ENVIRONMENTS[cfg.env].build(**env_p)
    except (ValueError, TypeError, OSError) as exc:
        raise InvalidValueError(f"environment {cfg.env!r}: {exc}") from exc
    if algo_p["gamma"] is not None:
        gamma = float(algo_p["gamma"])
        if mdp is not None:
            mdp = mdp.replace(gamma=gamma)
            env = MdpEnv(mdp, env.start)
    try:
        agent = ALGORITHMS[cfg.algorithm].build(env, gamma, algo_p)
    except (ValueError, TypeError) as exc:
        raise InvalidValueError(f"algorithm {cfg.algorithm!r}: {exc}") from exc
    return env, mdp, agent, algo_p


def replicate_streams(seed: int, replicate: int) -> tuple[np.random.Generator, np.random.Generator]:
    env_ss, agent_ss = np.random.SeedSequence(seed + replicate).spawn(2)
    return np.random.default_rng(env_ss), np.random.default_rng(agent_ss)


def run_replicate(cfg: ExperimentConfig, replicate: int) -> list[RunRecord]:
    env, mdp, agent, p = build(cfg)
    env_rng, agent_rng = replicate_streams(cfg.seed, replicate)
    if isinstance(env, MdpEnv):
        env.rng = env_rng
    records = []
    for ep in range(p["episodes"]):
        t0 = time.perf_counter()
        ret, steps = run_episode(env, agent, agent_rng, p["max_steps"])
        rms = agent.rms_error(mdp) if mdp is not None else None
        records.append(RunRecord(replicate, ep, float(ret), steps, rms, time.perf_counter() - t0))
    return records


def run_experiment(cfg: ExperimentConfig, jobs: int | None = None, out: str | Path | None = None) -> ExperimentResult:
    """Run all replicates, in parallel when ``jobs > 1``; output order is fixed."""
    jobs = cfg.jobs if jobs is None else jobs
    build(cfg)  # fail fast in this process
    reps = range(cfg.replicates)
    if jobs > 1 and cfg.replicates > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, cfg.replicates)) as pool:
            chunks = list(pool.map(run_replicate, [cfg] * cfg.replicates, reps))
    else:
        chunks = [run_replicate(cfg, i) for i in reps]
    result = ExperimentResult(cfg, [r for chunk in chunks for r in chunk])
    out = cfg.out if out is None else out
    if out is not None:
        write_records(result.records, out)
        write_rows(result.summary(), summary_path(out))
    return result


def summary_path(out: str | Path) -> Path:
    out = Path(out)
    return out.with_name(out.stem + ".summary.csv")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_rows(rows: Sequence[Mapping[str, Any]], path: str | Path | None = None, columns=None) -> str:
    """Write dict rows as CSV to ``path`` (if given) and return the text."""
    columns = list(columns or (rows[0].keys() if rows else []))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def write_records(records: Iterable[RunRecord], path: str | Path | None = None) -> str:
    rows = [
        {"replicate": r.replicate, "episode": r.episode, "return": r.episode_return,
         "steps": r.steps, "rms_error": r.rms_error}
        for r in records
    ]
    return write_rows(rows, path, RECORD_COLUMNS)


def read_records(path: str | Path) -> list[RunRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RECORD_COLUMNS:
            raise InvalidValueError(f"{path}: expected columns {','.join(RECORD_COLUMNS)}")
        return [
            RunRecord(int(row["replicate"]), int(row["episode"]), float(row["return"]),
                      int(row["steps"]), float(row["rms_error"]) if row["rms_error"] else None)
            for row in reader
        ]


def parse_value(text: str):
    """Grid value from the command line: bool, int, float, else string."""
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_grid(specs: Iterable[str]) -> dict[str, list]:
    """``["alpha=0.1,0.2", "lambda=0,1"]`` -> ``{"alpha": [0.1, 0.2], "lambda": [0, 1]}``."""
    grid: dict[str, list] = {}
    for spec in specs:
        key, sep, values = spec.partition("=")
        if not sep or not key or not values:
            raise InvalidValueError(f"grid entry must look like key=v1,v2; got {spec!r}")
        grid[key.strip()] = [parse_value(v.strip()) for v in values.split(",")]
    return grid


def sweep(cfg: ExperimentConfig, grid: Mapping[str, Sequence], jobs: int | None = None,
          out: str | Path | None = None) -> list[dict[str, Any]]:
    """Run every point of the Cartesian product of ``grid``; one row per point."""
    keys = list(grid)
    if not keys or any(len(grid[k]) == 0 for k in keys):
        raise InvalidValueError("sweep grid is empty")
    points = [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]
    configs = [cfg.with_overrides(point) for point in points]  # validate all before running
    rows = []
    for point, point_cfg in zip(points, configs):
        result = run_experiment(point_cfg, jobs=jobs, out=None)
        rows.append({**point, "final_rms": result.final_rms(), "mean_return": result.mean_return()})
    if out is not None:
        write_rows(rows, out)
    return rows


def emit_plotdata(records: Sequence[RunRecord], metric: str) -> list[dict[str, Any]]:
    """Tidy long-format rows (replicate, episode, metric, value)."""
    if metric not in METRICS:
        raise UnknownNameError(f"unknown metric {metric!r}; available: {', '.join(METRICS)}")
    return [
        {"replicate": r.replicate, "episode": r.episode, "metric": metric, "value": r.metric(metric)}
        for r in records
    ]
