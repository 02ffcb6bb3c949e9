"""Training/evaluation loops, metric export and agent comparison.

Random streams (all numpy PCG64 seeded through ``SeedSequence``):

* episode seed  = ``SeedSequence([run_seed, phase, episode]).generate_state(1)[0]``
  with phase 0 for training and 1 for evaluation;
* fires, fading = ``SeedSequence(episode_seed).spawn(2)`` inside the environment;
* agent init, exploration = ``SeedSequence([run_seed, 0xA6E]).spawn(2)``.

Changing how one consumer draws numbers never shifts another stream.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .agents import Agent, make_agent
from .config import ExperimentConfig
from .env import StepOutcome, U2UEnv
from .nn import TrainingDivergence

log = logging.getLogger(__name__)

TTI_FIELDS = ("phase", "episode", "tti", "reward", "qoe", "delay_s", "smoothness_penalty", "mean_power_dbm",
              "min_resolution_index", "mean_rate_bps", "active_ues")
EPISODE_FIELDS = ("phase", "episode", "ttis", "total_reward", "reward", "qoe", "delay_s", "smoothness_penalty",
                  "mean_power_dbm", "min_resolution_index", "mean_rate_bps", "active_ues")
SUMMARY_METRICS = ("qoe", "delay_s", "smoothness_penalty", "min_resolution_index", "mean_power_dbm")
PHASES = {"train": 0, "eval": 1}


def episode_seed(run_seed: int, phase: str, episode: int) -> int:
    return int(np.random.SeedSequence([int(run_seed), PHASES[phase], int(episode)]).generate_state(1)[0])


def git_blob_sha1(data: bytes) -> str:
    """Content hash computed the way ``git hash-object`` does."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def metrics_row(phase: str, episode: int, tti: int, out: StepOutcome) -> dict:
    m = out.metrics
    n = m.active_ue_count
    return {
        "phase": phase,
        "episode": episode,
        "tti": tti,
        "reward": out.reward,
        "qoe": m.qoe,
        "delay_s": m.delay,
        "smoothness_penalty": m.smoothness_penalty,
        "mean_power_dbm": float(np.mean(m.tx_power_dbm)) if n else math.nan,
        "min_resolution_index": int(np.min(m.resolutions)) if n else -1,
        "mean_rate_bps": float(np.mean(m.rates)) if n else math.nan,
        "active_ues": n,
    }


def _nanmean(values) -> float:
    vals = [v for v in values if not (isinstance(v, float) and math.isnan(v))]
    return float(np.mean(vals)) if vals else math.nan


def episode_summary(rows: Sequence[dict]) -> dict:
    first = rows[0]
    out = {"phase": first["phase"], "episode": first["episode"], "ttis": len(rows),
           "total_reward": float(sum(r["reward"] for r in rows))}
    for key in EPISODE_FIELDS[4:]:
        if key == "min_resolution_index":
            out[key] = _nanmean([float(r[key]) for r in rows if r[key] >= 0])
        else:
            out[key] = _nanmean([float(r[key]) for r in rows])
    return out


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".9g")
    return str(v)


def render_csv(rows: Sequence[dict], fields: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
    w.writerow(fields)
    for r in rows:
        w.writerow([_fmt(r[f]) for f in fields])
    return buf.getvalue()


def render_json(rows: Sequence[dict], fields: Sequence[str]) -> str:
    def clean(v):
        if isinstance(v, (float, np.floating)):
            v = float(format(float(v), ".9g"))
            return None if math.isnan(v) else v
        return int(v) if isinstance(v, (np.integer,)) else v
    return json.dumps([{f: clean(r[f]) for f in fields} for r in rows], indent=1) + "\n"


@dataclass
class RunResult:
    out_dir: Path
    files: dict[str, Path]
    checkpoint: Path | None
    tti_rows: list[dict]
    episode_rows: list[dict]
    manifest: dict
    agent: Agent | None = field(default=None, repr=False)

    def eval_rows(self) -> list[dict]:
        return [r for r in self.tti_rows if r["phase"] == "eval"]


def _run_episode(env: U2UEnv, agent: Agent, phase: str, episode: int, seed: int, learn: bool) -> list[dict]:
    state = env.reset(episode_seed(seed, phase, episode))
    rows = []
    done = False
    while not done:
        tti = env.world.tti
        action = agent.act(env, state, explore=learn)
        out = env.step(action)
        if learn and agent.learns:
            # episode ends are time limits, so learners still bootstrap from the next state
            agent.learn(state, action, out.reward, out.next_state, env)
        rows.append(metrics_row(phase, episode, tti, out))
        state = out.next_state
        done = out.done
    return rows


def run_experiment(config: ExperimentConfig, checkpoint_in: str | Path | None = None,
                   train: bool = True, write: bool = True) -> RunResult:
    """Train (optionally), then evaluate with exploration off; write CSV/JSON, manifest and checkpoint."""
    config.validate()
    started = time.perf_counter()
    run = config.run
    env = U2UEnv(config)
    agent = make_agent(config.agent.kind, env, config.agent, run.seed)
    if checkpoint_in is not None:
        agent.load_state_dict(json.loads(Path(checkpoint_in).read_text()))
    n_train = run.episodes if train else 0
    agent.set_training_horizon(n_train * run.ttis_per_episode)
    tti_rows: list[dict] = []
    episode_rows: list[dict] = []
    status, error = "ok", None
    try:
        for phase, n_eps, learn in (("train", n_train, True), ("eval", run.eval_episodes, False)):
            for ep in range(n_eps):
                rows = _run_episode(env, agent, phase, ep, run.seed, learn)
                tti_rows += rows
                episode_rows.append(episode_summary(rows))
                if phase == "train" and (ep + 1) % 10 == 0:
                    log.info("%s seed %d: episode %d mean reward %.4f", config.agent.kind, run.seed, ep + 1,
                             episode_rows[-1]["reward"])
    except TrainingDivergence as e:
        status, error = "diverged", str(e)
        log.error("training diverged: %s", e)
    out_dir = Path(run.output_dir)
    files: dict[str, Path] = {}
    ckpt = None
    manifest = {
        "status": status,
        "error": error,
        "config": config.to_dict(),
        "config_sha1": git_blob_sha1(json.dumps(config.to_dict(), sort_keys=True).encode()),
        "rng": "numpy PCG64 via SeedSequence; see u2usim.harness module docstring for stream layout",
        "outputs": {},
    }
    if write:
        out_dir.mkdir(parents=True, exist_ok=True)
        ext = run.format
        render = render_csv if ext == "csv" else render_json
        for name, rows, fields in (("per_tti", tti_rows, TTI_FIELDS), ("per_episode", episode_rows, EPISODE_FIELDS)):
            data = render(rows, fields).encode()
            path = out_dir / f"{name}.{ext}"
            path.write_bytes(data)
            files[name] = path
            manifest["outputs"][name] = {"path": path.name, "git_blob_sha1": git_blob_sha1(data)}
        ckpt = out_dir / "checkpoint.json"
        ckpt.write_text(json.dumps(agent.state_dict()))
        manifest["outputs"]["checkpoint"] = {"path": ckpt.name}
    manifest["wall_time_s"] = time.perf_counter() - started
    if write:
        (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    result = RunResult(out_dir, files, ckpt, tti_rows, episode_rows, manifest, agent)
    if status != "ok":
        raise TrainingDivergence(f"{error} (partial outputs in {out_dir})")
    return result


# -- comparison ----------------------------------------------------------------

def _scenario_key(cfg: ExperimentConfig) -> str:
    d = cfg.to_dict()
    d["agent"] = {k: v for k, v in d["agent"].items() if k != "kind"}
    d["run"] = {k: v for k, v in d["run"].items() if k not in ("seed", "output_dir")}
    return json.dumps(d, sort_keys=True)


def eval_summary(rows: Sequence[dict]) -> dict:
    ev = [r for r in rows if r["phase"] == "eval"]
    out = {}
    for key in SUMMARY_METRICS:
        vals = [float(r[key]) for r in ev if not (key == "min_resolution_index" and r[key] < 0)]
        out[key] = _nanmean(vals)
    return out


def high_request_power(rows: Sequence[dict], min_active: int) -> float:
    """Mean transmit power over eval TTIs with at least ``min_active`` streaming UEs."""
    vals = [r["mean_power_dbm"] for r in rows if r["phase"] == "eval" and r["active_ues"] >= min_active]
    return _nanmean(vals)


@dataclass
class Comparison:
    table: list[dict]
    per_seed: dict[str, list[dict]]

    def to_csv(self) -> str:
        fields = ["agent", "n_seeds"] + [f"{m}_{s}" for m in SUMMARY_METRICS for s in ("mean", "std")]
        return render_csv(self.table, fields)


def _run_one(cfg: ExperimentConfig) -> dict:
    res = run_experiment(cfg)
    s = cfg.scenario
    summary = eval_summary(res.tti_rows)
    summary["high_request_power_dbm"] = high_request_power(res.tti_rows, s.max_areas * s.ues_per_area)
    summary["seed"] = cfg.run.seed
    summary["per_tti_sha1"] = res.manifest["outputs"]["per_tti"]["git_blob_sha1"]
    return summary


def compare_agents(configs: Sequence[ExperimentConfig], seeds: Sequence[int] = (0, 1, 2, 3, 4),
                   out_dir: str | Path | None = None, workers: int = 1) -> Comparison:
    """Run every config over ``seeds`` and tabulate eval-phase means and across-seed spread."""
    if not configs:
        raise ValueError("nothing to compare")
    key = _scenario_key(configs[0])
    for c in configs[1:]:
        if _scenario_key(c) != key:
            raise ValueError("compare_agents needs configs that differ only in agent kind")
    jobs, labels, used = [], [], set()
    for i, cfg in enumerate(configs):
        label = cfg.agent.kind if cfg.agent.kind not in used else f"{cfg.agent.kind}#{i}"
        used.add(label)
        base = Path(out_dir) if out_dir is not None else Path(cfg.run.output_dir)
        for seed in seeds:
            c = copy.deepcopy(cfg)
            c.run.seed = int(seed)
            c.run.output_dir = str(base / label / f"seed{seed}")
            jobs.append(c)
            labels.append(label)
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            summaries = list(pool.map(_run_one, jobs))
    else:
        summaries = [_run_one(c) for c in jobs]
    per_seed: dict[str, list[dict]] = {}
    for label, s in zip(labels, summaries):
        per_seed.setdefault(label, []).append(s)
    table = []
    for label, runs in per_seed.items():
        row = {"agent": label, "n_seeds": len(runs)}
        for m in SUMMARY_METRICS:
            vals = np.array([r[m] for r in runs], dtype=float)
            row[f"{m}_mean"] = float(np.nanmean(vals)) if np.any(~np.isnan(vals)) else math.nan
            row[f"{m}_std"] = float(np.nanstd(vals, ddof=1)) if np.sum(~np.isnan(vals)) > 1 else 0.0
        table.append(row)
    comp = Comparison(table, per_seed)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "comparison.csv").write_text(comp.to_csv())
    return comp
