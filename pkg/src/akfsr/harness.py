"""Experiment configuration, multi-seed campaigns, aggregation and result files."""
from __future__ import annotations

import copy
import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from akfsr.agent import (Agent, AgentConfig, TrainLog, adapt_reward_change, make_features,
                         train)
from akfsr.envs import ScaledReward, gridworld_sr_oracle, make_env, ring_chain
from akfsr.errors import ConfigError
from akfsr.sr import MAX_DENSE_DIM
from akfsr.svg import write_chart

KINDS = ("train", "adapt", "oracle-check", "stability-sweep")
CSV_HEADER = ["episode", "mean_return", "std_return", "reward_mse", "sr_mse", "q_loss"]
FINAL_WINDOW = 100

DEFAULT_FEATURES = {
    "pendulum": {"axes": [[-math.pi / 4, 0.0, math.pi / 4], [-0.5, 0.0, 0.5]], "covariance": 1.0},
    "mountain_car": {"axes": [[-0.775, -0.35, 0.775], [-0.035, 0.0, 0.035]], "covariance": 1.0},
    "gridworld": {"kind": "onehot"},
}
DEFAULT_ENV_PARAMS = {"gridworld": {"n_states": 5, "gamma": 0.9}}
DEFAULT_AGENT = {
    "pendulum": {"b": 1e-3},
    "mountain_car": {"b": 1e-2},
    "gridworld": {"gamma": 0.9, "a_scale": 1.0, "u": 0.0, "f_scale": 1.0, "adapt_rbfs": False},
}


@dataclass
class ExperimentConfig:
    env: str = "pendulum"
    env_params: dict = field(default_factory=dict)
    agent: AgentConfig = None
    features: dict | None = None
    n_episodes: int = 1000
    n_runs: int = 50
    base_seed: int = 0
    seed_stride: int = 1
    max_steps: int | None = None
    out_dir: str = "results"
    kind: str = "train"
    adapt: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.env_params:
            self.env_params = copy.deepcopy(DEFAULT_ENV_PARAMS.get(self.env, {}))
        if self.agent is None:
            self.agent = AgentConfig(**DEFAULT_AGENT.get(self.env, {}))
        elif isinstance(self.agent, dict):
            self.agent = AgentConfig(**{**DEFAULT_AGENT.get(self.env, {}), **self.agent})
        if self.features is None:
            self.features = copy.deepcopy(DEFAULT_FEATURES.get(self.env))
        self.validate()

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"experiment kind must be one of {KINDS}, got {self.kind!r}")
        if self.n_runs < 1:
            raise ConfigError("n_runs must be >= 1")
        if self.n_episodes < 1:
            raise ConfigError("n_episodes must be >= 1")
        self.agent.validate()

    def seed(self, run_index: int) -> int:
        return self.base_seed + self.seed_stride * run_index

    def to_dict(self) -> dict:
        d = asdict(self)
        d["agent"] = self.agent.to_dict()
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        unknown = set(data) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    """Read a YAML (or JSON) experiment file."""
    import yaml

    try:
        data = yaml.safe_load(Path(path).read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return ExperimentConfig.from_dict(data)


@dataclass
class AggregateSeries:
    mean_return: np.ndarray
    std_return: np.ndarray
    mean_steps: np.ndarray
    std_steps: np.ndarray
    reward_mse: np.ndarray
    sr_mse: np.ndarray
    q_loss: np.ndarray

    def __len__(self):
        return len(self.mean_return)


def aggregate_runs(logs) -> AggregateSeries:
    """Per-episode mean and population standard deviation across runs."""
    if not logs:
        raise ValueError("no runs to aggregate")
    lengths = {len(log) for log in logs}
    if len(lengths) != 1:
        raise ValueError(f"runs have different lengths: {sorted(lengths)}")

    def stack(name):
        return np.stack([TrainLog(log).column(name) for log in logs])

    returns = stack("episode_return")
    steps = stack("steps")
    return AggregateSeries(
        mean_return=returns.mean(axis=0),
        std_return=returns.std(axis=0),
        mean_steps=steps.mean(axis=0),
        std_steps=steps.std(axis=0),
        reward_mse=stack("reward_mse").mean(axis=0),
        sr_mse=stack("sr_mse").mean(axis=0),
        q_loss=stack("q_loss").mean(axis=0),
    )


def compute_losses(log) -> np.ndarray:
    """Rows of ``(reward_mse, sr_mse, q_loss)``, one per episode."""
    log = TrainLog(log)
    reward = log.column("reward_mse")
    sr = log.column("sr_mse")
    return np.column_stack([reward, sr, reward + sr]) if len(log) else np.zeros((0, 3))


def build_agent(cfg: ExperimentConfig, run_index: int):
    env = make_env(cfg.env, **copy.deepcopy(cfg.env_params))
    features = make_features(cfg.features, env)
    n_actions = env.spec.n_actions
    L = features.n_features * n_actions
    if L * L > MAX_DENSE_DIM:
        raise ConfigError(f"L^2 = {L * L} exceeds the safety cap of {MAX_DENSE_DIM}")
    return env, Agent(cfg.agent, features, n_actions, seed=cfg.seed(run_index))


def _train_run(cfg: ExperimentConfig, run_index: int) -> TrainLog:
    env, agent = build_agent(cfg, run_index)
    return train(env, agent, cfg.n_episodes, cfg.max_steps)


def _workers(n_jobs: int) -> int:
    try:
        cap = int(os.environ.get("AKFSR_THREADS", "1"))
    except ValueError:
        raise ConfigError("AKFSR_THREADS must be an integer")
    return max(1, min(cap, n_jobs))


def map_runs(fn, cfg: ExperimentConfig, n_runs: int | None = None) -> list:
    """Apply ``fn(cfg, run_index)`` to every run; results come back in run order."""
    n = cfg.n_runs if n_runs is None else n_runs
    workers = _workers(n)
    if workers == 1:
        return [fn(cfg, i) for i in range(n)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, [cfg] * n, range(n)))


def run_experiment(cfg: ExperimentConfig, out_dir=None):
    """Train ``n_runs`` independent agents; returns ``(series, logs)``."""
    start = time.perf_counter()
    logs = map_runs(_train_run, cfg)
    series = aggregate_runs(logs)
    if out_dir is not None:
        emit_outputs(series, logs, out_dir, cfg, time.perf_counter() - start)
    return series, logs


def _final(values: np.ndarray) -> float:
    return float(np.mean(values[-FINAL_WINDOW:])) if len(values) else 0.0


def summary_dict(series: AggregateSeries, cfg: ExperimentConfig | None = None) -> dict:
    return {
        "config": cfg.to_dict() if cfg is not None else None,
        "n_episodes": len(series),
        "final_window": min(FINAL_WINDOW, len(series)),
        "final_mean_return": _final(series.mean_return),
        "final_std_return": _final(series.std_return),
        "final_mean_steps": _final(series.mean_steps),
        "final_reward_mse": _final(series.reward_mse),
        "final_sr_mse": _final(series.sr_mse),
        "final_q_loss": _final(series.q_loss),
    }


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _g9(v) -> str:
    return f"{float(v):.9g}"


def write_episodes_csv(series: AggregateSeries, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for i in range(len(series)):
            writer.writerow([i + 1] + [_g9(v) for v in (
                series.mean_return[i], series.std_return[i], series.reward_mse[i],
                series.sr_mse[i], series.q_loss[i])])
    return path


def read_episodes_csv(path) -> dict:
    with Path(path).open() as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in CSV_HEADER}


def plot_series(columns: dict, out_dir) -> list:
    out_dir = Path(out_dir)
    return [
        write_chart(out_dir / "returns.svg",
                    [("mean return", columns["mean_return"], columns["std_return"])],
                    title="Episode return", ylabel="return"),
        write_chart(out_dir / "losses.svg",
                    [("reward MSE", columns["reward_mse"], None),
                     ("SR MSE", columns["sr_mse"], None),
                     ("Q loss", columns["q_loss"], None)],
                    title="Losses", ylabel="MSE"),
    ]


def emit_outputs(series: AggregateSeries, logs, out_dir, cfg: ExperimentConfig | None = None,
                 wall_clock: float | None = None) -> list:
    """Write ``episodes.csv``, ``summary.json``, per-run CSVs and the two SVG charts.

    Wall-clock time goes to ``timing.json`` so the other files are
    byte-identical across reruns.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        files = [write_episodes_csv(series, out / "episodes.csv")]
        summary = out / "summary.json"
        summary.write_text(json.dumps(summary_dict(series, cfg), indent=2, sort_keys=True,
                                          default=_json_default) + "\n")
        files.append(summary)
        runs_dir = out / "runs"
        runs_dir.mkdir(exist_ok=True)
        for k, log in enumerate(logs):
            path = runs_dir / f"run_{k:03d}.csv"
            with path.open("w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["episode", "return", "steps", "reward_mse", "sr_mse", "q_loss"])
                for i, e in enumerate(log):
                    writer.writerow([i + 1, _g9(e.episode_return), e.steps, _g9(e.reward_mse),
                                     _g9(e.sr_mse), _g9(e.q_loss)])
            files.append(path)
        files += plot_series({
            "mean_return": series.mean_return, "std_return": series.std_return,
            "reward_mse": series.reward_mse, "sr_mse": series.sr_mse, "q_loss": series.q_loss,
        }, out)
        if wall_clock is not None:
            timing = out / "timing.json"
            timing.write_text(json.dumps({"wall_clock_seconds": wall_clock}) + "\n")
            files.append(timing)
    except OSError as exc:
        raise OSError(f"failed writing results to {out}: {exc}") from exc
    return files


def stability_sweep(cfg: ExperimentConfig, widths, out_dir=None) -> dict:
    """One campaign per RBF covariance scale; returns ``{width: AggregateSeries}``.

    Steps per episode (steps survived on the pendulum, steps to the goal on the
    car) are the quantity of interest, in ``mean_steps``/``std_steps``.
    """
    results = {}
    for width in widths:
        sub = copy.deepcopy(cfg)
        sub.features = dict(sub.features or {})
        sub.features["covariance"] = float(width)
        sub_out = None if out_dir is None else Path(out_dir) / f"width_{width:g}"
        results[float(width)], _ = run_experiment(sub, sub_out)
    if out_dir is not None:
        write_chart(Path(out_dir) / "sweep.svg",
                    [(f"width {w:g}", s.mean_steps, None) for w, s in results.items()],
                    title="Steps per episode by RBF width", ylabel="steps")
        (Path(out_dir) / "sweep.json").write_text(json.dumps({
            f"{w:g}": steady_state_stats(s.mean_steps) for w, s in results.items()
        }, indent=2, sort_keys=True) + "\n")
    return results


def steady_state_stats(values, window: int = 50) -> dict:
    tail = np.asarray(values, dtype=float)[-window:]
    mean = float(tail.mean())
    std = float(tail.std())
    return {"mean": mean, "std": std, "relative_std": std / mean if mean else float("inf")}


# ---------------------------------------------------------------- adaptation


def episodes_to_recover(q_loss, floor: float, factor: float = 1.2) -> int | None:
    """1-based index of the first episode with ``q_loss < factor * floor``."""
    below = np.flatnonzero(np.asarray(q_loss) < factor * floor)
    return int(below[0]) + 1 if below.size else None


def _adapt_run(cfg: ExperimentConfig, run_index: int) -> dict:
    opts = {"pretrain_episodes": cfg.n_episodes, "adapt_episodes": 100, "reward_factor": 3.0,
            "floor_window": 20, "threshold": 1.2, **cfg.adapt}
    env, agent = build_agent(cfg, run_index)
    pre = train(env, agent, opts["pretrain_episodes"], cfg.max_steps)
    floor = float(np.mean(pre.column("q_loss")[-opts["floor_window"]:]))
    scaled = ScaledReward(env, opts["reward_factor"])

    rng_state = copy.deepcopy(agent.rng.bit_generator.state)
    control = copy.deepcopy(agent)
    frozen_log = adapt_reward_change(agent, scaled, opts["adapt_episodes"], True, cfg.max_steps)

    control.rng.bit_generator.state = rng_state
    control.reset_sr_filter()
    control_log = adapt_reward_change(control, scaled, opts["adapt_episodes"], False, cfg.max_steps)
    cap = opts["adapt_episodes"] + 1
    frozen_n = episodes_to_recover(frozen_log.column("q_loss"), floor, opts["threshold"])
    control_n = episodes_to_recover(control_log.column("q_loss"), floor, opts["threshold"])
    return {
        "floor": floor,
        "frozen_episodes": cap if frozen_n is None else frozen_n,
        "relearn_episodes": cap if control_n is None else control_n,
        "frozen_q_loss": frozen_log.column("q_loss").tolist(),
        "relearn_q_loss": control_log.column("q_loss").tolist(),
        "pretrain": pre,
    }


def run_adaptation(cfg: ExperimentConfig, out_dir=None) -> dict:
    """Pretrain, scale the reward, then relearn with the SR frozen and, as a
    control, with the SR re-initialised. Counts episodes until the Q loss is
    back under ``threshold`` times its pre-change floor."""
    runs = map_runs(_adapt_run, cfg)
    result = {
        "mean_frozen_episodes": float(np.mean([r["frozen_episodes"] for r in runs])),
        "mean_relearn_episodes": float(np.mean([r["relearn_episodes"] for r in runs])),
        "runs": [{k: v for k, v in r.items() if k != "pretrain"} for r in runs],
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        series = aggregate_runs([r["pretrain"] for r in runs])
        emit_outputs(series, [r["pretrain"] for r in runs], out, cfg)
        (out / "adapt.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
        write_chart(out / "adapt.svg", [
            ("SR frozen", np.mean([r["frozen_q_loss"] for r in runs], axis=0), None),
            ("SR relearned", np.mean([r["relearn_q_loss"] for r in runs], axis=0), None),
        ], title="Q loss after reward change", ylabel="Q loss")
    return result


# ---------------------------------------------------------------- SR oracle


def _oracle_run(cfg: ExperimentConfig, run_index: int) -> dict:
    env, agent = build_agent(cfg, run_index)
    grid = env.grid
    log = train(env, agent, cfg.n_episodes, cfg.max_steps)
    oracle = gridworld_sr_oracle(grid.policy_matrix(), cfg.agent.gamma)
    learned = learned_sr_matrix(agent, grid.policy)
    q_oracle = oracle @ grid.policy_rewards()
    q_learned = np.array([agent.q_values(s)[grid.policy[s]] for s in range(grid.n_states)])
    return {
        "sr_mse": float(np.mean((learned - oracle) ** 2)),
        "q_max_abs_error": float(np.max(np.abs(q_learned - q_oracle))),
        "learned_sr": learned.tolist(),
        "oracle_sr": oracle.tolist(),
        "final_sr_mse": float(log[-1].sr_mse),
    }


def learned_sr_matrix(agent: Agent, policy) -> np.ndarray:
    """Row ``s`` is the learned SR of state ``s`` under ``policy``, read in state
    coordinates: ``m = W psi(s, policy[s])`` restricted to the policy's blocks."""
    n = agent.n_phi
    rows = []
    for s in range(n):
        m = agent.sr.W @ agent.psi(s, int(policy[s]))
        blocks = m.reshape(agent.n_actions, n)
        rows.append(np.array([blocks[int(policy[j]), j] for j in range(n)]))
    return np.array(rows)


def run_oracle_check(cfg: ExperimentConfig, out_dir=None) -> dict:
    if cfg.env != "gridworld":
        raise ConfigError("oracle-check needs the gridworld environment")
    runs = map_runs(_oracle_run, cfg)
    result = {"mean_sr_mse": float(np.mean([r["sr_mse"] for r in runs])), "runs": runs}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "oracle.json").write_text(
            json.dumps(result, indent=2, sort_keys=True, default=_json_default) + "\n")
    return result


def oracle_config(n_states: int = 5, gamma: float = 0.9, n_episodes: int = 300,
                  **kw) -> ExperimentConfig:
    spec = ring_chain(n_states, gamma)
    return ExperimentConfig(env="gridworld", env_params={"spec": spec}, n_episodes=n_episodes,
                            n_runs=kw.pop("n_runs", 1), kind="oracle-check",
                            agent={"gamma": gamma, **kw.pop("agent", {})}, **kw)
