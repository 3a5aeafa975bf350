"""Training, evaluation and K-sweeps driven by a :class:`RunConfig`; CSV output."""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .baselines import ClusterPolicy, RandomPolicy
from .config import RunConfig, serialize_config
from .dqn_agent import LOG_HEADER, DqnPolicy, TrainResult, evaluate_policy, train
from .environment import V2VEnvironment
from .neuralnet import load_checkpoint, save_checkpoint

log = logging.getLogger(__name__)

METRICS_HEADER = ("K", "policy", "mean_v2i_rate", "success_prob", "episodes", "seed")
CHECKPOINT_NAME = "checkpoint.mlp"
TRAINING_LOG_NAME = "training_log.csv"


class InvalidMetricsError(ValueError):
    pass


class MissingCheckpointError(FileNotFoundError):
    pass


@dataclass(frozen=True)
class MetricsRecord:
    K: int
    policy: str
    mean_v2i_rate: float
    success_prob: float
    episodes: int
    seed: int

    def __post_init__(self):
        if self.episodes <= 0:
            raise InvalidMetricsError("a metrics record needs at least one episode")
        if not 0.0 <= self.success_prob <= 1.0:
            raise InvalidMetricsError(f"success_prob {self.success_prob} outside [0, 1]")

    def row(self) -> list:
        return [self.K, self.policy, repr(self.mean_v2i_rate), repr(self.success_prob), self.episodes, self.seed]


def success_probability(outcomes) -> float:
    """Fraction of link-episodes that delivered their payload in time."""
    flags = np.asarray(list(outcomes), dtype=bool)
    if flags.size == 0:
        raise InvalidMetricsError("no episode outcomes to score")
    return float(flags.sum() / flags.size)


def sim_threads() -> int:
    try:
        return max(1, int(os.environ.get("SIM_THREADS", "1")))
    except ValueError:
        return 1


@contextmanager
def episode_mapper():
    n = sim_threads()
    if n == 1:
        yield map
        return
    with ThreadPoolExecutor(max_workers=n) as pool:
        yield pool.map


def env_factory(cfg: RunConfig, record_trace: bool = False):
    def make(seed) -> V2VEnvironment:
        return V2VEnvironment(cfg.env, cfg.channel, cfg.geometry, record_trace).reset(seed)
    return make


def train_run(cfg: RunConfig, out_dir) -> TrainResult:
    """Train the shared Q-network; writes the checkpoint, training log and config used."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = train(env_factory(cfg), cfg.trainer, cfg.net)
    save_checkpoint(result.params, out / CHECKPOINT_NAME)
    write_training_log(result, out / TRAINING_LOG_NAME)
    (out / "config.cfg").write_text(serialize_config(cfg))
    return result


def make_policy(name: str, cfg: RunConfig, checkpoint=None):
    if name == "random":
        return RandomPolicy()
    if name == "cluster":
        return ClusterPolicy(cfg.run.cluster_max_iters)
    if name == "dqn":
        path = Path(checkpoint or cfg.run.checkpoint or "")
        if not checkpoint and not cfg.run.checkpoint:
            raise MissingCheckpointError("policy 'dqn' needs a checkpoint path")
        if not path.is_file():
            raise MissingCheckpointError(f"checkpoint not found: {path}")
        params = load_checkpoint(path)
        if params.layer_sizes[0] != cfg.env.obs_dim or params.layer_sizes[-1] != cfg.env.n_actions:
            raise ValueError(f"checkpoint {path} has layers {params.layer_sizes}, "
                             f"config needs {cfg.env.obs_dim} inputs and {cfg.env.n_actions} outputs")
        return DqnPolicy(params)
    raise ValueError(f"unknown policy {name!r}")


def evaluate_run(cfg: RunConfig, policy_name: str, checkpoint=None, k=None) -> MetricsRecord:
    run_cfg = cfg.with_k(k) if k is not None else cfg
    policy = make_policy(policy_name, run_cfg, checkpoint)
    with episode_mapper() as map_fn:
        m = evaluate_policy(policy, env_factory(run_cfg), run_cfg.run.episodes, run_cfg.run.seed, map_fn)
    if not m.valid:
        raise InvalidMetricsError("evaluation ran zero episodes")
    return MetricsRecord(run_cfg.env.n_v2v, policy_name, m.mean_v2i_rate,
                         success_probability(m.link_outcomes), m.episodes, run_cfg.run.seed)


def run_sweep(cfg: RunConfig, k_list=None, policies=None, checkpoint=None, out_path=None) -> list[MetricsRecord]:
    """Evaluate every (K, policy) pair with common random numbers across policies."""
    k_list = tuple(k_list or cfg.run.k_list)
    policies = tuple(policies or cfg.run.policies)
    if "dqn" in policies:
        # fail before any work is done
        make_policy("dqn", cfg, checkpoint)
    records = []
    for k in k_list:
        for name in policies:
            rec = evaluate_run(cfg, name, checkpoint, k)
            log.info("K=%d %s: v2i %.4g success %.4f", k, name, rec.mean_v2i_rate, rec.success_prob)
            records.append(rec)
    if out_path is not None:
        write_metrics_csv(records, out_path)
    return records


def write_metrics_csv(records, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(METRICS_HEADER)
        for r in records:
            w.writerow(r.row())


def read_metrics_csv(path) -> list[MetricsRecord]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return [MetricsRecord(int(r["K"]), r["policy"], float(r["mean_v2i_rate"]), float(r["success_prob"]),
                          int(r["episodes"]), int(r["seed"])) for r in rows]


def write_training_log(result: TrainResult, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(LOG_HEADER)
        for row in result.log:
            w.writerow([row.step, repr(row.epsilon), repr(row.loss), repr(row.mean_episode_reward)])
