from dataclasses import replace

import pytest

from v2vdrl.config import RunConfig, RunSettings, load_config, parse_config, serialize_config
from v2vdrl.dqn_agent import NetConfig, TrainerConfig
from v2vdrl.environment import ConfigError, EnvConfig
from v2vdrl.experiments import (CHECKPOINT_NAME, METRICS_HEADER, TRAINING_LOG_NAME, InvalidMetricsError,
                                MetricsRecord, MissingCheckpointError, evaluate_run, read_metrics_csv,
                                run_sweep, success_probability, train_run)


def small_config(**run):
    return RunConfig(
        env=EnvConfig(n_cue=4, n_rb=4, n_v2v=4, payload_bits=300_000.0),
        net=NetConfig(hidden_sizes=(8,)),
        trainer=TrainerConfig(total_training_steps=40, batch_size=8, memory_capacity=100, target_sync_interval=5),
        run=RunSettings(episodes=2, **run),
    )


def test_default_round_trip():
    cfg = RunConfig()
    assert parse_config(serialize_config(cfg)) == cfg


def test_custom_round_trip(tmp_path):
    cfg = small_config(k_list=(4, 8), policies=("random", "cluster"), checkpoint="x.mlp")
    path = tmp_path / "c.cfg"
    path.write_text(serialize_config(cfg))
    assert load_config(path) == cfg


def test_partial_file_keeps_defaults():
    cfg = parse_config("[env]\nn_v2v = 7\n[trainer]\nbeta = 0.9  # comment\n")
    assert cfg.env.n_v2v == 7 and cfg.trainer.beta == 0.9
    assert cfg.env.n_rb == EnvConfig().n_rb and cfg.net == NetConfig()


@pytest.mark.parametrize("text", [
    "[env]\nbogus = 1\n",
    "[nonsense]\nx = 1\n",
    "[env]\nn_v2v = many\n",
    "[env]\nn_cue = 3\n",
    "[trainer]\nbeta = 1.5\n",
    "[run]\npolicy = magic\n",
    "no section header\n",
])
def test_invalid_config_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_with_k():
    assert RunConfig().with_k(12).env.n_v2v == 12


@pytest.mark.parametrize("flags, expected", [([True] * 5, 1.0), ([True, True, True, False], 0.75), ([False] * 3, 0.0)])
def test_success_probability(flags, expected):
    assert success_probability(flags) == expected


def test_success_probability_empty():
    with pytest.raises(InvalidMetricsError):
        success_probability([])


@pytest.mark.parametrize("kw", [dict(episodes=0), dict(success_prob=1.5)])
def test_metrics_record_validation(kw):
    with pytest.raises(InvalidMetricsError):
        MetricsRecord(**{"K": 4, "policy": "random", "mean_v2i_rate": 1.0, "success_prob": 0.5,
                         "episodes": 1, "seed": 0, **kw})


def test_sweep_cardinality_and_bytes(tmp_path):
    cfg = small_config(policies=("random", "cluster"))
    a = run_sweep(cfg, (4, 8), out_path=tmp_path / "a.csv")
    b = run_sweep(cfg, (4, 8), out_path=tmp_path / "b.csv")
    assert len(a) == 4 and [(r.K, r.policy) for r in a] == [(4, "random"), (4, "cluster"),
                                                            (8, "random"), (8, "cluster")]
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert open(tmp_path / "a.csv").readline().strip() == ",".join(METRICS_HEADER)
    assert read_metrics_csv(tmp_path / "a.csv") == a


def test_threads_do_not_change_output(tmp_path, monkeypatch):
    cfg = small_config(policies=("random", "cluster"))
    run_sweep(cfg, (4,), out_path=tmp_path / "serial.csv")
    monkeypatch.setenv("SIM_THREADS", "3")
    run_sweep(cfg, (4,), out_path=tmp_path / "threaded.csv")
    assert (tmp_path / "serial.csv").read_bytes() == (tmp_path / "threaded.csv").read_bytes()


def test_missing_checkpoint_named(tmp_path):
    missing = tmp_path / "nope.mlp"
    with pytest.raises(MissingCheckpointError, match="nope.mlp"):
        run_sweep(small_config(), (4,), ("dqn",), checkpoint=missing)
    with pytest.raises(MissingCheckpointError):
        evaluate_run(small_config(), "dqn")


def test_train_then_evaluate(tmp_path):
    cfg = small_config()
    train_run(cfg, tmp_path / "a")
    train_run(cfg, tmp_path / "b")
    for name in (CHECKPOINT_NAME, TRAINING_LOG_NAME, "config.cfg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert load_config(tmp_path / "a" / "config.cfg") == cfg
    rec = evaluate_run(cfg, "dqn", tmp_path / "a" / CHECKPOINT_NAME, k=4)
    assert rec.K == 4 and rec.episodes == 2 and 0 <= rec.success_prob <= 1


def test_checkpoint_shape_checked(tmp_path):
    cfg = small_config()
    train_run(cfg, tmp_path)
    other = replace(cfg, env=replace(cfg.env, n_cue=5, n_rb=5))
    with pytest.raises(ValueError, match="inputs"):
        evaluate_run(other, "dqn", tmp_path / CHECKPOINT_NAME)
