import subprocess
import sys

import numpy as np
import pytest

from v2vdrl import cli
from v2vdrl.config import serialize_config
from v2vdrl.environment import cue_sinr
from v2vdrl.neuralnet import backward
from v2vdrl.selftest import (ALL_CHECKS, check_gradients, check_physics, check_replay_fifo, check_tabular_oracle,
                             run_selftest)

from test_config_experiments import small_config


@pytest.mark.parametrize("check", [check_gradients, check_tabular_oracle, check_physics, check_replay_fifo])
def test_checks_pass(check):
    result = check()
    assert result.passed, result.detail


def test_injected_gradient_bug_is_caught():
    def buggy(params, states, actions, targets):
        grads, loss = backward(params, states, actions, targets)
        grads.weights[0] = grads.weights[0].copy()
        grads.weights[0].flat[0] += 1e-3
        return grads, loss

    assert not check_gradients(buggy).passed


def test_wrong_noise_power_is_caught():
    def buggy(gains, rho, powers_w, cue_power_w, noise_w):
        return cue_sinr(gains, rho, powers_w, cue_power_w, noise_w * 1.01)

    assert not check_physics(buggy).passed


def test_crashing_check_reported():
    def broken():
        raise RuntimeError("boom")

    (result,) = run_selftest((broken,))
    assert not result.passed and "boom" in result.detail


def test_selftest_command_exit_code(capsys, monkeypatch):
    assert cli.main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == len(ALL_CHECKS)

    def failing():
        from v2vdrl.selftest import CheckResult
        return CheckResult("fake", False, "nope")

    monkeypatch.setattr(cli, "run_selftest", lambda: run_selftest((failing,)))
    assert cli.main(["selftest"]) == 1


def test_cli_train_eval_sweep(tmp_path, capsys):
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text(serialize_config(small_config(policies=("random", "dqn"))))
    out = tmp_path / "out"
    assert cli.main(["train", "--config", str(cfg_path), "--out", str(out)]) == 0
    ckpt = out / "checkpoint.mlp"
    assert ckpt.is_file()
    assert cli.main(["eval", "--config", str(cfg_path), "--checkpoint", str(ckpt), "--policy", "dqn",
                     "--out", str(out)]) == 0
    assert (out / "eval_dqn_K4.csv").is_file()
    assert cli.main(["sweep", "--config", str(cfg_path), "--k-list", "4,5", "--checkpoint", str(ckpt),
                     "--out", str(out)]) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert len(lines) == 1 + 2 * 2
    first = (out / "sweep.csv").read_bytes()
    cli.main(["sweep", "--config", str(cfg_path), "--k-list", "4,5", "--checkpoint", str(ckpt), "--out", str(out)])
    assert (out / "sweep.csv").read_bytes() == first


def test_cli_missing_checkpoint(tmp_path, capsys):
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text(serialize_config(small_config()))
    code = cli.main(["eval", "--config", str(cfg_path), "--checkpoint", str(tmp_path / "gone.mlp")])
    assert code == 2
    assert "gone.mlp" in capsys.readouterr().err


def test_module_entry_point():
    done = subprocess.run([sys.executable, "-m", "v2vdrl", "--help"], capture_output=True, text=True)
    assert done.returncode == 0 and "selftest" in done.stdout


def test_bad_k_list():
    with pytest.raises(SystemExit):
        cli.main(["sweep", "--k-list", "4,x"])


def test_random_gain_instance_positive():
    from v2vdrl.selftest import random_gain_instance
    g = random_gain_instance(np.random.default_rng(0), 3, 2)
    assert np.all(g.v2v_to_v2v > 0)
    np.testing.assert_array_equal(g.g, g.v2v_to_v2v[[0, 1], [0, 1]])
