import json

import pytest

from pdpower.cli import main


def test_gradcheck_exit_zero(capsys):
    assert main(["gradcheck", "--cases", "100"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "network" in out


def test_unknown_flag_exits_two(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["sweep", "--bogus"])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_invalid_config_exits_two(capsys, tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("problem: p3\nmethods: [wmmse]\n")
    assert main(["sweep", "--config", str(bad), "--dry-run"]) == 2
    assert "usage" in capsys.readouterr().err


def test_seed_must_be_u64():
    with pytest.raises(SystemExit):
        main(["gradcheck", "--seed", "-1"])


def test_sweep_dry_run(capsys):
    assert main(["sweep", "--config", "fig3-desk", "--dry-run"]) == 0
    out = capsys.readouterr().out
    assert "problem: p3" in out and "# 126 jobs" in out


def test_train_eval_oracle_report(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["train", "--problem", "p4", "--snr-db", "0", "--iterations", "20", "--test-size", "200",
                 "--method", "distributed", "--backhaul-bits", "1", "--out", str(out)]) == 0
    capsys.readouterr()
    assert (out / "convergence.csv").exists()
    assert main(["eval", str(out), "--test-size", "100"]) == 0
    m = json.loads(capsys.readouterr().out)
    assert m["problem"]["problem"] == "p4" and len(m["constraint_means"]) == 3
    assert main(["oracle", "--problem", "p4", "--method", "peak", "--test-size", "100"]) == 0
    assert json.loads(capsys.readouterr().out)["method"] == "peak"


def test_sweep_and_report(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("name: t\nproblem: p3\nn: 2\nsnr_db: [0.0]\nmethods: [short_term, fixed]\ntest_size: 100\n")
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "results.csv").exists()
    capsys.readouterr()
    assert main(["report", str(tmp_path / "o")]) == 0
    out = capsys.readouterr().out
    assert out.startswith("problem\tn\tmethod") and "short_term" in out
