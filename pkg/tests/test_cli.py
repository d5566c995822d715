"""End-to-end CLI tests: every subcommand against a small config file."""
import csv
import json
from dataclasses import replace

import pytest

from fedjudge import cli, figures
from fedjudge.config import save_config
from fedjudge.harness import CSV_COLUMNS, MetricsRecord
from tests.test_harness import TINY


@pytest.fixture()
def cfg_path(tmp_path):
    path = tmp_path / "tiny.json"
    save_config(str(path), replace(TINY, rounds=1))
    return str(path)


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == list(CSV_COLUMNS)
    return rows[1:]


def test_run_writes_report(tmp_path, cfg_path, capsys):
    out = tmp_path / "out"
    assert cli.main(["run", "--config", cfg_path, "--out", str(out),
                     "--no-figures"]) == 0
    rows = _read_csv(out / "run_metrics.csv")
    assert len(rows) == 1
    assert rows[0][0] == "tiny" and rows[0][2] == "1"
    summary = json.loads((out / "run_summary.json").read_text())
    assert 0.0 <= summary["final_global_acc"]["mean"] <= 1.0
    assert summary["config"]["n_clients"] == 4
    assert (out / "chain_tiny_seed0.bin").is_file()
    assert not list(out.glob("*.png"))
    assert "wrote 1 metric rows" in capsys.readouterr().out


def test_run_renders_figures(tmp_path, cfg_path):
    out = tmp_path / "out"
    assert cli.main(["run", "--config", cfg_path, "--out", str(out)]) == 0
    for name in ("accuracy_rounds.png", "detection_rounds.png"):
        assert (out / name).stat().st_size > 0


def test_run_flag_overrides(tmp_path, cfg_path):
    out = tmp_path / "out"
    assert cli.main(["run", "--config", cfg_path, "--out", str(out),
                     "--seed", "5", "--rounds", "2", "--no-figures"]) == 0
    rows = _read_csv(out / "run_metrics.csv")
    assert [(r[1], r[2]) for r in rows] == [("5", "1"), ("5", "2")]
    assert (out / "chain_tiny_seed5.bin").is_file()


def test_verify_chain_roundtrip(tmp_path, cfg_path, capsys):
    out = tmp_path / "out"
    cli.main(["run", "--config", cfg_path, "--out", str(out), "--no-figures"])
    chain_file = out / "chain_tiny_seed0.bin"
    capsys.readouterr()
    assert cli.main(["verify-chain", str(chain_file)]) == 0
    assert "chain valid" in capsys.readouterr().out


def test_verify_chain_flags_tampering(tmp_path, cfg_path, capsys):
    out = tmp_path / "out"
    cli.main(["run", "--config", cfg_path, "--out", str(out), "--no-figures"])
    chain_file = out / "chain_tiny_seed0.bin"
    raw = bytearray(chain_file.read_bytes())
    raw[len(raw) // 2] ^= 0x01
    bad = tmp_path / "tampered.bin"
    bad.write_bytes(bytes(raw))
    capsys.readouterr()
    assert cli.main(["verify-chain", str(bad)]) == 1
    err = capsys.readouterr().err
    assert "invalid chain" in err or "error:" in err


def test_verify_chain_missing_file(tmp_path, capsys):
    assert cli.main(["verify-chain", str(tmp_path / "nope.bin")]) == 1
    assert "error:" in capsys.readouterr().err


def test_export_text(tmp_path, cfg_path, capsys):
    out = tmp_path / "out"
    cli.main(["run", "--config", cfg_path, "--out", str(out), "--no-figures"])
    chain_file = out / "chain_tiny_seed0.bin"
    capsys.readouterr()
    assert cli.main(["export", str(chain_file)]) == 0
    text = capsys.readouterr().out
    assert "block 0" in text
    assert "GenesisRecord" in text
    assert "AggregationResult" in text
    dump = tmp_path / "chain.txt"
    assert cli.main(["export", str(chain_file), "--out", str(dump)]) == 0
    # Stdout printed the same dump, plus print()'s own newline.
    assert text == dump.read_text(encoding="utf-8") + "\n"


def test_sweep_malice_report(tmp_path, cfg_path, capsys):
    out = tmp_path / "out"
    assert cli.main(["sweep-malice", "--config", cfg_path, "--out", str(out),
                     "--no-figures"]) == 0
    rows = _read_csv(out / "sweep_malice_metrics.csv")
    # Five defended fractions plus the screening-off arm, one round each.
    assert len(rows) == 6
    assert {r[0] for r in rows} == {"sweep-malice", "sweep-malice-off"}
    summary = json.loads((out / "sweep_malice_summary.json").read_text())
    arms = summary["final_global_acc"]
    assert set(arms) == {"sweep-malice", "sweep-malice-off"}
    assert set(arms["sweep-malice"]) == {"0", "0.05", "0.15", "0.25", "0.35"}
    assert len(list(out.glob("chain_*.bin"))) == 6


def test_sweep_clients_report(tmp_path, cfg_path):
    out = tmp_path / "out"
    assert cli.main(["sweep-clients", "--config", cfg_path, "--out", str(out),
                     "--no-figures"]) == 0
    rows = _read_csv(out / "sweep_clients_metrics.csv")
    assert [int(r[3]) for r in rows] == [5, 10, 15, 20, 25, 30, 35, 40]
    summary = json.loads((out / "sweep_clients_summary.json").read_text())
    fit = summary["total_fit"]
    assert set(fit) == {"slope_ms_per_client", "intercept_ms", "r2"}
    assert fit["slope_ms_per_client"] > 0


def test_cli_reports_config_errors(tmp_path, capsys):
    missing = str(tmp_path / "missing.json")
    assert cli.main(["run", "--config", missing, "--out", str(tmp_path),
                     "--no-figures"]) == 1
    assert "error:" in capsys.readouterr().err


def _record(**overrides):
    base = dict(experiment="run", seed=0, round=1, n_clients=4,
                malicious_frac=0.25, tpr=0.5, fpr=0.1, f1=0.5,
                global_acc=0.9, judge_ms_train=10.0, judge_ms_feat=2.0,
                judge_ms_forest=1.0, accepted_count=3)
    base.update(overrides)
    return MetricsRecord(**base)


def test_figure_renderers_smoke(tmp_path):
    run_records = [_record(round=r, seed=s, global_acc=0.8 + 0.01 * r)
                   for s in (0, 1) for r in (1, 2, 3)]
    sweep_records = [
        _record(experiment=arm, malicious_frac=f, global_acc=acc)
        for arm, accs in (("sweep-malice", (0.9, 0.88)),
                          ("sweep-malice-off", (0.9, 0.7)))
        for f, acc in zip((0.0, 0.35), accs)
    ]
    scaling_records = [
        _record(experiment="sweep-clients", n_clients=n, tpr=None, fpr=None,
                f1=None, global_acc=None, judge_ms_train=10.0 * n)
        for n in (5, 10, 15)
    ]
    jobs = [
        (figures.accuracy_over_rounds, run_records, "acc.png"),
        (figures.detection_over_rounds, run_records, "det.png"),
        (figures.accuracy_vs_malice, sweep_records, "malice.png"),
        (figures.runtime_scaling, scaling_records, "scaling.png"),
    ]
    for fn, records, name in jobs:
        path = tmp_path / name
        fn(records, str(path))
        assert path.stat().st_size > 0
