from __future__ import annotations

import json
from pathlib import Path

import pytest

from qlcic import cli

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
EX2 = {"q": 3, "N1": [0.75, 0.20, 0.05], "N2": [0.99, 0.01, 0.0], "N3": [0.99, 0.01, 0.0],
       "V1": [0.6, 0.4, 0.0], "V2": [0.6, 0.0, 0.4]}


def write(tmp_path, body, name="cfg.json"):
    p = tmp_path / name
    p.write_text(body if isinstance(body, str) else json.dumps(body, indent=1))
    return p


def body_lines(text):
    return [l for l in text.splitlines() if not l.startswith("# generated")]


@pytest.mark.parametrize("cmd,config", [
    ("entropy", "entropy.json"), ("typical", "typical.json"), ("sumset", "sumset.json"),
    ("rates", "rates.json"), ("conditions", "conditions.json"),
])
def test_shipped_configs_run(cmd, config, capsys):
    assert cli.run([cmd, "--config", str(CONFIGS / config)]) == 0
    out = capsys.readouterr().out
    assert out.startswith(f"# subcommand: {cmd}\n# config: ")
    assert "# seed: " in out and "# generated: " in out


def test_lemma4_small(tmp_path, capsys):
    cfg = {"q": 3, "n": 8, "eps": 0.5, "seeds": 2, "seed": 1,
           "blocks": [{"k": 4, "V": [0.6, 0.4, 0.0], "V2": [0.6, 0.0, 0.4]}]}
    assert cli.run(["lemma4", "--config", str(write(tmp_path, cfg))]) == 0
    header = [l for l in capsys.readouterr().out.splitlines() if not l.startswith("#")][0]
    assert header == "seed,alpha,beta,realized,predicted,abs_diff"


def test_rates_values(tmp_path, capsys):
    assert cli.run(["rates", "--config", str(write(tmp_path, EX2))]) == 0
    out = capsys.readouterr().out
    assert "0.561325093" in out


def test_simulate_writes_all_outputs(tmp_path):
    cfg = {**EX2, "scheme": "appendixB", "n": 9, "gamma": 0.9, "trials": 64, "seed": 5}
    out = tmp_path / "out"
    args = ["simulate", "--config", str(write(tmp_path, cfg)), "--out", str(out), "--workers", "1",
            "--emit-plot-data"]
    assert cli.run(args) == 0
    assert sorted(p.name for p in out.iterdir()) == ["simulate.csv", "simulate.json", "simulate_plot.csv"]
    doc = json.loads((out / "simulate.json").read_text())
    assert doc["seed"] == 5 and doc["config"]["trials"] == 64
    # outputs are write-once
    assert cli.run(args) == 2


def test_simulate_is_deterministic(tmp_path, capsys):
    cfg = write(tmp_path, {**EX2, "scheme": "appendixB", "n": 9, "trials": 64})
    runs = []
    for _ in range(2):
        assert cli.run(["simulate", "--config", str(cfg), "--seed", "3", "--workers", "1"]) == 0
        runs.append(body_lines(capsys.readouterr().out))
    assert runs[0] == runs[1]
    assert cli.run(["simulate", "--config", str(cfg), "--seed", "4", "--workers", "1"]) == 0
    assert body_lines(capsys.readouterr().out) != runs[0]


def test_violated_conditions_exit_2_with_margins(tmp_path, capsys):
    cfg = {**EX2, "N1": [1, 0, 0], "N2": [0.9, 0.1, 0], "N3": [0.9, 0.1, 0], "n": 9, "trials": 8}
    assert cli.run(["simulate", "--config", str(write(tmp_path, cfg)), "--workers", "1"]) == 2
    err = capsys.readouterr().err
    assert "decoder2_stage1" in err and "margin=" in err


def test_malformed_pmf_reports_line_and_field(tmp_path, capsys):
    text = '{\n  "q": 3,\n  "pmf": [0.5, 0.2, 0.1],\n  "n": 6,\n  "eps": 0.5\n}'
    assert cli.run(["typical", "--config", str(write(tmp_path, text))]) == 2
    err = capsys.readouterr().err
    assert "line 3" in err and "field 'pmf'" in err


def test_unknown_key_and_bad_json(tmp_path, capsys):
    assert cli.run(["rates", "--config", str(write(tmp_path, {**EX2, "bogus": 1}))]) == 2
    assert "field 'bogus'" in capsys.readouterr().err
    assert cli.run(["rates", "--config", str(write(tmp_path, '{"q": 3,', "bad.json"))]) == 2
    assert cli.run(["rates", "--config", str(tmp_path / "missing.json")]) == 2
    assert cli.run(["nonsense"]) == 2


def test_capacity_exit_3(tmp_path, capsys):
    cfg = {"q": 3, "n": 20, "k": 16, "draws": 1}
    assert cli.run(["sumset", "--config", str(write(tmp_path, cfg))]) == 3
    assert "capacity error" in capsys.readouterr().err


def test_internal_error_exit_4(tmp_path, monkeypatch):
    def boom(cfg, args):
        raise RuntimeError("unexpected")

    monkeypatch.setitem(cli.COMMANDS, "rates", boom)
    assert cli.run(["rates", "--config", str(write(tmp_path, EX2))]) == 4


def test_region_feasible_mode(tmp_path, capsys):
    params = {"jointU1X1": [[1 / 3, 0, 0], [0, 1 / 3, 0], [0, 0, 1 / 3]],
              "jointU2X2": [[1 / 3, 0, 0], [0, 1 / 3, 0], [0, 0, 1 / 3]],
              "pmfX3": [1, 0, 0], "coeffs": [1, 1, 2, 1], "splits": {}, "kappa": [], "vpairs": []}
    cfg = {"mode": "feasible", **{k: EX2[k] for k in ("q", "N1", "N2", "N3")}, "params": params,
           "point": {"R1": 0.3, "R2": 0.0, "R3": 0.0}}
    assert cli.run(["region", "--config", str(write(tmp_path, cfg))]) == 0
    out = capsys.readouterr().out
    assert "rate1" in out and "verdict,,false" in out


def test_region_search_small(tmp_path, capsys):
    cfg = {**EX2, "mode": "search", "seed": 2, "search": {"budget": 4, "weights": [[1, 1, 1]]}}
    out = tmp_path / "r"
    assert cli.run(["region", "--config", str(write(tmp_path, cfg)), "--out", str(out), "--workers", "1",
                    "--emit-plot-data"]) == 0
    assert (out / "region_pareto.csv").exists()
    doc = json.loads((out / "region.json").read_text())
    assert doc["config"]["lemma5_seed"] is True
    assert doc["result"]["evaluated"] == 5


def test_resolved_config_round_trips(tmp_path, capsys):
    cfg = write(tmp_path, {**EX2, "n": 9, "gamma": 0.95})
    assert cli.run(["conditions", "--config", str(cfg)]) == 0
    first = capsys.readouterr().out
    resolved = json.loads(first.splitlines()[1][len("# config: "):])
    assert cli.run(["conditions", "--config", str(write(tmp_path, resolved, "again.json"))]) == 0
    assert body_lines(capsys.readouterr().out)[2:] == body_lines(first)[2:]
