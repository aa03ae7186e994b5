import json

import pytest

from groundstate.cli import build_parser, main
from groundstate.config import RunConfig, load_config, make_config
from groundstate.errors import ConfigError


def test_config_requires_eps():
    with pytest.raises(ConfigError):
        make_config({"command": "solve"})
    assert make_config({"command": "solve", "eps": 0.4}).eps == 0.4


@pytest.mark.parametrize("vals", [
    {"command": "nope"},
    {"command": "flow", "eps": -1.0},
    {"command": "branch", "eps_start": 0.5},
    {"command": "gap"},
    {"command": "thresholds", "seed": -1},
    {"command": "spectrum", "eps": 0.4, "state": "zero"},
])
def test_config_rejects(vals):
    with pytest.raises(ConfigError):
        make_config(vals)


def test_state_constant_accepted():
    assert make_config({"command": "spectrum", "eps": 0.4, "state": "constant:0"}).state == "constant:0"


def test_load_config_sections(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("[run]\ncommand = gap\n\n[sweep]\neps_list = 0.3, 0.45\n\n[grid]\nn = 200\n")
    vals = load_config(p)
    assert vals == {"command": "gap", "eps_list": [0.3, 0.45], "n": 200}
    cfg = make_config(vals)
    assert isinstance(cfg, RunConfig) and cfg.n == 200


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.ini")
    p = tmp_path / "bad.ini"
    p.write_text("[run]\nbogus = 1\n")
    with pytest.raises(ConfigError):
        load_config(p)
    p.write_text("[run]\nn = many\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_parser_has_all_commands():
    p = build_parser()
    for c in ("solve", "flow", "mpass", "spectrum", "rearrange", "branch", "gap", "thresholds", "reproduce"):
        assert p.parse_args([c]).command == c


def test_missing_eps_exit_code(tmp_path, capsys):
    assert main(["solve", "--out", str(tmp_path)]) == 2
    assert "needs eps" in capsys.readouterr().err


def test_thresholds_command(tmp_path):
    assert main(["thresholds", "--domain", "sphere3", "--out", str(tmp_path)]) == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["exit_code"] == 0 and man["command"] == "thresholds"
    assert abs(man["result"]["eps1"] - 3**-0.5) < 1e-4


def test_solve_command_writes_outputs(tmp_path):
    assert main(["solve", "--eps", "0.4", "--out", str(tmp_path)]) == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["result"]["morse_index"] == 1 and man["result"]["nullity"] == 3
    assert (tmp_path / "field.csv").exists() and (tmp_path / "spectrum.json").exists()
    assert set(man["versions"]) >= {"groundstate", "numpy", "backend"}


def test_flow_and_spectrum_constant(tmp_path):
    assert main(["flow", "--eps", "0.4", "--t-end", "1", "--out", str(tmp_path / "f")]) == 0
    assert main(["spectrum", "--eps", "0.45", "--state", "constant:0", "--out", str(tmp_path / "s")]) == 0
    res = json.loads((tmp_path / "s" / "manifest.json").read_text())["result"]
    assert res["morse_index"] == 5


def test_branch_bad_range_exit_code(tmp_path):
    code = main(["branch", "--eps-start", "0.5", "--eps-end", "0.6", "--out", str(tmp_path)])
    assert code == 2


def test_config_file_and_override(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[run]\neps = 0.9\n")
    # command-line value wins over the file
    assert main(["thresholds", "--config", str(ini), "--eps", "0.5", "--out", str(tmp_path / "o")]) == 0
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["config"]["eps"] == 0.5
    assert main(["thresholds", "--config", str(ini), "--out", str(tmp_path / "p")]) == 0
    assert json.loads((tmp_path / "p" / "manifest.json").read_text())["config"]["eps"] == 0.9


def test_reproduce_filter(tmp_path):
    assert main(["reproduce", "--filter", "gap", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "summary.csv").read_text().splitlines()
    assert rows[0] == "criterion,name,passed" and rows[1].startswith("6,")
