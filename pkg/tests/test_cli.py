import json
import subprocess
import sys

from ampse.cli import main

CFG = {"mode": "amp", "model": {"n": 64, "N": 100, "sigma2": 0.01}, "T": 2, "R": 2}


def write(tmp_path, cfg):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return str(p)


def test_stdout_csv(tmp_path, capsysbinary):
    assert main(["se", "--config", write(tmp_path, CFG)]) == 0
    out = capsysbinary.readouterr().out.decode().splitlines()
    assert out[0].startswith("t,observable,")
    assert len(out) == 3


def test_flags_override(tmp_path):
    out = tmp_path / "r.json"
    rc = main(["amp", "--config", write(tmp_path, CFG), "--seed", "9", "--out", str(out),
               "--format", "json", "--workers", "2"])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert doc["metadata"]["config"]["seed"] == 9
    assert doc["metadata"]["config"]["workers"] == 2
    assert len(doc["rows"]) == 2


def test_bad_config_reports_key(tmp_path, capsys):
    rc = main(["amp", "--config", write(tmp_path, dict(CFG, dleta=1))])
    assert rc == 2
    assert "dleta" in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    assert main(["amp", "--config", str(tmp_path / "none.json")]) == 2


def test_mp_compare_cap_message(tmp_path, capsys):
    rc = main(["mp-compare", "--config", write(tmp_path, dict(CFG, mp={"edge_cap": 10}))])
    assert rc == 2
    assert "cap" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "ampse", "se", "--config", write(tmp_path, CFG)],
                       capture_output=True, check=True)
    assert r.stdout.startswith(b"t,observable,")


def test_shipped_configs_parse():
    import pathlib

    from ampse.harness import parse_config

    root = pathlib.Path(__file__).resolve().parent.parent / "configs"
    paths = sorted(root.glob("*.json"))
    assert paths
    for p in paths:
        parse_config(p.read_bytes())
