import json
import subprocess
import sys

import pytest

from rpfcones.cli import EXIT_FAILED, EXIT_INVALID, EXIT_OK, OUT_ENV, main, payload_digest

SMALL_CLT = """pipeline = "clt"

[system]
kind = "full-shift"
weights = [0.5, 0.5]

[discretization]
depth = 3

[twist]
u = "first-symbol"
rho = 0.5
K = 16

[statistics]
n = 100
trials = 500
seed = 42
"""


@pytest.fixture
def clt_config(tmp_path):
    p = tmp_path / "clt.toml"
    p.write_text(SMALL_CLT)
    return p


def test_empty_config_exits_invalid(tmp_path, capsys):
    p = tmp_path / "empty.toml"
    p.write_text("")
    assert main(["run", str(p), "--out", str(tmp_path / "r")]) == EXIT_INVALID
    assert "missing system block" in capsys.readouterr().err
    assert not (tmp_path / "r").exists()


def test_unknown_key_exits_invalid(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text('pipeline = "spectrum"\n[system]\nkind = "gauss"\nspeed = 3\n')
    assert main(["run", str(p)]) == EXIT_INVALID
    assert "system.speed" in capsys.readouterr().err


def test_spectrum_report(tmp_path):
    out = tmp_path / "r"
    assert main(["spectrum", "--out", str(out)]) == EXIT_OK
    rep = json.loads((out / "spectrum.json").read_text())
    assert rep["status"] == "ok"
    assert rep["result"]["subleading_modulus"] == pytest.approx(0.3036630029, abs=1e-8)
    assert rep["payload_sha256"] == payload_digest(rep)
    assert (out / "spectrum_eigenvalues.csv").is_file()


def test_clt_rerun_is_byte_identical(tmp_path, clt_config):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(clt_config), "--out", str(a)]) == EXIT_OK
    assert main(["run", str(clt_config), "--out", str(b)]) == EXIT_OK
    for name in ("clt.json", "clt_trials.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_seed_override(tmp_path, clt_config):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["run", str(clt_config), "--out", str(a)])
    main(["run", str(clt_config), "--out", str(b), "--seed", "7"])
    ra, rb = (json.loads((d / "clt.json").read_text()) for d in (a, b))
    assert ra["seed"] == 42 and rb["seed"] == 7
    assert ra["config_sha256"] != rb["config_sha256"] or ra["result"] != rb["result"]
    assert main(["run", str(clt_config), "--seed", "-1"]) == EXIT_INVALID


def test_output_dir_from_environment(tmp_path, clt_config, monkeypatch):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "env"))
    assert main(["run", str(clt_config)]) == EXIT_OK
    assert (tmp_path / "env" / "clt.json").is_file()


def test_manifest(tmp_path, clt_config):
    out = tmp_path / "r"
    main(["run", str(clt_config), "--out", str(out)])
    main(["run", str(clt_config), "--out", str(out)])
    assert main(["manifest", str(out)]) == EXIT_OK
    man = json.loads((out / "manifest.json").read_text())
    assert len(man["artifacts"]) == 1
    art = man["artifacts"][0]
    assert art["checksum"] == "ok" and art["seed"] == 42 and art["tables"] == ["clt_trials.csv"]
    assert set(man["versions"]) == {"rpfcones", "numpy", "scipy", "python"}
    csv = out / "clt_trials.csv"
    csv.write_text(csv.read_text() + "0,0,0\n")
    main(["manifest", str(out)])
    assert json.loads((out / "manifest.json").read_text())["artifacts"][0]["checksum"] == "mismatch"


def test_manifest_missing_dir(tmp_path):
    assert main(["manifest", str(tmp_path / "nope")]) == EXIT_INVALID


def test_degenerate_run_is_partial(tmp_path):
    p = tmp_path / "deg.toml"
    p.write_text(SMALL_CLT.replace('u = "first-symbol"', 'u = "zero"'))
    code = main(["run", str(p), "--out", str(tmp_path / "r")])
    if code == EXIT_INVALID:
        pytest.skip("zero potential not offered by this config schema")
    assert code == EXIT_FAILED
    rep = json.loads((tmp_path / "r" / "clt.json").read_text())
    assert rep["status"] == "partial" and rep["annotations"]


def test_metrics_subcommand(tmp_path, capsys):
    f, g = tmp_path / "f.json", tmp_path / "g.json"
    f.write_text("[1, 1]")
    g.write_text("[2, 1]")
    assert main(["metrics", str(f), str(g)]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["hilbert"] == pytest.approx(0.6931471805599453, abs=1e-12)
    assert out["delta"] == pytest.approx(0.6931471805599453, abs=1e-12)
    g.write_text("[1, 2, 3]")
    assert main(["metrics", str(f), str(g)]) == EXIT_INVALID


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "rpfcones.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "metrics" in r.stdout
