import csv
import json

import pytest

from skewlab.cli import run
from skewlab.config import ConfigError, RunConfig

FAST = """
[certify]
holder_samples = 3
m_max = 3
trials = 3
completions = 3

[constants]
K = 1.0
"""


def write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def load(path):
    return json.loads(path.read_text())


def test_config_roundtrip_full_precision():
    cfg = RunConfig()
    back = RunConfig.from_toml(cfg.to_toml())
    assert back == cfg
    assert "0.3333333333333333" in cfg.to_toml()
    assert back.digest() == cfg.digest()


def test_config_rejects_bad_input():
    with pytest.raises(ConfigError):
        RunConfig.from_toml("[system]\nbogus = 1\n")
    with pytest.raises(ConfigError):
        RunConfig.from_toml("[constants]\ngamma = -1.0\n")
    with pytest.raises(ConfigError):
        RunConfig.from_toml("this is = = not toml")
    with pytest.raises(ConfigError):
        RunConfig.from_toml("[cascade]\narcs = 1\n")


def test_config_errors_exit_2(tmp_path):
    bad = write(tmp_path, "[constants]\nnu = 0.5\n")
    assert run(["certify", "--config", str(bad), "--out", str(tmp_path / "o"), "-q"]) == 2
    assert run(["certify", "--config", str(tmp_path / "missing.toml"), "-q"]) == 2
    assert run(["cascade", "--stages", "0", "--out", str(tmp_path / "o"), "-q"]) == 2


def test_certify_writes_certificate(tmp_path):
    cfg = write(tmp_path, FAST)
    out = tmp_path / "c"
    code = run(["certify", "--config", str(cfg), "--out", str(out), "-q"])
    cert = load(out / "certificate.json")
    assert code == (0 if cert["passed"] else 1)
    assert cert["predictability"]["K"] == 1.0
    assert cert["rotation"]["passed"] and cert["expansion_forward"]["passed"]
    man = load(out / "manifest.json")
    assert man["files"]["certificate.json"] and man["steps"]["certify"].startswith(("pass", "fail"))


def test_delta_pert_flag_breaks_rotation(tmp_path):
    cfg = write(tmp_path, FAST)
    out = tmp_path / "c"
    assert run(["certify", "--config", str(cfg), "--out", str(out), "--delta-pert", "1e-3", "-q"]) == 1
    cert = load(out / "certificate.json")
    assert not cert["rotation"]["passed"]
    assert cert["system"]["perturbation"]["delta"] == 1e-3


@pytest.fixture(scope="module")
def cascade_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cascade")
    assert run(["cascade", "--stages", "3", "--out", str(out), "-q"]) == 0
    return out


def test_cascade_outputs(cascade_dir):
    with open(cascade_dir / "diagnostics.csv") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["stage", "period", "lambda", "kappa", "coverage", "max_cell_mass", "ws_gap"]
    assert len(rows) == 4
    lams = [float(r[2]) for r in rows[1:]]
    assert all(a < b < 0 for a, b in zip(lams, lams[1:]))
    for i in (1, 2, 3):
        assert (cascade_dir / f"orbit_{i}.json").exists()
    for i in (2, 3):
        assert load(cascade_dir / f"shadow_{i}.json")["verdict"]["passed"]


def test_analyze_accepts_and_rejects(cascade_dir, tmp_path):
    assert run(["analyze", "--out", str(cascade_dir), "-q"]) == 0
    assert load(cascade_dir / "analysis.json")["passed"]
    # tamper with a copy
    bad = tmp_path / "bad"
    bad.mkdir()
    for p in cascade_dir.iterdir():
        (bad / p.name).write_bytes(p.read_bytes())
    d = load(bad / "orbit_3.json")
    d["word"] = d["word"].replace("0", "1", 1)
    (bad / "orbit_3.json").write_text(json.dumps(d))
    assert run(["analyze", "--out", str(bad), "-q"]) == 1


def test_analyze_catches_count_tampering(cascade_dir, tmp_path):
    bad = tmp_path / "bad2"
    bad.mkdir()
    for p in cascade_dir.iterdir():
        (bad / p.name).write_bytes(p.read_bytes())
    d = load(bad / "shadow_3.json")
    d["tilde_ranges"][0][0] += 1
    (bad / "shadow_3.json").write_text(json.dumps(d))
    assert run(["analyze", "--out", str(bad), "-q"]) == 1


def test_export(cascade_dir):
    assert run(["export", "--out", str(cascade_dir), "-q"]) == 0
    with open(cascade_dir / "measure_2.csv") as f:
        rows = list(csv.DictReader(f))
    period = load(cascade_dir / "orbit_2.json")["period"]
    assert len(rows) == period and rows[0]["word"] == "orbit_2"


def test_cascade_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run(["cascade", "--stages", "3", "--seed", "5", "--out", str(out), "-q"]) == 0
    ma, mb = load(a / "manifest.json"), load(b / "manifest.json")
    ma.pop("timings"), mb.pop("timings")
    assert ma == mb
    assert (a / "orbit_3.json").read_bytes() == (b / "orbit_3.json").read_bytes()


def test_forge_subcommand(tmp_path):
    out = tmp_path / "f"
    code = run(["forge", "--out", str(out), "--cylinder", "0", "--center", "0.5", "--radius", "0.1", "--eps", "0.01", "-q"])
    assert code == 0
    assert load(out / "orbit_1.json")["period"] >= 3
    assert load(out / "shadow_1.json")["verdict"]["passed"]
