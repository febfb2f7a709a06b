import json
import shutil
import subprocess
import sys

import pytest

from eternal_lab.cli import main
from eternal_lab.config import config_hash, load_config, parse_config, rng_stream
from eternal_lab.errors import ConfigError
from eternal_lab.io import read_csv

EXPERIMENTS = [
    "eternal_heat", "eternal_periodic", "eternal_square", "rates_heat", "rates_potential", "comparison",
    "contraction", "max_principle", "max_principle_source", "exhaustion", "decompose",
]


def mini(**over):
    cfg = {
        "name": "mini",
        "kind": "eternal",
        "domain": {"kind": "interval", "bounds": [0, "pi"], "origin": "pi/2"},
        "h": "pi/20",
        "coefficients": {"a": "1", "c": "0", "lam": 1, "Lam": 2},
        "dt": 0.01,
        "seed": 7,
        "params": {"window": [0, 2]},
    }
    cfg.update(over)
    return cfg


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


# ---------------------------------------------------------------- bundled suite


def test_bundled_suite_passes(bundled_run):
    out, code, stdout = bundled_run
    assert code == 0, stdout
    for name in EXPERIMENTS:
        assert f"PASS  {name} " in stdout
        report = json.loads((out / name / "report.json").read_text())
        assert report["passed"] is True
        assert report["provenance"]["config_hash"]
    run = json.loads((out / "run.json").read_text())
    assert run["exit_code"] == 0 and run["passed"]
    assert "wall_time" in json.loads((out / "run.meta.json").read_text())


def test_csv_is_rfc4180_with_full_precision(bundled_run):
    out, _, _ = bundled_run
    raw = (out / "eternal_heat" / "profile.csv").read_bytes()
    assert raw.startswith(b"t,u_hat\r\n") and raw.endswith(b"\r\n")
    header, rows = read_csv(out / "eternal_heat" / "profile.csv")
    assert header == ["t", "u_hat"]
    # %.17g round-trips every double
    assert all(repr(float(r[1])) == repr(float(repr(float(r[1])))) for r in rows)


# ---------------------------------------------------------------- config errors


@pytest.mark.parametrize(
    "over, message",
    [
        ({"coefficients": {"a": "1", "c": "-1", "lam": 1, "Lam": 2}}, "c >= 0"),
        ({"dt": 0}, "dt"),
        ({"kind": "nonsense"}, ""),
        ({"h": "pi/0.3"}, ""),
        ({"coefficients": {"a": "1", "c": "__import__('os')", "lam": 1, "Lam": 2}}, ""),
    ],
)
def test_invalid_configs_exit_2(tmp_path, capsys, over, message):
    code = main(["run", write(tmp_path, mini(**over)), "--out", str(tmp_path / "o")])
    err = capsys.readouterr().err
    assert code == 2
    assert "config error" in err and message in err


def test_missing_required_param(tmp_path):
    with pytest.raises(ConfigError, match="initial"):
        parse_config(mini(kind="contraction", params={}))


def test_unknown_config_file(tmp_path, capsys):
    assert main(["run", str(tmp_path / "absent.json")]) == 2


# ---------------------------------------------------------------- determinism and output location


def test_runs_are_byte_identical(tmp_path):
    path = write(tmp_path, mini())
    assert main(["run", path, "--out", str(tmp_path / "a")]) == 0
    assert main(["run", path, "--out", str(tmp_path / "b")]) == 0
    for rel in ("mini/report.json", "mini/trace.csv", "mini/profile.csv", "run.json"):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()
    assert main(["regress", str(tmp_path / "a"), str(tmp_path / "b")]) == 0


def test_environment_sets_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("ETERNAL_LAB_OUT", str(tmp_path / "env"))
    assert main(["run", write(tmp_path, mini(output_dir=str(tmp_path / "cfg")))]) == 0
    assert (tmp_path / "env" / "run.json").is_file()
    assert not (tmp_path / "cfg").exists()
    # --out beats the environment
    assert main(["run", write(tmp_path, mini()), "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "run.json").is_file()


def test_config_hash_ignores_output_dir():
    assert config_hash(mini()) == config_hash(mini(output_dir="/elsewhere"))
    assert config_hash(mini()) != config_hash(mini(seed=8))


def test_named_rng_streams_are_reproducible_and_distinct():
    a = rng_stream(5, "seed").random(4)
    assert (a == rng_stream(5, "seed").random(4)).all()
    assert not (a == rng_stream(5, "draws").random(4)).all()


def test_bundled_name_resolves():
    assert load_config("heat_interval.json").kind == "suite"


# ---------------------------------------------------------------- regress


def test_regress_flags_perturbed_field(bundled_run, tmp_path, capsys):
    golden, _, _ = bundled_run
    fresh = tmp_path / "fresh"
    shutil.copytree(golden, fresh)
    rp = fresh / "rates_heat" / "report.json"
    report = json.loads(rp.read_text())
    report["reports"]["DecayReport"]["delta"] *= 1.1
    rp.write_text(json.dumps(report))
    assert main(["regress", str(golden), str(fresh)]) == 1
    diff = json.loads(capsys.readouterr().out)
    assert [d["field"] for d in diff["drift"]] == ["DecayReport.delta"]


def test_regress_flags_structural_csv_change(bundled_run, tmp_path, capsys):
    golden, _, _ = bundled_run
    fresh = tmp_path / "fresh"
    shutil.copytree(golden, fresh)
    csv = fresh / "eternal_heat" / "profile.csv"
    lines = csv.read_bytes().split(b"\r\n")
    csv.write_bytes(b"\r\n".join(lines[:3] + lines[4:]))
    assert main(["regress", str(golden), str(fresh)]) == 1
    diff = json.loads(capsys.readouterr().out)
    assert any("row count" in d["problem"] for d in diff["structural"])


def test_regress_missing_golden(tmp_path):
    assert main(["regress", str(tmp_path / "none"), str(tmp_path)]) == 2


# ---------------------------------------------------------------- entry points


def test_schema_command(capsys):
    assert main(["schema"]) == 0
    schema = json.loads(capsys.readouterr().out)
    assert schema["$schema"].endswith("2020-12/schema")


def test_module_help_mentions_exit_codes():
    res = subprocess.run([sys.executable, "-m", "eternal_lab", "run", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "exit codes" in res.stdout and "ETERNAL_LAB_OUT" in res.stdout
