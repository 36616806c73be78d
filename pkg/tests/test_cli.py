import hashlib
import json

import pytest

from stochch.cli import main, read_config_file
from stochch.experiment import ConfigError


def run(capsys, *args):
    code = main(list(args))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_validate_preset_prints_indicator(capsys):
    code, out, _ = run(capsys, "validate", "test1-temporal")
    assert code == 0
    info = json.loads(out)
    assert info["config"]["epsilon"] == 0.1 and info["config"]["delta"] == 5.0
    ind = info["mesh_constraint_indicator"]["0.0008"]
    assert ind == pytest.approx(8e-4 * (0.1**-3 + 5.0**4 / 0.1))
    assert info["estimated_wall_time_s"] > 0 and info["estimated_memory_mb"] > 0


def test_validate_deterministic_indicator(capsys):
    code, out, _ = run(capsys, "validate", "--preset", "test2", "--delta", "0", "--epsilon", "0.05")
    assert code == 0
    ind = json.loads(out)["mesh_constraint_indicator"]
    (tau, value), = ind.items()
    assert value == pytest.approx(float(tau) * 0.05**-3)


def test_malformed_file_exits_2(tmp_path, capsys):
    p = tmp_path / "bad.ini"
    p.write_text("this is not [ini\n")
    assert run(capsys, "validate", "--config", str(p))[0] == 2
    p.write_text("[scheme]\nepsilon = abc\n")
    assert run(capsys, "validate", "--config", str(p))[0] == 2
    p.write_text("[scheme]\nunknown = 1\n")
    code, _, err = run(capsys, "validate", "--config", str(p))
    assert code == 2 and "scheme.unknown" in err
    assert run(capsys, "validate", "--config", str(tmp_path / "missing.ini"))[0] == 2


def test_invalid_tau_names_field(capsys, tmp_path):
    code, _, err = run(capsys, "run", "test1-temporal", "--tau", "3e-4", "--out-dir", str(tmp_path))
    assert code == 2 and "tau_list" in err
    code, _, err = run(capsys, "run", "test2", "--tau", "3e-4", "--out-dir", str(tmp_path))
    assert code == 2 and "tau" in err


def test_bad_flag_exits_2(capsys):
    assert run(capsys, "run", "--no-such-flag")[0] == 2


def test_config_file_sections(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[experiment]\npreset = test1-spatial\nM = 4\n[scheme]\ntau_list = 8e-4, 4e-4\n"
                 "[mesh]\nh_list = 0.5,0.25\nh_ref = 0.125\n[output]\nsnapshots = 0, 1e-3\n")
    cfg = read_config_file(p)
    assert cfg == dict(preset="test1_spatial", M=4, tau_list=(8e-4, 4e-4), h_list=(0.5, 0.25),
                       h_ref=0.125, snapshots=(0.0, 1e-3))
    p.write_text("[experiment]\nM = 2.5\n")
    with pytest.raises(ConfigError):
        read_config_file(p)


def _check_manifest(out_dir):
    man = json.loads((out_dir / "manifest.json").read_text())
    assert man["schema"].startswith("stochch-manifest")
    for entry in man["outputs"]:
        data = (out_dir / entry["path"]).read_bytes()
        assert hashlib.sha256(data).hexdigest() == entry["sha256"]
    return man


def test_quick_temporal_run_writes_rate_table(tmp_path, capsys):
    out = tmp_path / "t1"
    code, stdout, _ = run(capsys, "run", "test1-temporal", "--M", "2", "--quick", "--out-dir", str(out))
    assert code == 0
    lines = (out / "errors.csv").read_text().splitlines()
    assert lines[1].startswith("resolution,") and len(lines) == 4
    man = _check_manifest(out)
    assert {e["path"] for e in man["outputs"]} == {"errors.csv", "errors.json"}
    assert man["config"]["M"] == 2 and "Philox" in man["generator"]


def test_quick_runs_are_reproducible(tmp_path, capsys):
    args = ["run", "test1-spatial", "--M", "2", "--quick", "--seed", "11"]
    assert run(capsys, *args, "--out-dir", str(tmp_path / "a"))[0] == 0
    assert run(capsys, *args, "--out-dir", str(tmp_path / "b"))[0] == 0
    a = _check_manifest(tmp_path / "a")
    b = _check_manifest(tmp_path / "b")
    stable = lambda m: [e for e in m["outputs"] if e["reproducible"]]
    assert stable(a) == stable(b) and len(stable(a)) == 1
    assert a["config_hash"] == b["config_hash"]


def test_interface_run_writes_level_sets(tmp_path, capsys):
    out = tmp_path / "t2"
    code, _, _ = run(capsys, "run", "test2", "--delta", "5", "--epsilon", "0.05", "--M", "2",
                     "--quick", "--snapshots", "0,0.001", "--out-dir", str(out))
    assert code == 0
    rows = (out / "levelsets.csv").read_text().splitlines()
    assert rows[1] == "t,x1a,x2a,x1b,x2b"
    assert {float(r.split(",")[0]) for r in rows[2:]} == {0.0, 0.001}
    assert (out / "energy.csv").exists() and (out / "mass.csv").exists()
    _check_manifest(out)


def test_io_error_exits_4(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = run(capsys, "run", "test1-temporal", "--M", "1", "--quick", "--out-dir", str(blocker / "sub"))
    assert code == 4 and "I/O" in err


def test_solver_failure_exits_3(tmp_path, capsys):
    p = tmp_path / "c.ini"
    p.write_text("[experiment]\nfailure_policy = abort\n[solver]\nnewton_max_iter = 1\nnewton_tol = 1e-16\n")
    code, _, err = run(capsys, "run", "test1-temporal", "--config", str(p), "--M", "1", "--quick",
                       "--out-dir", str(tmp_path / "o"))
    assert code == 3 and "solver failure" in err
