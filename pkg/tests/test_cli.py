import json
import math
import subprocess
import sys

import numpy as np
import pytest

from snls_horseshoe.cli import run_command
from snls_horseshoe.global_map import canonical_model, canonical_rates
from snls_horseshoe.io import read_snapshot, read_trajectory_csv


def run(tmp_path, *argv, name="run"):
    out = tmp_path / name
    code = run_command([*argv, "--out", str(out)])
    return code, out


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_spectrum_values(tmp_path):
    code, out = run(tmp_path, "spectrum", "--n-max", "4")
    assert code == 0
    d = json.loads((out / "spectrum.json").read_text())
    assert d["I"] == pytest.approx(0.64 - 0.01 * math.sqrt(3.36) / 1.6, abs=1e-14)
    assert len(d["lambda"]) == 5
    assert d["rates"]["a"] == pytest.approx(0.05, abs=1e-12)
    assert all(d["silnikov"][c] for c in ("c1", "c2", "c3"))
    assert d["nonresonance"]["holds"]
    m = manifest(out)
    assert m["schema"] == 1 and m["command"] == "spectrum" and m["exit_code"] == 0
    assert m["artifacts"] == ["spectrum.json"]
    assert m["config"]["eps"] == 0.01 and "timings" not in m


def test_saddle_at_zero_eps(tmp_path):
    code, out = run(tmp_path, "saddle", "--eps", "0")
    d = json.loads((out / "saddle.json").read_text())
    assert code == 0 and d["I"] == pytest.approx(0.64, abs=1e-15)


@pytest.mark.parametrize("argv", [
    ["spectrum", "--omega", "1.2"],
    ["spectrum", "--n-max", "0"],
    ["evolve", "--modes", "48"],
    ["fixed-points", "--l-min", "5", "--l-max", "2"],
    ["horseshoe", "run", "--l", "-1"],
    ["nonres", "--ladder-json", "/nonexistent.json"],
    ["horseshoe", "frobnicate"],
    ["no-such-command"],
])
def test_usage_errors_exit_2(tmp_path, argv):
    assert run_command([*argv, "--out", str(tmp_path / "x")]) == 2


def test_nonres_witness(tmp_path):
    plus = [1, 2, 3, -10 + 0.5j, -20 + 0.7j, -30 + 0.9j, -40 + 1.1j]
    minus = [-1.5 + 0.3j, -2.7 + 0.2j, -5.1 + 0.1j, -11.3 + 0.4j, -21.7 + 0.6j, -31.9 + 0.8j,
             -41.3 + 1.0j]
    lad = tmp_path / "ladder.json"
    lad.write_text(json.dumps({"plus": [[complex(v).real, complex(v).imag] for v in plus],
                               "minus": [[v.real, v.imag] for v in minus]}))
    code, out = run(tmp_path, "nonres", "--ladder-json", str(lad))
    d = json.loads((out / "nonres.json").read_text())
    assert code == 0 and not d["holds"]
    assert d["witness"]["n"] == 2 and sorted(d["witness"]["l"]) == [0, 1]


def test_evolve_outputs_and_reproducibility(tmp_path):
    argv = ["evolve", "--tend", "0.2", "--dt", "1e-2", "--modes", "16", "--seed", "3"]
    c1, a = run(tmp_path, *argv, name="a")
    c2, b = run(tmp_path, *argv, name="b")
    assert c1 == c2 == 0
    for f in ("trajectory.csv", "final.snlsbin"):
        assert (a / f).read_bytes() == (b / f).read_bytes()
    m1, m2 = manifest(a), manifest(b)
    assert m1 == m2 and m1["artifacts"] == ["final.snlsbin", "trajectory.csv"]
    t, modes = read_trajectory_csv(a / "trajectory.csv")
    assert t[0] == 0.0 and t[-1] == pytest.approx(0.2) and modes.shape[1] == 8
    assert np.array_equal(read_snapshot(a / "final.snlsbin").modes[:8], modes[-1])
    c3, c = run(tmp_path, *argv[:-1], "4", name="c")
    assert (c / "trajectory.csv").read_bytes() != (a / "trajectory.csv").read_bytes()


def test_timings_only_on_request(tmp_path):
    code, out = run(tmp_path, "saddle", "--timings")
    assert code == 0 and manifest(out)["timings"]["wall_seconds"] >= 0


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("SNLS_OUT_DIR", str(tmp_path / "env"))
    assert run_command(["saddle"]) == 0
    assert (tmp_path / "env" / "saddle" / "manifest.json").is_file()


def test_local_map_and_global_map(tmp_path):
    code, out = run(tmp_path, "local-map", "--n", "20", name="lm")
    assert code == 0 and manifest(out)["summary"]["max_event_difference"] < 1e-9
    code, out = run(tmp_path, "global-map", "estimate", name="ge")
    assert code == 0 and manifest(out)["summary"]["max_entry_error"] < 1e-6
    code, out = run(tmp_path, "global-map", "check", name="gc")
    d = json.loads((out / "genericity.json").read_text())
    assert code == 0 and d["A2"] and d["A3"]


def test_fixed_points_and_report(tmp_path):
    code, fp = run(tmp_path, "fixed-points", "--l-min", "6", "--l-max", "15", name="fp")
    s = manifest(fp)["summary"]
    assert code == 0 and s["refined"] == 10 and not s["failures"]
    assert abs(s["last_gap_over_pi_b"] - 1) < 0.01
    code, sd = run(tmp_path, "saddle", name="sd")
    code, rp = run(tmp_path, "report", str(fp), str(sd), name="rp")
    lines = (rp / "summary.csv").read_text().splitlines()
    assert code == 0 and len(lines) == 3
    assert {ln.split(",")[1] for ln in lines[1:]} == {"fixed-points", "saddle"}


def test_horseshoe_failure_exits_3(tmp_path):
    d = canonical_rates().to_dict()
    d["gamma2"] = 0.25
    bundle = tmp_path / "weak.json"
    bundle.write_text(json.dumps({"model": canonical_model().to_dict(), "rates": d, "eta": 2.0}))
    code, out = run(tmp_path, "horseshoe", "run", "--model", str(bundle), "--l", "2")
    assert code == 3
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["error"] == "SliceError" and diag["diagnostics"]
    m = manifest(out)
    assert m["exit_code"] == 3 and m["artifacts"] == ["diagnostics.json"]


def test_missing_model_file(tmp_path):
    assert run_command(["local-map", "--model", str(tmp_path / "none.json"),
                        "--out", str(tmp_path / "x")]) == 2


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "snls_horseshoe", "saddle", "--out",
                        str(tmp_path / "m")], capture_output=True, text=True)
    assert r.returncode == 0 and json.loads(r.stdout)["I"] > 0
