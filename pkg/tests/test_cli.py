import json
import math
import subprocess
import sys

import pytest

from rrdps import __version__
from rrdps import config as cfgmod
from rrdps.cli import dumps, main, point_payload
from rrdps.optimizer import evaluate_point


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_keyrate_matches_library_byte_for_byte(capsys):
    code, out, _ = run(capsys, "keyrate", "--distance", "50", "--mu0", "0.03", "--nu-th", "13")
    assert code == 0
    doc = cfgmod.load_scenario()
    p = evaluate_point(50.0, 0.03, 13, None, cfgmod.optimize_config(doc))
    expected = dumps(point_payload(p, doc, command="keyrate", l=50.0, mu0=0.03, nu_th=13, epsilon=None))
    assert out == expected
    payload = json.loads(out)
    assert payload["tool_version"] == __version__ and len(payload["config_hash"]) == 16


def test_keyrate_case_ii_and_insecure_exit(capsys):
    code, out, _ = run(capsys, "keyrate", "--case", "ii", "--distance", "50", "--mu0", "0.0297",
                       "--nu-th", "12", "--epsilon", "1e-5")
    assert code == 0 and json.loads(out)["epsilon"] == 1e-5
    code, out, _ = run(capsys, "keyrate", "--distance", "300", "--mu0", "0.03", "--nu-th", "13")
    assert code == 2 and json.loads(out)["R"] == 0.0


@pytest.mark.parametrize("argv", [
    ["keyrate", "--distance", "50", "--mu0", "-0.1", "--nu-th", "3"],
    ["keyrate", "--distance", "50"],
    ["keyrate", "--distance", "50", "--mu0", "0.03", "--nu-th", "200"],
    ["nonsense"],
    ["curve", "--case", "iv"],
])
def test_errors_exit_one(capsys, argv):
    with pytest.raises(SystemExit) as exc:
        sys.exit(main(argv))
    assert exc.value.code == 1


def test_emit_config_round_trip(capsys, tmp_path):
    code, out, _ = run(capsys, "optimize", "--distance", "10", "--case", "ii", "--spread", "0.02", "--emit-config")
    assert code == 0
    doc = json.loads(out)
    assert doc["source"]["case"] == "ii" and doc["source"]["spread"] == 0.02
    path = tmp_path / "scenario.json"
    path.write_text(out)
    code, again, _ = run(capsys, "optimize", "--distance", "10", "--config", str(path), "--emit-config")
    assert again == out


def test_unknown_config_keys_rejected(capsys, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"source": {"L": 128, "colour": "blue"}}))
    code, _, err = run(capsys, "optimize", "--distance", "10", "--config", str(path))
    assert code == 1 and "colour" in err


def test_optimize_and_curve_are_reproducible(capsys, tmp_path):
    code, a, _ = run(capsys, "optimize", "--distance", "50")
    _, b, _ = run(capsys, "optimize", "--distance", "50")
    assert code == 0 and a == b and json.loads(a)["R"] > 0
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["curve", "--to", "100", "--step", "25", "--out", str(out1)]) == 0
    assert main(["curve", "--to", "100", "--step", "25", "--out", str(out2), "--threads", "2"]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    lines = out1.read_text().splitlines()
    assert lines[0].startswith(f"# rrdps {__version__} config_hash=")
    assert len(lines) == 2 + 5


def test_curve_per_block(capsys):
    _, per_pulse, _ = run(capsys, "curve", "--to", "0", "--step", "5")
    _, per_block, _ = run(capsys, "curve", "--to", "0", "--step", "5", "--per-block")
    r1 = float(per_pulse.splitlines()[2].split(",")[-1])
    r2 = float(per_block.splitlines()[2].split(",")[-1])
    assert r2 == pytest.approx(128 * r1)


def test_simulate_csv(capsys):
    code, out, _ = run(capsys, "simulate", "--n-blocks", "50000", "--distances", "0", "50", "--seed", "3")
    assert code == 0
    lines = out.splitlines()
    assert lines[1].split(",")[:3] == ["distance_km", "n_blocks", "Q_hat"]
    for row in lines[2:]:
        d, n, Q_hat, Q, e_hat, e, se_Q, se_e = (float(x) for x in row.split(","))
        assert abs(Q_hat - Q) < 5 * se_Q
    _, again, _ = run(capsys, "simulate", "--n-blocks", "50000", "--distances", "0", "50", "--seed", "3")
    assert again == out


def test_calibrate_decoy_and_tha_adjust(capsys, tmp_path):
    mu, eta_d = 0.4, 0.6
    rows = []
    for bit in (0, 1):
        for eta in (0.3, 0.9):
            rows.append(json.dumps({"bit": bit, "eta": eta, "N": 10**6,
                                    "N_vac": 10**6 * math.exp(-mu * eta * eta_d)}))
    src = tmp_path / "cal.jsonl"
    src.write_text("\n".join(rows) + "\n")
    code, out, _ = run(capsys, "calibrate-decoy", "--input", str(src), "--eta-d", "0.6", "--p-d", "0")
    assert code == 0
    b = json.loads(out)
    assert b["p_L0"] <= math.exp(-mu) <= b["p_U0"]
    assert b["clamped"] == [False, False]

    bounds = tmp_path / "b.json"
    bounds.write_text(out)
    code, out, _ = run(capsys, "tha-adjust", "--input", str(bounds), "--mu-out", "0.01")
    assert code == 0
    assert json.loads(out)["p_U0"] == pytest.approx(b["p_U0"] * math.exp(-0.01))


def test_calibrate_monitor(capsys, tmp_path):
    src = tmp_path / "mon.jsonl"
    src.write_text("\n".join(json.dumps({"bit": b, "beta_minus": 0.02, "beta_plus": 0.03}) for b in (0, 1)))
    code, out, _ = run(capsys, "calibrate-monitor", "--input", str(src), "--eta", "0.5")
    assert code == 0 and json.loads(out)["p_U1"] == pytest.approx(math.exp(-0.01))
    code, _, _ = run(capsys, "calibrate-monitor", "--input", str(tmp_path / "missing.jsonl"), "--eta", "0.5")
    assert code == 1


def test_console_script_entry_point():
    res = subprocess.run([sys.executable, "-m", "rrdps.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and __version__ in res.stdout
