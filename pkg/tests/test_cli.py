import json
import math
import subprocess
import sys

import pytest

from rwrs.cli import (
    EXIT_INVALID,
    EXIT_IO,
    EXIT_NONCONVERGED,
    EXIT_OK,
    PLOT_COLUMNS,
    emit_plotdata,
    main,
    read_plotdata,
)


def _run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_solve_example(capsys):
    code, out, _ = _run(["solve", "--mode", "K_Dq", "--d", "1", "--D", "0.5", "--q", "2", "--R", "8", "--m", "512",
                         "--restarts", "1"], capsys)
    assert code == EXIT_OK
    doc = json.loads(out)
    assert doc["result"]["converged"] is True
    assert doc["result"]["value"] == pytest.approx(1.3628, rel=2e-3)
    assert doc["config"]["params"]["m"] == 512
    assert doc["seed"] == 0


def test_tail_smalldev_example(capsys):
    code, out, _ = _run(["tail", "--method", "cond-gaussian", "--d", "2", "--n", "4096",
                         "--b", "auto-smalldev:0.75", "--replicates", "200"], capsys)
    assert code == EXIT_OK
    res = json.loads(out)["result"]
    assert res["prediction"] == pytest.approx(-math.pi / 4)
    assert res["rate_normalized"] < 0
    assert res["b"] == pytest.approx(4096**-0.5 * math.log(4096) ** 0.75)


def test_malformed_config_writes_nothing(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("command: solve\nsolve:\n  mode: K_Dq\n  bogus: 3\n")
    out = tmp_path / "out.json"
    plot = tmp_path / "out.csv"
    code, _, err = _run(["run", "--config", str(cfg), "--output", str(out), "--plotdata", str(plot)], capsys)
    assert code == EXIT_INVALID
    assert "bogus" in err
    assert not out.exists() and not plot.exists()


@pytest.mark.parametrize("text", [
    "command: solve\nextra: 1\n",
    "command: solve\nsolve:\n  m: many\n",
    "command: solve\nsolve:\n  mode: K_Dq\n  q: 1.0\n",
    "- a\n- b\n",
    "command: [unclosed\n",
    "command: teleport\n",
])
def test_invalid_configs_exit_2(tmp_path, capsys, text):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(text)
    assert _run(["run", "--config", str(cfg)], capsys)[0] == EXIT_INVALID


def test_invalid_flags_exit_2(capsys):
    assert _run(["trial-sequence", "--d", "3", "--p", "2"], capsys)[0] == EXIT_INVALID
    assert _run(["tail", "--d", "1", "--b", "auto-smalldev:0.75"], capsys)[0] == EXIT_INVALID
    assert _run(["rate-table", "--d", "2", "--b", "0.1"], capsys)[0] == EXIT_INVALID
    with pytest.raises(SystemExit) as e:
        main(["solve", "--no-such-flag", "1"])
    assert e.value.code == 2


def test_flags_override_config(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("command: trial-sequence\nseed: 4\ntrial-sequence:\n  d: 5\n  n: [10, 20]\n  decay: 1.0\n")
    code, out, _ = _run(["trial-sequence", "--config", str(cfg), "--decay", "2.0"], capsys)
    assert code == EXIT_OK
    doc = json.loads(out)
    assert doc["config"]["params"]["decay"] == 2.0
    assert doc["config"]["params"]["n"] == [10, 20]
    assert doc["seed"] == 4


def test_nonconvergence_exit_3(tmp_path, capsys):
    out = tmp_path / "r.json"
    code, _, _ = _run(["solve", "--R", "8", "--m", "256", "--max-iter", "3", "--restarts", "1",
                       "--output", str(out)], capsys)
    assert code == EXIT_NONCONVERGED
    assert json.loads(out.read_text())["result"]["converged"] is False


def test_unwritable_output_exit_4(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, _ = _run(["trial-sequence", "--output", str(blocker / "sub" / "r.json")], capsys)
    assert code == EXIT_IO


def test_byte_identical_reruns(tmp_path, capsys):
    paths = []
    out, plot = tmp_path / "r.json", tmp_path / "r.csv"
    for _ in range(2):
        code, _, _ = _run(["simulate", "--d", "2", "--n", "64,256", "--replicates", "300", "--seed", "9",
                           "--output", str(out), "--plotdata", str(plot)], capsys)
        assert code == EXIT_OK
        paths.append((out.read_bytes(), plot.read_bytes()))
    assert paths[0] == paths[1]


def test_workers_do_not_change_results(tmp_path, capsys):
    docs = []
    for w in ("1", "3"):
        code, out, _ = _run(["tail", "--method", "naive", "--d", "2", "--n", "256", "--b", "0.05",
                             "--replicates", "6000", "--workers", w], capsys)
        assert code == EXIT_OK
        docs.append(json.loads(out)["result"])
    assert docs[0] == docs[1]


def test_rate_table_plotdata_roundtrip(tmp_path, capsys):
    plot = tmp_path / "rt.csv"
    code, out, _ = _run(["rate-table", "--d", "2", "--n-list", "256,512,1024", "--replicates", "200",
                         "--plotdata", str(plot)], capsys)
    assert code == EXIT_OK
    rows = read_plotdata(plot.read_text())
    assert list(rows[0].keys()) == ["n", "rate_normalized", "prediction", "stderr"]
    res = json.loads(out)["result"]["rows"]
    assert [float(r["rate_normalized"]) for r in rows] == [r["rate_normalized"] for r in res]


def test_box_study_plotdata_columns(tmp_path, capsys):
    plot = tmp_path / "box.csv"
    code, out, _ = _run(["box-study", "--R-list", "2,4", "--delta-list", "0.25", "--m", "64", "--restarts", "1",
                         "--plotdata", str(plot)], capsys)
    assert code == EXIT_OK
    rows = read_plotdata(plot.read_text())
    assert list(rows[0].keys()) == ["R", "delta", "bc", "value"]
    assert len(rows) == 4
    assert json.loads(out)["result"]["violations"] == []


def test_spectral_check_command(capsys):
    code, out, _ = _run(["spectral-check", "--alphas", "2,4", "--T", "4", "--m", "256"], capsys)
    assert code == EXIT_OK
    rows = json.loads(out)["result"]["rows"]
    assert [r["alpha"] for r in rows] == [2.0, 4.0]


def test_solve_exports_minimizer(tmp_path, capsys):
    dump = tmp_path / "psi.csv"
    code, _, _ = _run(["solve", "--m", "64", "--R", "4", "--restarts", "1", "--export-minimizer", str(dump)], capsys)
    assert code == EXIT_OK
    rows = read_plotdata(dump.read_text())
    assert len(rows) == 64 and list(rows[0]) == ["x1", "psi"]


def test_solve_chi_and_K_H_modes(capsys):
    code, out, _ = _run(["solve", "--mode", "chi", "--m", "128", "--R", "6", "--restarts", "1"], capsys)
    assert code == EXIT_OK and "route_gap" in json.loads(out)["result"]
    code, out, _ = _run(["solve", "--mode", "K_H", "--u", "2", "--scenery", "gaussian:sigma=1",
                         "--m", "128", "--R", "6", "--restarts", "1"], capsys)
    assert code == EXIT_OK and json.loads(out)["result"]["gamma"] > 0


def test_emit_plotdata_header_only():
    text = emit_plotdata([], PLOT_COLUMNS["box-study"])
    assert text == "R,delta,bc,value\n"
    assert read_plotdata(text) == []


def test_emit_plotdata_float_roundtrip():
    rows = [{"n": 3, "rate_normalized": 0.1 + 0.2, "prediction": -math.pi / 4, "stderr": 1e-17}]
    back = read_plotdata(emit_plotdata(rows, PLOT_COLUMNS["rate-table"]))
    assert float(back[0]["rate_normalized"]) == 0.1 + 0.2
    assert float(back[0]["prediction"]) == -math.pi / 4


def test_console_module_entry():
    proc = subprocess.run([sys.executable, "-m", "rwrs.cli", "trial-sequence", "--n", "10"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["result"]["rows"][0]["n"] == 10.0
