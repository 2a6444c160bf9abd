import csv
import json
import subprocess
import sys

import pytest

from finsler_cmc import cli
from finsler_cmc import config as cfgmod
from finsler_cmc import hypersurface as hs

FLOWED = {
    "schema": "finsler-cmc/1",
    "metric": {"kind": "euclidean", "dimension": 3},
    "wind": {"kind": "dilation", "c": 0.05},
    "embedding": {"kind": "sphere"},
    "grid_order": 6,
    "checks": ["flowed_shift"],
    "check_options": {"flowed_shift": {"t_values": [0.1, 0.5]}},
}


def write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj, indent=2))
    return str(p)


def test_list_checks(capsys):
    assert cli.main(["list-checks"]) == 0
    out = capsys.readouterr().out
    for name in cfgmod.CHECK_NAMES:
        assert name in out


def test_validate_bundled(capsys):
    assert cli.main(["validate", "randers_dilation.json"]) == 0
    assert "3 check(s)" in capsys.readouterr().out


def test_check_passing_config_writes_reports(tmp_path, capsys):
    out = tmp_path / "out"
    assert cli.main(["check", "euclidean_sphere.json", "--out", str(out)]) == 0
    rows = list(csv.DictReader((out / "report.csv").open()))
    assert tuple(rows[0].keys()) == cli.CSV_COLUMNS
    assert {r["verdict"] for r in rows} == {"pass"}
    assert {r["check"] for r in rows} == {"navigation_shift", "transformed_normal", "mean_relations",
                                          "heintze_karcher", "volume_variation"}
    reports = json.loads((out / "reports.json").read_text())
    assert all(r["verdict"] == "pass" for r in reports)
    assert "PASS" in capsys.readouterr().out


def test_check_failing_config_exits_one(tmp_path, capsys):
    assert cli.main(["check", write(tmp_path, FLOWED)]) == 1
    assert "BAD" in capsys.readouterr().out


def test_tolerance_scale_flag(tmp_path, capsys):
    assert cli.main(["check", write(tmp_path, FLOWED), "--tol-scale", "100"]) == 0


def test_sweep_emits_curves(tmp_path, capsys):
    out = tmp_path / "sweep"
    code = cli.main(["sweep", write(tmp_path, FLOWED), "--key", "check_options.flowed_shift.t_values",
                     "--values", "0,0.1,0.2,0.3,0.4,0.5", "--out", str(out)])
    assert code == 1
    rows = list(csv.reader((out / "curves.csv").open()))
    assert rows[0][0] == "check_options.flowed_shift.t_values"
    assert len(rows) == 7
    stated = [float(r[1]) for r in rows[1:]]
    assert stated[0] <= 1e-12 and all(a < b for a, b in zip(stated, stated[1:]))


@pytest.mark.parametrize("mutate, key", [
    (lambda c: c.update(bogus=1), "bogus"),
    (lambda c: c["metric"].update(kind="riemann"), "metric.kind"),
    (lambda c: c.update(grid_order="many"), "grid_order"),
    (lambda c: c.update(checks=["nope"]), "checks"),
    (lambda c: c["check_options"]["flowed_shift"].update(t=1), "check_options.flowed_shift.t"),
    (lambda c: c.update(metric={"kind": "randers", "b": [0.8, 0.7, 0.0]}), "metric.b"),
    (lambda c: c.update(wind={"kind": "constant", "b": [1.5, 0.0, 0.0]}), "wind"),
    (lambda c: c.update(schema="other/2"), "schema"),
    (lambda c: c.update(density="holmes-thompson"), "density"),
])
def test_config_errors_exit_two_and_cite_key(tmp_path, capsys, mutate, key):
    cfg = json.loads(json.dumps(FLOWED))
    mutate(cfg)
    assert cli.main(["check", write(tmp_path, cfg)]) == 2
    err = capsys.readouterr().err
    assert f"[key '{key}'" in err


def test_config_error_reports_line(tmp_path, capsys):
    cfg = dict(FLOWED, grid_order=1)
    assert cli.main(["validate", write(tmp_path, cfg)]) == 2
    err = capsys.readouterr().err
    text = json.dumps(cfg, indent=2).splitlines()
    line = next(i for i, s in enumerate(text, 1) if '"grid_order"' in s)
    assert f"line {line}]" in err


def test_malformed_json(tmp_path, capsys):
    assert cli.main(["check", write(tmp_path, '{\n  "schema": \n')]) == 2
    assert "malformed JSON" in capsys.readouterr().err


def test_missing_file(capsys):
    assert cli.main(["check", "/nonexistent/cfg.json"]) == 2


def test_non_homothetic_wind_exits_two(tmp_path, capsys):
    cfg = dict(FLOWED, wind={"kind": "affine", "A": [[0, 0.2, 0], [0, 0, 0], [0, 0, 0]], "b": [0, 0, 0]})
    assert cli.main(["check", write(tmp_path, cfg)]) == 2
    assert "[key 'wind']" in capsys.readouterr().err


def test_unwritable_output_exits_two(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["check", write(tmp_path, FLOWED), "--out", str(blocker / "sub")]) == 2
    assert "cannot write output" in capsys.readouterr().err


def test_csv_is_byte_identical_across_thread_counts(tmp_path, monkeypatch, capsys):
    cfg = write(tmp_path, dict(FLOWED, grid_order=24, checks=["navigation_shift", "mean_relations"]))
    texts = []
    for threads in ("1", "3"):
        monkeypatch.setenv(hs.THREADS_ENV, threads)
        out = tmp_path / f"t{threads}"
        cli.main(["check", cfg, "--out", str(out)])
        texts.append((out / "report.csv").read_bytes())
    assert texts[0] == texts[1]


def test_bad_thread_setting(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(hs.THREADS_ENV, "lots")
    assert cli.main(["check", write(tmp_path, dict(FLOWED, grid_order=24, checks=["transformed_normal"]))]) == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "finsler_cmc", "list-checks"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "heintze_karcher" in proc.stdout
