import json
import locale
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from vemadapt.adapt import AdaptConfig, run_adaptive, run_uniform
from vemadapt.cli import main
from vemadapt.mesh import read_mesh
from vemadapt.meshgen import gen_squares
from vemadapt.problems import get_problem
from vemadapt.report import CSV_COLUMNS, history_rows, read_csv, svg_string, write_csv, write_svg

SVG_NS = "{http://www.w3.org/2000/svg}"
HEADER = "iter,cells,ndofs,h1err,eta,theta,xi,psi,total,effectivity,seconds"


def _paths(svg_text):
    return ET.fromstring(svg_text).findall(f"{SVG_NS}path")


def _small_history(iters=3):
    return run_adaptive(get_problem("smooth"), gen_squares(2), AdaptConfig(k=1, max_iters=iters))


def test_csv_header_and_single_row(tmp_path):
    hist = _small_history(1)
    write_csv(hist, tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert len(lines) == 2
    assert lines[0] == HEADER
    assert ",".join(CSV_COLUMNS) == HEADER


def test_csv_round_trip(tmp_path):
    hist = _small_history(4)
    write_csv(hist, tmp_path / "h.csv")
    data = read_csv(tmp_path / "h.csv")
    rows = np.array(history_rows(hist), dtype=float)
    for i, name in enumerate(CSV_COLUMNS):
        assert np.array_equal(data[name], rows[:, i]), name


def test_csv_is_locale_independent(tmp_path):
    hist = _small_history(2)
    write_csv(hist, tmp_path / "a.csv")
    old = locale.setlocale(locale.LC_NUMERIC)
    try:
        for name in ("de_DE.UTF-8", "fr_FR.UTF-8"):
            try:
                locale.setlocale(locale.LC_NUMERIC, name)
                break
            except locale.Error:
                continue
        write_csv(hist, tmp_path / "b.csv")
    finally:
        locale.setlocale(locale.LC_NUMERIC, old)
    text = (tmp_path / "b.csv").read_text()
    assert text == (tmp_path / "a.csv").read_text()
    for line in text.splitlines()[1:]:
        assert len(line.split(",")) == len(CSV_COLUMNS)


def test_empty_history_is_rejected(tmp_path):
    hist = _small_history(1)
    hist.records.clear()
    with pytest.raises(ValueError):
        write_csv(hist, tmp_path / "h.csv")


def test_svg_has_one_closed_path_per_element(tmp_path):
    m = gen_squares(2)
    paths = _paths(svg_string(m))
    assert len(paths) == 4
    assert all(p.get("d").strip().endswith("Z") for p in paths)
    write_svg(m, tmp_path / "m.svg")
    assert len(_paths((tmp_path / "m.svg").read_text())) == 4


def test_svg_colours_follow_log_field():
    m = gen_squares(2)
    fills = [p.get("fill") for p in _paths(svg_string(m, [1e-8, 1e-4, 1e-4, 1.0]))]
    assert fills[1] == fills[2]
    assert len(set(fills)) == 3
    # a log scale puts 1e-4 halfway between 1e-8 and 1; a linear scale would not
    mid = [p.get("fill") for p in _paths(svg_string(m, [1.0, 1e4, 1e4, 1e8]))]
    assert mid == fills
    with pytest.raises(ValueError):
        svg_string(m, [1.0, 2.0])


def test_missing_problem_exits_2(capsys):
    assert main(["adapt"]) == 2
    assert "usage" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["adapt", "--problem", "nope"],
    ["adapt", "--problem", "smooth", "--theta", "0"],
    ["adapt", "--problem", "smooth", "--k", "4"],
    ["adapt", "--problem", "smooth", "--hanging", "sometimes"],
    ["adapt", "--problem", "smooth", "--mesh", "lshape"],
    ["adapt", "--problem", "smooth", "--snapshots", "a,b"],
    ["uniform", "--problem", "smooth", "--levels", "0"],
    ["frobnicate"],
])
def test_argument_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "usage" in capsys.readouterr().err


def test_runtime_error_exits_1(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code = main(["adapt", "--problem", "smooth", "--n", "2", "--max-iters", "1", "--out", str(blocker / "x")])
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_uniform_example_command(tmp_path):
    out = tmp_path / "run"
    code = main(["uniform", "--problem", "smooth", "--mesh", "squares", "--n", "4", "--k", "2",
                 "--levels", "5", "--out", str(out)])
    assert code == 0
    data = read_csv(out / "history.csv")
    assert len(data["iter"]) == 5
    slope = np.polyfit(np.log(data["ndofs"]), np.log(data["h1err"]), 1)[0]
    assert slope == pytest.approx(-1.0, abs=0.1)
    summary = (out / "summary.txt").read_text()
    assert "slope h1err" in summary and "final effectivity" in summary
    assert sorted(p.name for p in (out / "meshes").iterdir()) == [
        "iter000.mesh", "iter000.svg", "iter002.mesh", "iter002.svg", "iter004.mesh", "iter004.svg"]


def test_adapt_example_command(tmp_path):
    out = tmp_path / "run"
    argv = ["adapt", "--problem", "kellogg-aligned", "--mesh", "squares", "--n", "5", "--k", "1",
            "--theta", "0.6", "--hanging", "one-per-face", "--max-iters", "6", "--snapshots", "0,5"]
    assert main(argv + ["--out", str(out)]) == 0
    data = read_csv(out / "history.csv")
    assert len(data["iter"]) == 6
    assert np.all(np.diff(data["ndofs"]) >= 0)
    m5 = read_mesh(out / "meshes" / "iter005.mesh")
    assert m5.n_elements == int(data["cells"][-1])
    assert len(_paths((out / "meshes" / "iter005.svg").read_text())) == m5.n_elements
    assert not (out / "meshes" / "iter002.svg").exists()
    # repeated runs give the same CSV apart from timings
    out2 = tmp_path / "run2"
    assert main(argv + ["--out", str(out2)]) == 0
    again = read_csv(out2 / "history.csv")
    for name in CSV_COLUMNS:
        if name != "seconds":
            assert np.array_equal(data[name], again[name], equal_nan=True)


def test_json_config_with_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": 2, "max_iters": 2, "k": 2, "snapshots": [0]}))
    out = tmp_path / "run"
    assert main(["adapt", "--problem", "smooth", "--config", str(cfg), "--max-iters", "3", "--out", str(out)]) == 0
    data = read_csv(out / "history.csv")
    assert len(data["iter"]) == 3
    assert data["cells"][0] == 4
    assert data["ndofs"][0] == 25  # k = 2 on the 2 x 2 grid
    assert sorted(p.name for p in (out / "meshes").iterdir()) == ["iter000.mesh", "iter000.svg"]


def test_bad_json_config_exits_2(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["adapt", "--problem", "smooth", "--config", str(cfg)]) == 2
    cfg.write_text("{not json")
    assert main(["adapt", "--problem", "smooth", "--config", str(cfg)]) == 2


def test_module_entry_point(tmp_path):
    out = tmp_path / "run"
    res = subprocess.run([sys.executable, "-m", "vemadapt", "uniform", "--problem", "smooth", "--n", "2",
                          "--levels", "2", "--out", str(out)], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert "problem: smooth" in res.stdout
    res = subprocess.run([sys.executable, "-m", "vemadapt"], capture_output=True, text=True)
    assert res.returncode == 2 and "usage" in res.stderr


def test_uniform_history_matches_direct_call(tmp_path):
    out = tmp_path / "run"
    assert main(["uniform", "--problem", "smooth", "--n", "2", "--levels", "3", "--out", str(out)]) == 0
    hist = run_uniform(get_problem("smooth"), gen_squares, [2, 4, 8], AdaptConfig(k=1))
    data = read_csv(out / "history.csv")
    assert np.array_equal(data["h1err"], hist.column("h1err"))
    assert np.array_equal(data["total"], hist.column("total"))
