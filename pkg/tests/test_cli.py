from __future__ import annotations

import csv
import io
import json

import numpy as np
import pytest

from exactber import __version__
from exactber.cli import UsageError, main, parse_grid
from exactber.scalar import Poly, RatFn, parse_rational


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_exact_m1_formula(capsys):
    code, out, _ = run(capsys, "exact", "--gen", "1,3", "--form", "controller")
    assert code == 0
    obj = json.loads(out)
    assert obj["M"] == 5
    got = RatFn.from_json(obj["pb"])
    num = Poly([0, 0, 14, -23, 16, 2, -16, 8])
    den = Poly([1, 0, 3, -2]) * Poly([2, -1, 4, -4])
    assert got == RatFn(num, den)


def test_series_m2_through_p8(capsys):
    code, out, _ = run(capsys, "series", "--gen", "5,7", "--order", "8")
    assert code == 0
    coeffs = [parse_rational(c) for c in json.loads(out)["pb"]["coeffs"]]
    expect = ["0", "0", "0", "44", "3519/8", "-14351/32", "-1267079/64", "-31646405/512", "978265739/2048"]
    assert coeffs == [parse_rational(c) for c in expect]


def test_curve_grid_rows_and_low_end(capsys):
    code, out, _ = run(capsys, "curve", "--gen", "5,7", "--p-grid", "1e-4:0.1:log:40")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["p", "pb"] and len(rows) == 41
    pb = np.array([float(r[1]) for r in rows[1:]])
    assert np.all(np.diff(pb[:20]) > 0)


def test_curve_exact_backend_agrees(capsys):
    _, a, _ = run(capsys, "curve", "--gen", "1,3", "--p", "0.05")
    _, b, _ = run(capsys, "curve", "--gen", "1,3", "--p", "0.05", "--backend", "exact")
    assert float(a.splitlines()[1].split(",")[1]) == pytest.approx(float(b.splitlines()[1].split(",")[1]), rel=1e-12)


def test_byte_stable_outputs(capsys):
    for argv in (["exact", "--gen", "1,3"],
                 ["curve", "--gen", "1,3", "--p-grid", "0.01:0.2:lin:5"],
                 ["simulate", "--gen", "1,3", "--p", "0.05", "--bits", "20000", "--seed", "4", "--seeds", "2"]):
        first = run(capsys, *argv)[1]
        assert first and first == run(capsys, *argv)[1]


def test_out_directory_created(tmp_path, capsys):
    out = tmp_path / "a" / "b"
    assert main(["graph-dump", "--gen", "1,3", "--out", str(out)]) == 0
    assert (out / "graph.json").is_file() and (out / "graph.dot").read_text().startswith("digraph")
    assert json.loads((out / "graph.json").read_text())["M"] == 5
    assert main(["quantize", "--levels", "8", "--snr-db", "1.5", "--out", str(out)]) == 0
    q = json.loads((out / "quantizer.json").read_text())
    assert q["levels"] == 8 and len(q["thresholds"]) == 7


def test_simulate_csv(capsys):
    code, out, _ = run(capsys, "simulate", "--gen", "5,7", "--p", "0.03", "--bits", "20000", "--seeds", "3")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [int(r["seed"]) for r in rows] == [0, 1, 2]


def test_simulate_and_curve_awgn(capsys):
    code, out, _ = run(capsys, "awgn-curve", "--gen", "1,3", "--levels", "4", "--snr-grid", "2:4:lin:2")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 2 and float(rows[0]["pb"]) > float(rows[1]["pb"]) > 0
    code, out, _ = run(capsys, "simulate", "--gen", "1,3", "--snr-db", "3", "--levels", "4", "--bits", "20000")
    assert code == 0


def test_version(capsys):
    assert main(["--version"]) == 0
    assert __version__ in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["exact", "--gen", "1,3x"],
    ["exact"],
    ["curve", "--gen", "5,7", "--p", "0.7"],
    ["curve", "--gen", "5,7", "--p-grid", "0:1:lin:5"],
    ["simulate", "--gen", "5,7", "--snr-db", "2"],
    ["series", "--gen", "5,7", "--order", "0"],
    ["exact", "--gen", "13,17", "--expect-states", "2"],
])
def test_exit_invalid(capsys, argv):
    assert main(argv) == 2


def test_exit_cap(capsys):
    code, _, err = run(capsys, "exact", "--gen", "13,17", "--cap", "100")
    assert code == 3 and "ClosureCapError" in err


def test_exit_solver_failure(capsys):
    # catastrophic (1+D, 1+D): the metric chain has no unique stationary solution
    code, _, err = run(capsys, "series", "--gen", "3,3", "--allow-nonminimal", "--order", "4")
    assert code == 4 and "Error" in err


def test_parse_grid():
    np.testing.assert_allclose(parse_grid("1e-3:1e-1:log:3"), [1e-3, 1e-2, 1e-1])
    assert parse_grid("0:0.5:lin:2").tolist() == [0.0, 0.5]
    for bad in ("1:2:3", "0:1:log:3", "a:1:lin:2", "0:1:cubic:2", "0:1:lin:0"):
        with pytest.raises(UsageError):
            parse_grid(bad)
