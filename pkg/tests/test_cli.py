import csv
import io
import json

import numpy as np
import pytest

from gofstab.cli import bench_latency, int_list, main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def grid_file(tmp_path):
    path = tmp_path / "u.txt"
    path.write_text("\n".join(str((i - 0.5) / 20) for i in range(1, 21)) + "\n")
    return path


def test_int_list():
    assert int_list("5..8,20,30..50:10") == [5, 6, 7, 8, 20, 30, 40, 50]


def test_test_command_grid_sample(capsys, grid_file):
    code, out, _ = run(capsys, "test", "--kind", "D", "--input", str(grid_file), "--format", "json")
    assert code == 0
    rec = json.loads(out)
    assert rec["statistic"] == pytest.approx(0.025)
    assert rec["pvalue"] == 0.25 and rec["pvalue_method"] == "capped"
    assert rec["pvalue_display"] == ">=0.25" and rec["reject"] is False


def test_domain_error_exit(capsys, tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("1.5\n")
    code, _, err = run(capsys, "test", "--kind", "D", "--input", str(bad))
    assert code == 2 and "line 1" in err


def test_parse_error_exit(capsys, tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("0.2\nabc\n")
    code, _, err = run(capsys, "stat", "--kind", "W2", "--input", str(bad))
    assert code == 3 and "line 2" in err


def test_io_error_exit(capsys, tmp_path):
    code, _, _ = run(capsys, "stat", "--kind", "W2", "--input", str(tmp_path / "missing.txt"))
    assert code == 4


def test_usage_errors(capsys, grid_file):
    assert run(capsys, "frobnicate")[0] == 2
    assert run(capsys, "test", "--kind", "D", "--input", str(grid_file), "--alpha", "0.3")[0] == 2
    assert run(capsys, "pvalue", "--kind", "D", "--statistic", "1.0", "--n", "3")[0] == 2


def test_pad_with_angles(capsys, tmp_path):
    path = tmp_path / "a.txt"
    rng = np.random.default_rng(4)
    path.write_text("\n".join(f"{x:.6f}" for x in rng.uniform(0, 360, 40)))
    code, out, _ = run(capsys, "test", "--kind", "PAD", "--angles", "degrees", "--input", str(path),
                       "--format", "json")
    assert code == 0
    rec = json.loads(out)
    assert rec["p"] == 2 and 0 <= rec["pvalue"] <= 0.25


def test_spherical_csv_stat(capsys, tmp_path):
    rng = np.random.default_rng(5)
    x = rng.standard_normal((15, 3))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    path = tmp_path / "s.csv"
    path.write_text("x,y,z\n" + "\n".join(",".join(f"{v:.12f}" for v in r) for r in x))
    code, out, _ = run(capsys, "stat", "--kind", "NBak", "--input", str(path), "--format", "csv")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0][:3] == ["kind", "n", "p"] and rows[1][1:3] == ["15", "3"]


def test_pvalue_single_and_batch(capsys, tmp_path):
    code, out, _ = run(capsys, "pvalue", "--kind", "W2", "--statistic", "0.4613", "--n", "100000",
                       "--format", "json")
    assert code == 0 and json.loads(out)["pvalue"] == pytest.approx(0.05, abs=0.002)
    src = tmp_path / "in.csv"
    src.write_text("statistic,n\n0.3,20\n")
    dst = tmp_path / "out.csv"
    assert run(capsys, "pvalue", "--kind", "W2", "--input", str(src), "--output", str(dst))[0] == 0
    assert list(csv.DictReader(open(dst)))[0]["method"] in ("newton", "capped")


def test_table_deterministic(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        code, _, _ = run(capsys, "table", "--kind", "U2", "--n", "5,10", "--M", "2000", "--seed", "9",
                         "--output", str(path))
        assert code == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.with_suffix(".json").exists()


def test_fit_desk_table(capsys, tmp_path):
    out_json = tmp_path / "form.json"
    code, out, _ = run(capsys, "fit", "--kind", "D", "--output", str(out_json))
    assert code == 0 and "BIC" in out
    form = json.loads(out_json.read_text())
    assert form["model"] == "n_alpha" and len(form["terms"]) == 3
    signs = {(t["n_exp"], t["alpha_exp"]): np.sign(t["coeff"]) for t in form["terms"]}
    assert signs == {(0.5, 0.0): 1, (1.0, 0.5): 1, (0.5, 0.5): -1}


@pytest.mark.slow
def test_fit_dimension_form(capsys, tmp_path):
    out_json = tmp_path / "dim.json"
    code, out, _ = run(capsys, "fit", "--kind", "PCvM", "--dims", "2..11", "--n", "5,10,20,40",
                       "--M", "2000", "--seed", "3", "--output", str(out_json))
    assert code == 0
    form = json.loads(out_json.read_text())
    assert form["model"] == "n_p_alpha"
    assert set(form["q"]) == {"1/n", "1/(n alpha)", "1/(n sqrt(alpha))"}


def test_validate_command(capsys, tmp_path):
    out_csv = tmp_path / "v.csv"
    code, out, _ = run(capsys, "validate", "--kind", "W2", "--n", "10,50", "--alphas", "0.05,0.1",
                       "--M", "10000", "--seed", "2", "--output", str(out_csv))
    assert code == 0 and "mean relative error" in out
    assert out_csv.exists()
    assert run(capsys, "validate", "--kind", "W2", "--M", "100")[0] == 2


def test_scan_command(capsys, tmp_path):
    rng = np.random.default_rng(8)
    path = tmp_path / "scan.csv"
    lines = ["time,longitude_deg"] + [f"{i},{x:.3f}" for i, x in enumerate(rng.uniform(0, 360, 60))]
    path.write_text("\n".join(lines) + "\n")
    out_csv = tmp_path / "o.csv"
    code, _, _ = run(capsys, "scan", "--input", str(path), "--window", "20", "--step", "10",
                     "--output", str(out_csv))
    assert code == 0
    rows = list(csv.DictReader(open(out_csv)))
    assert len(rows) == 5 and all(float(r["p_adj"]) >= float(r["p_raw"]) for r in rows)


def test_scan_window_larger_than_stream(capsys, tmp_path):
    path = tmp_path / "scan.csv"
    path.write_text("time,longitude_deg\n" + "\n".join(f"{i},{10 * i}" for i in range(30)) + "\n")
    out_csv = tmp_path / "o.csv"
    code, _, err = run(capsys, "scan", "--input", str(path), "--window", "100", "--output", str(out_csv))
    assert code == 0
    assert err.count("notice:") == 1
    assert len(list(csv.reader(open(out_csv)))) == 1


def test_scan_bad_row(capsys, tmp_path):
    path = tmp_path / "scan.csv"
    path.write_text("time,longitude_deg\n1,10\nnot-a-date,20\n")
    code, _, err = run(capsys, "scan", "--input", str(path))
    assert code == 3 and "row 3" in err


def test_bench(capsys):
    code, out, _ = run(capsys, "bench", "--kind", "D", "--n", "50", "--repeats", "200",
                       "--mc-trials", "1000")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["kind", "n", "alpha", "median_us", "mc_us"]
    assert len(rows) == 2


def test_latency_under_100us():
    assert bench_latency("D", 50, 0.05, repeats=1000, warmup=10) < 100e-6
