import csv
import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from tuckerl2e import io as tio
from tuckerl2e.cli import main
from tuckerl2e.l2e import FitConfig, MaskedTensor, fit, predict
from tuckerl2e.sim import CSV_COLUMNS, relative_error

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=1, max_dims=4, max_side=4),
                  elements=finite), st.data())
@settings(max_examples=60, deadline=None)
def test_tensor_file_roundtrip(tmp_path_factory, X, data):
    mask = data.draw(hnp.arrays(bool, X.shape))
    mask.flat[0] = True
    path = tmp_path_factory.mktemp("rt") / "x.txt"
    tio.write_tensor(path, X, mask)
    back = tio.read_tensor(path)
    assert np.array_equal(back.mask, mask)
    assert np.array_equal(back.values[mask], X[mask])
    # writing what was read reproduces the file byte for byte
    path2 = path.with_suffix(".2")
    tio.write_tensor(path2, back)
    assert path.read_bytes() == path2.read_bytes()


def test_tensor_file_layout(tmp_path):
    X = np.arange(6.0).reshape(2, 3)
    p = tmp_path / "t.txt"
    tio.write_tensor(p, X, X != 3.0)
    assert p.read_text().split("\n") == ["2", "2 3", "0.0", "nan", "1.0", "4.0", "2.0", "5.0", ""]


def test_nan_token_case_insensitive(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text("1\n3\nNaN\n1.5\nNAN\n")
    m = tio.read_tensor(p)
    assert list(m.mask) == [False, True, False] and m.values[1] == 1.5


@pytest.mark.parametrize("text,line", [
    ("x\n2\n1\n1\n", 1),
    ("2\n2\n1\n1\n", 2),
    ("1\n3\n1\n2\n", 5),
    ("1\n3\n1\nfoo\n2\n", 4),
    ("1\n2\n1\ninf\n", 4),
    ("1\n2\n1\n2\n3\n", 5),
])
def test_malformed_files_report_line(tmp_path, text, line):
    p = tmp_path / "bad.txt"
    p.write_text(text)
    with pytest.raises(tio.FormatError) as exc:
        tio.read_tensor(p)
    assert exc.value.lineno == line
    assert f":{line}:" in str(exc.value)


def test_all_missing_rejected(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text("1\n2\nnan\nnan\n")
    with pytest.raises(ValueError, match="all values are missing"):
        tio.read_tensor(p)


def test_model_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.standard_normal((4, 5, 3))
    model = fit(MaskedTensor.full(X), FitConfig((2, 2, 1)))
    p = tmp_path / "m.model"
    tio.write_model(p, model)
    back = tio.read_model(p)
    assert back.eta == model.eta and back.scale == model.scale
    np.testing.assert_array_equal(predict(back), predict(model))


# command line ------------------------------------------------------------------

def run(*argv):
    return main([str(a) for a in argv])


def test_simulate_decompose_pipeline(tmp_path):
    data = tmp_path / "x.txt"
    assert run("simulate", "--model", "tucker", "--dims", "10,10,10", "--rank", "2,2,2",
               "--seed", 4, "--out", data) == 0
    L = tio.read_tensor(f"{data}.L").values
    assert np.array_equal(tio.read_tensor(data).values, L)
    code = run("decompose", data, "--rank", "2,2,2", "--out", tmp_path / "fit")
    assert code == 0
    assert relative_error(tio.read_tensor(tmp_path / "fit.Lhat").values, L) < 1e-4
    meta = tio.read_meta(tmp_path / "fit.meta")
    assert meta["status"] == "converged"
    assert float(meta["eta_star"]) <= math.log(50.0)
    for key in ("iterations", "objective", "projected_grad_norm", "scale", "tau_star"):
        assert key in meta
    model = tio.read_model(tmp_path / "fit.model")
    np.testing.assert_allclose(predict(model), tio.read_tensor(tmp_path / "fit.Lhat").values,
                               rtol=1e-15, atol=0)


def test_decompose_deterministic_meta(tmp_path):
    data = tmp_path / "x.txt"
    run("simulate", "--model", "cp", "--dims", "8,8,8", "--rank", 2, "--delta", 0.1,
        "--rho", 0.1, "--seed", 1, "--out", data)
    for k in (1, 2):
        run("decompose", data, "--rank", "2,2,2", "--seed", 7, "--out", tmp_path / f"f{k}")
    m1, m2 = (tio.read_meta(tmp_path / f"f{k}.meta") for k in (1, 2))
    assert m1["objective"] == m2["objective"]
    assert (tmp_path / "f1.Lhat").read_bytes() == (tmp_path / "f2.Lhat").read_bytes()


def test_decompose_rank_too_large(tmp_path, capsys):
    data = tmp_path / "x.txt"
    tio.write_tensor(data, np.random.default_rng(0).standard_normal((10, 10, 10)))
    assert run("decompose", data, "--rank", "11,2,2", "--out", tmp_path / "f") == 1
    assert "mode 1" in capsys.readouterr().err


def test_decompose_malformed_file(tmp_path, capsys):
    p = tmp_path / "bad.txt"
    p.write_text("2\n2 2\n1\n2\nabc\n4\n")
    assert run("decompose", p, "--rank", "1,1", "--out", tmp_path / "f") == 1
    assert "bad.txt:5:" in capsys.readouterr().err


def test_decompose_max_iters_exit_code(tmp_path):
    data = tmp_path / "x.txt"
    run("simulate", "--model", "tucker", "--dims", "6,6,6", "--rank", 2, "--delta", 0.2,
        "--seed", 2, "--out", data)
    assert run("decompose", data, "--rank", 2, "--max-iter", 2, "--out", tmp_path / "f") == 2
    assert tio.read_meta(tmp_path / "f.meta")["status"] == "max_iters"
    assert (tmp_path / "f.Lhat").exists()


def test_eta_max_is_log_of_tau_max(tmp_path):
    data = tmp_path / "x.txt"
    run("simulate", "--model", "tucker", "--dims", "6,6,6", "--rank", 2, "--seed", 2,
        "--out", data)
    run("decompose", data, "--rank", 2, "--preset", "feature-extraction", "--out", tmp_path / "a")
    run("decompose", data, "--rank", 2, "--eta-max", 5, "--out", tmp_path / "b")
    assert float(tio.read_meta(tmp_path / "a.meta")["eta_star"]) <= math.log(20.0)
    assert float(tio.read_meta(tmp_path / "b.meta")["eta_star"]) == pytest.approx(math.log(5.0))
    assert run("decompose", data, "--rank", 2, "--eta-max", 0, "--out", tmp_path / "c") == 1


def test_simulate_truth_file(tmp_path):
    out = tmp_path / "s.txt"
    assert run("simulate", "--model", "cp", "--dims", "10,10,10", "--rank", 3, "--delta", 0.25,
               "--rho", 0.1, "--seed", 5, "--out", out) == 0
    truth = dict(line.split(" ", 1) for line in (tmp_path / "s.txt.truth").read_text().splitlines())
    assert int(truth["outlier_count"]) == round(0.25 * 1000)
    assert len(truth["outlier_indices"].split()) == 250
    assert int(truth["missing_count"]) == 100
    assert tio.read_tensor(out).n_observed == 900
    first = out.read_bytes()
    run("simulate", "--model", "cp", "--dims", "10,10,10", "--rank", 3, "--delta", 0.25,
        "--rho", 0.1, "--seed", 5, "--out", out)
    assert out.read_bytes() == first


def test_simulate_invalid_fraction(tmp_path):
    assert run("simulate", "--model", "cp", "--dims", "4,4", "--rank", 1, "--delta", 2,
               "--out", tmp_path / "s") == 1


def test_sweep_custom_single_row(tmp_path):
    out = tmp_path / "s.csv"
    assert run("sweep", "--preset", "custom", "--model", "tucker", "--dims", "8,8,8",
               "--ranks", "2", "--deltas", "0.1", "--rhos", "0.2", "--out", out) == 0
    with open(out) as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    assert tuple(reader.fieldnames) == CSV_COLUMNS and len(rows) == 1
    assert float(rows[0]["relative_error"]) < 0.05


def test_sweep_presets_and_help():
    from tuckerl2e.cli import preset_conditions
    conds, reps = preset_conditions("rank-sweep", "desk")
    assert reps == 10 and {c.dims for c in conds} == {(30, 30, 30)}
    conds, reps = preset_conditions("phase-grid", "full")
    assert reps == 50 and len(conds) == 2 * 11 * 11
    conds, _ = preset_conditions("misspec", "desk")
    assert any(c.model == "cp" and c.true_rank == 3 and c.delta == 0.25 for c in conds)
    proc = subprocess.run([sys.executable, "-m", "tuckerl2e", "sweep", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "desk scale" in proc.stdout


def test_unknown_preset_exit_code():
    with pytest.raises(SystemExit) as exc:
        run("sweep", "--preset", "nope")
    assert exc.value.code == 1


def test_cv_command(tmp_path):
    data = tmp_path / "x.txt"
    run("simulate", "--model", "tucker", "--dims", "8,8,8", "--rank", 2, "--delta", 0.1,
        "--seed", 3, "--out", data)
    out = tmp_path / "cv.csv"
    assert run("cv", data, "--ranks", "1;2,2,2;3", "--k", 4, "--out", out) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "rank,fold,n_entries,cv_error,status"
    assert lines[-1] == "# argmin 2,2,2"
    rows = list(csv.DictReader(lines[:-1]))
    assert sum(r["fold"] == "all" for r in rows) == 3 and len(rows) == 3 * 4 + 3


def test_cv_single_candidate_and_k_too_large(tmp_path):
    data = tmp_path / "x.txt"
    tio.write_tensor(data, np.random.default_rng(1).standard_normal((3, 3)),
                     np.eye(3, dtype=bool) | np.eye(3, k=1, dtype=bool))
    assert run("cv", data, "--ranks", "1,1", "--k", 2, "--out", tmp_path / "a.csv") == 0
    assert (tmp_path / "a.csv").read_text().splitlines()[-1] == "# argmin 1,1"
    assert run("cv", data, "--ranks", "1,1", "--k", 6) == 1


def test_console_entry_point_runs():
    proc = subprocess.run([sys.executable, "-m", "tuckerl2e", "--help"], capture_output=True,
                          text=True)
    assert proc.returncode == 0
    for cmd in ("decompose", "simulate", "sweep", "cv"):
        assert cmd in proc.stdout
