import numpy as np
import pytest

from covrankpy.bootstrap import BootstrapConfig
from covrankpy.fit import FitOptions
from covrankpy.io import load_dataset, load_model_spec, read_report, write_dataset, write_json, write_report
from covrankpy.linalg import SampleMatrix, make_grid
from covrankpy.rank_test import sequential_rank_test
from covrankpy.simmodels import generate_model, get_model_spec
from covrankpy.utils import DataError


def _write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_load_without_header(tmp_path):
    sample = load_dataset(_write(tmp_path, "1,2\n3,4\n5,6\n"))

    assert (sample.n, sample.L) == (3, 2)
    np.testing.assert_allclose(sample.grid.nodes, make_grid(2).nodes)
    np.testing.assert_allclose(sample.data, [[1, 2], [3, 4], [5, 6]])


def test_load_with_grid_header(tmp_path):
    sample = load_dataset(_write(tmp_path, "0.1,0.5,0.9\n1.5,2,3\n4,5,6\n"))

    np.testing.assert_allclose(sample.grid.nodes, [0.1, 0.5, 0.9])
    assert sample.n == 2


def test_load_skips_label_row(tmp_path):
    sample = load_dataset(_write(tmp_path, "a,b,c\n1,2,3\n4,5,6\n"))

    assert sample.n == 2
    np.testing.assert_allclose(sample.grid.nodes, make_grid(3).nodes)


def test_load_reports_bad_cell(tmp_path):
    with pytest.raises(DataError, match="row 2, column 2"):
        load_dataset(_write(tmp_path, "1,2,3\n4,NaN,6\n7,8,9\n"))

    with pytest.raises(DataError, match="row 3, column 1"):
        load_dataset(_write(tmp_path, "1,2\n3,4\nfoo,6\n"))


def test_load_rejects_ragged_rows(tmp_path):
    with pytest.raises(DataError, match="row 2"):
        load_dataset(_write(tmp_path, "1,2,3\n4,5\n7,8,9\n"))

    with pytest.raises(DataError, match="Ragged"):
        load_dataset(_write(tmp_path, "1,2\n4,5,6\n7,8\n"))


def test_dataset_round_trip(tmp_path):
    sim  = generate_model("A1", 12, 10, seed=3)
    path = str(tmp_path / "sim.csv")

    write_dataset(sim.sample, path)
    again = load_dataset(path)

    np.testing.assert_array_equal(again.data, sim.sample.data)
    np.testing.assert_array_equal(again.grid.nodes, sim.sample.grid.nodes)


def test_load_is_exact_for_full_precision_cells(tmp_path):
    rng  = np.random.default_rng(17)
    X    = rng.standard_normal((400, 25)) * 10.0 ** rng.integers(-8, 8, size=(400, 25))
    path = str(tmp_path / "precise.csv")

    write_dataset(SampleMatrix(X), path)

    np.testing.assert_array_equal(load_dataset(path).data, X)


def test_report_round_trip(tmp_path):
    sim    = generate_model("A1", 40, 9, seed=4)
    report = sequential_rank_test(sim.sample, 0.05, BootstrapConfig(B=9, seed=11, fit=FitOptions(restarts=0), threads=1))
    path   = str(tmp_path / "report.json")

    write_report(report, path, wall_clock=1.25)
    again, meta = read_report(path, with_meta=True)

    assert again.to_dict() == report.to_dict()
    assert meta["schema_version"] == 1
    assert meta["seed"] == 11
    assert meta["wall_clock_seconds"] == 1.25
    assert "tool_version" in meta


def test_report_is_reproducible(tmp_path):
    sim = generate_model("A1", 40, 9, seed=5)
    cfg = BootstrapConfig(B=9, seed=2, fit=FitOptions(restarts=0), threads=2)

    paths = [str(tmp_path / f"r{i}.json") for i in range(2)]
    for p in paths:
        write_report(sequential_rank_test(sim.sample, 0.05, cfg), p, wall_clock=0.0)

    with open(paths[0]) as a, open(paths[1]) as b:
        assert a.read() == b.read()


def test_read_report_rejects_other_schema(tmp_path):
    path = str(tmp_path / "old.json")
    write_json({"schema_version": 99, "report": {}}, path)

    with pytest.raises(DataError):
        read_report(path)


def test_load_model_spec(tmp_path):
    assert load_model_spec("a1") == get_model_spec("A1")

    path = str(tmp_path / "model.json")
    write_json({"name": "mine", "eigenvalues": [2.0, 1.0], "eigenfunctions": ["const", "cos:1"], "sigma2": 0.5}, path)

    spec = load_model_spec(path)
    assert spec.true_rank == 2
    assert spec.sigma2 == 0.5
