import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eulerlab.errors import InvalidInputError
from eulerlab.grid import (
    Grid2D,
    NormReport,
    ScalarField2D,
    VectorField2D,
    read_field,
    read_field_binary,
    read_field_csv,
    write_field_binary,
    write_field_csv,
)


def test_grid_geometry():
    g = Grid2D(2.0, 8, (1.0, -1.0))
    assert g.spacing == 0.5
    assert g.axis(0)[0] == -1.0 and g.axis(1)[-1] == 0.5
    assert g.nyquist == 1.0
    assert g.frequency_spacing == 0.25
    assert g.index_of(1.0, 0) == 4.0
    x1, x2 = g.coords()
    assert x1.shape == (8, 8) and np.all(x1[:, 0] == g.axis(0))
    assert g.points().shape == (64, 2)


@pytest.mark.parametrize("n", [0, 1, 3, 12])
def test_grid_rejects_non_power_of_two(n):
    with pytest.raises(InvalidInputError):
        Grid2D(1.0, n)


def test_grid_rejects_bad_width():
    with pytest.raises(InvalidInputError):
        Grid2D(0.0, 8)
    with pytest.raises(InvalidInputError):
        Grid2D(float("inf"), 8)


def test_field_arithmetic_and_validation():
    g = Grid2D(1.0, 4)
    f = ScalarField2D.from_function(g, lambda a, b: a + b)
    assert np.allclose((2 * f - f).values, f.values)
    assert np.allclose((f + 1.0).values, f.values + 1)
    with pytest.raises(InvalidInputError):
        ScalarField2D(g, np.full((4, 4), np.nan))
    with pytest.raises(InvalidInputError):
        ScalarField2D(g, np.zeros((3, 3)))
    with pytest.raises(InvalidInputError):
        f + ScalarField2D.zeros(Grid2D(2.0, 4))
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0  # snapshots are read-only


def test_vector_field_shares_grid():
    with pytest.raises(InvalidInputError):
        VectorField2D(ScalarField2D.zeros(Grid2D(1.0, 4)), ScalarField2D.zeros(Grid2D(1.0, 8)))


@pytest.mark.parametrize("writer,reader", [(write_field_csv, read_field_csv), (write_field_binary, read_field_binary)])
def test_field_io_round_trip(tmp_path, writer, reader):
    g = Grid2D(3.0, 16, (0.5, 0.25))
    rng = np.random.default_rng(0)
    f = ScalarField2D(g, rng.standard_normal(g.shape))
    path = tmp_path / "f.dat"
    writer(path, f)
    back = reader(path)
    assert back.grid == g
    assert np.array_equal(back.values, f.values)


def test_read_field_dispatches_on_suffix(tmp_path):
    g = Grid2D(1.0, 4)
    f = ScalarField2D.from_function(g, lambda a, b: a * b)
    write_field_csv(tmp_path / "f.csv", f)
    write_field_binary(tmp_path / "f.bin", f)
    assert np.array_equal(read_field(tmp_path / "f.csv").values, read_field(tmp_path / "f.bin").values)


def test_truncated_field_file_rejected(tmp_path):
    path = tmp_path / "f.csv"
    path.write_text('# {"L": 1.0, "n": 4, "center": [0, 0]}\n1.0\n2.0\n')
    with pytest.raises(InvalidInputError):
        read_field_csv(path)
    path.write_text("1.0\n")
    with pytest.raises(InvalidInputError):
        read_field_csv(path)


def test_norm_report_json_round_trip():
    rep = NormReport(1.5, "test", {"n": np.int64(4)}, {"x": np.array([1.0, 2.0])}, ["w"])
    back = NormReport.from_json(rep.to_json())
    assert back.to_json() == rep.to_json()
    assert json.loads(rep.to_json())["details"]["x"] == [1.0, 2.0]
    with pytest.raises(InvalidInputError):
        NormReport(-1.0, "bad")


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1e300, 1e300, allow_nan=False), min_size=16, max_size=16))
def test_csv_round_trip_is_bit_exact(tmp_path_factory, values):
    g = Grid2D(1.0, 4)
    f = ScalarField2D(g, np.array(values).reshape(4, 4))
    path = tmp_path_factory.mktemp("io") / "f.csv"
    write_field_csv(path, f)
    assert np.array_equal(read_field_csv(path).values, f.values)
