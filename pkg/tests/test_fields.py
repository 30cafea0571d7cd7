import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mixed_msgfem.fields import (RasterField, RasterFormatError, generate_highcontrast, load_raster,
                                 save_raster)
from mixed_msgfem.mesh import build_cartesian_mesh


def test_one_by_one_file(tmp_path):
    p = tmp_path / "a.txt"
    p.write_text("1 1 \n 1.0\n")
    r = load_raster(p)
    assert r.values.tolist() == [[1.0]] and r.contrast == 1.0
    A = r.to_coefficient(build_cartesian_mesh(4, 4))
    assert np.all(A.values == 1.0)


@pytest.mark.parametrize("text,line,msg", [
    ("4 4\n" + "1 1 1 1\n" * 3, 4, "found only 3"),
    ("2 2\n1 1\n1\n", 3, "expected 2 values"),
    ("2 x\n1 1\n1 1\n", 1, "malformed header"),
    ("2 2\n1 1\n1 -3\n", 3, "nonpositive"),
    ("2 2\n1 1\n0 1\n", 3, "nonpositive"),
    ("2 2\n1 1\n1 nan\n", 3, "non-finite"),
    ("2 2\n1 1\n1 abc\n", 3, "not a number"),
    ("2 1\n1 1\n1 1\n", 3, "declares 1 rows"),
    ("# only a comment\n", 1, "empty"),
])
def test_malformed_files_name_the_line(tmp_path, text, line, msg):
    p = tmp_path / "bad.txt"
    p.write_text(text)
    with pytest.raises(RasterFormatError, match=msg) as err:
        load_raster(p)
    assert err.value.line == line
    assert f":{line}:" in str(err.value)


def test_comments_and_orientation(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("# header comment\n2 2\n1 2\n# between rows\n3 4\n")
    r = load_raster(p)
    assert r.values[0].tolist() == [1.0, 2.0]   # bottom row first
    mesh = build_cartesian_mesh(4, 4)
    cv = r.cell_values(mesh)
    i, j = mesh.cell_ij
    assert np.all(cv[(i >= 2) & (j >= 2)] == 4.0) and np.all(cv[(i < 2) & (j < 2)] == 1.0)
    with pytest.raises(ValueError, match="does not divide"):
        r.cell_values(build_cartesian_mesh(5, 5))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2 ** 31))
def test_round_trip_bit_exact(tmp_path_factory, nx, ny, seed):
    d = tmp_path_factory.mktemp("rt")
    rng = np.random.default_rng(seed)
    vals = np.exp(rng.normal(scale=5, size=(ny, nx)))
    save_raster(RasterField(nx, ny, vals), d / "a.txt")
    text = (d / "a.txt").read_text()
    r = load_raster(d / "a.txt")
    assert np.array_equal(r.values, vals)
    save_raster(r, d / "b.txt")
    assert (d / "b.txt").read_text() == text
    assert r.alpha0 == vals.min() and r.alpha1 == vals.max()


@pytest.mark.parametrize("pattern", ["channels", "inclusions", "checkerboard"])
def test_generators(pattern):
    a = generate_highcontrast(40, 40, pattern, 1e3, seed=3)
    b = generate_highcontrast(40, 40, pattern, 1e3, seed=3)
    assert np.array_equal(a.values, b.values)
    assert set(np.unique(a.values)) == {1.0, 1e3} and a.contrast == 1e3
    assert np.all(generate_highcontrast(40, 40, pattern, 1.0, seed=3).values == 1.0)


def test_checkerboard_two_by_two():
    r = generate_highcontrast(2, 2, "checkerboard", 1e3)
    assert r.values.tolist() == [[1.0, 1e3], [1e3, 1.0]]


def test_channels_connect_left_and_right():
    from scipy.ndimage import label
    r = generate_highcontrast(64, 64, "channels", 1e3, seed=9)
    lab, _ = label(r.values > 1)
    left, right = set(lab[:, 0]) - {0}, set(lab[:, -1]) - {0}
    assert left & right


def test_generator_errors():
    with pytest.raises(ValueError):
        generate_highcontrast(8, 8, "stripes", 10)
    with pytest.raises(ValueError):
        generate_highcontrast(8, 8, "channels", 0.5)
