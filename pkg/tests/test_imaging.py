import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sureconf.imaging import (Image, ImageFormatError, center_crop, generate_smooth_image, read_image,
                              read_table, write_image, write_pgm, write_table)


def test_smooth_image_is_deterministic():
    a = generate_smooth_image(64, 64, 8.0, seed=1)
    b = generate_smooth_image(64, 64, 8.0, seed=1)
    assert np.array_equal(a.data, b.data)


def test_smooth_image_spans_unit_interval_exactly():
    img = generate_smooth_image(64, 64, 8.0, seed=1)
    assert img.data.min() == 0.0
    assert img.data.max() == 1.0


def test_smooth_image_depends_on_seed():
    a = generate_smooth_image(64, 64, 8.0, seed=1)
    b = generate_smooth_image(64, 64, 8.0, seed=2)
    assert np.any(a.data != b.data)


def test_smooth_image_shape_and_smoothness():
    img = generate_smooth_image(48, 32, 4.0, seed=3)
    assert (img.width, img.height) == (48, 32)
    rough = generate_smooth_image(48, 32, 0.5, seed=3)
    # neighbouring pixels are far more alike in the smoother field
    assert np.mean(np.abs(np.diff(img.data, axis=1))) < np.mean(np.abs(np.diff(rough.data, axis=1)))


@pytest.mark.parametrize("args", [(7, 64, 8.0), (64, 4, 8.0), (64, 64, 0.0), (64, 64, -1.0)])
def test_smooth_image_rejects_bad_arguments(args):
    with pytest.raises(ValueError):
        generate_smooth_image(*args, seed=0)


def test_image_invariants():
    with pytest.raises(ValueError):
        Image(np.array([[0.0, np.nan]]))
    with pytest.raises(ValueError):
        Image(np.zeros(4))
    img = Image.from_flat(2, 3, np.arange(6.0))
    assert img.data[2, 1] == 5.0
    with pytest.raises(ValueError):
        img.data[0, 0] = 1.0


def test_pgm_8bit_mapping(tmp_path):
    path = tmp_path / "a.pgm"
    path.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 128, 255, 64]))
    img = read_image(path)
    assert (img.width, img.height) == (2, 2)
    assert img.flat().tolist() == [0.0, 128 / 255, 1.0, 64 / 255]


def test_pgm_16bit_and_comments(tmp_path):
    path = tmp_path / "b.pgm"
    raster = np.array([0, 1000, 65535], dtype=">u2").tobytes()
    path.write_bytes(b"P5 # comment\n3 # width\n1\n65535\n" + raster)
    img = read_image(path)
    assert img.flat().tolist() == [0.0, 1000 / 65535, 1.0]


def test_pgm_write_read(tmp_path):
    img = generate_smooth_image(16, 12, 3.0, seed=4)
    for bits, maxval in ((8, 255), (16, 65535)):
        path = tmp_path / f"c{bits}.pgm"
        write_pgm(path, img, bits=bits)
        back = read_image(path)
        assert np.max(np.abs(back.data - img.data)) <= 0.5 / maxval + 1e-15


def test_pgm_rejects_ascii_variant(tmp_path):
    path = tmp_path / "p2.pgm"
    path.write_bytes(b"P2\n2 1\n255\n0 255\n")
    with pytest.raises(ImageFormatError, match="P2"):
        read_image(path)


@pytest.mark.parametrize("payload", [
    b"P5\n2 2\n255\n" + bytes([1, 2, 3]),
    b"P5\n2 x\n255\n" + bytes(4),
    b"P5\n2 2\n",
    b"P5\n2 2\n0\n" + bytes(4),
    b"P6\n2 2\n255\n" + bytes(12),
])
def test_pgm_malformed(tmp_path, payload):
    path = tmp_path / "bad.pgm"
    path.write_bytes(payload)
    with pytest.raises(ImageFormatError):
        read_image(path)


def test_flat_format_layout(tmp_path):
    img = Image(np.array([[0.25, -1.5, 3.0]]))
    path = tmp_path / "x.imgf64"
    write_image(path, img)
    raw = path.read_bytes()
    assert raw.startswith(b"IMGF64\n3 1\n")
    assert np.frombuffer(raw[len(b"IMGF64\n3 1\n"):], dtype="<f8").tolist() == [0.25, -1.5, 3.0]


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
              elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_flat_format_round_trip_is_bit_exact(tmp_path_factory, data):
    path = tmp_path_factory.mktemp("rt") / "img.imgf64"
    img = Image(data)
    write_image(path, img)
    back = read_image(path)
    assert back.shape == img.shape
    assert back.data.tobytes() == img.data.tobytes()


def test_flat_format_truncated(tmp_path):
    path = tmp_path / "t.imgf64"
    path.write_bytes(b"IMGF64\n2 2\n" + bytes(16))
    with pytest.raises(ImageFormatError, match="truncated"):
        read_image(path)


def test_center_crop():
    img = Image(np.arange(36.0).reshape(6, 6))
    crop = center_crop(img, 2, 2)
    assert crop.data.tolist() == [[14.0, 15.0], [20.0, 21.0]]
    with pytest.raises(ValueError):
        center_crop(img, 8, 2)


def test_write_table_basic(tmp_path):
    path = tmp_path / "t.csv"
    write_table(path, ["alpha", "coverage"], [[0.1, 0.95]])
    lines = path.read_text().splitlines()
    assert len(lines) == 2
    assert lines[0] == "alpha,coverage"
    assert [float(v) for v in lines[1].split(",")] == [0.1, 0.95]


def test_write_table_header_only(tmp_path):
    path = tmp_path / "e.csv"
    write_table(path, ["a", "b"], [])
    assert path.read_text().splitlines() == ["a,b"]


def test_write_table_jagged(tmp_path):
    with pytest.raises(ValueError, match="row 1"):
        write_table(tmp_path / "j.csv", ["a", "b"], [[1, 2], [3]])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(allow_nan=False), min_size=1, max_size=5))
def test_write_table_floats_round_trip(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("tbl") / "v.csv"
    write_table(path, [f"c{i}" for i in range(len(values))], [values])
    _, rows = read_table(path)
    assert [float(v) for v in rows[0]] == values
