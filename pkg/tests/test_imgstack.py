import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crosslearn.errors import DimensionMismatchError, MalformedHeaderError
from crosslearn.imgstack import (
    Image,
    Stack,
    center,
    load_image,
    load_matrix,
    load_stack,
    normalize_max,
    pack,
    quantize,
    save_image,
    save_matrix,
    save_stack,
    unpack,
)


def test_pack_column_order():
    img = Image(np.array([[1.0, 3.0], [2.0, 4.0]]))
    np.testing.assert_array_equal(pack(img), [1, 2, 3, 4])


def test_pack_zero_image():
    v = pack(Image(np.zeros((3, 3))))
    assert v.shape == (9,) and not v.any()


def test_pack_position_formula():
    rng = np.random.default_rng(1)
    data = rng.random((5, 7))
    v = pack(Image(data))
    for i in range(5):
        for j in range(7):
            assert v[i + j * 5] == data[i, j]


@given(st.integers(1, 9), st.integers(1, 9), st.integers(0, 2**31 - 1))
@settings(max_examples=40, deadline=None)
def test_pack_unpack_bijection(h, w, seed):
    data = np.random.default_rng(seed).random((h, w))
    img = Image(data)
    assert unpack(pack(img), h, w) == img
    v = np.random.default_rng(seed + 1).random(h * w)
    np.testing.assert_array_equal(pack(unpack(v, h, w)), v)


def test_image_is_read_only():
    img = Image(np.ones((2, 2)))
    with pytest.raises(ValueError):
        img.data[0, 0] = 5.0


def test_center_constant_columns():
    c = np.array([1.0, -2.0, 3.5])
    out, mean = center(Stack(np.column_stack([c, c, c])))
    assert not out.columns.any()
    np.testing.assert_array_equal(mean.mean, c)


def test_center_two_columns():
    out, mean = center(Stack(np.array([[1.0, 3.0], [0.0, 2.0]])))
    np.testing.assert_array_equal(out.columns, [[-1, 1], [-1, 1]])
    np.testing.assert_array_equal(mean.mean, [2, 1])


def test_center_row_sums_and_recovery():
    x = np.random.default_rng(3).normal(size=(16, 5))
    out, mean = center(Stack(x))
    assert np.all(np.abs(out.columns.sum(axis=1)) < 1e-12)
    np.testing.assert_allclose(out.columns + mean.mean[:, None], x, rtol=0, atol=1e-15)
    again, _ = center(out)
    assert np.max(np.abs(again.columns - out.columns)) <= 1e-12


def test_normalize_max_examples():
    np.testing.assert_array_equal(normalize_max(Image(np.array([[2.0, 4.0, 8.0]]))).data, [[0.25, 0.5, 1.0]])
    zero = Image(np.zeros((2, 3)))
    assert normalize_max(zero) == zero
    once = normalize_max(Image(np.random.default_rng(0).random((4, 4))))
    assert normalize_max(once) == once


def test_normalize_preserves_argmax():
    data = np.random.default_rng(5).random((6, 6)) * 7
    assert np.argmax(normalize_max(Image(data)).data) == np.argmax(data)


def test_matrix_round_trip_exact(tmp_path):
    x = np.random.default_rng(7).normal(size=(13, 6)) * 1e-7
    x[0, 0] = np.pi * 1e300
    save_stack(tmp_path / "s.txt", Stack(x))
    np.testing.assert_array_equal(load_stack(tmp_path / "s.txt").columns, x)


def test_matrix_file_layout(tmp_path):
    save_matrix(tmp_path / "m.txt", np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]))
    lines = (tmp_path / "m.txt").read_text().splitlines()
    assert lines[0] == "3 2"
    assert [float(v) for v in lines[1].split()] == [1.0, 2.0]


def test_truncated_matrix_is_dimension_mismatch(tmp_path):
    p = tmp_path / "m.txt"
    save_matrix(p, np.arange(12.0).reshape(3, 4))
    p.write_text("\n".join(p.read_text().splitlines()[:-1]) + "\n")
    with pytest.raises(DimensionMismatchError):
        load_matrix(p)


def test_malformed_header(tmp_path):
    p = tmp_path / "m.txt"
    p.write_text("three 4\n1 2 3\n")
    with pytest.raises(MalformedHeaderError):
        load_matrix(p)


def test_missing_matrix_is_io_error(tmp_path):
    with pytest.raises(OSError):
        load_matrix(tmp_path / "nope.txt")


def test_image_max_quantizes_to_65535(tmp_path):
    data = np.random.default_rng(2).random((5, 9))
    data[2, 3] = 1.0
    p = tmp_path / "img.pgm"
    save_image(p, Image(data))
    raw = p.read_bytes()
    assert raw.startswith(b"P5")
    samples = np.frombuffer(raw[-data.size * 2 :], dtype=">u2")
    assert samples.max() == 65535
    back = load_image(p)
    assert back.shape == (5, 9)
    np.testing.assert_allclose(back.data, data, atol=0.5 / 65535 + 1e-12)


def test_quantize_round_half_up():
    # 0.5/65535 sits exactly halfway between samples 0 and 1
    assert quantize(np.array([0.5 / 65535]))[0] == 1
    assert quantize(np.array([-1.0, 2.0])).tolist() == [0, 65535]
