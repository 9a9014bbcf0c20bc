import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from svdc.corpus import make_corpus, markov_image, two_level_map, write_corpus
from svdc.pnm import format_pnm, parse_pnm, read_image, to_uint8, to_unit, write_image


@given(st.sampled_from([1, 3]), st.integers(1, 7), st.integers(1, 7), st.data())
def test_pnm_round_trip(c, h, w, data):
    px = data.draw(arrays(np.uint8, (c, h, w)))
    assert np.array_equal(parse_pnm(format_pnm(px)), px)


def test_unit_mapping():
    px = np.arange(256, dtype=np.uint8).reshape(1, 16, 16)
    assert np.array_equal(to_uint8(to_unit(px)), px)
    assert to_uint8(np.array([-2.0, 2.0, 0.0])).tolist() == [0, 255, 128]  # 127.5 rounds away from zero


def test_header_comments_and_errors(tmp_path):
    data = b"P5\n# comment\n2 1\n255\n\x00\xff"
    assert parse_pnm(data).tolist() == [[[0, 255]]]
    with pytest.raises(ValueError):
        parse_pnm(b"P2\n2 1\n255\n0 0")
    with pytest.raises(ValueError):
        parse_pnm(b"P5\n2 1\n65535\n\x00\x00\x00\x00")
    with pytest.raises(ValueError):
        parse_pnm(b"P5\n2 2\n255\n\x00")
    img = np.linspace(-1, 1, 12).reshape(1, 3, 4)
    write_image(tmp_path / "x.pgm", img)
    np.testing.assert_allclose(read_image(tmp_path / "x.pgm"), img, atol=1 / 127.5)


def test_corpus(tmp_path):
    a = make_corpus(3, "gaussian", 8, 8, seed=1)
    assert len(a) == 3 and all(x.shape == (1, 8, 8) for x in a)
    assert np.array_equal(a[0], make_corpus(3, "gaussian", 8, 8, seed=1)[0])
    paths = write_corpus(tmp_path, a)
    assert len(paths) == 3
    with pytest.raises(ValueError):
        make_corpus(1, "uniform")


def test_markov_correlation():
    x = markov_image(np.random.default_rng(0), 128, 128, scale=0.1)[0]
    r = np.corrcoef(x[:, :-1].ravel(), x[:, 1:].ravel())[0, 1]
    assert abs(r - 0.9) < 0.05


def test_two_level_map():
    m = two_level_map(np.random.default_rng(0), 64, 64, 5, 40)
    assert set(np.unique(m.values)) == {5, 40}
