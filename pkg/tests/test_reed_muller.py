import itertools
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fblcode.reed_muller import RmCode, rm_decode_reed, rm_encode


def all_codewords(code):
    msgs = np.array(list(itertools.product((0, 1), repeat=code.K)), dtype=np.uint8)
    return msgs, rm_encode(msgs, code)


@pytest.mark.parametrize("r,m", [(0, 3), (1, 3), (1, 4), (2, 4), (2, 5)])
def test_dimension_and_minimum_distance(r, m):
    code = RmCode(r, m)
    assert code.K == sum(comb(m, i) for i in range(r + 1))
    assert np.linalg.matrix_rank(code.generator.astype(float)) == code.K
    if code.K <= 16:
        _, words = all_codewords(code)
        assert words[1:].sum(axis=1).min() == 1 << (m - r)


def test_rm13_corrects_every_single_error():
    code = RmCode(1, 3)
    msgs, words = all_codewords(code)
    for msg, word in zip(msgs, words):
        for j in range(8):
            bad = word.copy()
            bad[j] ^= 1
            assert np.array_equal(rm_decode_reed(bad, code), msg)


@pytest.mark.parametrize("r,m", [(1, 4), (2, 5), (1, 5)])
def test_corrects_every_pattern_within_radius(r, m):
    code = RmCode(r, m)
    msg = np.random.default_rng(m).integers(0, 2, code.K, dtype=np.uint8)
    word = rm_encode(msg, code)
    patterns = []
    for w in range(code.correction_radius + 1):
        for pos in itertools.combinations(range(code.N), w):
            e = np.zeros(code.N, dtype=np.uint8)
            e[list(pos)] = 1
            patterns.append(e)
    received = word ^ np.array(patterns)
    assert np.all(rm_decode_reed(received, code) == msg)


def test_first_row_is_all_ones():
    assert np.all(RmCode(2, 4).generator[0] == 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 7), st.data())
def test_noiseless_roundtrip(m, data):
    r = data.draw(st.integers(0, m))
    code = RmCode(r, m)
    msg = np.random.default_rng(data.draw(st.integers(0, 2**31))).integers(
        0, 2, size=(5, code.K), dtype=np.uint8)
    assert np.array_equal(rm_decode_reed(rm_encode(msg, code), code), msg)


def test_rejects_bad_parameters():
    with pytest.raises(ValueError):
        RmCode(4, 3)
    with pytest.raises(ValueError):
        rm_decode_reed(np.zeros(7), RmCode(1, 3))
