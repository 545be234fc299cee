import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fblcode.channel import NoiseSpec, transmit
from fblcode.modem import QamSpec, gray, qam_demodulate_hard, qam_modulate
from fblcode.theory import q_func


@pytest.mark.parametrize("k", range(1, 9))
def test_unit_energy_and_distinct_points(k):
    spec = QamSpec(k)
    pts = spec.constellation
    assert pts.shape == (1 << k, 2)
    assert np.mean(np.sum(pts**2, axis=1)) == pytest.approx(1.0, abs=1e-12)
    assert len({tuple(np.round(p, 12)) for p in pts}) == 1 << k


@pytest.mark.parametrize("k", range(1, 9))
def test_gray_neighbours_differ_in_one_bit(k):
    spec = QamSpec(k)
    pts = spec.constellation
    d = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    dmin = d[d > 0].min()
    for a, b in zip(*np.nonzero(np.isclose(d, dmin))):
        assert bin(a ^ b).count("1") == 1


def test_qpsk_layout():
    pts = QamSpec(2).constellation * math.sqrt(2)
    assert np.allclose(pts, [[1, 1], [1, -1], [-1, 1], [-1, -1]])


def test_gray_code():
    assert [gray(j) for j in range(8)] == [0, 1, 3, 2, 6, 7, 5, 4]


@pytest.mark.parametrize("k", range(1, 9))
def test_noiseless_roundtrip(k):
    bits = np.random.default_rng(k).integers(0, 2, size=(50, 8 * k), dtype=np.uint8)
    spec = QamSpec(k)
    y = qam_modulate(bits, spec)
    assert y.shape == (50, 8, 2)
    assert np.array_equal(qam_demodulate_hard(y, spec), bits)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**31))
def test_small_perturbation_roundtrip(k, seed):
    rng = np.random.default_rng(seed)
    spec = QamSpec(k)
    bits = rng.integers(0, 2, size=(4, 4 * k), dtype=np.uint8)
    y = qam_modulate(bits, spec)
    half_gap = np.min(np.diff(np.sort(spec._levels_i))) / 2
    y = y + rng.uniform(-0.99, 0.99, y.shape) * half_gap
    assert np.array_equal(qam_demodulate_hard(y, spec), bits)


def test_ties_resolve_to_smaller_label():
    spec = QamSpec(2)
    assert np.array_equal(qam_demodulate_hard(np.zeros((1, 2)), spec), [0, 0])


@pytest.mark.parametrize("k,snr_db", [(1, 4.0), (2, 6.0)])
def test_bit_error_rate_matches_q_function(k, snr_db):
    gamma = 10 ** (snr_db / 10)
    expected = q_func(math.sqrt(2 * gamma)) if k == 1 else q_func(math.sqrt(gamma))
    spec = QamSpec(k)
    bits = np.random.default_rng(0).integers(0, 2, size=(2000, 200 * k), dtype=np.uint8)
    y = transmit(qam_modulate(bits, spec), NoiseSpec.from_snr_db(snr_db, seed=3))
    ber = np.mean(qam_demodulate_hard(y, spec) != bits)
    # about 400k bits: 5 standard errors
    assert abs(ber - expected) < 5 * math.sqrt(expected / bits.size)


def test_rejects_bad_inputs():
    with pytest.raises(ValueError):
        QamSpec(0)
    with pytest.raises(ValueError):
        qam_modulate(np.zeros((1, 5), dtype=np.uint8), QamSpec(2))
    with pytest.raises(ValueError):
        qam_demodulate_hard(np.zeros((1, 4, 3)), QamSpec(2))
