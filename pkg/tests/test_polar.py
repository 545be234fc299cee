import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fblcode.polar import (PolarCode, bhattacharyya_construct, bsc_llr, polar_encode,
                           polar_transform, sc_decode)


def kron_matrix(N):
    F = np.array([[1, 0], [1, 1]], dtype=np.int64)
    G = np.ones((1, 1), dtype=np.int64)
    while G.shape[0] < N:
        G = np.kron(G, F)
    return G


def max_log_sc(llr, frozen):
    """Successive decisions by exhaustive max over all future bits.

    SC treats every later bit, frozen or not, as unknown; min-sum SC
    computes exactly these max-marginals, so this is an independent oracle
    for continuous (tie-free) LLRs.
    """
    N = len(llr)
    G = kron_matrix(N)
    u = []
    for i in range(N):
        if frozen[i]:
            u.append(0)
            continue
        best = {}
        for ui in (0, 1):
            free = list(range(i + 1, N))
            top = -np.inf
            for tail in itertools.product((0, 1), repeat=len(free)):
                full = np.zeros(N, dtype=np.int64)
                full[:i] = u
                full[i] = ui
                full[free] = tail
                x = full @ G % 2
                top = max(top, float(np.sum((1 - 2 * x) * llr)) / 2)
            best[ui] = top
        u.append(0 if best[0] >= best[1] else 1)
    return np.array(u)


def test_bhattacharyya_small():
    assert np.allclose(bhattacharyya_construct(2, 0.1), [0.84, 0.36])


def test_construction_8_4():
    code = PolarCode.construct(8, 4, 0.1)
    assert code.info_set == (3, 5, 6, 7)


@pytest.mark.parametrize("N", [2, 4, 8, 16, 32])
def test_transform_matches_kronecker_matrix(N):
    u = np.random.default_rng(N).integers(0, 2, size=(20, N))
    assert np.array_equal(polar_transform(u), u @ kron_matrix(N) % 2)


@pytest.mark.parametrize("N", [2, 8, 64])
def test_transform_is_involution(N):
    u = np.random.default_rng(0).integers(0, 2, size=(5, N), dtype=np.uint8)
    assert np.array_equal(polar_transform(polar_transform(u)), u)


def test_all_noiseless_8_4_codewords_decode():
    code = PolarCode.construct(8, 4, 0.1)
    msgs = np.array(list(itertools.product((0, 1), repeat=4)), dtype=np.uint8)
    llr = bsc_llr(polar_encode(msgs, code), 0.1)
    assert np.array_equal(sc_decode(llr, code), msgs)


@pytest.mark.parametrize("N,K", [(8, 4), (8, 6), (16, 8)])
def test_sc_matches_exhaustive_max_log_oracle(N, K):
    code = PolarCode.construct(N, K, 0.1)
    rng = np.random.default_rng(K)
    for _ in range(40):
        llr = rng.normal(0.0, 2.0, N)
        u = max_log_sc(llr, code.frozen_mask)
        assert np.array_equal(sc_decode(llr, code), u[list(code.info_set)])


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([4, 16, 64, 256]), st.floats(0.01, 0.3), st.integers(0, 2**31))
def test_noiseless_roundtrip(N, p, seed):
    rng = np.random.default_rng(seed)
    K = int(rng.integers(1, N + 1))
    code = PolarCode.construct(N, K, p)
    msg = rng.integers(0, 2, size=(8, K), dtype=np.uint8)
    assert np.array_equal(sc_decode(bsc_llr(polar_encode(msg, code), p), code), msg)


def test_fep_falls_as_crossover_shrinks():
    code = PolarCode.construct(128, 64, 0.05)
    rng = np.random.default_rng(1)
    fep = []
    for p in (0.11, 0.08, 0.05, 0.02):
        msg = rng.integers(0, 2, size=(4000, 64), dtype=np.uint8)
        flips = (rng.random((4000, 128)) < p).astype(np.uint8)
        dec = sc_decode(bsc_llr(polar_encode(msg, code) ^ flips, p), code)
        fep.append(np.mean(np.any(dec != msg, axis=1)))
    assert all(a > b for a, b in zip(fep, fep[1:]))


def test_single_frame_shape():
    code = PolarCode.construct(8, 4, 0.1)
    assert sc_decode(np.ones(8), code).shape == (4,)


def test_rejects_bad_inputs():
    with pytest.raises(ValueError):
        PolarCode.construct(12, 4, 0.1)
    with pytest.raises(ValueError):
        PolarCode.construct(8, 9, 0.1)
    with pytest.raises(ValueError):
        bhattacharyya_construct(8, 0.6)
    with pytest.raises(ValueError):
        polar_encode(np.zeros((1, 3)), PolarCode.construct(8, 4, 0.1))
