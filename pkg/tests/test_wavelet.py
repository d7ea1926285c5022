import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pal import wavelet


def test_constructor_reproduces_db4_table():
    assert np.max(np.abs(wavelet.daubechies(4) - wavelet.DB4)) < 1e-10


@pytest.mark.parametrize("order", [1, 2, 4, 8, 10])
def test_filter_orthonormality(order):
    h = wavelet.daubechies(order)
    assert len(h) == 2 * order
    assert np.isclose(h.sum(), np.sqrt(2.0))
    assert np.isclose(np.sum(h * h), 1.0)
    # even shifts of the scaling filter are mutually orthogonal
    for shift in range(2, len(h), 2):
        assert abs(np.dot(h[shift:], h[:-shift])) < 1e-9


@pytest.mark.parametrize("order", [2, 4, 8])
def test_vanishing_moments(order):
    # the highpass filter annihilates polynomials up to degree order-1
    bank = wavelet.filter_bank(order)
    k = np.arange(len(bank.rec_hi), dtype=np.float64)
    for power in range(order):
        assert abs(np.sum(bank.rec_hi * k**power)) < 1e-6


@pytest.mark.parametrize("n", [16, 17, 100, 255, 256, 1000])
@pytest.mark.parametrize("order", [4, 8])
def test_perfect_reconstruction_one_level(n, order):
    rng = np.random.default_rng(7)
    x = rng.normal(size=n)
    bank = wavelet.filter_bank(order)
    a, d = wavelet.dwt(x, bank)
    back = wavelet.idwt(a, d, n, bank)
    assert np.max(np.abs(back - x)) < 1e-9


@pytest.mark.parametrize("n,levels", [(16, 4), (100, 3), (256, 4), (3000, 4), (999, 5)])
def test_perfect_reconstruction_multi_level(n, levels):
    rng = np.random.default_rng(11)
    x = rng.normal(size=n)
    for order in (4, 8):
        a, details, lengths = wavelet.wavedec(x, levels, order)
        back = wavelet.waverec(a, details, lengths, order)
        assert np.max(np.abs(back - x)) < 1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=16, max_value=400), st.integers(min_value=0, max_value=2**32 - 1))
def test_parseval_energy_identity(n, seed):
    x = np.random.default_rng(seed).normal(size=n)
    a, details, _ = wavelet.wavedec(x, 4, order=8)
    coeff_energy = np.sum(a * a) + sum(np.sum(d * d) for d in details)
    assert np.isclose(coeff_energy, np.sum(x * x), rtol=1e-10, atol=1e-12)


def test_soft_threshold_shrinks_toward_zero():
    c = np.array([-3.0, -0.5, 0.0, 0.4, 2.0])
    out = wavelet.soft_threshold(c, 1.0)
    assert np.allclose(out, [-2.0, 0.0, 0.0, 0.0, 1.0])
    assert np.all(np.abs(out) <= np.abs(c))


def test_universal_threshold_matches_formula():
    # sigma * sqrt(2 ln n), checked against a direct evaluation
    assert np.isclose(wavelet.universal_threshold(2.0, 1000), 2.0 * np.sqrt(2 * np.log(1000)))
    assert wavelet.universal_threshold(1.0, 1) == 0.0


def test_mad_sigma_of_known_noise():
    rng = np.random.default_rng(3)
    x = rng.normal(scale=0.7, size=20000)
    _, d = wavelet.dwt(x, wavelet.filter_bank(4))
    # finest details of white noise keep the noise scale
    assert abs(wavelet.mad_sigma(d) - 0.7) < 0.05


def test_shrink_reduces_noise_energy():
    rng = np.random.default_rng(9)
    t = np.arange(2000) / 100.0
    clean = np.sin(2 * np.pi * 0.7 * t)
    noisy = clean + rng.normal(0, 0.4, len(t))
    out = wavelet.shrink(noisy, 3, 8)
    assert np.mean((out - clean) ** 2) < np.mean((noisy - clean) ** 2)
