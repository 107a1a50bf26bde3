"""GMI/NGMI, FEC overhead, pilot overhead, net rate accounting."""

import numpy as np
import pytest

from combdsp.errors import ParameterError, UnsupportedOperatingPointError
from combdsp.metrics import (align_scale, est_noise_var, fec_oh, gain_pct, gmi,
                             gmi_awgn_quadrature, header_poh, net_rate, ngmi,
                             ngmi_from_fec_oh)
from combdsp.sigkit import make_constellation, map_bits


def _awgn_symbols(fmt, snr_db, n, seed):
    spec = make_constellation(fmt)
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, size=n * spec.bits_per_symbol)
    tx = map_bits(bits, spec)
    sigma2 = 10 ** (-snr_db / 10)
    y = tx + (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * np.sqrt(sigma2 / 2)
    return spec, bits, y, sigma2


@pytest.mark.parametrize("fmt,snr_db", [("16qam", 15.0), ("16qam", 22.0),
                                        ("16qam", 30.0), ("64qam", 15.0),
                                        ("64qam", 22.0), ("64qam", 30.0)])
def test_gmi_matches_quadrature_oracle(fmt, snr_db):
    spec, bits, y, sigma2 = _awgn_symbols(fmt, snr_db, 120_000, 0)
    mc = gmi(y, bits, spec, sigma2)
    oracle = gmi_awgn_quadrature(spec, snr_db)
    assert abs(mc - oracle) < 0.02


def test_gmi_saturates_at_high_snr():
    spec, bits, y, sigma2 = _awgn_symbols("16qam", 40.0, 20_000, 1)
    assert ngmi(y, bits, spec, sigma2) == pytest.approx(1.0, abs=1e-3)


def test_gmi_rejects_bad_sigma():
    spec, bits, y, _ = _awgn_symbols("16qam", 20.0, 100, 2)
    with pytest.raises(ParameterError):
        gmi(y, bits, spec, 0.0)


def test_gmi_rejects_mismatched_bits():
    spec, bits, y, sigma2 = _awgn_symbols("16qam", 20.0, 100, 3)
    with pytest.raises(ParameterError):
        gmi(y, bits[:-4], spec, sigma2)


def test_align_scale_removes_complex_gain():
    rng = np.random.default_rng(4)
    ref = rng.standard_normal(1000) + 1j * rng.standard_normal(1000)
    g = 0.7 * np.exp(0.3j)
    assert np.allclose(align_scale(g * ref, ref), ref)
    assert est_noise_var(align_scale(g * ref, ref), ref) < 1e-25


def test_fec_oh_examples():
    # NGMI 0.92 -> Rc 0.85 -> OH = 0.15/0.85
    assert fec_oh(0.92) == pytest.approx(0.15 / 0.85)
    assert ngmi_from_fec_oh(fec_oh(0.92)) == pytest.approx(0.92)
    # paper-quoted anchor points
    assert ngmi_from_fec_oh(0.175) == pytest.approx(0.921, abs=5e-4)
    assert ngmi_from_fec_oh(0.23) == pytest.approx(0.883, abs=5e-4)


def test_fec_oh_rejects_nonpositive_rate():
    with pytest.raises(UnsupportedOperatingPointError):
        fec_oh(0.05)


def test_header_poh():
    assert header_poh(2**15) == pytest.approx(1024 / (2**15 - 1024))
    assert header_poh(2**17) == pytest.approx(1024 / (2**17 - 1024))


def test_net_rate_monotone_in_poh():
    r, mean = net_rate(0.9, np.array([0.02, 0.04]))
    assert r[0] > r[1]
    assert mean == pytest.approx(np.mean(r))


def test_net_rate_sparser_pilots_raise_rate_at_equal_ngmi():
    """With equal NGMI, reducing pilot overhead on two of four channels wins."""
    poh_ind = np.full(4, header_poh(2**15) + 1 / 31)
    poh_drc = poh_ind.copy()
    poh_drc[1:3] = header_poh(2**15) + 1 / 543
    _, r_ind = net_rate(0.9, poh_ind)
    _, r_drc = net_rate(0.9, poh_drc)
    assert gain_pct(r_drc, r_ind) == pytest.approx(1.47, abs=0.05)


def test_gain_pct_identity():
    assert gain_pct(0.5, 0.5) == 0.0
