"""Physical channel: power bookkeeping, fiber propagation, amplification, demux."""

import numpy as np
import pytest
from scipy import constants as sc

from combdsp.combsrc import CombSpec, PhaseTrack, gen_comb_phases
from combdsp.errors import ParameterError
from combdsp.linkchan import (AmpParams, FieldGrid, FiberParams, apply_cd,
                              ase_psd_w_hz, awgn_load, channel_offsets_hz,
                              demux_rx, dump_waveform, edfa, load_waveform,
                              modulate_mux, ssfm_span, _gaussian_bpf)
from combdsp.sigkit import make_constellation, map_bits

FS = 1080e9
RS = 135e9


def _streams(n_sym, n_ch, seed=0):
    rng = np.random.default_rng(seed)
    spec = make_constellation("qpsk")
    return [np.vstack([map_bits(rng.integers(0, 2, 2 * n_sym), spec)
                       for _ in range(2)]) for _ in range(n_ch)]


def _zero_tracks(n, n_ch):
    return [PhaseTrack(np.zeros(n), FS, k) for k in range(n_ch)]


def test_single_channel_power_bookkeeping():
    """One channel at 0 dBm measures ~1 mW on the grid."""
    comb = CombSpec(n_lines=1, scale_factors=(1.0,))
    n_sym = 4096
    field = modulate_mux(_streams(n_sym, 1), _zero_tracks(n_sym * 8, 1),
                         0.0, FS, RS, comb)
    p_dbm = 10 * np.log10(field.power_w() / 1e-3)
    assert abs(p_dbm) < 0.05


def test_four_channel_total_power():
    """Four carriers at 3 dBm sum to ~9.03 dBm."""
    comb = CombSpec()
    n_sym = 4096
    field = modulate_mux(_streams(n_sym, 4), _zero_tracks(n_sym * 8, 4),
                         3.0, FS, RS, comb)
    p_dbm = 10 * np.log10(field.power_w() / 1e-3)
    assert p_dbm == pytest.approx(3.0 + 10 * np.log10(4), abs=0.1)


def test_attenuation_bookkeeping():
    """alpha=0.2 dB/km over 80 km, linear fiber: output 16 dB below input."""
    rng = np.random.default_rng(1)
    field = FieldGrid(rng.standard_normal((2, 2**14)) * 0.01 + 0j, FS)
    fiber = FiberParams(gamma_w_km=0.0)
    out = ssfm_span(field, fiber, step_km=1.0)
    drop = 10 * np.log10(field.power_w() / out.power_w())
    assert drop == pytest.approx(16.0, abs=0.01)


def test_ssfm_linear_lossless_equals_analytic_cd():
    rng = np.random.default_rng(2)
    field = FieldGrid(rng.standard_normal((2, 2**14))
                      + 1j * rng.standard_normal((2, 2**14)), FS)
    fiber = FiberParams(alpha_db_km=0.0, gamma_w_km=0.0)
    out = ssfm_span(field, fiber, step_km=10.0)
    ref = apply_cd(field, fiber.beta2_s2_m, fiber.span_km * 1e3)
    rel = np.linalg.norm(out.pol - ref.pol) / np.linalg.norm(ref.pol)
    assert rel < 1e-8


def test_ssfm_rejects_oversized_step():
    field = FieldGrid(np.zeros((2, 64), dtype=complex), FS)
    with pytest.raises(ParameterError):
        ssfm_span(field, FiberParams(), step_km=200.0)


def test_ase_accumulates_linearly():
    """30 amplifier passes with signal off: noise power ~ 30x one pass (1%)."""
    nu = sc.c / 1550e-9
    amp = AmpParams(gain_db=0.0)  # unit gain isolates added noise
    n = 2**16
    one = edfa(FieldGrid(np.zeros((2, n), dtype=complex), FS), amp, nu,
               np.random.default_rng(3))
    # expectation check against the analytic PSD, then linear accumulation
    expect_1 = 2 * ase_psd_w_hz(amp, nu) * FS  # both pols
    field = FieldGrid(np.zeros((2, n), dtype=complex), FS)
    for span in range(30):
        field = edfa(field, amp, nu, np.random.default_rng(100 + span))
    assert one.power_w() == pytest.approx(expect_1, rel=0.02)
    assert field.power_w() == pytest.approx(30 * expect_1, rel=0.01)


def test_edfa_gain():
    rng = np.random.default_rng(4)
    field = FieldGrid(rng.standard_normal((2, 2**12)) * 1.0 + 0j, FS)
    out = edfa(field, AmpParams(gain_db=16.0, nf_db=-np.inf), sc.c / 1550e-9,
               np.random.default_rng(5))
    assert 10 * np.log10(out.power_w() / field.power_w()) == pytest.approx(16.0, abs=1e-6)


def test_awgn_load_sets_symbol_band_snr():
    comb = CombSpec()
    n_sym = 2**13
    clean = modulate_mux(_streams(n_sym, 4), _zero_tracks(n_sym * 8, 4),
                         3.0, FS, RS, comb)
    target = 25.0
    noisy = awgn_load(clean, target, RS, 4, np.random.default_rng(6))
    noise = noisy.pol - clean.pol
    f = np.fft.fftfreq(clean.n, 1 / FS)
    band = np.abs(f - channel_offsets_hz(comb)[1]) <= RS / 2
    p_ch = np.mean(np.abs(clean.pol[0]) ** 2) / 4
    p_n = np.sum(np.abs(np.fft.fft(noise[0])) ** 2 / clean.n**2 * band)
    assert 10 * np.log10(p_ch / p_n) == pytest.approx(target, abs=0.1)


def test_gaussian_bpf_neighbor_attenuation():
    """150 GHz-wide Gaussian at the neighbor's center (150 GHz off): -12.04 dB."""
    h = _gaussian_bpf(2**16, FS, 150e9, 0.0)
    f = np.fft.fftfreq(2**16, 1 / FS)
    idx = np.argmin(np.abs(f - 150e9))
    assert 20 * np.log10(h[idx]) == pytest.approx(-12.04, abs=0.02)
    idx3 = np.argmin(np.abs(f - 75e9))
    assert 20 * np.log10(h[idx3]) == pytest.approx(-3.01, abs=0.02)


def test_demux_rx_rejects_bad_channel():
    field = FieldGrid(np.zeros((2, 64), dtype=complex), FS)
    with pytest.raises(ParameterError):
        demux_rx(field, 7, np.ones(64), CombSpec(), RS)


def test_demux_output_rate():
    comb = CombSpec()
    n_sym = 1024
    field = modulate_mux(_streams(n_sym, 4), _zero_tracks(n_sym * 8, 4),
                         3.0, FS, RS, comb)
    lo = np.ones(field.n, dtype=complex)
    wave, rate = demux_rx(field, 0, lo, comb, RS, adc_sps=2)
    assert rate == 2 * RS
    assert wave.shape == (2, n_sym * 2)


def test_waveform_dump_load_roundtrip(tmp_path):
    rng = np.random.default_rng(7)
    wave = rng.standard_normal((2, 256)) + 1j * rng.standard_normal((2, 256))
    path = tmp_path / "dump.cf32"
    dump_waveform(wave, 270e9, 1.5e6, path)
    back, rate, off = load_waveform(path)
    assert rate == 270e9 and off == 1.5e6
    assert np.max(np.abs(back - wave)) < 1e-6  # float32 quantization
