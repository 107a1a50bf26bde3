"""Self-contained property suite: numerical invariants of the physics and DSP
blocks, each reported as one pass/fail line. Designed to finish in minutes."""

from __future__ import annotations

import numpy as np
from scipy import stats

from .combsrc import CombSpec, gen_comb_phases, gen_wiener
from .cpr import drc_reconstruct, pa_cpr_light
from .linkchan import (AmpParams, FieldGrid, FiberParams, apply_cd, awgn_load,
                       channel_offsets_hz, modulate_mux)
from .combsrc import PhaseTrack
from .metrics import gmi, gmi_awgn_quadrature
from .rxdsp import cdc
from .sigkit import PilotPlan, make_constellation, map_bits
from fractions import Fraction

SYMBOL_RATE = 135e9


def _rel_l2(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def check_ssfm_linear_limit():
    """SSFM with zero loss and zero nonlinearity equals the analytic CD filter."""
    from .linkchan import ssfm_span

    rng = np.random.default_rng(1)
    n = 2**16
    fs = 1080e9
    field = FieldGrid((rng.standard_normal((2, 2, n)) * [[[1]], [[1j]]]).sum(0) * 0.01, fs)
    fiber = FiberParams(alpha_db_km=0.0, gamma_w_km=0.0)
    out = ssfm_span(field, fiber, step_km=10.0)
    ref = apply_cd(field, fiber.beta2_s2_m, fiber.span_km * 1e3)
    err = _rel_l2(out.pol, ref.pol)
    return err < 1e-8, f"relative L2 {err:.2e} (< 1e-8)"


def check_cdc_inverts_cd():
    """Receiver CD compensation is the exact inverse of analytic fiber CD."""
    rng = np.random.default_rng(2)
    n = 2**16
    fs = 270e9
    fiber = FiberParams()
    dist_km = 800.0
    wave = rng.standard_normal((2, n)) + 1j * rng.standard_normal((2, n))
    field = apply_cd(FieldGrid(wave, fs), fiber.beta2_s2_m, dist_km * 1e3)
    back = cdc(field.pol, fs, fiber.dispersion_ps_nm_km * dist_km)
    err = _rel_l2(back, wave)
    return err < 1e-10, f"relative L2 {err:.2e} (< 1e-10)"


def check_wiener_variance():
    """Wiener increment variance sits inside the chi-squared 99% interval."""
    n = 10**6
    lw = 200e3
    phi = gen_wiener(lw, SYMBOL_RATE, n, np.random.default_rng(3))
    inc = np.diff(phi)
    sigma2 = 2 * np.pi * lw / SYMBOL_RATE
    stat = np.sum(inc**2) / sigma2
    lo, hi = stats.chi2.ppf([0.005, 0.995], len(inc))
    ok = lo <= stat <= hi
    return ok, f"chi2 stat {stat:.1f} in [{lo:.1f}, {hi:.1f}] over {len(inc)} increments"


def check_comb_anticorrelation():
    """Symmetric comb lines carry exactly opposite line-dependent phase."""
    spec = CombSpec()
    n = 10**5
    rc, rl = np.random.default_rng(4), np.random.default_rng(5)
    tracks = gen_comb_phases(spec, SYMBOL_RATE, n, rc, rl)
    phi_c = gen_wiener(spec.common_lw_hz, SYMBOL_RATE, n, np.random.default_rng(4))
    phi_d = gen_wiener(spec.line_lw_hz, SYMBOL_RATE, n, np.random.default_rng(5))
    ok = True
    for k_lo, k_hi in ((0, 3), (1, 2)):
        s = spec.scale_factors[k_hi]
        dev_hi = s * phi_d
        dev_lo = spec.scale_factors[k_lo] * phi_d
        ok &= np.array_equal(dev_lo, -dev_hi)
        ok &= np.array_equal(tracks[k_lo].samples, phi_c + dev_lo)
        ok &= np.array_equal(tracks[k_hi].samples, phi_c + dev_hi)
    return ok, "line deviations are exact negatives for both symmetric pairs"


def check_gmi_oracle():
    """Monte-Carlo GMI matches the independent quadrature oracle within 0.02 bits."""
    rng = np.random.default_rng(6)
    n = 150_000
    worst = 0.0
    for fmt in ("16qam", "64qam"):
        spec = make_constellation(fmt)
        m = spec.bits_per_symbol
        bits = rng.integers(0, 2, size=n * m)
        tx = map_bits(bits, spec)
        for snr_db in (15.0, 22.0, 30.0):
            sigma2 = 10 ** (-snr_db / 10)
            noise = (rng.standard_normal(n) + 1j * rng.standard_normal(n))
            y = tx + noise * np.sqrt(sigma2 / 2)
            mc = gmi(y, bits, spec, sigma2)
            oracle = gmi_awgn_quadrature(spec, snr_db)
            worst = max(worst, abs(mc - oracle))
    return worst < 0.02, f"worst |MC - quadrature| {worst:.4f} bits (< 0.02)"


def check_poh_exact():
    """Pilot-overhead fractions for the reference layouts are exact."""
    ok = (PilotPlan(0).cr_overhead == Fraction(1, 31)
          and PilotPlan(64).cr_overhead == Fraction(1, 543))
    return ok, f"n_r=0 -> {PilotPlan(0).cr_overhead}, n_r=64 -> {PilotPlan(64).cr_overhead}"


def _circ_delay(x: np.ndarray, tau: float, dt: float) -> np.ndarray:
    n = len(x)
    w = 2 * np.pi * np.fft.fftfreq(n, d=dt)
    return np.fft.ifft(np.fft.fft(x) * np.exp(-1j * w * tau)).real


def _periodic_pn(nb: int, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean periodic random process with Wiener-like 1/f amplitude."""
    amp = np.zeros(nb // 2 + 1)
    amp[1:] = 1.0 / np.arange(1, nb // 2 + 1)
    spec = amp * (rng.standard_normal(nb // 2 + 1)
                  + 1j * rng.standard_normal(nb // 2 + 1))
    spec[0] = 0.0
    phi = np.fft.irfft(spec, nb)
    return phi / np.std(phi) * 0.1


def check_drc_synthetic():
    """Noise-free two-process delay model is recovered on non-regularized bins."""
    fiber = FiberParams()
    beta2_acc = fiber.beta2_s2_m * 2400e3
    offs = channel_offsets_hz(CombSpec())  # +/-225, +/-75 GHz
    taus = beta2_acc * 2 * np.pi * offs
    nb = 2048
    dt = 128 / SYMBOL_RATE
    rng = np.random.default_rng(7)
    phi_p = _periodic_pn(nb, rng)
    phi_q = _periodic_pn(nb, rng)
    phi_a = _circ_delay(phi_p, taus[0], dt) + phi_q
    phi_b = _circ_delay(phi_p, taus[3], dt) + phi_q
    eps = 1e-3
    rec = drc_reconstruct(phi_a, phi_b, dt, taus[0], taus[3],
                          np.array([taus[1], taus[2]]), eps=eps)
    w = 2 * np.pi * np.fft.fftfreq(nb, d=dt)
    keep = np.abs(np.exp(-1j * w * taus[3]) - np.exp(-1j * w * taus[0])) >= eps
    worst = 0.0
    for tau_k, phi_rec in zip((taus[1], taus[2]), rec):
        truth = _circ_delay(phi_p, tau_k, dt) + phi_q
        err_spec = np.fft.fft(phi_rec - truth)
        err = np.fft.ifft(np.where(keep, err_spec, 0.0)).real
        worst = max(worst, float(np.sqrt(np.mean(err**2) / np.mean(truth**2))))
    return worst < 0.05, f"worst RMS error {worst * 100:.2f}% of PN RMS (< 5%)"


def check_hold_lag():
    """Zero-order-hold lag under 1 MHz residual FO at the sparsest pilot layout."""
    fo = 1e6
    plan = PilotPlan(64)
    _, pilot_idx, _ = plan.layout(2**17)
    n = 2**17
    theta = 2 * np.pi * fo * np.arange(n) / SYMBOL_RATE
    symbols = np.exp(1j * theta)
    pilot_vals = np.ones(len(pilot_idx), dtype=complex)
    track, be = pa_cpr_light(symbols, pilot_idx, pilot_vals, plan.burst_blocks)
    steady = slice(int(np.ceil(be.centroids[0])), int(be.centroids[-1]))
    worst = float(np.max(np.abs(theta[steady] - track.phase[steady])))
    expect = 2 * np.pi * fo * (32 * 68 / SYMBOL_RATE)
    ok = abs(worst - expect) / expect < 0.05
    return ok, f"worst lag {worst:.4f} rad vs {expect:.4f} rad (+/-5%)"


def check_b2b_snr():
    """Two equal noise loads realize the 22 dB back-to-back SNR per channel."""
    rng = np.random.default_rng(8)
    comb = CombSpec(common_lw_hz=0.0, line_lw_hz=0.0, fo_hz=0.0, fsr_dev_hz=0.0)
    n_sym = 2**14
    fs = 8 * SYMBOL_RATE
    qpsk = make_constellation("qpsk")
    streams = [np.vstack([map_bits(rng.integers(0, 2, 2 * n_sym), qpsk)
                          for _ in range(2)]) for _ in range(comb.n_lines)]
    zero = [PhaseTrack(np.zeros(n_sym * 8), fs, k) for k in range(comb.n_lines)]
    clean = modulate_mux(streams, zero, 3.0, fs, SYMBOL_RATE, comb)
    stage = 22.0 + 10 * np.log10(2)
    noisy = awgn_load(clean, stage, SYMBOL_RATE, comb.n_lines,
                      np.random.default_rng(9))
    noisy = awgn_load(noisy, stage, SYMBOL_RATE, comb.n_lines,
                      np.random.default_rng(10))
    noise = noisy.pol - clean.pol
    f = np.fft.fftfreq(clean.n, d=1.0 / fs)
    snrs = []
    for p in range(2):
        p_ch = np.mean(np.abs(clean.pol[p]) ** 2) / comb.n_lines
        nf = np.abs(np.fft.fft(noise[p])) ** 2 / clean.n**2
        for f_k in channel_offsets_hz(comb):
            band = np.abs(f - f_k) <= SYMBOL_RATE / 2
            snrs.append(10 * np.log10(p_ch / np.sum(nf[band])))
    mean = float(np.mean(snrs))
    return abs(mean - 22.0) < 0.15, f"measured {mean:.3f} dB (22 +/- 0.15)"


CHECKS = (
    ("ssfm-linear-limit", check_ssfm_linear_limit),
    ("cdc-inverts-cd", check_cdc_inverts_cd),
    ("wiener-increment-variance", check_wiener_variance),
    ("comb-anticorrelation", check_comb_anticorrelation),
    ("gmi-oracle", check_gmi_oracle),
    ("poh-exact", check_poh_exact),
    ("drc-synthetic-oracle", check_drc_synthetic),
    ("hold-lag", check_hold_lag),
    ("b2b-snr-calibration", check_b2b_snr),
)


def run_selftests() -> list[tuple[str, bool, str]]:
    results = []
    for name, fn in CHECKS:
        try:
            passed, detail = fn()
        except Exception as exc:  # a crash is a failure, not an abort
            passed, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append((name, bool(passed), detail))
    return results
