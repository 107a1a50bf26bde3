"""Physical channel: comb-line multiplexing, noise loading, nonlinear fiber spans,
amplification, optical demux, coherent detection, electrical filtering, ADC."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import constants as sc
from scipy import fft as sfft
from scipy import signal as ssig

from .combsrc import CombSpec, PhaseTrack, carrier_rotation
from .errors import ConfigurationError, NumericalError, ParameterError
from .sigkit import SymbolFrame, resample, rrc_filter


@dataclass
class FieldGrid:
    """Dual-polarization complex baseband field on a uniform time grid (sqrt(W))."""

    pol: np.ndarray  # (2, n) complex128
    sample_rate: float
    ref_freq_offset: float = 0.0

    @property
    def n(self) -> int:
        return self.pol.shape[1]

    def power_w(self) -> float:
        return float(np.mean(np.abs(self.pol[0]) ** 2 + np.abs(self.pol[1]) ** 2))


@dataclass(frozen=True)
class FiberParams:
    alpha_db_km: float = 0.2
    dispersion_ps_nm_km: float = 20.0
    gamma_w_km: float = 1.3  # 1/(W km); standard SSMF value
    span_km: float = 80.0
    center_wavelength_nm: float = 1550.0

    @property
    def beta2_s2_m(self) -> float:
        lam = self.center_wavelength_nm * 1e-9
        D = self.dispersion_ps_nm_km * 1e-6  # s/m^2
        return -D * lam**2 / (2 * np.pi * sc.c)

    @property
    def alpha_m(self) -> float:
        """Power attenuation coefficient in 1/m."""
        return self.alpha_db_km / (10 * np.log10(np.e)) / 1e3

    @property
    def gamma_w_m(self) -> float:
        return self.gamma_w_km / 1e3


@dataclass(frozen=True)
class AmpParams:
    gain_db: float = 16.0
    nf_db: float = 5.5


def channel_offsets_hz(comb: CombSpec) -> np.ndarray:
    """Channel center frequencies relative to the band center."""
    return np.array([comb.rel_index(k) * comb.fsr_hz for k in range(comb.n_lines)])


def modulate_mux(frames: list[np.ndarray], tx_tracks: list[PhaseTrack],
                 launch_power_dbm: float, sample_rate: float, symbol_rate: float,
                 comb: CombSpec, roll_off: float = 0.1) -> FieldGrid:
    """RRC-shape each channel, rotate by its Tx line phase, shift to the comb grid, sum.

    `frames` holds per-channel (2, n_sym) symbol streams (frames plus guards
    already concatenated).
    """
    oversample = int(round(sample_rate / symbol_rate))
    offs = channel_offsets_hz(comb)
    occupied = np.max(np.abs(offs)) + (1 + roll_off) * symbol_rate / 2
    if occupied > sample_rate / 2:
        raise ConfigurationError("occupied band exceeds the simulation grid")
    p_carrier = 1e-3 * 10 ** (launch_power_dbm / 10)
    n = frames[0].shape[1] * oversample
    t = np.arange(n) / sample_rate
    field = np.zeros((2, n), dtype=np.complex128)
    for k, (sym, track) in enumerate(zip(frames, tx_tracks)):
        wave = rrc_filter(sym, roll_off, oversample)
        wave *= carrier_rotation(track, k, comb, is_lo=False)
        scale = np.sqrt(p_carrier / np.mean(np.abs(wave) ** 2) / 2)
        wave *= scale * np.exp(2j * np.pi * offs[k] * t)
        field += wave
    return FieldGrid(field, sample_rate)


def awgn_load(field: FieldGrid, per_stage_snr_db: float, symbol_rate: float,
              n_channels: int, rng: np.random.Generator) -> FieldGrid:
    """Add white circular Gaussian noise so each channel's SNR in the symbol-rate
    bandwidth (per polarization) equals the stage target."""
    if np.isinf(per_stage_snr_db):
        return FieldGrid(field.pol.copy(), field.sample_rate, field.ref_freq_offset)
    snr = 10 ** (per_stage_snr_db / 10)
    out = field.pol.copy()
    for p in range(2):
        p_ch = np.mean(np.abs(field.pol[p]) ** 2) / n_channels
        var = p_ch / snr * (field.sample_rate / symbol_rate)
        noise = rng.standard_normal((2, field.n)) * np.sqrt(var / 2)
        out[p] += noise[0] + 1j * noise[1]
    return FieldGrid(out, field.sample_rate, field.ref_freq_offset)


def dispersion_operator(n: int, sample_rate: float, beta2_s2_m: float,
                        length_m: float) -> np.ndarray:
    """All-pass chromatic-dispersion transfer function exp(j*(beta2/2)*w^2*L)."""
    w = 2 * np.pi * sfft.fftfreq(n, d=1.0 / sample_rate)
    return np.exp(0.5j * beta2_s2_m * length_m * w**2)


def apply_cd(field: FieldGrid, beta2_s2_m: float, length_m: float) -> FieldGrid:
    """Analytic linear chromatic dispersion (no loss, no nonlinearity)."""
    H = dispersion_operator(field.n, field.sample_rate, beta2_s2_m, length_m)
    out = sfft.ifft(sfft.fft(field.pol, axis=1) * H, axis=1)
    return FieldGrid(out, field.sample_rate, field.ref_freq_offset)


def ssfm_span(field: FieldGrid, fiber: FiberParams, step_km: float = 0.5) -> FieldGrid:
    """Symmetric split-step integration of the Manakov equation over one span.

    Dispersion in the frequency domain, attenuation per step, and a nonlinear
    phase rotation with the 8/9 Manakov factor using the step's effective length.
    """
    n_steps = int(round(fiber.span_km / step_km))
    if n_steps < 1:
        raise ParameterError("step larger than span")
    dz = fiber.span_km * 1e3 / n_steps
    alpha = fiber.alpha_m
    l_eff = (1 - np.exp(-alpha * dz)) / alpha if alpha > 0 else dz
    g89 = (8.0 / 9.0) * fiber.gamma_w_m
    loss_amp = np.exp(-alpha * dz / 2)
    h_half = dispersion_operator(field.n, field.sample_rate, fiber.beta2_s2_m, dz / 2)
    h_full = h_half * h_half
    e = sfft.fft(field.pol, axis=1)
    e *= h_half
    e = sfft.ifft(e, axis=1)
    for step in range(n_steps):
        p = np.abs(e[0]) ** 2 + np.abs(e[1]) ** 2
        e *= np.exp(1j * g89 * l_eff * p)
        e *= loss_amp
        e = sfft.fft(e, axis=1)
        e *= h_full if step < n_steps - 1 else h_half
        e = sfft.ifft(e, axis=1)
    if not np.all(np.isfinite(e)):
        raise NumericalError("NaN/Inf in SSFM output")
    return FieldGrid(e, field.sample_rate, field.ref_freq_offset)


def edfa(field: FieldGrid, amp: AmpParams, center_freq_hz: float,
         rng: np.random.Generator) -> FieldGrid:
    """Flat-gain EDFA with ASE of PSD (G-1)*n_sp*h*nu per polarization."""
    g = 10 ** (amp.gain_db / 10)
    n_sp = 10 ** (amp.nf_db / 10) / 2
    s_ase = (g - 1) * n_sp * sc.h * center_freq_hz  # W/Hz per pol
    var = s_ase * field.sample_rate
    out = field.pol * np.sqrt(g)
    noise = rng.standard_normal((2, 2, field.n)) * np.sqrt(var / 2)
    out = out + (noise[:, 0] + 1j * noise[:, 1])
    return FieldGrid(out, field.sample_rate, field.ref_freq_offset)


def ase_psd_w_hz(amp: AmpParams, center_freq_hz: float) -> float:
    g = 10 ** (amp.gain_db / 10)
    n_sp = 10 ** (amp.nf_db / 10) / 2
    return (g - 1) * n_sp * sc.h * center_freq_hz


def _bessel_response(n: int, sample_rate: float, cutoff_hz: float,
                     order: int = 3) -> np.ndarray:
    b, a = ssig.bessel(order, 2 * np.pi * cutoff_hz, "lowpass", analog=True, norm="mag")
    w = 2 * np.pi * sfft.fftfreq(n, d=1.0 / sample_rate)
    _, h = ssig.freqs(b, a, worN=w)
    return h


def _gaussian_bpf(n: int, sample_rate: float, bw_3db_hz: float,
                  center_hz: float) -> np.ndarray:
    f = sfft.fftfreq(n, d=1.0 / sample_rate)
    return np.exp(-np.log(2) / 2 * ((f - center_hz) / (bw_3db_hz / 2)) ** 2)


def demux_rx(field: FieldGrid, channel_k: int, lo_rotation: np.ndarray,
             comb: CombSpec, symbol_rate: float, adc_sps: int = 2,
             bpf_bw_hz: float = 150e9, elec_bw_hz: float = 70e9) -> tuple[np.ndarray, float]:
    """Gaussian optical demux, ideal coherent mixing with the LO line, 3rd-order
    Bessel electrical filtering, and ADC resampling to `adc_sps` samples/symbol.

    Returns (waveform (2, n2), output sample rate).
    """
    if not 0 <= channel_k < comb.n_lines:
        raise ParameterError("channel index out of range")
    fs = field.sample_rate
    n = field.n
    f_k = channel_offsets_hz(comb)[channel_k]
    spec = sfft.fft(field.pol, axis=1)
    spec *= _gaussian_bpf(n, fs, bpf_bw_hz, f_k)
    wave = sfft.ifft(spec, axis=1)
    t = np.arange(n) / fs
    wave *= np.exp(-2j * np.pi * f_k * t) * np.conj(lo_rotation)
    spec = sfft.fft(wave, axis=1)
    spec *= _bessel_response(n, fs, elec_bw_hz)
    wave = sfft.ifft(spec, axis=1)
    out_rate = adc_sps * symbol_rate
    return resample(wave, fs, out_rate), out_rate


def dump_waveform(wave: np.ndarray, sample_rate: float, ref_freq_offset: float,
                  path: str | Path) -> None:
    """Write a little-endian interleaved complex-float32 dump with a text sidecar."""
    path = Path(path)
    inter = np.empty((wave.shape[1], 2 * wave.shape[0]), dtype="<f4")
    for p in range(wave.shape[0]):
        inter[:, 2 * p] = wave[p].real
        inter[:, 2 * p + 1] = wave[p].imag
    inter.tofile(path)
    path.with_suffix(path.suffix + ".txt").write_text(
        f"sample_rate: {sample_rate!r}\nref_freq_offset: {ref_freq_offset!r}\n"
        f"layout: interleaved complex float32 little-endian, pol-major per sample\n"
        f"n_pol: {wave.shape[0]}\nn_samples: {wave.shape[1]}\n")


def load_waveform(path: str | Path) -> tuple[np.ndarray, float, float]:
    path = Path(path)
    meta = dict(line.split(": ", 1) for line in
                path.with_suffix(path.suffix + ".txt").read_text().strip().splitlines())
    n_pol = int(meta["n_pol"])
    raw = np.fromfile(path, dtype="<f4").reshape(-1, 2 * n_pol)
    wave = np.empty((n_pol, raw.shape[0]), dtype=np.complex128)
    for p in range(n_pol):
        wave[p] = raw[:, 2 * p] + 1j * raw[:, 2 * p + 1]
    return wave, float(meta["sample_rate"]), float(meta["ref_freq_offset"])
