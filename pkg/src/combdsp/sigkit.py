"""Constellations, bit mapping, frame construction, pulse shaping, rate conversion."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import fft as sfft
from scipy import signal as ssig

from .errors import InputSizeError, ParameterError
from .rngstreams import known_sequence_rng

_FORMATS = {"qpsk": 2, "16qam": 4, "64qam": 6}


def _gray(i: np.ndarray | int):
    return i ^ (i >> 1)


def _axis_levels(bits_per_axis: int) -> np.ndarray:
    """Amplitude level for each Gray-coded axis label (label used as index)."""
    L = 1 << bits_per_axis
    idx = np.arange(L)
    levels = np.empty(L)
    levels[_gray(idx)] = 2 * idx - (L - 1)
    return levels


@dataclass(frozen=True)
class ConstellationSpec:
    """Square QAM constellation with per-axis Gray labeling, unit average energy."""

    name: str
    points: np.ndarray  # (M,) complex, indexed by integer label (MSB first, I bits then Q bits)
    bits_per_symbol: int
    scale: float  # divisor applied to the integer lattice

    @property
    def labels(self) -> np.ndarray:
        """(M, m) bit array, row i = binary of label i, MSB first."""
        m = self.bits_per_symbol
        i = np.arange(len(self.points))
        return (i[:, None] >> np.arange(m - 1, -1, -1)) & 1

    @property
    def radii(self) -> np.ndarray:
        return np.unique(np.round(np.abs(self.points), 12))


def make_constellation(fmt: str) -> ConstellationSpec:
    fmt = fmt.lower().replace("-", "")
    if fmt in ("4qam", "qpskpilot"):
        fmt = "qpsk"
    if fmt not in _FORMATS:
        raise ParameterError(f"unknown modulation format {fmt!r}")
    m = _FORMATS[fmt]
    mb = m // 2
    lv = _axis_levels(mb)
    ii, qq = np.meshgrid(np.arange(1 << mb), np.arange(1 << mb), indexing="ij")
    pts = lv[ii] + 1j * lv[qq]  # label = (i_label << mb) | q_label
    scale = np.sqrt(np.mean(np.abs(pts) ** 2))
    return ConstellationSpec(fmt, (pts / scale).reshape(-1), m, scale)


def map_bits(bits: np.ndarray, spec: ConstellationSpec) -> np.ndarray:
    """Map a 0/1 sequence to Gray-labeled constellation points, m bits per symbol."""
    bits = np.asarray(bits, dtype=np.int64).reshape(-1)
    m = spec.bits_per_symbol
    if bits.size % m:
        raise InputSizeError(f"bit count {bits.size} not divisible by {m}")
    groups = bits.reshape(-1, m)
    labels = groups @ (1 << np.arange(m - 1, -1, -1))
    return spec.points[labels]


def hard_decision(symbols: np.ndarray, spec: ConstellationSpec) -> np.ndarray:
    """Minimum-distance decision, returned as constellation points."""
    mb = spec.bits_per_symbol // 2
    L = 1 << mb
    lat_i = np.clip(np.round((symbols.real * spec.scale + (L - 1)) / 2), 0, L - 1)
    lat_q = np.clip(np.round((symbols.imag * spec.scale + (L - 1)) / 2), 0, L - 1)
    return ((2 * lat_i - (L - 1)) + 1j * (2 * lat_q - (L - 1))) / spec.scale


def demap_bits(symbols: np.ndarray, spec: ConstellationSpec) -> np.ndarray:
    """Hard-decision demapping back to bits (inverse of map_bits on clean symbols)."""
    mb = spec.bits_per_symbol // 2
    L = 1 << mb
    lat_i = np.clip(np.round((symbols.real * spec.scale + (L - 1)) / 2), 0, L - 1).astype(np.int64)
    lat_q = np.clip(np.round((symbols.imag * spec.scale + (L - 1)) / 2), 0, L - 1).astype(np.int64)
    labels = (_gray(lat_i) << mb) | _gray(lat_q)
    m = spec.bits_per_symbol
    return ((labels[:, None] >> np.arange(m - 1, -1, -1)) & 1).reshape(-1)


@dataclass(frozen=True)
class PilotPlan:
    """Pilot-burst layout: bursts of `burst_blocks` pilot-bearing 32-symbol blocks
    separated by `n_r` pilot-free blocks; one pilot at the start of each bearing block."""

    n_r: int
    block_len: int = 32
    burst_blocks: int = 4
    header_len: int = 1024

    def __post_init__(self):
        if self.n_r < 0:
            raise ParameterError("n_r must be >= 0")

    @property
    def cr_overhead(self) -> Fraction:
        """Pilots / non-pilot symbols over one layout period (exact)."""
        period = self.burst_blocks + self.n_r
        return Fraction(self.burst_blocks, period * self.block_len - self.burst_blocks)

    def pilot_blocks(self, n_blocks: int) -> np.ndarray:
        b = np.arange(n_blocks)
        return b[(b % (self.burst_blocks + self.n_r)) < self.burst_blocks]

    def layout(self, frame_len: int):
        """(header_idx, pilot_idx, payload_idx) partitioning [0, frame_len)."""
        if frame_len <= self.header_len:
            raise ParameterError("frame shorter than header")
        n_blocks = (frame_len - self.header_len) // self.block_len
        header = np.arange(self.header_len)
        pilots = self.header_len + self.pilot_blocks(n_blocks) * self.block_len
        mask = np.zeros(frame_len, dtype=bool)
        mask[header] = True
        mask[pilots] = True
        payload = np.flatnonzero(~mask)
        return header, pilots, payload


@dataclass
class SymbolFrame:
    """Dual-polarization symbol frame with header / CR-pilot / payload layout."""

    symbols: np.ndarray  # (2, frame_len) complex
    header_idx: np.ndarray
    pilot_idx: np.ndarray
    payload_idx: np.ndarray
    pilot_vals: np.ndarray  # (2, n_pilots)
    header_vals: np.ndarray  # (2, header_len)
    payload_tx: np.ndarray  # (2, n_payload)
    tx_bits: np.ndarray  # (2, n_payload * m)
    plan: PilotPlan
    spec: ConstellationSpec

    @property
    def frame_len(self) -> int:
        return self.symbols.shape[1]


_qpsk = make_constellation("qpsk")


def training_header(header_len: int = 1024) -> np.ndarray:
    """Fixed pseudo-random dual-pol QPSK header, identical across channels and runs."""
    rng = known_sequence_rng(0)
    bits = rng.integers(0, 2, size=2 * header_len * 2)
    return map_bits(bits, _qpsk).reshape(2, header_len)


def pilot_values(n_pilots: int) -> np.ndarray:
    """Fixed known QPSK CR pilot values (dual pol), identical across channels and runs."""
    rng = known_sequence_rng(1)
    bits = rng.integers(0, 2, size=2 * n_pilots * 2)
    return map_bits(bits, _qpsk).reshape(2, n_pilots)


def build_frame(payload_bits: np.ndarray, plan: PilotPlan, spec: ConstellationSpec,
                frame_len: int) -> SymbolFrame:
    """Assemble one frame from payload bits plus the known header and CR pilots."""
    header_idx, pilot_idx, payload_idx = plan.layout(frame_len)
    m = spec.bits_per_symbol
    payload_bits = np.asarray(payload_bits)
    if payload_bits.shape != (2, len(payload_idx) * m):
        raise InputSizeError(
            f"payload bits shape {payload_bits.shape}, expected (2, {len(payload_idx) * m})")
    hdr = training_header(plan.header_len)
    pil = pilot_values(len(pilot_idx))
    sym = np.zeros((2, frame_len), dtype=np.complex128)
    pay = np.vstack([map_bits(payload_bits[p], spec) for p in range(2)])
    for p in range(2):
        sym[p, header_idx] = hdr[p]
        sym[p, pilot_idx] = pil[p]
        sym[p, payload_idx] = pay[p]
    return SymbolFrame(sym, header_idx, pilot_idx, payload_idx, pil, hdr, pay,
                       payload_bits, plan, spec)


def rrc_frequency_response(n: int, oversample: int, roll_off: float) -> np.ndarray:
    """Root-raised-cosine magnitude response on the length-n FFT grid.

    Frequencies are in units of the symbol rate: the grid spans `oversample`
    symbol rates. Normalized so the shape->matched cascade is Nyquist.
    """
    if not (0 < roll_off <= 1):
        raise ParameterError("roll_off must be in (0, 1]")
    f = np.fft.fftfreq(n, d=1.0 / oversample)  # in symbol-rate units
    af = np.abs(f)
    h2 = np.zeros(n)
    flat = af <= (1 - roll_off) / 2
    h2[flat] = 1.0
    edge = (~flat) & (af <= (1 + roll_off) / 2)
    h2[edge] = 0.5 * (1 + np.cos(np.pi / roll_off * (af[edge] - (1 - roll_off) / 2)))
    return np.sqrt(h2 * oversample)


def rrc_filter(symbols: np.ndarray, roll_off: float, oversample: int) -> np.ndarray:
    """RRC pulse shaping at `oversample` samples per symbol (circular convolution)."""
    if oversample < 2:
        raise ParameterError("oversample must be >= 2")
    symbols = np.asarray(symbols, dtype=np.complex128)
    n_sym = symbols.shape[-1]
    up = np.zeros(symbols.shape[:-1] + (n_sym * oversample,), dtype=np.complex128)
    up[..., ::oversample] = symbols
    H = rrc_frequency_response(n_sym * oversample, oversample, roll_off)
    return sfft.ifft(sfft.fft(up, axis=-1) * H, axis=-1)


def rrc_matched(waveform: np.ndarray, roll_off: float, oversample: int) -> np.ndarray:
    """Matched RRC filter plus decimation to 1 sample per symbol."""
    waveform = np.asarray(waveform, dtype=np.complex128)
    n = waveform.shape[-1]
    H = rrc_frequency_response(n, oversample, roll_off)
    filtered = sfft.ifft(sfft.fft(waveform, axis=-1) * H, axis=-1)
    return filtered[..., ::oversample]


def resample(waveform: np.ndarray, from_rate: float, to_rate: float) -> np.ndarray:
    """Band-limited rational resampling (FFT method). Identity is bit-exact."""
    if from_rate <= 0 or to_rate <= 0:
        raise ParameterError("rates must be positive")
    if from_rate == to_rate:
        return waveform.copy()
    waveform = np.asarray(waveform)
    n = waveform.shape[-1]
    n2 = n * Fraction(to_rate / from_rate).limit_denominator(10**6)
    if n2.denominator != 1:
        raise ParameterError("length incompatible with rate ratio")
    return ssig.resample(waveform, int(n2), axis=-1)
