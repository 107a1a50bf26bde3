"""Comb-line carrier phase trajectories: common + line-dependent Wiener noise, FO, FSR deviation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class CombSpec:
    n_lines: int = 4
    fsr_hz: float = 150e9
    common_lw_hz: float = 200e3
    line_lw_hz: float = 1e3
    scale_factors: tuple = (-2.0, -1.0, 1.0, 2.0)
    fo_hz: float = 200e6       # LO only
    fsr_dev_hz: float = 1e6    # LO only

    def __post_init__(self):
        if len(self.scale_factors) != self.n_lines:
            raise ParameterError("scale_factors must have one entry per line")

    def rel_index(self, line_k: int) -> float:
        """Line index offset from the comb center (midpoint of the line set)."""
        return line_k - (self.n_lines - 1) / 2

    def line_fo_hz(self, line_k: int) -> float:
        """Effective LO frequency offset of line k: FO at comb center + FSR-deviation ladder."""
        return self.fo_hz + self.rel_index(line_k) * self.fsr_dev_hz


@dataclass
class PhaseTrack:
    samples: np.ndarray  # radians, uniform grid
    sample_rate: float
    line_index: int = -1


def gen_wiener(linewidth_hz: float, sample_rate: float, n: int,
               rng: np.random.Generator) -> np.ndarray:
    """Wiener phase track: phi[0] = 0, i.i.d. Gaussian increments of
    variance 2*pi*linewidth/sample_rate."""
    if linewidth_hz < 0:
        raise ParameterError("linewidth must be >= 0")
    if n < 1:
        raise ParameterError("n must be >= 1")
    phi = np.zeros(n)
    if linewidth_hz > 0 and n > 1:
        sigma = np.sqrt(2 * np.pi * linewidth_hz / sample_rate)
        np.cumsum(rng.standard_normal(n - 1) * sigma, out=phi[1:])
    return phi


def gen_comb_phases(spec: CombSpec, sample_rate: float, n: int,
                    rng_common: np.random.Generator,
                    rng_line: np.random.Generator) -> list[PhaseTrack]:
    """Per-line phase: common Wiener process plus a single shared line-dependent
    Wiener process scaled by the per-line factors."""
    phi_c = gen_wiener(spec.common_lw_hz, sample_rate, n, rng_common)
    phi_d = gen_wiener(spec.line_lw_hz, sample_rate, n, rng_line)
    return [PhaseTrack(phi_c + s * phi_d, sample_rate, k)
            for k, s in enumerate(spec.scale_factors)]


def carrier_rotation(track: PhaseTrack, line_k: int, spec: CombSpec,
                     is_lo: bool) -> np.ndarray:
    """Complex rotation sequence of one comb line.

    For the LO the rotation includes the frequency offset and the FSR-deviation
    ladder referenced to the comb center; for the Tx comb it is phase noise only.
    """
    phase = track.samples
    if is_lo:
        t = np.arange(len(phase)) / track.sample_rate
        phase = phase + 2 * np.pi * spec.line_fo_hz(line_k) * t
    return np.exp(1j * phase)
