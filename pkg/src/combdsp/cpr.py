"""Carrier recovery: pilot-aided DPLL frequency-offset tracking, two-stage PA+DD
carrier-phase estimation, ultra-light hold-based PA-CPR, and the joint schemes
(main&secondary with one or two mains, dual-reference-carrier reconstruction)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from .errors import DegenerateGeometryError, LoopDivergenceError, ParameterError
from .sigkit import ConstellationSpec, hard_decision

SCHEMES = ("independent", "ms1", "ms2", "drc")

_MAINS = {"independent": (0, 1, 2, 3), "ms1": (1,), "ms2": (0, 3), "drc": (0, 3)}


@dataclass(frozen=True)
class CprSchemeConfig:
    scheme: str = "independent"
    n_r: int = 0                   # secondary-channel pilot sparsity
    dd_window: int = 128
    dpll_kp: float = 0.05
    dpll_ki: float = 2e-3
    drc_eps: float = 0.1
    drc_min_sep: float = 4.0       # burst-grid samples of walk-off below which DRC falls back
    burst_len: int = 4             # pilots averaged per burst
    burst_grid_step: int = 128     # symbols between burst-grid samples for mains

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ParameterError(f"unknown scheme {self.scheme!r}")
        if self.n_r < 0:
            raise ParameterError("n_r must be >= 0")

    @property
    def main_indices(self) -> tuple:
        return _MAINS[self.scheme]


@dataclass
class PhaseEstimateTrack:
    phase: np.ndarray              # radians, one entry per symbol
    fo_hz: np.ndarray | None = None
    source: str = "pilot-interp"


@dataclass
class DpllResult:
    corrected: np.ndarray
    phase: np.ndarray
    fo_hz: np.ndarray


def _segment_eval(seg_starts, values, slopes, n):
    """Piecewise-linear track: values/slopes per segment starting at seg_starts."""
    idx = np.arange(n)
    seg = np.clip(np.searchsorted(seg_starts, idx, side="right") - 1, 0, None)
    return values[seg] + slopes[seg] * (idx - seg_starts[seg])


def dpll_fo(symbols: np.ndarray, pilot_idx: np.ndarray, pilot_vals: np.ndarray,
            kp: float, ki: float, symbol_rate: float) -> DpllResult:
    """Second-order pilot-aided PLL for frequency-offset estimation and removal.

    Coarse acquisition seeds the loop from the DFT of the pilot phase rotation;
    the proportional-integral loop then updates at pilot instants.
    """
    z = symbols[pilot_idx] * np.conj(pilot_vals)
    spacing = float(np.median(np.diff(pilot_idx)))
    spec = np.abs(np.fft.fft(z))
    b = int(np.argmax(spec))
    # parabolic interpolation around the peak bin
    sm, s0, sp = spec[(b - 1) % len(z)], spec[b], spec[(b + 1) % len(z)]
    db = 0.5 * (sm - sp) / (sm - 2 * s0 + sp) if (sm - 2 * s0 + sp) != 0 else 0.0
    f0 = np.fft.fftfreq(len(z))[b] + db / len(z)  # cycles per pilot interval
    f = 2 * np.pi * f0 / spacing                  # rad per symbol
    fmax = 2 * (2 * np.pi / spacing)              # integrator bound: 2x pilot rate
    theta = float(np.angle(z[0]))
    n_p = len(pilot_idx)
    thetas = np.empty(n_p)
    freqs = np.empty(n_p)
    prev = pilot_idx[0]
    for i in range(n_p):
        gap = pilot_idx[i] - prev
        theta += f * gap
        e = float(np.angle(z[i] * np.exp(-1j * theta)))
        theta += kp * e
        f += ki * e / max(spacing, 1.0)
        if abs(f) > fmax:
            raise LoopDivergenceError("DPLL integrator out of range")
        thetas[i] = theta
        freqs[i] = f
        prev = pilot_idx[i]
    n = len(symbols)
    phase = _segment_eval(pilot_idx, thetas, freqs, n)
    fo_hz = freqs[np.clip(np.searchsorted(pilot_idx, np.arange(n), side="right") - 1,
                          0, None)] * symbol_rate / (2 * np.pi)
    return DpllResult(symbols * np.exp(-1j * phase), phase, fo_hz)


@dataclass
class BurstEstimate:
    centroids: np.ndarray  # fractional symbol positions
    phases: np.ndarray     # unwrapped


def burst_phase_estimates(symbols: np.ndarray, pilot_idx: np.ndarray,
                          pilot_vals: np.ndarray, group: int = 4) -> BurstEstimate:
    """Per-burst ML phase: arg of the sum of r*conj(p) over `group` consecutive
    pilots, assigned to the burst's temporal centroid, unwrapped across bursts."""
    nb = len(pilot_idx) // group
    if nb < 1:
        raise ParameterError("not enough pilots for one burst")
    pi = pilot_idx[:nb * group].reshape(nb, group)
    pv = pilot_vals[:nb * group].reshape(nb, group)
    z = (symbols[pi] * np.conj(pv)).sum(axis=1)
    return BurstEstimate(pi.mean(axis=1), np.unwrap(np.angle(z)))


def pa_cpe_stage1(symbols: np.ndarray, pilot_idx: np.ndarray,
                  pilot_vals: np.ndarray, group: int = 4) -> tuple[PhaseEstimateTrack, BurstEstimate]:
    """Pilot-aided stage 1: burst-averaged estimates, linear interpolation between
    burst centroids, edge extrapolation held constant."""
    be = burst_phase_estimates(symbols, pilot_idx, pilot_vals, group)
    phase = np.interp(np.arange(len(symbols)), be.centroids, be.phases)
    return PhaseEstimateTrack(phase, source="pilot-interp"), be


def dd_ml_stage2(symbols_stage1: np.ndarray, constellation: ConstellationSpec,
                 window: int, known_idx: np.ndarray | None = None,
                 known_vals: np.ndarray | None = None) -> PhaseEstimateTrack:
    """Decision-directed ML refinement over a sliding centered window, applied on
    top of the stage-1 correction. Known symbols replace decisions where given."""
    if window < 1:
        raise ParameterError("window must be >= 1")
    d = hard_decision(symbols_stage1, constellation)
    if known_idx is not None:
        d[known_idx] = known_vals
    u = symbols_stage1 * np.conj(d)
    h = window // 2
    cs = np.concatenate([[0.0 + 0.0j], np.cumsum(u)])
    n = len(u)
    lo = np.clip(np.arange(n) - h, 0, n)
    hi = np.clip(np.arange(n) + (window - h), 0, n)
    s = cs[hi] - cs[lo]
    return PhaseEstimateTrack(np.angle(s), source="dd")


def pa_cpr_light(symbols: np.ndarray, pilot_idx: np.ndarray,
                 pilot_vals: np.ndarray, group: int = 4) -> tuple[PhaseEstimateTrack, BurstEstimate]:
    """Ultra-light PA-CPR: burst-averaged estimates applied with zero-order hold
    from each burst centroid until the next (low-latency, no interpolation)."""
    be = burst_phase_estimates(symbols, pilot_idx, pilot_vals, group)
    idx = np.arange(len(symbols))
    seg = np.clip(np.searchsorted(be.centroids, idx, side="right") - 1, 0, None)
    return PhaseEstimateTrack(be.phases[seg], source="held"), be


def drc_reconstruct(phi_main_a: np.ndarray, phi_main_b: np.ndarray, dt: float,
                    tau_a: float, tau_b: float, taus_secondary: np.ndarray,
                    eps: float = 0.1, min_sep_s: float = 0.0,
                    slopes: tuple[float, float] = (0.0, 0.0)) -> list[np.ndarray]:
    """Separate the two delayed phase-noise processes from two main-channel
    estimates and synthesize secondary-channel phases.

    Model: phi_m(t) = phi_p(t - tau_m) + phi_q(t) on the burst-rate grid. The
    difference of the mains isolates phi_p through the comb filter
    e^{-jw tau_b} - e^{-jw tau_a}, inverted with threshold regularization
    (bins with |comb filter| < eps are zeroed). `slopes` gives each main's
    linear trend (residual FO, rad per grid sample) as known by the caller's
    frequency estimator; trends and means are removed before the DFT and
    re-applied with exact linear interpolation in tau. Fitting the trend here
    instead would leave a wrap discontinuity whose leakage is amplified by the
    comb-filter inversion near its nulls.
    """
    if abs(tau_b - tau_a) <= max(min_sep_s, 0.0):
        raise DegenerateGeometryError(
            f"walk-off separation {abs(tau_b - tau_a):.3e} s too small")
    nb = len(phi_main_a)
    x = np.arange(nb)
    ca = np.array([slopes[0], phi_main_a.mean() - slopes[0] * (nb - 1) / 2])
    cb = np.array([slopes[1], phi_main_b.mean() - slopes[1] * (nb - 1) / 2])
    ra = phi_main_a - np.polyval(ca, x)
    rb = phi_main_b - np.polyval(cb, x)
    w = 2 * np.pi * sfft.fftfreq(nb, d=dt)
    da = np.exp(-1j * w * tau_a)
    db = np.exp(-1j * w * tau_b)
    denom = db - da
    Fa = sfft.fft(ra)
    Fb = sfft.fft(rb)
    keep = np.abs(denom) >= eps
    X = np.where(keep, (Fb - Fa) / np.where(keep, denom, 1.0), 0.0)
    L = Fa - X * da
    out = []
    for tau_k in np.atleast_1d(taus_secondary):
        fk = (tau_k - tau_a) / (tau_b - tau_a)
        trend = (1 - fk) * np.polyval(ca, x) + fk * np.polyval(cb, x)
        # where the comb filter is too small to invert, the delayed process is
        # unobservable; fall back to interpolating the mains in walk-off ratio
        spec_k = np.where(keep, X * np.exp(-1j * w * tau_k) + L,
                          (1 - fk) * Fa + fk * Fb)
        phi = sfft.ifft(spec_k).real + trend
        out.append(phi)
    return out


@dataclass
class CprChannelIn:
    symbols: np.ndarray       # (2, n) equalized 1-sps
    pilot_idx: np.ndarray
    pilot_vals: np.ndarray    # (2, n_pilots)
    known_idx: np.ndarray     # header + pilots, for the DD stage
    known_vals: np.ndarray    # (2, len(known_idx))


@dataclass
class CprChannelOut:
    corrected: np.ndarray          # (2, n)
    phase: np.ndarray              # (2, n) total applied phase
    fo_hz: np.ndarray | None       # (2, n) for mains, donor copy for secondaries
    role: str                      # "main" | "secondary"
    source: str


def _closest_main(c: int, mains: tuple) -> int:
    return min(mains, key=lambda m: (abs(m - c), m))


def run_scheme(channels: list[CprChannelIn], cfg: CprSchemeConfig,
               constellation: ConstellationSpec, symbol_rate: float,
               taus_s: np.ndarray) -> list[CprChannelOut]:
    """Run the configured carrier-recovery scheme over all channels.

    Mains get DPLL + two-stage PA+DD CPE. Secondaries inherit the main-channel
    estimates (closest main for M&S; dual-reference reconstruction for DRC, with
    FO arriving via the exact linear-in-tau trend interpolation) and then apply
    their own sparse-pilot hold-based residual correction.
    """
    n_ch = len(channels)
    mains = cfg.main_indices
    n = channels[0].symbols.shape[1]
    out: list[CprChannelOut | None] = [None] * n_ch

    for m in mains:
        ch = channels[m]
        corrected = np.empty_like(ch.symbols)
        phase = np.empty((2, n))
        fo = np.empty((2, n))
        for p in range(2):
            dp = dpll_fo(ch.symbols[p], ch.pilot_idx, ch.pilot_vals[p],
                         cfg.dpll_kp, cfg.dpll_ki, symbol_rate)
            st1, _ = pa_cpe_stage1(dp.corrected, ch.pilot_idx, ch.pilot_vals[p],
                                   cfg.burst_len)
            sym1 = dp.corrected * np.exp(-1j * st1.phase)
            st2 = dd_ml_stage2(sym1, constellation, cfg.dd_window,
                               ch.known_idx, ch.known_vals[p])
            phase[p] = dp.phase + st1.phase + st2.phase
            fo[p] = dp.fo_hz
            corrected[p] = ch.symbols[p] * np.exp(-1j * phase[p])
        out[m] = CprChannelOut(corrected, phase, fo, "main", "pa+dd")

    secondaries = [c for c in range(n_ch) if c not in mains]
    if not secondaries:
        return out

    drc_phases = None
    if cfg.scheme == "drc":
        a, b = mains
        grid = np.arange(0, n, cfg.burst_grid_step)
        dt = cfg.burst_grid_step / symbol_rate
        try:
            # the tracked phase processes (comb, fiber, LO) are polarization
            # common, so averaging the two polarizations' main tracks halves the
            # estimation noise fed into the reconstruction; each polarization's
            # static equalizer phase offset is absorbed by the secondary hold
            pa = out[a].phase.mean(axis=0)[grid]
            pb = out[b].phase.mean(axis=0)[grid]
            # trend slopes from the mains' DPLL frequency estimates
            slopes = tuple(2 * np.pi * float(out[m].fo_hz.mean()) * dt
                           for m in (a, b))
            rec = drc_reconstruct(pa, pb, dt, taus_s[a], taus_s[b],
                                  np.array([taus_s[c] for c in secondaries]),
                                  cfg.drc_eps, cfg.drc_min_sep * dt, slopes)
            drc_phases = {c: np.interp(np.arange(n), grid, phi_g)
                          for c, phi_g in zip(secondaries, rec)}
        except DegenerateGeometryError:
            drc_phases = None  # B2B-like geometry: fall back to closest-main copy

    for c in secondaries:
        ch = channels[c]
        donor = _closest_main(c, mains)
        corrected = np.empty_like(ch.symbols)
        phase = np.empty((2, n))
        source = "reconstructed" if (cfg.scheme == "drc" and drc_phases is not None) \
            else "donor-copy"
        if cfg.scheme == "drc" and drc_phases is not None:
            base = drc_phases[c]
        else:
            base = out[donor].phase.mean(axis=0)
        resid_base = ch.symbols * np.exp(-1j * base)
        for p in range(2):
            resid = resid_base[p]
            light, _ = pa_cpr_light(resid, ch.pilot_idx, ch.pilot_vals[p],
                                    cfg.burst_len)
            phase[p] = base + light.phase
            corrected[p] = ch.symbols[p] * np.exp(-1j * phase[p])
        out[c] = CprChannelOut(corrected, phase, out[donor].fo_hz, "secondary",
                               source + "+held")
    return out


def optimize_dd_window(symbols_stage1: np.ndarray, tx_payload: np.ndarray,
                       payload_idx: np.ndarray, constellation: ConstellationSpec,
                       tx_bits: np.ndarray,
                       grid: tuple = (8, 16, 32, 64, 128, 256),
                       known_idx: np.ndarray | None = None,
                       known_vals: np.ndarray | None = None) -> tuple[int, dict]:
    """Pick the DD window maximizing NGMI on a calibration run.

    `symbols_stage1` is a (2, n) stage-1-corrected stream; NGMI is averaged over
    polarizations on the payload positions.
    """
    from . import metrics  # local import: metrics is a consumer elsewhere

    scores = {}
    for w in grid:
        vals = []
        for p in range(2):
            st2 = dd_ml_stage2(symbols_stage1[p], constellation, w,
                               known_idx, known_vals[p] if known_vals is not None else None)
            y = (symbols_stage1[p] * np.exp(-1j * st2.phase))[payload_idx]
            y = metrics.align_scale(y, tx_payload[p])
            s2 = metrics.est_noise_var(y, tx_payload[p])
            vals.append(metrics.gmi(y, tx_bits[p], constellation, s2) /
                        constellation.bits_per_symbol)
        scores[w] = float(np.mean(vals))
    best = max(scores, key=scores.get)
    return best, scores
