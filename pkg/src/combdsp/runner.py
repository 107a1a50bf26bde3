"""Experiment orchestration: run configuration, single-cell pipeline, sweeps,
result persistence and plotting."""

from __future__ import annotations

import dataclasses
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from scipy import constants as sc

from . import __version__
from .combsrc import CombSpec, gen_comb_phases, carrier_rotation
from .cpr import CprChannelIn, CprSchemeConfig, run_scheme
from .errors import ParameterError
from .linkchan import (AmpParams, FiberParams, _bessel_response, _gaussian_bpf,
                       awgn_load, channel_offsets_hz, demux_rx, edfa,
                       modulate_mux, ssfm_span)
from .metrics import (align_scale, est_noise_var, gmi, fec_oh, gain_pct,
                      header_poh, net_rate)
from .rxdsp import (EqualizerConfig, cdc, coarse_fo_estimate, derotate,
                    fine_fo_estimate, frame_sync, header_template,
                    matched_filter, mimo_equalize)
from .sigkit import (PilotPlan, build_frame, make_constellation, map_bits,
                     pilot_values, training_header)
from . import rngstreams as rs

CSV_COLUMNS = ("distance_km", "format", "scheme", "n_r", "seed", "ngmi_mean",
               "fec_oh", "poh_mean", "r_net", "gain_pct", "dd_window", "runtime_s")

_SCHEME_ORDER = {"independent": 0, "ms1": 1, "ms2": 2, "drc": 3}


@dataclass
class RunConfig:
    """One simulation cell. Defaults follow the reference system model."""

    fmt: str = "16qam"
    scheme: str = "independent"
    n_r: int = 64
    n_spans: int = 10
    seed: int = 0
    frame_len: int = 2**17
    n_frames: int = 2
    guard_syms: int = 16384
    symbol_rate: float = 135e9
    oversample: int = 8
    roll_off: float = 0.1
    launch_power_dbm: float = 3.0
    snr_b2b_db: float = 22.0
    adc_sps: int = 2
    bpf_bw_hz: float = 150e9
    elec_bw_hz: float = 70e9
    ssfm_step_km: float = 0.5
    dd_window: int = 128
    dpll_kp: float = 0.05
    dpll_ki: float = 2e-3
    drc_eps: float = 0.1
    comb: CombSpec = field(default_factory=CombSpec)
    fiber: FiberParams = field(default_factory=FiberParams)
    amp: AmpParams = field(default_factory=AmpParams)
    eq: EqualizerConfig = field(default_factory=EqualizerConfig)

    @property
    def distance_km(self) -> float:
        return self.n_spans * self.fiber.span_km

    def cpr_config(self) -> CprSchemeConfig:
        return CprSchemeConfig(scheme=self.scheme, n_r=self.n_r,
                               dd_window=self.dd_window, dpll_kp=self.dpll_kp,
                               dpll_ki=self.dpll_ki, drc_eps=self.drc_eps)

    def stage_snr_db(self) -> float:
        """Per-stage SNR so that two equal noise loads compose to the B2B target."""
        return self.snr_b2b_db + 10 * np.log10(2)


@dataclass
class ResultRow:
    distance_km: float
    format: str
    scheme: str
    n_r: int
    seed: int
    ngmi_mean: float
    fec_oh: float
    poh_mean: float
    r_net: float
    gain_pct: float | None
    dd_window: int
    runtime_s: float
    error: str = ""


def model_taus_s(cfg: RunConfig) -> np.ndarray:
    """Per-channel walk-off delays entering the dual-reference phase model.

    The LO mixes each channel at its own arrival time, so relative to the frame
    grid the LO process is sampled with a per-channel advance equal to the
    CD group delay beta2_acc * 2*pi*df; the model delay carries that sign.
    """
    beta2_acc = cfg.fiber.beta2_s2_m * cfg.n_spans * cfg.fiber.span_km * 1e3
    return beta2_acc * 2 * np.pi * channel_offsets_hz(cfg.comb)


@dataclass
class CellState:
    """Intermediate products of a cell, for calibration and diagnostics."""
    cfg: RunConfig
    channels: list
    taus_s: np.ndarray
    frame2_payload_rel: np.ndarray
    tx_payload: list    # per channel (2, n_pay)
    tx_bits: list       # per channel (2, n_pay*m)
    pilot_idx_rel: np.ndarray
    outs: list | None = None


def _build_channel_streams(cfg: RunConfig, spec, plans):
    """Per-channel Tx symbol streams with guards, and the Rx-side bookkeeping."""
    n_ch = cfg.comb.n_lines
    streams, books = [], []
    for ch in range(n_ch):
        plan = plans[ch]
        header_idx, pilot_idx, payload_idx = plan.layout(cfg.frame_len)
        m = spec.bits_per_symbol
        prng = rs.stream_rng(cfg.seed, rs.payload_stream(ch))
        frames = []
        for _ in range(cfg.n_frames):
            bits = prng.integers(0, 2, size=(2, len(payload_idx) * m))
            frames.append(build_frame(bits, plan, spec, cfg.frame_len))
        grng = rs.stream_rng(cfg.seed, rs.guard_stream(ch))
        gbits = grng.integers(0, 2, size=(2, cfg.guard_syms * m, 2))
        guards = [np.vstack([map_bits(gbits[p, :, g], spec) for p in range(2)])
                  for g in range(2)]
        stream = np.concatenate([guards[0]] + [f.symbols for f in frames] + [guards[1]],
                                axis=1)
        streams.append(stream)
        # indices relative to the start of frame 1 (equalizer output grid)
        pil_rel = np.concatenate([f * cfg.frame_len + pilot_idx
                                  for f in range(cfg.n_frames)])
        pil_vals = np.concatenate([frames[f].pilot_vals
                                   for f in range(cfg.n_frames)], axis=1)
        hdr_rel = np.concatenate([f * cfg.frame_len + header_idx
                                  for f in range(cfg.n_frames)])
        hdr_vals = np.concatenate([frames[f].header_vals
                                   for f in range(cfg.n_frames)], axis=1)
        known_rel = np.concatenate([hdr_rel, pil_rel])
        known_vals = np.concatenate([hdr_vals, pil_vals], axis=1)
        order = np.argsort(known_rel)
        last = frames[-1]
        books.append(dict(
            pilot_idx=pil_rel, pilot_vals=pil_vals,
            known_idx=known_rel[order], known_vals=known_vals[:, order],
            frame2_payload_rel=(cfg.n_frames - 1) * cfg.frame_len + payload_idx,
            tx_payload=last.payload_tx, tx_bits=last.tx_bits, plan=plan))
    return streams, books


def simulate_link(cfg: RunConfig, streams):
    """Tx comb, multiplexing, noise loading, fiber spans, amplification."""
    fs = cfg.symbol_rate * cfg.oversample
    n = streams[0].shape[1] * cfg.oversample
    tx_tracks = gen_comb_phases(cfg.comb, fs, n,
                                rs.stream_rng(cfg.seed, rs.TX_COMMON_PN),
                                rs.stream_rng(cfg.seed, rs.TX_LINE_PN))
    lo_tracks = gen_comb_phases(cfg.comb, fs, n,
                                rs.stream_rng(cfg.seed, rs.LO_COMMON_PN),
                                rs.stream_rng(cfg.seed, rs.LO_LINE_PN))
    field = modulate_mux(streams, tx_tracks, cfg.launch_power_dbm, fs,
                         cfg.symbol_rate, cfg.comb, cfg.roll_off)
    n_ch = cfg.comb.n_lines
    field = awgn_load(field, cfg.stage_snr_db(), cfg.symbol_rate, n_ch,
                      rs.stream_rng(cfg.seed, rs.AWGN_TX))
    nu = sc.c / (cfg.fiber.center_wavelength_nm * 1e-9)
    for span in range(cfg.n_spans):
        field = ssfm_span(field, cfg.fiber, cfg.ssfm_step_km)
        field = edfa(field, cfg.amp, nu, rs.stream_rng(cfg.seed, rs.ASE_BASE + span))
    field = awgn_load(field, cfg.stage_snr_db(), cfg.symbol_rate, n_ch,
                      rs.stream_rng(cfg.seed, rs.AWGN_RX))
    return field, lo_tracks


def receive_frontend(cfg: RunConfig, field, lo_tracks, ch: int, template):
    """Demux, CD compensation, matched filtering, frame sync and a coarse+fine
    per-channel frequency-offset estimate for one channel."""
    lo_rot = carrier_rotation(lo_tracks[ch], ch, cfg.comb, is_lo=True)
    wave, rate2 = demux_rx(field, ch, lo_rot, cfg.comb, cfg.symbol_rate,
                           cfg.adc_sps, cfg.bpf_bw_hz, cfg.elec_bw_hz)
    acc_disp = cfg.fiber.dispersion_ps_nm_km * cfg.fiber.span_km * cfg.n_spans
    wave = cdc(wave, rate2, acc_disp,
               center_wavelength_nm=cfg.fiber.center_wavelength_nm)
    wave = matched_filter(wave, cfg.roll_off, cfg.adc_sps)
    sync = frame_sync(wave, template)
    fo = coarse_fo_estimate(wave, template, sync.frame_offset, rate2)
    fo = fine_fo_estimate(wave, template, sync.frame_offset, rate2,
                          cfg.frame_len * cfg.adc_sps, fo)
    return wave, rate2, sync, fo


def equalize_channel(cfg: RunConfig, wave, sync, hdr, spec):
    """Slice the synchronized capture and run the adaptive butterfly equalizer."""
    n_out = cfg.n_frames * cfg.frame_len
    pad = cfg.eq.n_taps // 2
    need = 2 * (n_out - 1) + cfg.eq.n_taps
    idx = (sync.frame_offset - pad + np.arange(need)) % wave.shape[1]
    return mimo_equalize(wave[0][idx], wave[1][idx], cfg.eq, hdr, spec, n_out)


def prepare_cell(cfg: RunConfig) -> CellState:
    """Run the physical chain and receiver DSP up to (but excluding) CPR.

    Only the comb-common part of the coarse frequency offset (the mean over the
    channel ladder, which cancels the symmetric FSR-deviation terms) is removed
    before equalization; per-line deviations are left for carrier recovery, so
    the joint schemes see the ladder structure they are designed around.
    """
    spec = make_constellation(cfg.fmt)
    mains = cfg.cpr_config().main_indices
    plans = [PilotPlan(0 if ch in mains else cfg.n_r)
             for ch in range(cfg.comb.n_lines)]
    streams, books = _build_channel_streams(cfg, spec, plans)
    field, lo_tracks = simulate_link(cfg, streams)
    hdr = training_header()
    rate2 = cfg.adc_sps * cfg.symbol_rate
    front_end = lambda n: (_gaussian_bpf(n, rate2, cfg.bpf_bw_hz, 0.0)
                           * _bessel_response(n, rate2, cfg.elec_bw_hz))
    template = header_template(hdr, cfg.roll_off, cfg.adc_sps, front_end)
    fronts = [receive_frontend(cfg, field, lo_tracks, ch, template)
              for ch in range(cfg.comb.n_lines)]
    fo_common = float(np.mean([f[3] for f in fronts]))
    channels = []
    for ch, (wave, rate2, sync, _) in enumerate(fronts):
        wave = derotate(wave, fo_common, rate2)
        sym = equalize_channel(cfg, wave, sync, hdr, spec)
        b = books[ch]
        channels.append(CprChannelIn(sym, b["pilot_idx"], b["pilot_vals"],
                                     b["known_idx"], b["known_vals"]))
    return CellState(cfg, channels, model_taus_s(cfg),
                     books[0]["frame2_payload_rel"],
                     [b["tx_payload"] for b in books],
                     [b["tx_bits"] for b in books],
                     books[0]["pilot_idx"]), books


def evaluate_cpr(state: CellState, books, cfg: RunConfig):
    """CPR + metrics for an already-propagated cell."""
    spec = make_constellation(cfg.fmt)
    outs = run_scheme(state.channels, cfg.cpr_config(), spec, cfg.symbol_rate,
                      state.taus_s)
    state.outs = outs
    m = spec.bits_per_symbol
    ngmis, pohs = [], []
    for ch, (o, b) in enumerate(zip(outs, books)):
        pay_idx = b["frame2_payload_rel"]
        vals = []
        for p in range(2):
            y = align_scale(o.corrected[p][pay_idx], b["tx_payload"][p])
            s2 = est_noise_var(y, b["tx_payload"][p])
            vals.append(gmi(y, b["tx_bits"][p], spec, s2) / m)
        ngmis.append(float(np.mean(vals)))
        pohs.append(header_poh(cfg.frame_len) + float(b["plan"].cr_overhead))
    ngmi_mean = float(np.mean(ngmis))
    oh = fec_oh(ngmi_mean)
    _, r_mean = net_rate(ngmi_mean, np.array(pohs))
    return ngmis, ngmi_mean, oh, pohs, r_mean


def run_cell(cfg: RunConfig) -> ResultRow:
    """Full pipeline for one (distance, format, scheme, n_r, seed) cell."""
    t0 = time.perf_counter()
    try:
        state, books = prepare_cell(cfg)
        _, ngmi_mean, oh, pohs, r_mean = evaluate_cpr(state, books, cfg)
    except Exception as exc:  # annotate with cell context
        exc.args = (f"{exc} [cell: {cfg.distance_km:g} km {cfg.fmt} "
                    f"{cfg.scheme} n_r={cfg.n_r} seed={cfg.seed}]",)
        raise
    return ResultRow(cfg.distance_km, cfg.fmt, cfg.scheme, cfg.n_r, cfg.seed,
                     ngmi_mean, oh, float(np.mean(pohs)), r_mean, None,
                     cfg.dd_window, time.perf_counter() - t0)


def calibrate_window(cfg: RunConfig, grid=(8, 16, 32, 64, 128, 256)):
    """Grid-search the DD window maximizing NGMI on one calibration cell."""
    best, best_score, scores = None, -1.0, {}
    state, books = prepare_cell(cfg)
    for w in grid:
        c2 = dataclasses.replace(cfg, dd_window=w)
        _, ngmi_mean, _, _, _ = evaluate_cpr(state, books, c2)
        scores[w] = ngmi_mean
        if ngmi_mean > best_score:
            best, best_score = w, ngmi_mean
    return best, scores


# ---------------------------------------------------------------------------
# sweeps

@dataclass
class SweepConfig:
    base: RunConfig = field(default_factory=RunConfig)
    formats: list = field(default_factory=lambda: ["16qam", "64qam"])
    schemes: list = field(default_factory=lambda: ["independent", "ms1", "ms2", "drc"])
    n_r_values: list = field(default_factory=lambda: [0, 64])
    distances_km: list = field(default_factory=lambda: [400.0, 800.0, 1200.0])
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3])
    jobs: int = 1


def desk_profile() -> SweepConfig:
    """Workstation-scale profile: short frames, coarse grid, 1 km SSFM step."""
    # drc_eps = 1.5 is the calibrated operating threshold (see calibrate-window
    # for the DD window analogue): smaller values let main-track estimation
    # noise through the comb-filter inversion near its nulls
    base = RunConfig(frame_len=2**15, guard_syms=8192, ssfm_step_km=1.0,
                     drc_eps=1.5)
    return SweepConfig(base=base,
                       distances_km=[320.0, 480.0, 800.0, 1200.0],
                       seeds=[0, 1, 2, 3])


def paper_profile() -> SweepConfig:
    """Full-scale profile mirroring the reference setup (heavy)."""
    base = RunConfig(frame_len=2**17, guard_syms=16384, ssfm_step_km=0.5,
                     drc_eps=1.5)
    return SweepConfig(base=base,
                       distances_km=[80.0 * s for s in range(2, 31, 2)],
                       seeds=[0, 1, 2, 3])


def profile_by_name(name: str) -> SweepConfig:
    if name == "desk":
        return desk_profile()
    if name == "paper":
        return paper_profile()
    raise ParameterError(f"unknown profile {name!r}")


def cell_config(sweep: SweepConfig, fmt: str, scheme: str, n_r: int,
                distance_km: float, seed: int) -> RunConfig:
    span = sweep.base.fiber.span_km
    n_spans = round(distance_km / span)
    if abs(n_spans * span - distance_km) > 1e-9:
        raise ParameterError(f"distance {distance_km} km not a whole number of spans")
    return dataclasses.replace(sweep.base, fmt=fmt, scheme=scheme,
                               n_r=(0 if scheme == "independent" else n_r),
                               n_spans=n_spans, seed=seed)


def build_cells(sweep: SweepConfig) -> list[RunConfig]:
    """Grid expansion; an Independent baseline cell is forced for every
    (format, distance, seed) that carries a joint-scheme cell."""
    cells = {}
    for fmt in sweep.formats:
        for d in sweep.distances_km:
            for seed in sweep.seeds:
                for scheme in sweep.schemes:
                    nrs = [0] if scheme == "independent" else sweep.n_r_values
                    for n_r in nrs:
                        cfg = cell_config(sweep, fmt, scheme, n_r, d, seed)
                        cells[(fmt, d, scheme, cfg.n_r, seed)] = cfg
                if any(s != "independent" for s in sweep.schemes):
                    cfg = cell_config(sweep, fmt, "independent", 0, d, seed)
                    cells[(fmt, d, "independent", 0, seed)] = cfg
    order = sorted(cells, key=lambda k: (k[0], k[1], _SCHEME_ORDER[k[2]], k[3], k[4]))
    return [cells[k] for k in order]


def _run_cell_safe(cfg: RunConfig) -> ResultRow:
    try:
        return run_cell(cfg)
    except Exception as exc:
        return ResultRow(cfg.distance_km, cfg.fmt, cfg.scheme, cfg.n_r, cfg.seed,
                         float("nan"), float("nan"), float("nan"), float("nan"),
                         None, cfg.dd_window, 0.0, error=f"{type(exc).__name__}: {exc}")


def fill_gains(rows: list[ResultRow]) -> None:
    """Gain against the Independent row of the same (distance, format, seed)."""
    base = {(r.distance_km, r.format, r.seed): r.r_net
            for r in rows if r.scheme == "independent" and not r.error}
    for r in rows:
        if r.error:
            continue
        b = base.get((r.distance_km, r.format, r.seed))
        r.gain_pct = gain_pct(r.r_net, b) if b else None


def run_sweep(sweep: SweepConfig, out_dir: str | Path,
              progress=None) -> list[ResultRow]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = build_cells(sweep)
    rows: list[ResultRow] = []
    if sweep.jobs > 1:
        with ProcessPoolExecutor(max_workers=sweep.jobs) as ex:
            rows = list(ex.map(_run_cell_safe, cells))
    else:
        for i, cfg in enumerate(cells):
            rows.append(_run_cell_safe(cfg))
            if progress:
                progress(i + 1, len(cells), rows[-1])
    fill_gains(rows)
    write_csv(rows, out_dir / "results.csv")
    write_meta(sweep, out_dir / "meta.txt")
    for i, fmt in enumerate(sweep.formats):
        plot_gain(rows, fmt, out_dir / f"fig2{'ab'[i] if i < 2 else chr(99 + i)}.svg")
    return rows


# ---------------------------------------------------------------------------
# persistence

def _fmt_row(r: ResultRow) -> str:
    gain = "" if r.gain_pct is None else f"{r.gain_pct:.4f}"
    return (f"{r.distance_km:g},{r.format},{r.scheme},{r.n_r},{r.seed},"
            f"{r.ngmi_mean:.6f},{r.fec_oh:.6f},{r.poh_mean:.6f},{r.r_net:.6f},"
            f"{gain},{r.dd_window},{r.runtime_s:.3f}")


def write_csv(rows: list[ResultRow], path: str | Path) -> None:
    lines = [",".join(CSV_COLUMNS)]
    lines += [_fmt_row(r) for r in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_csv(path: str | Path) -> list[dict]:
    lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
    hdr = lines[0].split(",")
    return [dict(zip(hdr, ln.split(","))) for ln in lines[1:]]


def write_meta(sweep: SweepConfig, path: str | Path) -> None:
    meta = {"combdsp_version": __version__,
            "numpy_version": np.__version__,
            "config": dataclasses.asdict(sweep)}
    Path(path).write_text(yaml.safe_dump(meta, sort_keys=True), encoding="utf-8")


def plot_gain(rows: list[ResultRow], fmt: str, path: str | Path) -> None:
    """Mean gain +/- std over seeds vs distance, one curve per (scheme, n_r)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    sel = [r for r in rows if r.format == fmt and not r.error
           and r.scheme != "independent" and r.gain_pct is not None]
    combos = sorted({(r.scheme, r.n_r) for r in sel},
                    key=lambda c: (_SCHEME_ORDER[c[0]], c[1]))
    for scheme, n_r in combos:
        pts = {}
        for r in sel:
            if r.scheme == scheme and r.n_r == n_r:
                pts.setdefault(r.distance_km, []).append(r.gain_pct)
        ds = sorted(pts)
        mean = [np.mean(pts[d]) for d in ds]
        std = [np.std(pts[d]) for d in ds]
        ls = "--" if n_r == 0 else "-"
        ax.errorbar(ds, mean, yerr=std, ls=ls, marker="o", capsize=3,
                    label=f"{scheme.upper()} N_r={n_r}")
    ax.axhline(0, color="k", lw=0.8)
    ax.set_xlabel("distance (km)")
    ax.set_ylabel("net data rate gain (%)")
    ax.set_title(fmt.upper())
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
