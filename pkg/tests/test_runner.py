"""Orchestration: config validation, grid expansion, gains, persistence."""

import dataclasses

import numpy as np
import pytest

from combdsp.errors import ParameterError
from combdsp.runner import (CSV_COLUMNS, ResultRow, RunConfig, SweepConfig,
                            build_cells, cell_config, desk_profile, fill_gains,
                            model_taus_s, paper_profile, profile_by_name,
                            read_csv, write_csv, write_meta)


def test_distance_property():
    cfg = RunConfig(n_spans=10)
    assert cfg.distance_km == 800.0


def test_stage_snr_composes_to_b2b():
    cfg = RunConfig(snr_b2b_db=22.0)
    stage = 10 ** (-cfg.stage_snr_db() / 10)
    assert 10 * np.log10(1 / (2 * stage)) == pytest.approx(22.0)


def test_model_taus_antisymmetric_ladder():
    """Walk-off delays are an odd ladder over channels, ~28.85 ns outer at 800 km."""
    taus = model_taus_s(RunConfig(n_spans=10))
    assert taus[0] == pytest.approx(-taus[3])
    assert taus[1] == pytest.approx(-taus[2])
    assert abs(taus[0]) == pytest.approx(28.85e-9, rel=0.01)
    assert abs(taus[1]) == pytest.approx(28.85e-9 / 3, rel=0.01)


def test_cell_config_rejects_partial_span():
    with pytest.raises(ParameterError):
        cell_config(desk_profile(), "16qam", "drc", 64, 500.0, 0)


def test_cell_config_forces_nr0_for_independent():
    cfg = cell_config(desk_profile(), "16qam", "independent", 64, 480.0, 0)
    assert cfg.n_r == 0


def test_build_cells_includes_baseline():
    sweep = SweepConfig(formats=["16qam"], schemes=["drc"], n_r_values=[64],
                        distances_km=[480.0], seeds=[0, 1])
    cells = build_cells(sweep)
    keys = {(c.scheme, c.n_r, c.seed) for c in cells}
    assert ("independent", 0, 0) in keys and ("independent", 0, 1) in keys
    assert ("drc", 64, 0) in keys
    assert len(cells) == 4


def test_profiles():
    assert desk_profile().base.frame_len == 2**15
    assert paper_profile().base.frame_len == 2**17
    assert profile_by_name("desk").base.ssfm_step_km == 1.0
    with pytest.raises(ParameterError):
        profile_by_name("bogus")


def _rows():
    mk = lambda scheme, n_r, r_net: ResultRow(480.0, "16qam", scheme, n_r, 0,
                                              0.9, 0.2, 0.05, r_net, None, 128, 1.0)
    return [mk("independent", 0, 0.70), mk("drc", 64, 0.71)]


def test_fill_gains_against_baseline():
    rows = _rows()
    fill_gains(rows)
    assert rows[0].gain_pct == pytest.approx(0.0)
    assert rows[1].gain_pct == pytest.approx(100 * (0.71 / 0.70 - 1))


def test_csv_roundtrip(tmp_path):
    rows = _rows()
    fill_gains(rows)
    path = tmp_path / "results.csv"
    write_csv(rows, path)
    back = read_csv(path)
    assert list(back[0].keys()) == list(CSV_COLUMNS)
    assert back[1]["scheme"] == "drc"
    assert float(back[1]["r_net"]) == pytest.approx(0.71)


def test_write_meta_contains_config(tmp_path):
    sweep = SweepConfig(seeds=[7])
    write_meta(sweep, tmp_path / "meta.txt")
    text = (tmp_path / "meta.txt").read_text()
    assert "combdsp_version" in text and "seeds" in text and "7" in text


def test_run_config_replace_keeps_defaults():
    cfg = dataclasses.replace(RunConfig(), fmt="64qam", n_spans=6)
    assert cfg.symbol_rate == 135e9
    assert cfg.comb.fsr_hz == 150e9
    assert cfg.fiber.span_km == 80.0
    assert cfg.launch_power_dbm == 3.0
