"""Geometry, traces and scenario configuration."""

import numpy as np
import pytest

from handopt import (
    ConfigurationError,
    ScenarioConfig,
    build_linear_trace,
    cell_row_layout,
    distances,
    preset,
    two_cell_layout,
)


def test_two_cell_layout_geometry():
    lay = two_cell_layout(2000.0, 1000.0)
    assert lay.n_bs == 2
    np.testing.assert_allclose(lay.bs_xy, [[0.0, 0.0], [2000.0, 0.0]])


def test_cell_row_layout_geometry():
    lay = cell_row_layout(5, 1500.0, 800.0)
    assert lay.n_bs == 5
    np.testing.assert_allclose(lay.bs_xy[:, 0], 1500.0 * np.arange(5))
    assert np.all(lay.bs_xy[:, 1] == 0.0)
    with pytest.raises(ConfigurationError):
        cell_row_layout(1)


def test_layout_validation():
    with pytest.raises(ConfigurationError):
        two_cell_layout(0.0)  # coincident stations
    with pytest.raises(ConfigurationError):
        two_cell_layout(2000.0, 0.0)


def test_linear_trace_sampling():
    lay = two_cell_layout()
    tr = build_linear_trace(lay, 750.0, 500.0, 13.0, 0.48)
    assert tr.step_m == pytest.approx(6.24)
    assert tr.n_samples == 81
    np.testing.assert_allclose(tr.positions_xy[0], [750.0, 0.0])
    np.testing.assert_allclose(tr.positions_xy[-1, 0], 750.0 + 80 * 6.24)
    single = build_linear_trace(lay, 100.0, 0.0, 13.0, 0.48)
    assert single.n_samples == 1


def test_linear_trace_stays_within_reach():
    lay = two_cell_layout(2000.0, 1000.0)
    with pytest.raises(ConfigurationError):
        build_linear_trace(lay, 750.0, 5000.0, 13.0, 0.48)


def test_distances_matches_hand_formula():
    lay = two_cell_layout(2000.0, 1000.0)
    tr = build_linear_trace(lay, 750.0, 500.0, 13.0, 0.48)
    d = distances(tr, lay)
    assert d.shape == (2, 81)
    x = 750.0 + 6.24 * np.arange(81)
    np.testing.assert_allclose(d[0], x)
    np.testing.assert_allclose(d[1], 2000.0 - x)


def test_two_cell_preset():
    cfg = preset("paper-vi")
    assert cfg.layout.n_bs == 2
    assert cfg.step_m == pytest.approx(6.24)
    assert cfg.trace().n_samples == 81
    # trace crosses the midpoint between the stations
    x = cfg.trace().positions_xy[:, 0]
    assert x[0] < 1000.0 < x[-1]
    # threshold defaults to the mean path loss 20% past the cell edge
    assert cfg.resolved_outage_threshold() == pytest.approx(
        -107.77134361166686, rel=1e-13
    )
    assert cfg.resolved_depth() == 15
    from handopt import config_fingerprint

    assert config_fingerprint(preset("vehicular-two-cell")) == config_fingerprint(cfg)


def test_cell_row_preset():
    cfg = preset("vehicular-cell-row")
    assert cfg.layout.n_bs == 8
    assert cfg.trace().n_samples == 2004
    assert cfg.channels[0].coherence_m == 35.0
    assert cfg.p_out_cap == 0.35
    assert len(cfg.channels) == 8
    with pytest.raises(ConfigurationError):
        preset("no-such-preset")


def test_explicit_overrides_win():
    cfg = preset("paper-vi").with_updates(outage_threshold_db=-95.0, depth=7)
    assert cfg.resolved_outage_threshold() == -95.0
    assert cfg.resolved_depth() == 7


def test_channel_broadcast():
    cfg = preset("vehicular-cell-row")
    assert all(ch == cfg.channels[0] for ch in cfg.channels)
    with pytest.raises(ConfigurationError):
        cfg.with_updates(channels=cfg.channels[:3])


def test_config_validation():
    base = preset("paper-vi")
    with pytest.raises(ConfigurationError):
        base.with_updates(estimator="median")
    with pytest.raises(ConfigurationError):
        base.with_updates(n_w=0)
    with pytest.raises(ConfigurationError):
        base.with_updates(horizon=0)
    with pytest.raises(ConfigurationError):
        base.with_updates(horizon=13)
    with pytest.raises(ConfigurationError):
        base.with_updates(p_out_cap=0.0)
    with pytest.raises(ConfigurationError):
        base.with_updates(p_han_cap=1.5)
    with pytest.raises(ConfigurationError):
        base.with_updates(pareto_weight=-0.1)
    with pytest.raises(ConfigurationError):
        base.with_updates(b_init=2)
    with pytest.raises(ConfigurationError):
        base.with_updates(h_fixed_db=-1.0)
    with pytest.raises(ConfigurationError):
        base.with_updates(h_step_db=0.0)
    with pytest.raises(ConfigurationError):
        base.with_updates(depth=0)


def test_resolved_depth_is_capped():
    cfg = preset("paper-vi").with_updates(
        channels=(preset("paper-vi").channels[0],), speed_mps=1.0
    )
    # nearly static terminal: correlation barely decays, cap applies
    assert cfg.resolved_depth() == 20
