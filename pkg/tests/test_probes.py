import numpy as np
import pytest

from degenkit.probes import (
    ProbeConfig,
    build_history_dataset,
    estimate_memory_demand,
    fit_mlp_probe,
)
from degenkit.tasks import nbff_spec, sine_wave_spec

CHEAP = dict(hidden_units=24, epochs=25, n_inits=2, n_trials=40)


def test_history_dataset_dimensions():
    spec = nbff_spec(channels=2, trial_len=20)
    X, y = build_history_dataset(spec, h=1, seed=0, n_trials=5)
    assert X.shape == (5 * 19, 2 + 2)  # d_in + d_out at h=1
    assert y.shape == (5 * 19, 2)
    X3, _ = build_history_dataset(spec, h=3, seed=0, n_trials=5)
    assert X3.shape == (5 * 17, 3 * (2 + 2))


def test_history_dataset_row_count():
    spec = nbff_spec(trial_len=50)
    X, y = build_history_dataset(spec, h=7, seed=1, n_trials=3)
    assert X.shape[0] == 3 * (50 - 7)


def test_history_dataset_spot_check_slices():
    import degenkit as dk

    spec = nbff_spec(channels=1, trial_len=15)
    h, n_trials = 4, 3
    X, y = build_history_dataset(spec, h=h, seed=2, n_trials=n_trials)
    trial = dk.generate(spec, 2, n_trials)
    rows_per = 15 - h
    # row r of trial i covers steps [t-h+1 .. t] with t = h-1+r
    for i, r in ((0, 0), (1, 5), (2, rows_per - 1)):
        t = h - 1 + r
        row = X[i * rows_per + r]
        np.testing.assert_array_equal(row[:h], trial.inputs[i, t - h + 1 : t + 1, 0])
        np.testing.assert_array_equal(row[h:], trial.targets[i, t - h + 1 : t + 1, 0])
        np.testing.assert_array_equal(y[i * rows_per + r], trial.targets[i, t + 1])


def test_history_dataset_rejects_long_history():
    spec = nbff_spec(trial_len=10)
    with pytest.raises(ValueError):
        build_history_dataset(spec, h=10, seed=0, n_trials=3)
    with pytest.raises(ValueError):
        build_history_dataset(spec, h=0, seed=0, n_trials=3)


def test_probe_learns_zero_labels():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(400, 6))
    y = np.zeros((400, 1))
    cfg = ProbeConfig(h_range=(1,), hidden_units=24, epochs=120, n_inits=2, n_trials=40)
    assert fit_mlp_probe(X, y, cfg, seed=0) < 1e-4


def test_probe_learns_linear_map():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(600, 5))
    y = X[:, :1]
    cfg = ProbeConfig(h_range=(1,), hidden_units=32, epochs=60, n_inits=2)
    assert fit_mlp_probe(X, y, cfg, seed=1) < 1e-3


def test_probe_deterministic():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(200, 4))
    y = rng.normal(size=(200, 1))
    cfg = ProbeConfig(h_range=(1,), **CHEAP)
    assert fit_mlp_probe(X, y, cfg, seed=3) == fit_mlp_probe(X, y, cfg, seed=3)


def test_probe_requires_enough_rows():
    cfg = ProbeConfig(h_range=(1,), **CHEAP)
    with pytest.raises(ValueError):
        fit_mlp_probe(np.zeros((50, 3)), np.zeros((50, 1)), cfg, seed=0)


def test_flipflop_memory_demand_is_one():
    spec = nbff_spec(trial_len=40)
    cfg = ProbeConfig(h_range=(1, 2, 3), **CHEAP)
    h_star, curve = estimate_memory_demand(spec, cfg, seed=0)
    assert h_star == 1
    assert set(curve) == {1, 2, 3}


def test_memory_demand_invariant_to_appending_larger_h():
    spec = nbff_spec(trial_len=40)
    a, curve_a = estimate_memory_demand(spec, ProbeConfig(h_range=(1, 2, 3), **CHEAP), seed=0)
    b, curve_b = estimate_memory_demand(spec, ProbeConfig(h_range=(1, 2, 3, 5), **CHEAP), seed=0)
    assert a == b
    for h in (1, 2, 3):
        assert curve_a[h] == curve_b[h]


def test_memory_demand_curve_near_monotone():
    spec = nbff_spec(trial_len=40)
    cfg = ProbeConfig(h_range=(1, 2, 3, 4), hidden_units=24, epochs=40, n_inits=3,
                      n_trials=60)
    _, curve = estimate_memory_demand(spec, cfg, seed=1)
    hs = sorted(curve)
    for a, b in zip(hs, hs[1:]):
        assert curve[b] <= curve[a] * 1.1


def test_sine_needs_two_steps():
    # the sine recurrence is linear in (y_{t-1}, y_t) given the frequency cue,
    # so the error collapses at h = 2
    spec = sine_wave_spec(trial_len=60)
    cfg = ProbeConfig(h_range=(1, 2), hidden_units=48, epochs=50, n_inits=2,
                      n_trials=80)
    _, curve = estimate_memory_demand(spec, cfg, seed=0)
    assert curve[2] < 0.05 * curve[1]


def test_probe_config_validation():
    with pytest.raises(ValueError):
        ProbeConfig(h_range=())
    with pytest.raises(ValueError):
        ProbeConfig(h_range=(3, 1))
    with pytest.raises(ValueError):
        ProbeConfig(h_range=(1, 2), train_frac=1.5)
