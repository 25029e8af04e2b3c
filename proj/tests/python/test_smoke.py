"""Python-facing smoke tests for the pybind11 module."""

import json
import math

import numpy as np
import pytest

import myoattn


def test_activation_profile_peak():
    assert myoattn.activation_profile(0.0, 2.0, 0.5, 1.0, 1.0) == 0.0
    assert myoattn.activation_profile(0.5, 2.0, 0.5, 1.0, 1.0) == pytest.approx(1.0)
    assert myoattn.activation_profile(1.5, 2.0, 0.5, 1.0, 1.0) == 0.0


def test_thickness_dynamics_steady_state():
    a = np.ones(20000)
    values, t0, dt = myoattn.thickness_dynamics(a, 1e-3, 0.1, 25.0, 6.0)
    assert t0 == 0.0
    assert dt == pytest.approx(0.05)
    assert values[-1] == pytest.approx(31.0, abs=1e-3)


def test_envelope_recovers_tone_amplitude():
    fs, fc, amp = 50e6, 5e6, 0.7
    t = np.arange(2000) / fs
    env = myoattn.envelope(amp * np.sin(2 * math.pi * fc * t), fc, fs)
    mid = env[200:-200]
    assert np.all(np.abs(mid - amp) < 0.02 * amp)


def test_thickness_from_delays():
    assert myoattn.thickness_from_delays(26e-6, 52e-6) == pytest.approx(20.02)
    with pytest.raises(ValueError):
        myoattn.thickness_from_delays(52e-6, 26e-6)


def test_bandpass_rejects_dc():
    x = np.ones(2000)
    y = myoattn.bandpass(x)
    assert np.max(np.abs(y[500:1500])) < 1e-3


def test_losses():
    target = np.array([10.0, 12.0, 14.0, 12.0, 10.0])
    assert myoattn.mse_loss(target, target) == 0.0
    assert myoattn.contraction_loss(np.full(5, 11.0), target) == pytest.approx(8.0)
    pred = target + 0.5
    assert myoattn.total_loss(pred, target, 0.2) == pytest.approx(
        myoattn.mse_loss(pred, target) + 0.2 * myoattn.contraction_loss(pred, target)
    )


def test_metrics_and_excursion():
    assert myoattn.muscle_excursion(np.array([10.0, 12.0, 14.0, 12.0, 10.0])) == 4.0
    t = np.arange(180) * 0.05
    trace = np.sin(2 * math.pi * (t - 0.1) / 3.0)
    periods = myoattn.segment_periods(trace, 0.05)
    assert len(periods) >= 2
    report = myoattn.compute_metrics(trace, trace, periods)
    assert report["mtd_mean_mm"] == 0.0
    assert report["n_periods"] == len(periods)


def test_gradcheck_small_model():
    passed, log = myoattn.gradcheck(d_model=8, heads=1, channels=2, ff_dim=16)
    assert passed, log


def test_simulate_preprocess_train_roundtrip(tmp_path):
    n = myoattn.simulate_dataset(str(tmp_path / "data"), n_subjects=2, seed=3,
                                 duration_s=12.0)
    assert n == 2
    assert (tmp_path / "data" / "subject_1" / "stage_3" / "rf_meta.json").exists()

    windows = myoattn.preprocess_dataset(str(tmp_path / "data"),
                                         str(tmp_path / "windows.bin"))
    assert windows > 0

    config = json.dumps({
        "master_seed": 3,
        "arch": {"channels": 4, "d_model": 16, "heads": 2, "ff_dim": 32,
                 "n_self": 1, "n_cross": 1},
        "train": {"epochs": 1, "batch": 16},
    })
    val_loss = myoattn.train_model(str(tmp_path / "windows.bin"),
                                   str(tmp_path / "model.ckpt"),
                                   subjects=[0, 1], config_json=config)
    assert math.isfinite(val_loss)

    features = np.random.default_rng(0).normal(size=(4, 100))
    pred = myoattn.predict_window(str(tmp_path / "model.ckpt"), features)
    assert pred.shape == (20,)
    assert np.all(np.isfinite(pred))


def test_cli_entry():
    code, out, err = myoattn.cli(["--help"])
    assert code == 0
    assert "simulate" in out
    code, out, err = myoattn.cli([])
    assert code == 1
