import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chargenoise.core import preset, ramsey_population
from chargenoise.pulses import (
    IDLE,
    MEASURE,
    ROT,
    X2,
    PulseSequence,
    ShotRecords,
    charge_scan_sequence,
    charge_transfer_gain,
    condition_charge_on_parity,
    conditioned_offset,
    evolve_bloch,
    fast_charge_sequence,
    idle_detuning,
    parity_sequence,
    reconstruct_fast_charge,
    run_charge_scan,
    run_fast_protocol,
    scan_grid,
)
from conftest import static_env


def test_scan_sequence_matches_closed_form(params):
    ng = np.linspace(-1, 1, 1001)
    seq = charge_scan_sequence(params)
    for s in (1, -1):
        p = evolve_bloch(seq, idle_detuning(params, ng, s), params.decay_d, params.visibility_nu)
        assert np.max(np.abs(p - ramsey_population(params, ng))) < 1e-12


@given(st.floats(-np.pi, np.pi), st.floats(-np.pi, np.pi))
def test_rotated_final_gate(phi, theta):
    seq = PulseSequence((X2, (IDLE, 1.0), (ROT, theta), MEASURE))
    p = evolve_bloch(seq, phi)
    assert p == pytest.approx(0.5 * (1 + np.cos(phi - theta)), abs=1e-12)


def test_parity_sequence_separates_bands(params):
    seq = parity_sequence(params)
    p_plus = evolve_bloch(seq, idle_detuning(params, 0.0, 1))
    p_minus = evolve_bloch(seq, idle_detuning(params, 0.0, -1))
    assert {round(float(p_plus), 12), round(float(p_minus), 12)} == {0.0, 1.0}


def test_fast_charge_small_signal(params):
    seq = fast_charge_sequence(params)
    r = 1e-4  # charge in e around the degeneracy bias
    p = evolve_bloch(seq, idle_detuning(params, -0.25 + r / 2, 1))
    slope = (2 * p - 1) / r
    assert abs(slope) == pytest.approx(1.0, rel=1e-3)


def test_multi_idle_detunings():
    seq = PulseSequence((X2, (IDLE, 1.0), (IDLE, 1.0), X2, MEASURE))
    assert evolve_bloch(seq, [0.3, 0.4]) == pytest.approx(evolve_bloch(PulseSequence.ramsey(1.0), 0.7))
    batch = evolve_bloch(seq, np.array([[0.3, 0.4], [0.0, 0.0]]))
    assert batch.shape == (2,)


@pytest.mark.parametrize(
    "gates",
    [(X2, X2), (X2, MEASURE, MEASURE), (X2, (IDLE, -1.0), MEASURE), ("Z/2", MEASURE)],
)
def test_sequence_validation(gates):
    with pytest.raises(ValueError):
        PulseSequence(gates)


def test_sequence_duration(params):
    seq = charge_scan_sequence(params)
    assert seq.duration == pytest.approx(2 * params.gate_duration + params.ramsey_idle)


def test_charge_scan_expectation(params):
    env = static_env(0.3)
    scan = run_charge_scan(env, params, 0.0, seed=1)
    assert np.allclose(scan.p1_expected, ramsey_population(params, scan.bias_ng + 0.15))
    assert scan.bias_ng.tolist() == pytest.approx(scan_grid(params.scan_points).tolist())
    with pytest.raises(ValueError):
        run_charge_scan(env, params, 35.0, seed=1)


def test_fast_protocol_reconstructs_static_charge(params):
    env = static_env(0.04, n=30_000, dt=1e-4)
    res = run_fast_protocol(env, params, 2.9, seed=4)
    t, q, orphans = reconstruct_fast_charge(res, params)
    assert orphans == 0
    assert len(q) == res.n_cycles == 29_000
    # parity fixed at +1 leaves the signed conditioning error in the mean
    err = (params.decay_d - 1) * params.visibility_nu / charge_transfer_gain(params)
    assert np.mean(q) == pytest.approx(0.04 + err * (1 + 0.0), abs=0.03)


def test_gain_and_offset(params):
    assert charge_transfer_gain(params) == pytest.approx(params.visibility_nu**2, rel=1e-12)
    assert conditioned_offset(params) == pytest.approx((params.decay_d - 1) ** 2)


def test_conditioning_drops_orphans():
    rec = ShotRecords(
        np.arange(5.0), np.array([2, 1, 2, 2, 1], dtype=np.int8), np.array([1, 1, 0, 1, 0]), np.zeros(5), np.ones(5, dtype=np.int8)
    )
    c = condition_charge_on_parity(rec)
    assert c.n_orphans == 2
    assert c.values.tolist() == [-1.0]


def test_shot_csv_round_trip(params, tmp_path):
    from chargenoise.io import read_shots_csv

    env = static_env(0.1, n=2000, dt=1e-4)
    rec = run_fast_protocol(env, params, 0.1, seed=1).records
    rec.to_csv(tmp_path / "s.csv")
    back = read_shots_csv(tmp_path / "s.csv")
    assert np.array_equal(back.t, rec.t) and np.array_equal(back.kind, rec.kind)
    assert np.array_equal(back.outcome, rec.outcome) and np.array_equal(back.bias_ng, rec.bias_ng)
