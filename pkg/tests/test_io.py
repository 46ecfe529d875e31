import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chargenoise.estimation import ChargeTrace
from chargenoise.io import SchemaError, read_shots_csv, read_spectrum_csv, read_trace_csv, write_spectrum_csv, write_trace_csv
from chargenoise.pulses import ShotRecords
from chargenoise.spectral import Spectrum

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@given(st.lists(finite, min_size=1, max_size=20))
def test_trace_round_trip_is_exact(tmp_path_factory, vals):
    path = tmp_path_factory.mktemp("io") / "trace.csv"
    v = np.array(vals)
    write_trace_csv(ChargeTrace(np.arange(len(v)) * 20.0, v, np.abs(v)), path)
    back = read_trace_csv(path)
    assert np.array_equal(back.values, v)
    assert np.array_equal(back.sigma, np.abs(v))


def test_trace_nan_gaps_survive(tmp_path):
    v = np.array([0.1, np.nan, 0.3])
    write_trace_csv(ChargeTrace(np.arange(3.0), v, np.ones(3)), tmp_path / "t.csv")
    back = read_trace_csv(tmp_path / "t.csv")
    assert np.isnan(back.values[1]) and back.values[2] == 0.3


def test_spectrum_round_trip(tmp_path):
    s = Spectrum(np.array([0.1, 1.0, 10.0]), np.array([1e-3, 2.5e-4, 1e-7]), 7)
    write_spectrum_csv(s, tmp_path / "s.csv")
    back = read_spectrum_csv(tmp_path / "s.csv")
    assert np.array_equal(back.values, s.values) and back.n_avg == 7


def test_shots_round_trip_and_empty(tmp_path):
    rec = ShotRecords(np.array([0.0, 1e-4]), np.array([1, 2], np.int8), np.array([1, 0], np.int8), np.array([0.1, -0.35]), np.ones(2, np.int8))
    rec.to_csv(tmp_path / "s.csv")
    back = read_shots_csv(tmp_path / "s.csv")
    assert np.array_equal(back.outcome, rec.outcome) and np.array_equal(back.bias_ng, rec.bias_ng)
    ShotRecords.empty().to_csv(tmp_path / "e.csv")
    assert len(read_shots_csv(tmp_path / "e.csv")) == 0


@pytest.mark.parametrize(
    "text",
    [
        "time,x\n1,2\n",
        "t_s,kind,outcome,bias_ng_ext\n0.0,parity,1\n",
        "t_s,kind,outcome,bias_ng_ext\n0.0,bogus,1,0.0\n",
        "t_s,kind,outcome,bias_ng_ext\n0.0,parity,3,0.0\n",
    ],
)
def test_malformed_shot_files(tmp_path, text):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(SchemaError):
        read_shots_csv(p)


def test_missing_file(tmp_path):
    with pytest.raises(SchemaError):
        read_trace_csv(tmp_path / "nope.csv")
