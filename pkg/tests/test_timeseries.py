import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import norm

from fadeswitch.errors import EmptyInputError, FormatError, InvalidParameterError, NegativeValueError, SpacingError
from fadeswitch.timeseries import (
    AttenuationSeries,
    SynthParams,
    generate_synthetic,
    ingest_csv,
    to_csv_bytes,
)


def test_zero_spread_gives_constant_series():
    s = generate_synthetic(SynthParams(m_ln=math.log(5), sigma_ln=0.0, duration_s=10, seed=123))
    assert len(s) == 100
    np.testing.assert_allclose(s.values, 5.0, rtol=1e-15)


def test_length_is_rounded_duration_times_rate():
    s = generate_synthetic(SynthParams(duration_s=12.34, sample_rate_hz=10))
    assert len(s) == 123


def test_same_seed_bit_identical():
    p = SynthParams(duration_s=600, seed=9)
    assert generate_synthetic(p).values.tobytes() == generate_synthetic(p).values.tobytes()
    q = SynthParams(duration_s=600, seed=10)
    assert generate_synthetic(p).values.tobytes() != generate_synthetic(q).values.tobytes()


def test_exceedance_matches_normal_tail():
    p = SynthParams(m_ln=0.0, sigma_ln=1.0, beta_inv_s=1.0, duration_s=1e5, seed=4)
    s = generate_synthetic(p)
    assert len(s) == 10**6
    assert s.exceedance(math.e) == pytest.approx(norm.sf(1.0), abs=0.01)
    assert p.exceedance_probability(math.e) == pytest.approx(0.158655, abs=1e-6)


def test_log_domain_autocorrelation_follows_rho_powers():
    p = SynthParams(m_ln=0.5, sigma_ln=0.7, beta_inv_s=2.0, duration_s=2e4, seed=2)
    s = generate_synthetic(p)
    x = np.log(s.values)
    x = (x - x.mean()) / x.std()
    for lag in (1, 10):
        r = np.mean(x[:-lag] * x[lag:])
        assert r == pytest.approx(p.rho**lag, abs=0.05)


@given(st.floats(0, 5), st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_values_never_below_offset(offset, seed):
    s = generate_synthetic(SynthParams(m_ln=-2, sigma_ln=2.0, duration_s=20, offset_db=offset, seed=seed))
    assert np.all(s.values >= offset)


@pytest.mark.parametrize("field,value", [("duration_s", 0), ("sample_rate_hz", -1), ("beta_inv_s", 0)])
def test_invalid_params(field, value):
    with pytest.raises(InvalidParameterError):
        SynthParams(**{field: value})


def test_ingest_two_rows():
    s = ingest_csv(b"timestamp_s,attenuation_db\n0.0,1.5\n0.1,2.5\n")
    assert len(s) == 2
    assert s.sample_rate_hz == 10.0
    np.testing.assert_array_equal(s.values, [1.5, 2.5])


def test_ingest_header_only_is_empty():
    with pytest.raises(EmptyInputError):
        ingest_csv(b"timestamp_s,attenuation_db\n")


def test_ingest_nonuniform_spacing():
    with pytest.raises(SpacingError):
        ingest_csv(b"timestamp_s,attenuation_db\n0.0,1\n0.1,1\n0.2,1\n0.5,1\n")


def test_ingest_missing_header():
    with pytest.raises(FormatError):
        ingest_csv(b"0.0,1.5\n0.1,2.5\n")


def test_ingest_negative_value():
    with pytest.raises(NegativeValueError):
        ingest_csv(b"timestamp_s,attenuation_db\n0.0,1.5\n0.1,-2.5\n")


def test_ingest_garbage_row():
    with pytest.raises(FormatError):
        ingest_csv(b"timestamp_s,attenuation_db\n0.0,1.5\n0.1,abc\n")


def test_ingest_accepts_file_object(tmp_path):
    path = tmp_path / "a.csv"
    path.write_bytes(b"timestamp_s,attenuation_db\n5.0,0\n5.5,1\n6.0,2\n")
    with open(path, "rb") as fh:
        s = ingest_csv(fh)
    assert s.sample_rate_hz == 2.0 and s.start_time_s == 5.0


@given(st.integers(0, 10_000), st.sampled_from([1.0, 2.0, 10.0, 25.0]), st.floats(0, 1e4))
@settings(max_examples=20, deadline=None)
def test_csv_round_trip(seed, rate, start):
    s = generate_synthetic(SynthParams(duration_s=40, sample_rate_hz=rate, seed=seed, offset_db=0.3))
    s = AttenuationSeries("g", s.values, rate, round(start, 3))
    back = ingest_csv(to_csv_bytes(s))
    np.testing.assert_array_equal(back.values, s.values)
    assert back.sample_rate_hz == s.sample_rate_hz


def test_series_rejects_bad_values():
    with pytest.raises(NegativeValueError):
        AttenuationSeries("g", [1.0, -0.1])
    with pytest.raises(FormatError):
        AttenuationSeries("g", [1.0, float("nan")])
    with pytest.raises(EmptyInputError):
        AttenuationSeries("g", [])


def test_series_is_read_only():
    s = AttenuationSeries("g", [1.0, 2.0])
    with pytest.raises(ValueError):
        s.values[0] = 3.0
