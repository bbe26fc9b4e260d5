import datetime as dt
import io
import json
import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surveyband.errors import ParseError
from surveyband.io import (
    PREDICTION_HEADER,
    ResultBundle,
    SurveySeries,
    band_svg,
    bundled_surveys,
    dump_surveys,
    load_results,
    load_surveys,
    read_prediction_csv,
    render_band_svg,
    survey_times,
    write_results,
)
from surveyband.pipeline import Band, BandSelection, FitEnsemble, FitResult, PredictionTable
from surveyband.dynamics import GammaParams
from surveyband.stats import QuantileSeries, SurveyRecord

GOLDEN = Path(__file__).parent / "data" / "golden_band.svg"
HEADER = "date,sample_size,Support,Rejection,Abstention\n"


def csv_text(*rows):
    return io.StringIO(HEADER + "".join(r + "\n" for r in rows))


def test_bundled_surveys(surveys):
    assert len(surveys) == 16
    assert tuple(surveys.categories) == ("Support", "Rejection", "Abstention")
    first = surveys[0]
    assert first.date == dt.date(2005, 5, 1)
    assert first.n == 1800
    assert np.allclose(first.theta, [0.02, 0.93, 0.05], atol=1e-15)
    assert [r.n for r in surveys].count(1800) == 3
    assert surveys[-1].date == dt.date(2012, 11, 1)
    assert surveys[-1].t == pytest.approx(7.5)
    assert np.allclose(np.diff([r.t for r in surveys]), 0.5)


def test_single_row():
    s = load_surveys(csv_text("2010-01-01,100,10,80,10"))
    assert len(s) == 1 and s[0].t == 0.0


def test_rounding_renormalized():
    s = load_surveys(csv_text("2010-01-01,100,10,79.4,10"))
    assert s[0].theta.sum() == pytest.approx(1.0, abs=1e-15)
    assert s[0].theta[0] == pytest.approx(10 / 99.4)


@pytest.mark.parametrize("row, line, field", [
    ("2010-13-01,100,10,80,10", 2, "date"),
    ("2010-01-01,abc,10,80,10", 2, "sample_size"),
    ("2010-01-01,100.5,10,80,10", 2, "sample_size"),
    ("2010-01-01,0,10,80,10", 2, "sample_size"),
    ("2010-01-01,100,x,80,10", 2, "Support"),
    ("2010-01-01,100,10,-1,91", 2, "Rejection"),
    ("2010-01-01,100,10,80", 2, "Abstention"),
    ("2010-01-01,100,10,70,10", 2, "Support,Rejection,Abstention"),
])
def test_parse_errors_name_row_and_field(row, line, field):
    with pytest.raises(ParseError) as info:
        load_surveys(csv_text(row))
    assert info.value.row == line
    assert info.value.field == field
    assert f"row {line}" in str(info.value)


def test_dates_must_increase():
    with pytest.raises(ParseError) as info:
        load_surveys(csv_text("2010-01-01,100,10,80,10", "2010-01-01,100,10,80,10"))
    assert info.value.row == 3


def test_bad_header():
    with pytest.raises(ParseError):
        load_surveys(io.StringIO("when,n,a,b\n2010-01-01,1,50,50\n"))
    with pytest.raises(ParseError):
        load_surveys(io.StringIO(""))


def test_missing_file_is_os_error(tmp_path):
    with pytest.raises(OSError):
        load_surveys(tmp_path / "nope.csv")


def test_json_mirror(surveys, tmp_path):
    p = tmp_path / "s.json"
    p.write_text(dump_surveys(surveys, "json"))
    back = load_surveys(p)
    assert back.categories == surveys.categories
    for a, b in zip(surveys, back):
        assert a.date == b.date and a.n == b.n and a.t == b.t
        assert np.allclose(a.theta, b.theta, rtol=0, atol=1e-15)


def test_json_missing_field():
    doc = {"categories": ["a", "b"], "records": [{"date": "2010-01-01", "percentages": [50, 50]}]}
    with pytest.raises(ParseError) as info:
        load_surveys(io.StringIO(json.dumps(doc)), format="json")
    assert info.value.field == "sample_size" and info.value.row == 1


def test_survey_times_day_rule():
    assert survey_times([dt.date(2005, 5, 1), dt.date(2005, 11, 1), dt.date(2006, 5, 1)]) == [0.0, 0.5, 1.0]
    t = survey_times([dt.date(2005, 5, 1), dt.date(2005, 5, 15)])
    assert t[1] == pytest.approx(14 / 365.25)


pct = st.integers(0, 1000)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 5000), pct, pct, pct).filter(lambda r: r[1] + r[2] + r[3] > 0),
                min_size=1, max_size=8))
def test_parse_render_parse(rows):
    lines = []
    for i, (n, a, b, c) in enumerate(rows):
        tot = a + b + c
        vals = [100 * a / tot, 100 * b / tot, 100 * c / tot]
        lines.append(f"{2000 + i}-05-01,{n}," + ",".join(repr(v) for v in vals))
    first = load_surveys(csv_text(*lines))
    again = load_surveys(io.StringIO(dump_surveys(first)))
    for x, y in zip(first, again):
        assert x.n == y.n and x.date == y.date
        assert np.allclose(x.theta, y.theta, rtol=0, atol=1e-15)


def _toy_bundle(surveys, with_prediction=True):
    grid = np.array([r.t for r in surveys])
    rng = np.random.default_rng(0)
    fits = []
    for i in range(3):
        traj = np.array([r.percentages for r in surveys]) + rng.normal(0, 0.1, (len(surveys), 3))
        fits.append(FitResult(i, GammaParams.from_upper(rng.normal(0, 0.01, 3)), 0.9 - 0.1 * i,
                              surveys[0].percentages.copy(), traj))
    ens = FitEnsemble(tuple(fits), 100, 1, grid, unfittable=2)
    q = [QuantileSeries(c, [r.percentages[i] - 1 for r in surveys], [r.percentages[i] + 1 for r in surveys])
         for i, c in enumerate(surveys.categories)]
    sel = BandSelection(2, 0.123456789012345678, (0.5, 0.6, 0.7, 0.8, 0.9, 0.123456789012345678), np.array([0.1, 0.2]))
    band = Band(grid, np.array([r.percentages for r in surveys]) - 0.1 / 3,
                np.array([r.percentages for r in surveys]) + np.pi)
    pred = None
    if with_prediction:
        pred = PredictionTable(np.array([8.0, 8.5]), (dt.date(2013, 5, 1), dt.date(2013, 11, 1)),
                               np.array([[3.1, 90.7, 6.2], [3.0, 90.3, 6.7]]),
                               np.array([[1.5, 88.0, 4.0], [1.5, 88.0, 4.0]]),
                               np.array([[4.3, 93.0, 8.4], [4.4, 93.0, 8.7]]))
    return ResultBundle.from_run({"seed": 1, "rk_step": 0.005}, surveys, q, ens, sel, band, pred)


def test_bundle_round_trip_bit_exact(surveys, tmp_path):
    bundle = _toy_bundle(surveys)
    p = tmp_path / "r.json"
    write_results(bundle, p)
    back = load_results(p)
    assert back.to_dict() == bundle.to_dict()
    assert back.selection.m_k == bundle.selection.m_k
    assert np.array_equal(back.band.lower, bundle.band.lower)
    assert np.array_equal(back.prediction.mean, bundle.prediction.mean)
    p2 = tmp_path / "r2.json"
    write_results(back, p2)
    assert p.read_bytes() == p2.read_bytes()


def test_bundle_rebuilds_ensemble(surveys):
    bundle = _toy_bundle(surveys, with_prediction=False)
    ens = bundle.ensemble()
    assert len(ens) == 3 and ens.unfittable == 2
    assert ens.trajectories.shape == (3, 16, 3)
    assert [f.index for f in ens.accepted] == [0, 1, 2]


def test_bundle_rejects_foreign_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text('{"format": "other"}')
    with pytest.raises(ParseError):
        load_results(p)
    p.write_text("{not json")
    with pytest.raises(ParseError):
        load_results(p)


def test_prediction_csv(surveys, tmp_path):
    bundle = _toy_bundle(surveys)
    p = tmp_path / "prediction.csv"
    write_results(bundle, p, format="csv")
    lines = p.read_text().splitlines()
    assert lines[0] == ",".join(PREDICTION_HEADER) == "date,category,mean,ci_low,ci_high"
    assert lines[1].startswith("2013-05-01,Support,3.1")
    rows = read_prediction_csv(p)
    assert len(rows) == 6
    assert rows[4]["category"] == "Rejection" and rows[4]["mean"] == 90.3


def _golden_svg(surveys):
    bundle = _toy_bundle(surveys)
    return band_svg(bundle.band, bundle.quantiles[0], surveys, 0)


def test_svg_is_deterministic(surveys, tmp_path):
    bundle = _toy_bundle(surveys)
    a = render_band_svg(bundle.band, bundle.quantiles, surveys, tmp_path / "a")
    b = render_band_svg(bundle.band, bundle.quantiles, surveys, tmp_path / "b")
    assert [p.name for p in a] == ["band_support.svg", "band_rejection.svg", "band_abstention.svg"]
    for x, y in zip(a, b):
        assert x.read_bytes() == y.read_bytes()


def test_svg_golden(surveys):
    text = _golden_svg(surveys)
    if os.environ.get("SURVEYBAND_REGEN_GOLDEN"):
        GOLDEN.write_text(text, encoding="utf-8", newline="\n")
    assert text == GOLDEN.read_text(encoding="utf-8")
    assert text.startswith("<svg") and text.count("<polyline") == 2
