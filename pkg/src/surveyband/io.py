"""Survey ingestion, result bundles and SVG band plots."""
from __future__ import annotations

import csv
import datetime as dt
import hashlib
import io as _io
import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .dynamics import GammaParams, integrate_raw
from .errors import InvalidArgumentError, ParseError
from .pipeline import (
    Band,
    BandSelection,
    FitEnsemble,
    FitResult,
    PredictionTable,
)
from .stats import QuantileSeries, SurveyRecord

FORMAT_TAG = "surveyband-result/1"
SUM_TOLERANCE = 1.0
PREDICTION_HEADER = ["date", "category", "mean", "ci_low", "ci_high"]


class SurveySeries(list):
    """A list of :class:`SurveyRecord` that also knows its category labels."""

    def __init__(self, records=(), categories=()):
        super().__init__(records)
        self.categories = tuple(categories)

    @property
    def dates(self):
        return [r.date for r in self]


def survey_times(dates: Sequence[dt.date]) -> list[float]:
    """Years since the first date.

    When every date falls on the same day of the month the offset is counted
    in months (so semiannual surveys sit exactly on 0.5-year steps);
    otherwise days / 365.25.
    """
    if not dates:
        return []
    first = dates[0]
    if all(d.day == first.day for d in dates):
        return [((d.year - first.year) * 12 + (d.month - first.month)) / 12.0 for d in dates]
    return [(d - first).days / 365.25 for d in dates]


def add_months(d: dt.date, months: int) -> dt.date:
    m = d.month - 1 + months
    y = d.year + m // 12
    m = m % 12 + 1
    # clamp to month length
    for day in (d.day, 30, 29, 28):
        try:
            return dt.date(y, m, min(d.day, day))
        except ValueError:
            continue
    raise ValueError(d)


def _parse_date(text, row):
    try:
        return dt.date.fromisoformat(str(text).strip())
    except ValueError:
        raise ParseError(f"not an ISO-8601 date: {text!r}", row=row, field="date") from None


def _build(rows, categories) -> SurveySeries:
    """rows: list of (row_number, date, sample_size, percentages)."""
    if not rows:
        raise ParseError("no survey rows")
    records = []
    prev = None
    dates = [r[1] for r in rows]
    times = survey_times(dates)
    for (rownum, date, n, pct), t in zip(rows, times):
        if prev is not None and date <= prev:
            raise ParseError("dates must be strictly increasing", row=rownum, field="date")
        prev = date
        if isinstance(n, float) and not n.is_integer():
            raise ParseError(f"sample size must be an integer, got {n!r}", row=rownum, field="sample_size")
        n = int(n)
        if n < 1:
            raise ParseError("sample size must be >= 1", row=rownum, field="sample_size")
        pct = np.asarray(pct, dtype=float)
        for name, v in zip(categories, pct):
            if not math.isfinite(v) or v < 0:
                raise ParseError(f"invalid percentage {v!r}", row=rownum, field=name)
        total = float(pct.sum())
        if abs(total - 100.0) > SUM_TOLERANCE:
            raise ParseError(f"percentages sum to {total:g}, not 100 +- {SUM_TOLERANCE}", row=rownum,
                             field=",".join(categories))
        theta = pct / total
        records.append(SurveyRecord(date, t, n, theta))
    return SurveySeries(records, categories)


def _load_csv(text: str) -> SurveySeries:
    reader = csv.reader(_io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError("empty file") from None
    for i, name in enumerate(("date", "sample_size")):
        if len(header) <= i or header[i] != name:
            raise ParseError(f"header must start with date,sample_size; got {header[:2]}", row=1, field=name)
    categories = header[2:]
    if len(categories) < 2:
        raise ParseError("need at least two category columns", row=1)
    rows = []
    for rownum, rec in enumerate(reader, start=2):
        if not rec or all(not c.strip() for c in rec):
            continue
        if len(rec) != len(header):
            missing = header[len(rec)] if len(rec) < len(header) else None
            raise ParseError(f"expected {len(header)} columns, got {len(rec)}", row=rownum, field=missing)
        date = _parse_date(rec[0], rownum)
        try:
            n = float(rec[1])
        except ValueError:
            raise ParseError(f"not a number: {rec[1]!r}", row=rownum, field="sample_size") from None
        pct = []
        for name, cell in zip(categories, rec[2:]):
            try:
                pct.append(float(cell))
            except ValueError:
                raise ParseError(f"not a number: {cell!r}", row=rownum, field=name) from None
        rows.append((rownum, date, n, pct))
    return _build(rows, categories)


def _load_json(text: str) -> SurveySeries:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict) or "categories" not in doc or "records" not in doc:
        raise ParseError("JSON survey file needs 'categories' and 'records'")
    categories = [str(c) for c in doc["categories"]]
    if len(categories) < 2:
        raise ParseError("need at least two categories", field="categories")
    rows = []
    for i, rec in enumerate(doc["records"], start=1):
        for key in ("date", "sample_size", "percentages"):
            if key not in rec:
                raise ParseError("missing field", row=i, field=key)
        if len(rec["percentages"]) != len(categories):
            raise ParseError("wrong number of percentages", row=i, field="percentages")
        rows.append((i, _parse_date(rec["date"], i), rec["sample_size"], rec["percentages"]))
    return _build(rows, categories)


def load_surveys(source, format: str | None = None) -> SurveySeries:
    """Read a survey file (``csv`` or ``json``) from a path or text stream.

    Percentages are renormalized to sum exactly to 100 (rows may be off by
    up to one point through rounding).
    """
    if hasattr(source, "read"):
        text = source.read()
        name = getattr(source, "name", "")
    else:
        name = str(source)
        text = Path(source).read_text(encoding="utf-8")
    if format is None:
        format = "json" if str(name).lower().endswith(".json") else "csv"
    if format == "csv":
        return _load_csv(text)
    if format == "json":
        return _load_json(text)
    raise InvalidArgumentError(f"unknown survey format {format!r}")


def bundled_surveys() -> SurveySeries:
    """The sixteen semiannual surveys May 2005 - Nov 2012 shipped with the package."""
    text = resources.files("surveyband").joinpath("data/euskobarometro.csv").read_text(encoding="utf-8")
    return _load_csv(text)


def bundled_survey_path() -> str:
    return str(resources.files("surveyband").joinpath("data/euskobarometro.csv"))


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def dump_surveys(series: SurveySeries, format: str = "csv") -> str:
    if format == "csv":
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["date", "sample_size", *series.categories])
        for r in series:
            w.writerow([r.date.isoformat(), r.n, *(_fmt(v) for v in r.percentages)])
        return buf.getvalue()
    if format == "json":
        doc = {
            "categories": list(series.categories),
            "records": [
                {"date": r.date.isoformat(), "sample_size": r.n, "percentages": [float(v) for v in r.percentages]}
                for r in series
            ],
        }
        return json.dumps(doc, indent=1) + "\n"
    raise InvalidArgumentError(f"unknown survey format {format!r}")


# -- result bundle ---------------------------------------------------------


@dataclass
class ResultBundle:
    config: dict
    master_seed: int
    categories: tuple
    surveys: SurveySeries
    quantiles: list
    total_attempted: int
    unfittable: int
    fits: list  # accepted fits, p-value order: dicts with index, gamma, p_value, initial
    selection: BandSelection
    band: Band
    prediction: PredictionTable | None = None
    extra: dict = field(default_factory=dict)

    @property
    def accepted(self) -> int:
        return len(self.fits)

    @classmethod
    def from_run(cls, config, surveys, quantiles, ensemble: FitEnsemble, selection, band, prediction=None):
        fits = [
            {
                "index": f.index,
                "gamma": [float(v) for v in f.gamma.upper],
                "p_value": float(f.p_value),
                "initial": [float(v) for v in f.initial],
            }
            for f in ensemble.accepted
        ]
        return cls(dict(config), ensemble.master_seed, tuple(surveys.categories), surveys, list(quantiles),
                   ensemble.total_attempted, ensemble.unfittable, fits, selection, band, prediction)

    def ensemble(self, rk_step: float | None = None) -> FitEnsemble:
        """Rebuild the fit ensemble (trajectories recomputed at the survey dates)."""
        h = float(rk_step if rk_step is not None else self.config.get("rk_step", 0.005))
        grid = np.ascontiguousarray([r.t for r in self.surveys], dtype=float)
        accepted = []
        for f in self.fits:
            a0 = np.ascontiguousarray(f["initial"], dtype=float)
            g = GammaParams.from_upper(f["gamma"])
            accepted.append(FitResult(f["index"], g, f["p_value"], a0, integrate_raw(a0, g.upper, grid, h)))
        return FitEnsemble(tuple(accepted), self.total_attempted, self.master_seed, grid, self.unfittable)

    def to_dict(self) -> dict:
        cats = list(self.categories)
        sel = self.selection
        doc = {
            "format": FORMAT_TAG,
            "config": self.config,
            "master_seed": self.master_seed,
            "categories": cats,
            "surveys": json.loads(dump_surveys(self.surveys, "json"))["records"],
            "data_quantiles": {
                q.category: {"lower": _floats(q.lower), "upper": _floats(q.upper)} for q in self.quantiles
            },
            "ensemble": {
                "total_attempted": self.total_attempted,
                "accepted": self.accepted,
                "unfittable": self.unfittable,
                "fits": self.fits,
            },
            "selection": {
                "k": sel.k,
                "m_k": float(sel.m_k),
                "per_pair_pvalues": _floats(sel.per_pair_pvalues),
                "scan": _floats(sel.scan) if sel.scan is not None else None,
            },
            "band": {
                "grid": _floats(self.band.grid),
                **{c: {"lower": _floats(self.band.lower[:, i]), "upper": _floats(self.band.upper[:, i])}
                   for i, c in enumerate(cats)},
            },
            "prediction": None,
        }
        if self.prediction is not None:
            p = self.prediction
            doc["prediction"] = [
                {
                    "date": d.isoformat() if d is not None else None,
                    "t": float(t),
                    **{c: {"mean": float(p.mean[r, i]), "ci_low": float(p.lower[r, i]),
                           "ci_high": float(p.upper[r, i])} for i, c in enumerate(cats)},
                }
                for r, (t, d) in enumerate(zip(p.times, p.dates))
            ]
        if self.extra:
            doc["extra"] = self.extra
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ResultBundle":
        if doc.get("format") != FORMAT_TAG:
            raise ParseError(f"not a {FORMAT_TAG} document", field="format")
        try:
            cats = tuple(doc["categories"])
            surveys = _load_json(json.dumps({"categories": list(cats), "records": doc["surveys"]}))
            quantiles = [QuantileSeries(c, doc["data_quantiles"][c]["lower"], doc["data_quantiles"][c]["upper"])
                         for c in cats]
            s = doc["selection"]
            scan = np.array(s["scan"], dtype=float) if s.get("scan") is not None else None
            selection = BandSelection(int(s["k"]), float(s["m_k"]), tuple(s["per_pair_pvalues"]), scan)
            b = doc["band"]
            band = Band(np.array(b["grid"], dtype=float),
                        np.column_stack([b[c]["lower"] for c in cats]),
                        np.column_stack([b[c]["upper"] for c in cats]))
            prediction = None
            if doc.get("prediction") is not None:
                rows = doc["prediction"]
                prediction = PredictionTable(
                    np.array([r["t"] for r in rows], dtype=float),
                    tuple(dt.date.fromisoformat(r["date"]) if r["date"] else None for r in rows),
                    np.array([[r[c]["mean"] for c in cats] for r in rows], dtype=float).reshape(len(rows), len(cats)),
                    np.array([[r[c]["ci_low"] for c in cats] for r in rows], dtype=float).reshape(len(rows), len(cats)),
                    np.array([[r[c]["ci_high"] for c in cats] for r in rows], dtype=float).reshape(len(rows), len(cats)),
                )
            e = doc["ensemble"]
            return cls(doc["config"], int(doc["master_seed"]), cats, surveys, quantiles, int(e["total_attempted"]),
                       int(e["unfittable"]), list(e["fits"]), selection, band, prediction, doc.get("extra", {}))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed result bundle: {exc!r}") from None


def _floats(xs):
    return [float(v) for v in np.asarray(xs, dtype=float).ravel()]


def prediction_csv(table: PredictionTable, categories: Sequence[str]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PREDICTION_HEADER)
    for r, (t, d) in enumerate(zip(table.times, table.dates)):
        label = d.isoformat() if d is not None else _fmt(t)
        for i, c in enumerate(categories):
            w.writerow([label, c, _fmt(table.mean[r, i]), _fmt(table.lower[r, i]), _fmt(table.upper[r, i])])
    return buf.getvalue()


def read_prediction_csv(source) -> list[dict]:
    text = Path(source).read_text(encoding="utf-8") if not hasattr(source, "read") else source.read()
    rows = list(csv.DictReader(_io.StringIO(text)))
    return [{"date": r["date"], "category": r["category"], "mean": float(r["mean"]),
             "ci_low": float(r["ci_low"]), "ci_high": float(r["ci_high"])} for r in rows]


def _atomic_write(path, text: str):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8", newline="\n")
    os.replace(tmp, path)


def write_results(bundle: ResultBundle, path, format: str = "json") -> None:
    """Write the bundle (``json``) or its prediction table (``csv``).

    JSON floats use the shortest repr that round-trips, so reloading gives
    bit-identical values.
    """
    if format == "json":
        text = json.dumps(bundle.to_dict(), indent=1, allow_nan=False) + "\n"
    elif format == "csv":
        if bundle.prediction is None:
            raise InvalidArgumentError("bundle has no prediction table to write as csv")
        text = prediction_csv(bundle.prediction, bundle.categories)
    else:
        raise InvalidArgumentError(f"unknown result format {format!r}")
    _atomic_write(path, text)


def load_results(path) -> ResultBundle:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from None
    return ResultBundle.from_dict(doc)


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- SVG -------------------------------------------------------------------

W, H = 720, 400
ML, MR, MT, MB = 64, 20, 36, 48
BAND_COLOR = "#c0392b"
BAR_COLOR = "#1f3a93"


def _nice_step(span: float) -> float:
    raw = span / 6.0 if span > 0 else 1.0
    mag = 10 ** math.floor(math.log10(raw))
    for m in (1, 2, 2.5, 5, 10):
        if m * mag >= raw:
            return m * mag
    return 10 * mag


def _n(x: float) -> str:
    s = f"{x:.2f}"
    return "0.00" if s == "-0.00" else s


def band_svg(band: Band, quantile: QuantileSeries, surveys: SurveySeries, category_index: int,
             title: str | None = None) -> str:
    """One category panel: data error bars, survey means and the two band lines."""
    c = category_index
    times = np.array([r.t for r in surveys])
    means = np.array([r.percentages[c] for r in surveys])
    lo_b, hi_b = band.lower[:, c], band.upper[:, c]
    ys = np.concatenate([lo_b, hi_b, quantile.lower, quantile.upper, means])
    ystep = _nice_step(float(ys.max() - ys.min()))
    y0 = math.floor(ys.min() / ystep) * ystep
    y1 = math.ceil(ys.max() / ystep) * ystep
    if y1 <= y0:
        y1 = y0 + ystep
    x0, x1 = float(min(band.grid[0], times[0])), float(max(band.grid[-1], times[-1]))
    if x1 <= x0:
        x1 = x0 + 1.0
    pw, ph = W - ML - MR, H - MT - MB

    def px(t):
        return ML + (t - x0) / (x1 - x0) * pw

    def py(v):
        return MT + (y1 - v) / (y1 - y0) * ph

    name = title or quantile.category
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2:.2f}" y="22" text-anchor="middle" font-family="sans-serif" font-size="15">{_esc(name)}</text>',
        f'<g stroke="black" stroke-width="1"><line x1="{ML}" y1="{MT + ph}" x2="{ML + pw}" y2="{MT + ph}"/>'
        f'<line x1="{ML}" y1="{MT}" x2="{ML}" y2="{MT + ph}"/></g>',
        '<g font-family="sans-serif" font-size="11" fill="black">',
    ]
    nt = int(round((y1 - y0) / ystep))
    for i in range(nt + 1):
        v = y0 + i * ystep
        out.append(f'<line x1="{ML - 4}" y1="{_n(py(v))}" x2="{ML}" y2="{_n(py(v))}" stroke="black"/>'
                   f'<text x="{ML - 7}" y="{_n(py(v) + 4)}" text-anchor="end">{v:g}</text>')
    first = surveys[0].date
    for yr in range(int(math.ceil(x0)), int(math.floor(x1)) + 1):
        label = str(first.year + yr) if first is not None else f"{yr:g}"
        if first is not None and first.month != 1:
            label = f"{first.strftime('%b')} {first.year + yr}"
        out.append(f'<line x1="{_n(px(yr))}" y1="{MT + ph}" x2="{_n(px(yr))}" y2="{MT + ph + 4}" stroke="black"/>'
                   f'<text x="{_n(px(yr))}" y="{MT + ph + 17}" text-anchor="middle">{label}</text>')
    out.append(f'<text x="{ML + pw / 2:.2f}" y="{H - 8}" text-anchor="middle">time (years)</text>')
    out.append(f'<text x="16" y="{MT + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {MT + ph / 2:.2f})">percent</text>')
    out.append("</g>")
    if band.grid[-1] > times[-1]:
        xs = _n(px(times[-1]))
        out.append(f'<line x1="{xs}" y1="{MT}" x2="{xs}" y2="{MT + ph}" stroke="#888" stroke-dasharray="4 3"/>')
    out.append(f'<g stroke="{BAR_COLOR}" stroke-width="1.5" fill="{BAR_COLOR}">')
    for t, lo, hi, m in zip(times, quantile.lower, quantile.upper, means):
        x = px(t)
        out.append(f'<line x1="{_n(x)}" y1="{_n(py(lo))}" x2="{_n(x)}" y2="{_n(py(hi))}"/>'
                   f'<line x1="{_n(x - 4)}" y1="{_n(py(lo))}" x2="{_n(x + 4)}" y2="{_n(py(lo))}"/>'
                   f'<line x1="{_n(x - 4)}" y1="{_n(py(hi))}" x2="{_n(x + 4)}" y2="{_n(py(hi))}"/>'
                   f'<circle cx="{_n(x)}" cy="{_n(py(m))}" r="2.5"/>')
    out.append("</g>")
    for series in (lo_b, hi_b):
        pts = " ".join(f"{_n(px(t))},{_n(py(v))}" for t, v in zip(band.grid, series))
        out.append(f'<polyline fill="none" stroke="{BAND_COLOR}" stroke-width="1.5" points="{pts}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _slug(s: str) -> str:
    return "".join(ch.lower() if ch.isalnum() else "_" for ch in s)


def render_band_svg(band: Band, data_quantiles: Sequence[QuantileSeries], surveys: SurveySeries,
                    out_path, prefix: str = "band") -> list[Path]:
    """Write one ``<prefix>_<category>.svg`` per category into directory ``out_path``."""
    out_dir = Path(out_path)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, q in enumerate(data_quantiles):
        p = out_dir / f"{prefix}_{_slug(q.category)}.svg"
        _atomic_write(p, band_svg(band, q, surveys, i))
        paths.append(p)
    return paths
