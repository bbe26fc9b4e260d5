"""Command line front end.

    surveyband estimate --input surveys.csv --seed 1 --out results/
    surveyband predict  --input surveys.csv --seed 1 --horizon +8 --out results/

Exit codes: 0 ok, 2 bad input or configuration, 3 too few accepted fits,
4 I/O failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import datetime as dt
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import DEFAULT_STEP
from .errors import InsufficientEnsembleError, InvalidArgumentError, ParseError
from .io import (
    ResultBundle,
    add_months,
    bundled_survey_path,
    file_digest,
    load_results,
    load_surveys,
    render_band_svg,
    survey_times,
    write_results,
)
from .optimize import SimplexConfig
from .pipeline import (
    IC_MODES,
    FitConfig,
    data_quantiles,
    estimation_band,
    predict,
    run_ensemble,
    select_band,
)

log = logging.getLogger("surveyband")

EXIT_PARSE = 2
EXIT_ENSEMBLE = 3
EXIT_IO = 4


@dataclass(frozen=True)
class RunConfig:
    input: str = field(default_factory=bundled_survey_path)
    replicates: int = 10_000
    quantile_draws: int = 100_000
    seed: int = 1
    alpha: float = 0.05
    grid_step: float = 0.05
    horizon: str = ""
    rk_step: float = DEFAULT_STEP
    out: str = "surveyband-out"
    ic_mode: str = "sampled"
    jobs: int = 1
    from_bundle: str | None = None

    def __post_init__(self):
        if self.replicates < 100:
            raise InvalidArgumentError(f"replicates >= 100 required, got {self.replicates}")
        if not 0 < self.alpha < 1:
            raise InvalidArgumentError(f"alpha must be in (0, 1), got {self.alpha}")
        if not self.grid_step > 0:
            raise InvalidArgumentError(f"grid_step must be > 0, got {self.grid_step}")
        if not self.rk_step > 0:
            raise InvalidArgumentError(f"rk_step must be > 0, got {self.rk_step}")
        if self.quantile_draws < 1000:
            raise InvalidArgumentError(f"draws >= 1000 required, got {self.quantile_draws}")
        if self.ic_mode not in IC_MODES:
            raise InvalidArgumentError(f"ic_mode must be one of {IC_MODES}")
        if self.jobs < 1:
            raise InvalidArgumentError("jobs must be >= 1")

    def fit_config(self) -> FitConfig:
        return FitConfig(alpha=self.alpha, rk_step=self.rk_step, ic_mode=self.ic_mode)

    def echo(self) -> dict:
        """Settings that determine the numbers (job count and paths excluded)."""
        simplex = dataclasses.asdict(SimplexConfig())
        return {
            "input_sha256": file_digest(self.input),
            "replicates": self.replicates,
            "quantile_draws": self.quantile_draws,
            "seed": self.seed,
            "alpha": self.alpha,
            "grid_step": self.grid_step,
            "rk_step": self.rk_step,
            "ic_mode": self.ic_mode,
            "horizon": self.horizon,
            "simplex": simplex,
        }


def parse_horizon(spec: str, surveys):
    """``+N`` half-years after the last survey, or comma-separated ISO dates."""
    spec = (spec or "").strip()
    if not spec:
        return [], np.empty(0)
    last = surveys[-1]
    if spec.startswith("+"):
        try:
            n = int(spec[1:])
        except ValueError:
            raise InvalidArgumentError(f"bad horizon {spec!r}") from None
        if n < 1:
            return [], np.empty(0)
        dates = [add_months(last.date, 6 * i) for i in range(1, n + 1)]
        times = last.t + 0.5 * np.arange(1, n + 1)
        return dates, times
    try:
        dates = [dt.date.fromisoformat(s.strip()) for s in spec.split(",") if s.strip()]
    except ValueError:
        raise InvalidArgumentError(f"bad horizon {spec!r}") from None
    times = np.array(survey_times([surveys[0].date, *dates])[1:], dtype=float)
    return dates, times


def _progress(done, total):
    log.info("fitted %d / %d", done, total)


def _estimate(cfg: RunConfig, surveys):
    quantiles = data_quantiles(surveys, cfg.quantile_draws, cfg.seed)
    ensemble = run_ensemble(surveys, cfg.replicates, cfg.seed, cfg.fit_config(), jobs=cfg.jobs,
                            progress=_progress)
    selection = select_band(ensemble, quantiles)
    return quantiles, ensemble, selection


def cmd_estimate(cfg: RunConfig) -> ResultBundle:
    """Data percentiles, fit ensemble, band selection and the 95% band; writes JSON and SVGs."""
    surveys = load_surveys(cfg.input)
    quantiles, ensemble, selection = _estimate(cfg, surveys)
    band = estimation_band(ensemble, selection, cfg.grid_step, cfg.rk_step)
    bundle = ResultBundle.from_run(cfg.echo(), surveys, quantiles, ensemble, selection, band)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_results(bundle, out / "results.json")
    render_band_svg(band, quantiles, surveys, out, prefix="estimation")
    print(f"k={selection.k} m_k={selection.m_k:.6f} accepted={bundle.accepted}/{ensemble.total_attempted}")
    return bundle


def cmd_predict(cfg: RunConfig) -> ResultBundle:
    """Forward prediction from a saved bundle (``from_bundle``) or a fresh estimation run."""
    if cfg.from_bundle:
        prior = load_results(cfg.from_bundle)
        surveys = prior.surveys
        quantiles, selection = prior.quantiles, prior.selection
        ensemble = prior.ensemble(prior.config.get("rk_step", cfg.rk_step))
        echo = dict(prior.config, horizon=cfg.horizon)
        rk_step = float(prior.config.get("rk_step", cfg.rk_step))
        grid_step = float(prior.config.get("grid_step", cfg.grid_step))
    else:
        surveys = load_surveys(cfg.input)
        echo, rk_step, grid_step = cfg.echo(), cfg.rk_step, cfg.grid_step
    dates, times = parse_horizon(cfg.horizon, surveys)
    if len(times) == 0:
        raise InvalidArgumentError("empty horizon")
    if not cfg.from_bundle:
        quantiles, ensemble, selection = _estimate(cfg, surveys)
    table = predict(ensemble, selection, times, dates, rk_step)
    band = estimation_band(ensemble, selection, grid_step, rk_step, t_end=float(times[-1]))
    bundle = ResultBundle.from_run(echo, surveys, quantiles, ensemble, selection, band, table)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_results(bundle, out / "results.json")
    write_results(bundle, out / "prediction.csv", format="csv")
    render_band_svg(band, quantiles, surveys, out, prefix="prediction")
    last = len(table) - 1
    summary = ", ".join(
        f"{c} {table.mean[last, i]:.2f} [{table.lower[last, i]:.2f}, {table.upper[last, i]:.2f}]"
        for i, c in enumerate(bundle.categories)
    )
    print(f"k={selection.k} m_k={selection.m_k:.6f} {dates[-1].isoformat()}: {summary}")
    return bundle


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="surveyband", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("estimate", "probabilistic estimation (95%% model band)"),
                           ("predict", "probabilistic prediction over a horizon")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--input", default=None, help="survey CSV/JSON (default: bundled data)")
        s.add_argument("--replicates", type=int, default=10_000)
        s.add_argument("--draws", type=int, default=100_000, help="resamples per survey for the data percentiles")
        s.add_argument("--seed", type=int, default=1)
        s.add_argument("--alpha", type=float, default=0.05)
        s.add_argument("--grid-step", type=float, default=0.05)
        s.add_argument("--horizon", default="+8" if name == "predict" else "",
                       help="+N half-years after the last survey, or comma-separated ISO dates")
        s.add_argument("--rk-step", type=float, default=DEFAULT_STEP)
        s.add_argument("--out", default="surveyband-out")
        s.add_argument("--ic-mode", choices=IC_MODES, default="sampled")
        s.add_argument("--jobs", type=int, default=1)
        s.add_argument("-v", "--verbose", action="store_true")
        if name == "predict":
            s.add_argument("--from-bundle", default=None, help="reuse the ensemble in a results.json")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = RunConfig(
            input=args.input or bundled_survey_path(),
            replicates=args.replicates,
            quantile_draws=args.draws,
            seed=args.seed,
            alpha=args.alpha,
            grid_step=args.grid_step,
            horizon=args.horizon,
            rk_step=args.rk_step,
            out=args.out,
            ic_mode=args.ic_mode,
            jobs=args.jobs,
            from_bundle=getattr(args, "from_bundle", None),
        )
        if args.command == "estimate":
            cmd_estimate(cfg)
        else:
            cmd_predict(cfg)
    except (ParseError, InvalidArgumentError) as exc:
        print(f"surveyband: error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except InsufficientEnsembleError as exc:
        print(f"surveyband: error: {exc}", file=sys.stderr)
        return EXIT_ENSEMBLE
    except OSError as exc:
        print(f"surveyband: error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
