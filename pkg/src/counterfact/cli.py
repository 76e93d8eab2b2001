"""Command-line front end.

Subcommands::

    counterfact run --data panel.csv --outcome imr_total --treated GRC --t0 2010 --out out/
    counterfact replicate --data panel.csv --treated GRC --t0 2010 --out out/
    counterfact simulate --out sim.csv --seed 7

Options may also come from a ``--config`` file of ``key = value`` lines
(keys are flag names with dashes or underscores, ``#`` starts a comment).
Flags given on the command line win over file values; the seed falls back to
``COUNTERFACT_SEED`` and then 0.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__, gsc, lasso, sdid
from . import inference as inf
from . import robustness as rob
from . import scm
from .errors import ConfigError, CounterfactError
from .oracle import FactorDgpSpec, simulate_panel
from .panel import Panel, load_column, load_csv, restrict_donors, write_csv
from .report import write_json, write_rows

MEDITERRANEAN = ("HRV", "CYP", "FRA", "ISR", "ITA", "MLT", "PRT", "SVN", "ESP", "TUR")
METHODS = ("scm", "gsc", "sdid", "lasso")
PLACEBOS = ("none", "space", "time")


@dataclass
class RunConfig:
    data: str | None = None
    outcome: str | None = None
    treated: str | None = None
    t0: int | None = None
    donors: list[str] | None = None
    method: str = "scm"
    placebo: str = "none"
    fake_t0: int | None = None
    mspe_multiplier: float = 2.0
    v_mode: str = "optimized"
    restarts: int = 20
    max_evals: int = 200
    lam: float | None = None
    r_max: int = 5
    n_boot: int = 1000
    loo: bool = False
    diff_trend: bool = False
    sparsity_ci: bool = False
    births_column: str | None = None
    seed: int = 0
    jobs: int = 1
    out: str | None = None
    outcomes: list[str] = field(default_factory=lambda: ["imr_total", "imr_boys", "imr_girls"])

    def validate(self, need=("data", "outcome", "treated", "t0", "out")):
        missing = [k for k in need if getattr(self, k) is None]
        if missing:
            raise ConfigError("missing required option(s): " + ", ".join(missing))
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        if self.placebo not in PLACEBOS:
            raise ConfigError(f"placebo must be one of {PLACEBOS}")
        if self.placebo == "time" and self.fake_t0 is None:
            raise ConfigError("--placebo time requires --fake-t0")
        if self.placebo != "none" and self.method != "scm":
            raise ConfigError("placebo runs are defined for --method scm")
        if not self.mspe_multiplier > 0:
            raise ConfigError("mspe-multiplier must be positive")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        return self

    def scm_config(self) -> scm.ScmConfig:
        return scm.ScmConfig(v_mode=self.v_mode, restarts=self.restarts, seed=self.seed,
                             max_evals=self.max_evals)


_BOOL = {"1": True, "true": True, "yes": True, "on": True,
         "0": False, "false": False, "no": False, "off": False}


def _coerce(name: str, raw):
    if raw is None:
        return None
    kind = {f.name: f.type for f in fields(RunConfig)}[name]
    try:
        if name in ("donors", "outcomes"):
            return [u.strip() for u in str(raw).split(",") if u.strip()] if isinstance(raw, str) else list(raw)
        if "bool" in kind:
            return raw if isinstance(raw, bool) else _BOOL[str(raw).strip().lower()]
        if "int" in kind:
            return int(raw)
        if "float" in kind:
            return float(raw)
    except (KeyError, ValueError):
        raise ConfigError(f"invalid value {raw!r} for {name}") from None
    return str(raw)


def read_config_file(path: str) -> dict:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"bad config file: {exc}") from None
    names = {f.name for f in fields(RunConfig)}
    out = {}
    for key, value in parser["run"].items():
        name = key.replace("-", "_")
        name = "lam" if name == "lambda" else name
        if name not in names:
            raise ConfigError(f"unknown config key {key!r}")
        out[name] = _coerce(name, value)
    return out


def build_config(args: argparse.Namespace) -> RunConfig:
    values = read_config_file(args.config) if getattr(args, "config", None) else {}
    names = {f.name for f in fields(RunConfig)}
    for name in names:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = _coerce(name, v)
    if "seed" not in values:
        env = os.environ.get("COUNTERFACT_SEED")
        values["seed"] = _coerce("seed", env) if env not in (None, "") else 0
    return RunConfig(**values)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--data")
    p.add_argument("--treated")
    p.add_argument("--t0", type=int)
    p.add_argument("--donors", help="comma-separated donor keep-list")
    p.add_argument("--mspe-multiplier", dest="mspe_multiplier", type=float)
    p.add_argument("--v-mode", dest="v_mode", choices=("optimized", "uniform"))
    p.add_argument("--restarts", type=int)
    p.add_argument("--max-evals", dest="max_evals", type=int)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--r-max", dest="r_max", type=int)
    p.add_argument("--n-boot", dest="n_boot", type=int)
    p.add_argument("--births-column", dest="births_column")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--out")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="counterfact")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="fit one estimator")
    _add_common(run)
    run.add_argument("--outcome")
    run.add_argument("--method", choices=METHODS)
    run.add_argument("--placebo", choices=PLACEBOS)
    run.add_argument("--fake-t0", dest="fake_t0", type=int)
    run.add_argument("--loo", action="store_const", const=True)
    run.add_argument("--diff-trend", dest="diff_trend", action="store_const", const=True)
    run.add_argument("--sparsity-ci", dest="sparsity_ci", action="store_const", const=True)

    rep = sub.add_parser("replicate", help="run the full estimator matrix")
    _add_common(rep)
    rep.add_argument("--outcomes", help="comma-separated outcome columns")
    rep.add_argument("--fake-t0", dest="fake_t0", type=int)

    sim = sub.add_parser("simulate", help="write a simulated factor-model panel")
    sim.add_argument("--out", required=True)
    sim.add_argument("--J", type=int, default=10)
    sim.add_argument("--T", type=int, default=30)
    sim.add_argument("--T0", type=int, default=19)
    sim.add_argument("--r", type=int, default=2)
    sim.add_argument("--sigma", type=float, default=0.05)
    sim.add_argument("--effect", type=float, default=0.0)
    sim.add_argument("--seed", type=int)
    return parser


# -- estimation -------------------------------------------------------------


def _load(cfg: RunConfig, outcome: str) -> Panel:
    panel = load_csv(cfg.data, outcome, cfg.treated, cfg.t0)
    if cfg.donors:
        panel = restrict_donors(panel, cfg.donors)
    return panel


def _provenance(cfg: RunConfig, command: str) -> dict:
    # the output location is not an input, so it stays out of the echo
    config = {k: v for k, v in asdict(cfg).items() if k != "out"}
    return {"command": command, "config": config, "version": __version__}


def _deaths(cfg: RunConfig, panel: Panel, fit) -> dict | None:
    if not cfg.births_column:
        return None
    births = load_column(cfg.data, cfg.births_column, panel.treated)
    years = fit.post_times
    missing = [t for t in years if t not in births]
    if missing:
        raise ConfigError(f"no {cfg.births_column} value for {panel.treated} in {missing[0]}")
    b = np.array([births[t] for t in years])
    deaths = scm.gap_to_deaths(fit.effects, b)
    return {
        "per_year": dict(zip(map(str, years), np.atleast_1d(deaths).tolist())),
        "cumulative": float(np.sum(deaths)),
        "mean_per_year": float(np.mean(deaths)),
    }


def run_scm(cfg: RunConfig, panel: Panel, out: Path) -> dict:
    config = cfg.scm_config()
    report: dict = {}
    if cfg.placebo == "time":
        fit = inf.in_time_placebo(panel, cfg.fake_t0, config)
        report["placebo_time"] = {"fake_t0": cfg.fake_t0, **fit.summary()}
        write_rows(out / "gaps.csv", ("time", "actual", "synthetic", "gap"), fit.series_rows())
        write_rows(out / "weights.csv", ("unit", "weight"), zip(fit.donors, fit.weights))
        return {"fit": fit.summary(), "att": fit.att, **report}

    fit = scm.fit(panel, config)
    write_rows(out / "gaps.csv", ("time", "actual", "synthetic", "gap"), fit.series_rows())
    write_rows(out / "weights.csv", ("unit", "weight"), zip(fit.donors, fit.weights))
    report.update(fit=fit.summary(), att=fit.att,
                  pre_bias=dict(zip(map(str, fit.times[: fit.t0_index]), fit.pre_bias)))
    deaths = _deaths(cfg, panel, fit)
    if deaths is not None:
        report["deaths"] = deaths

    if cfg.placebo == "space":
        dist = inf.in_space_placebos(panel, config, jobs=cfg.jobs, treated_fit=fit)
        rows = [(u, t, g) for u, f in dist.fits.items() for t, g in zip(f.times, f.gaps)]
        write_rows(out / "placebo_gaps.csv", ("unit", "time", "gap"), rows)
        ratios = [(panel.treated, fit.pre_rmse, fit.post_rmse, fit.rmse_ratio)]
        ratios += [(u, f.pre_rmse, f.post_rmse, f.rmse_ratio) for u, f in dist.fits.items()]
        write_rows(out / "rmse_ratios.csv", ("unit", "pre_rmse", "post_rmse", "ratio"), ratios)
        entry = {"failures": dist.failures, "treated_has_max_ratio": dist.treated_has_max_ratio,
                 "ratio_rank_p": dist.ratio_rank_p, "multiplier": cfg.mspe_multiplier}
        try:
            filt = inf.filter_mspe(dist, cfg.mspe_multiplier)
            entry.update(kept=list(filt.kept), p_values=dict(zip(map(str, fit.post_times), filt.p_values)))
            write_rows(out / "pvalues.csv", ("time", "p"), zip(fit.post_times, filt.p_values))
        except CounterfactError as exc:
            entry.update(kept=[], p_values=None, error=exc.record())
        report["placebo_space"] = entry

    if cfg.loo:
        loo = rob.leave_one_out(panel, config, baseline=fit, jobs=cfg.jobs)
        write_rows(out / "loo_summary.csv", ("dropped", "att", "pre_rmse"),
                   [(u, f.att, f.pre_rmse) for u, f in loo.items()])
        report["leave_one_out"] = {u: {"att": f.att, "pre_rmse": f.pre_rmse} for u, f in loo.items()}
    if cfg.diff_trend:
        dt = rob.diff_trend_test(fit.gaps, fit.t0_index)
        report["diff_trend"] = asdict(dt)
    if cfg.sparsity_ci:
        ci = rob.sparsity_ci(panel, fit, config=config, jobs=cfg.jobs)
        write_rows(out / "ci.csv", ("time", "lo", "hi", "gap"), ci.rows())
        report["sparsity_ci"] = {"level": ci.level, "donors": list(ci.donors), "n_null": ci.n_null}
    return report


def run_gsc(cfg: RunConfig, panel: Panel, out: Path) -> dict:
    fit = gsc.estimate_att(panel, gsc.GscConfig(r_max=cfg.r_max, n_boot=cfg.n_boot,
                                                seed=cfg.seed, jobs=cfg.jobs))
    write_rows(out / "gsc_counterfactual.csv", ("time", "actual", "counterfactual", "gap"),
               fit.series_rows())
    return {"fit": fit.summary(), "att": fit.att}


def run_sdid(cfg: RunConfig, panel: Panel, out: Path) -> dict:
    fit = sdid.estimate_att(panel, jobs=cfg.jobs)
    w = fit.weights
    write_rows(out / "gaps.csv", ("time", "actual", "synthetic", "gap"), fit.series_rows())
    write_rows(out / "omega.csv", ("unit", "omega"), zip(panel.donors, w.omega))
    write_rows(out / "lambda.csv", ("time", "lambda"), zip(panel.times[: panel.t0_index], w.lambda_t))
    return {"fit": fit.summary(), "att": fit.att}


def run_lasso(cfg: RunConfig, panel: Panel, out: Path) -> dict:
    sw, fit = lasso.fit_lasso_sc(panel, cfg.lam)
    write_rows(out / "gaps.csv", ("time", "actual", "synthetic", "gap"), fit.series_rows())
    write_rows(out / "signed_weights.csv", ("unit", "weight"), zip(panel.donors, sw.w))
    return {"fit": fit.summary(), "att": fit.att, "cv_selected": cfg.lam is None}


RUNNERS = {"scm": run_scm, "gsc": run_gsc, "sdid": run_sdid, "lasso": run_lasso}


def cmd_run(cfg: RunConfig) -> dict:
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    panel = _load(cfg, cfg.outcome)
    body = RUNNERS[cfg.method](cfg, panel, out)
    report = {"status": "ok", "method": cfg.method, "outcome": cfg.outcome,
              "treated": panel.treated, "t0": panel.t0, "donors": list(panel.donors),
              "provenance": _provenance(cfg, "run"), **body}
    write_json(out / "report.json", report)
    return report


def _cell(fn, *args, **kwargs) -> dict:
    try:
        return {"status": "ok", **fn(*args, **kwargs)}
    except CounterfactError as exc:
        return exc.record()


def cmd_replicate(cfg: RunConfig) -> dict:
    cfg.validate(need=("data", "treated", "t0", "out"))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    config = cfg.scm_config()
    cells: dict[str, dict] = {}
    panels: dict[str, Panel] = {}
    baselines: dict[str, scm.ScmFit] = {}

    for outcome in cfg.outcomes:
        try:
            panels[outcome] = _load(cfg, outcome)
        except CounterfactError as exc:
            cells[f"load/{outcome}"] = exc.record()

    def baseline(outcome):
        fit = scm.fit(panels[outcome], config)
        baselines[outcome] = fit
        sub = out / "scm" / outcome
        sub.mkdir(parents=True, exist_ok=True)
        write_rows(sub / "gaps.csv", ("time", "actual", "synthetic", "gap"), fit.series_rows())
        write_rows(sub / "weights.csv", ("unit", "weight"), zip(fit.donors, fit.weights))
        return {"att": fit.att, "fit": fit.summary(),
                "pre_bias": dict(zip(map(str, fit.times[: fit.t0_index]), fit.pre_bias))}

    for outcome in panels:
        cells[f"scm/{outcome}"] = _cell(baseline, outcome)

    main = next((o for o in cfg.outcomes if o in baselines), None)
    if main is not None:
        panel, fit = panels[main], baselines[main]

        def space():
            dist = inf.in_space_placebos(panel, config, jobs=cfg.jobs, treated_fit=fit)
            filt = inf.filter_mspe(dist, cfg.mspe_multiplier)
            return {"treated_has_max_ratio": dist.treated_has_max_ratio,
                    "rmse_ratios": dist.rmse_ratios, "kept": list(filt.kept),
                    "p_values": dict(zip(map(str, fit.post_times), filt.p_values))}

        def backdated():
            fake = cfg.fake_t0 if cfg.fake_t0 is not None else panel.times[panel.t0_index // 2]
            f = inf.in_time_placebo(panel, fake, config)
            return {"fake_t0": fake, "att": f.att, "fit": f.summary()}

        def loo():
            res = rob.leave_one_out(panel, config, baseline=fit, jobs=cfg.jobs)
            return {"dropped": {u: {"att": f.att, "pre_rmse": f.pre_rmse} for u, f in res.items()}}

        def sparse():
            ci = rob.sparsity_ci(panel, fit, config=config, jobs=cfg.jobs)
            return {"rows": [list(r) for r in ci.rows()], "donors": list(ci.donors)}

        def mediterranean():
            keep = [u for u in MEDITERRANEAN if u in panel.donors]
            p = restrict_donors(panel, keep)
            f = scm.fit(p, config)
            return {"att": f.att, "donors": keep, "weights": dict(zip(f.donors, f.weights))}

        cells[f"placebo_space/{main}"] = _cell(space)
        cells[f"placebo_time/{main}"] = _cell(backdated)
        cells[f"loo/{main}"] = _cell(loo)
        cells[f"sparsity_ci/{main}"] = _cell(sparse)
        cells[f"mediterranean/{main}"] = _cell(mediterranean)
        if cfg.births_column:
            cells[f"deaths/{main}"] = _cell(lambda: _deaths(cfg, panel, fit) or {})

    for outcome, fit in baselines.items():
        cells[f"diff_trend/{outcome}"] = _cell(
            lambda f=fit: asdict(rob.diff_trend_test(f.gaps, f.t0_index)))
    for outcome, panel in panels.items():
        cells[f"gsc/{outcome}"] = _cell(lambda p=panel: {"fit": gsc.estimate_att(
            p, gsc.GscConfig(r_max=cfg.r_max, n_boot=cfg.n_boot, seed=cfg.seed, jobs=cfg.jobs)).summary()})
        cells[f"sdid/{outcome}"] = _cell(lambda p=panel: {"fit": sdid.estimate_att(p, jobs=cfg.jobs).summary()})
    if main is not None:
        cells[f"lasso/{main}"] = _cell(lambda: {"fit": lasso.fit_lasso_sc(panels[main], cfg.lam)[1].summary()})

    report = {"status": "ok", "cells": cells, "provenance": _provenance(cfg, "replicate")}
    write_json(out / "report.json", report)
    return report


def cmd_simulate(args: argparse.Namespace) -> dict:
    seed = args.seed
    if seed is None:
        env = os.environ.get("COUNTERFACT_SEED")
        seed = int(env) if env else 0
    spec = FactorDgpSpec(J=args.J, T=args.T, T0=args.T0, r=args.r, noise_sigma=args.sigma,
                         effect=args.effect, seed=seed)
    panel = simulate_panel(spec)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_csv(panel, args.out, outcome="outcome")
    return {"status": "ok", "units": len(panel.units), "periods": panel.n_times}


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    out_dir = getattr(args, "out", None)
    try:
        if args.command == "simulate":
            cmd_simulate(args)
            return 0
        cfg = build_config(args)
        out_dir = cfg.out
        if args.command == "run":
            cmd_run(cfg)
        else:
            cmd_replicate(cfg)
        return 0
    except CounterfactError as exc:
        record = exc.record()
        print(json.dumps(record, sort_keys=True), file=sys.stderr)
        if out_dir and args.command != "simulate":
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            write_json(Path(out_dir) / "error.json", record)
        return exc.exit_status


if __name__ == "__main__":
    sys.exit(main())
