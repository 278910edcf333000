"""``rankcli``: ingest seasons, fit grid models, compare, verify, simulate.

Exit codes: 0 success, 2 usage, 3 data integrity, 4 convergence failure,
5 verification failure.  Every file written is a deterministic function of
the inputs, flags and seed; wall-clock timing goes to the log only.
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .model import ConfigError, FcsMode, FitResult, Method, ModelConfig, ParameterVector
from .schedule import (
    TABLE_LAYOUT_MAPPING,
    DataIntegrityError,
    ScheduleError,
    TeamIndex,
    build_design,
    detect_separation,
    format_games,
    format_roster,
    parse_games,
    parse_mapping,
    parse_roster,
    preprocess_raw,
)

logger = logging.getLogger("rankcli")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CONVERGENCE, EXIT_VERIFY = 0, 2, 3, 4, 5
RESULT_FORMAT = "mmrank-fit/1"


class UsageError(Exception):
    pass


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _manifest(inputs, **extra) -> dict:
    doc = {
        "tool": "rankcli",
        "version": __version__,
        "inputs": [{"path": str(p), "sha256": _digest(p)} for p in inputs],
    }
    doc.update(extra)
    return doc


def _write(path, text: str):
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def _dump(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def _default_seed() -> int:
    return int(os.environ.get("RANKCLI_SEED", "0"))


# ---------------------------------------------------------------------------
# method parsing
# ---------------------------------------------------------------------------


def parse_method(text: str) -> tuple[Method, float | None]:
    text = text.strip().lower()
    if text.startswith("fixed:"):
        try:
            value = float(text.split(":", 1)[1])
        except ValueError as exc:
            raise UsageError(f"bad fixed variance in {text!r}") from exc
        return Method.FIXED_VARIANCE, value
    try:
        return Method(text), None
    except ValueError as exc:
        choices = "pql-ml, pql-reml, la, fe, mease, fixed:<sigma2>"
        raise UsageError(f"unknown method {text!r}; choose from {choices}") from exc


def make_config(link: str, fcs_mode: int, method: str) -> ModelConfig:
    m, fixed = parse_method(method)
    try:
        return ModelConfig(link=link, fcs_mode=FcsMode(int(fcs_mode)), method=m, fixed_variance=fixed)
    except (ConfigError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


# ---------------------------------------------------------------------------
# result files
# ---------------------------------------------------------------------------


def result_document(fit: FitResult, index: TeamIndex, manifest: dict) -> dict:
    params = fit.params
    return {
        "format": RESULT_FORMAT,
        "model": fit.config.label,
        "config": {
            "link": fit.config.link,
            "fcs_mode": int(fit.config.fcs_mode),
            "method": fit.config.method.value,
            "fixed_variance": fit.config.fixed_variance,
        },
        "beta": None if params is None else params.beta,
        "variances": [] if params is None else list(params.variances),
        "loglik_approx": fit.loglik_approx,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "warnings": list(fit.warnings),
        "teams": [
            {"team": name, "division": div, "rating": float(fit.eta_hat[j]), "cond_var": float(fit.cond_cov[j, j])}
            for j, (name, div) in enumerate(zip(index.names, index.division))
        ],
        "manifest": manifest,
    }


def load_result(path) -> tuple[FitResult, TeamIndex]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError:
        doc = None
    if not isinstance(doc, dict) or doc.get("format") != RESULT_FORMAT:
        raise UsageError(f"{path}: not a {RESULT_FORMAT} result file")
    c = doc["config"]
    config = ModelConfig(link=c["link"], fcs_mode=c["fcs_mode"], method=c["method"],
                         fixed_variance=c["fixed_variance"])
    teams = doc["teams"]
    names = [t["team"] for t in teams]
    divs = [t["division"] for t in teams]
    p = sum(d == "FBS" for d in divs)
    index = TeamIndex(names=names, division=divs, p=p, q=len(names) - p)
    params = ParameterVector(doc["beta"], doc["variances"]) if doc["variances"] else None
    fit = FitResult(
        config=config,
        params=params,
        eta_hat=np.array([t["rating"] for t in teams]),
        cond_cov=np.diag([t["cond_var"] for t in teams]),
        loglik_approx=doc["loglik_approx"],
        iterations=doc["iterations"],
        converged=doc["converged"],
        warnings=doc["warnings"],
        team_names=names,
        is_fcs=index.is_fcs,
    )
    return fit, index


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_ingest(args) -> int:
    mapping = None
    if args.mapping:
        mapping = parse_mapping(Path(args.mapping).read_text(encoding="utf-8"))
    elif args.table_layout:
        mapping = dict(TABLE_LAYOUT_MAPPING)
    roster = parse_roster(Path(args.roster).read_text(encoding="utf-8"))
    records = []
    for path in args.games:
        records += parse_games(Path(path).read_text(encoding="utf-8"), mapping)
    cutoff = dt.date.fromisoformat(args.cutoff) if args.cutoff else None
    clean = preprocess_raw(records, roster, cutoff)
    _write(args.out, format_games(clean))
    played = {t for g in clean for t in (g.home, g.away)}
    roster_out = args.roster_out or str(Path(args.out).with_suffix(".roster.csv"))
    _write(roster_out, format_roster({t: d for t, d in roster.items() if t in played}))
    sep = detect_separation(clean, roster)
    manifest = _manifest(
        list(args.games) + [args.roster] + ([args.mapping] if args.mapping else []),
        cutoff=args.cutoff,
        games_in=len(records),
        games_out=len(clean),
        outputs=[args.out, roster_out],
        separation={"cross_division_games": sep.cross_division_games, "fcs_wins": sep.fcs_wins,
                    "separated": sep.separated},
    )
    _write(args.manifest or str(Path(args.out).with_suffix(".manifest.json")), _dump(manifest))
    print(f"{len(clean)} games written to {args.out} ({len(records)} raw records)")
    return EXIT_OK


def _load_season(game_path, roster_path):
    records = parse_games(Path(game_path).read_text(encoding="utf-8"))
    roster = parse_roster(Path(roster_path).read_text(encoding="utf-8")) if roster_path else None
    return records, roster


def cmd_fit(args) -> int:
    from .fitting import fit_model
    from .report import emit_table, rank_teams

    config = make_config(args.link, args.fcs_mode, args.method)
    records, roster = _load_season(args.games, args.roster)
    if config.has_fixed_effect:
        sep = detect_separation(records, roster)
        if sep.separated:
            print(f"error: FCS effect is not estimable ({sep.fcs_wins} FCS wins in "
                  f"{sep.cross_division_games} cross-division games); {sep.recommendation}", file=sys.stderr)
            return EXIT_DATA
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        design, index = build_design(records, config.fcs_mode, roster)
    t0 = time.perf_counter()
    fit = fit_model(design, design.r, config, team_names=index.names)
    logger.info("%s fitted in %.2f s (%d iterations)", config.label, time.perf_counter() - t0, fit.iterations)
    inputs = [args.games] + ([args.roster] if args.roster else [])
    manifest = _manifest(inputs, config=config.label)
    if args.out:
        _write(args.out, _dump(result_document(fit, index, manifest)))
    division = None if args.division == "all" else args.division.upper()
    table = rank_teams(fit, index, division_filter=division, allow_unconverged=True)
    if args.top:
        table.rows = table.rows[: args.top]
    sys.stdout.write(emit_table(table, args.format))
    if not fit.converged:
        print("warning: fit did not converge: " + "; ".join(fit.warnings), file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_OK


def cmd_compare(args) -> int:
    from .report import compare_rankings, emit_plot_data, emit_table, rank_teams

    fa, ia = load_result(args.a)
    fb, ib = load_result(args.b)
    division = None if args.division == "all" else args.division.upper()
    ta = rank_teams(fa, ia, division_filter=division, allow_unconverged=True)
    tb = rank_teams(fb, ib, division_filter=division, allow_unconverged=True)
    comp = compare_rankings(ta, tb, top_k=args.top)
    sys.stdout.write(emit_table(comp, args.format))
    if args.plot_out:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            _write(args.plot_out, emit_plot_data([fa, fb], "scatter", team_index=[ia, ib]))
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_verification

    if not 2 <= args.dims <= 5:
        print(f"error: --dims must be between 2 and 5 (tensor quadrature bound), got {args.dims}",
              file=sys.stderr)
        return EXIT_USAGE
    report = run_verification(dims=args.dims, trials=args.trials, seed=args.seed,
                              max_games=args.max_games, nodes=args.nodes)
    text = report.to_text()
    sys.stdout.write(text)
    if args.out:
        _write(args.out, text)
    return EXIT_OK if report.passed else EXIT_VERIFY


def _read_schedule(path):
    import csv

    rows = list(csv.reader(Path(path).read_text(encoding="utf-8").splitlines()))
    header = [h.strip() for h in rows[0]]
    col = {h: k for k, h in enumerate(header)}
    sched = [(int(r[col["home"]]), int(r[col["away"]]), int(r[col.get("fcs", -1)]) if "fcs" in col else 0)
             for r in rows[1:] if r]
    return sched


def _schedule_from_args(args):
    from .oracle import round_robin_fragment
    from .synthetic import season_schedule

    if args.schedule:
        sched = _read_schedule(args.schedule)
        return sched, None
    if args.season_shape:
        return season_schedule(seed=args.schedule_seed)
    return round_robin_fragment(args.teams, args.games_per_team, seed=args.schedule_seed), None


def _true_params_from_args(args):
    from .oracle import true_parameters

    variances = tuple(float(v) for v in args.sigma2.split(","))
    return true_parameters(args.beta, variances)


def cmd_simulate(args) -> int:
    from .oracle import simulate_season

    sched, is_fcs = _schedule_from_args(args)
    truth = _true_params_from_args(args)
    season = simulate_season(sched, truth, args.link, seed=args.seed, is_fcs=is_fcs)
    records, roster = season.to_records()
    _write(args.out, format_games(records))
    roster_out = args.roster_out or str(Path(args.out).with_suffix(".roster.csv"))
    _write(roster_out, format_roster(roster))
    names = season.team_names or [f"T{j:03d}" for j in range(len(season.true_eta))]
    truth_doc = {
        "seed": args.seed,
        "link": args.link,
        "beta": truth.beta,
        "variances": list(truth.variances),
        "true_eta": {n: float(v) for n, v in zip(names, season.true_eta)},
    }
    _write(str(Path(args.out).with_suffix(".truth.json")), _dump(truth_doc))
    print(f"{len(records)} simulated games written to {args.out}")
    return EXIT_OK


def cmd_bias_study(args) -> int:
    from .oracle import bias_study

    sched, is_fcs = _schedule_from_args(args)
    truth = _true_params_from_args(args)
    methods = [parse_method(m)[0] for m in args.methods.split(",")]
    summary = bias_study(sched, truth, methods, args.reps, seed=args.seed, link=args.link,
                         fcs_mode=args.fcs_mode, is_fcs=is_fcs, jobs=args.jobs)
    text = summary.to_text()
    sys.stdout.write(text)
    if args.out:
        _write(args.out, text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rankcli", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"rankcli {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers where supported")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="clean raw per-team game files into one canonical file")
    s.add_argument("games", nargs="+", help="raw per-team game files")
    s.add_argument("--roster", required=True, help="team,division file (FBS or FCS)")
    s.add_argument("--mapping", help="field=header column mapping file")
    s.add_argument("--table-layout", action="store_true", help="raw files use the published column names")
    s.add_argument("--cutoff", help="drop games after this date (YYYY-MM-DD)")
    s.add_argument("--out", required=True, help="canonical game file")
    s.add_argument("--roster-out", help="roster of teams kept (default <out>.roster.csv)")
    s.add_argument("--manifest", help="processing manifest (default <out>.manifest.json)")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("fit", help="fit one model of the grid")
    s.add_argument("games", help="canonical game file")
    s.add_argument("--roster", help="team,division file; without it FCS teams come from the fcs column")
    s.add_argument("--link", choices=["probit", "logit"], default="probit")
    s.add_argument("--fcs-mode", type=int, choices=[0, 1, 2], default=0,
                   help="0 pooled FCS team, 1 FCS population, 2 FCS population with its own variance")
    s.add_argument("--method", default="fe", help="pql-ml, pql-reml, la, fe, mease or fixed:<sigma2>")
    s.add_argument("--out", help="structured result file")
    s.add_argument("--format", choices=["delimited", "structured", "markdown"], default="markdown")
    s.add_argument("--division", choices=["fbs", "fcs", "all"], default="fbs")
    s.add_argument("--top", type=int, help="print only the first N teams")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("compare", help="compare the rankings of two result files")
    s.add_argument("a", help="result file written by fit --out")
    s.add_argument("b", help="result file written by fit --out")
    s.add_argument("--top", type=int, help="restrict to the top N teams of the first file")
    s.add_argument("--format", choices=["delimited", "structured", "markdown"], default="markdown")
    s.add_argument("--division", choices=["fbs", "fcs", "all"], default="fbs")
    s.add_argument("--plot-out", help="write scatter-plot data here")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("verify", help="check Laplace and FE approximations against quadrature")
    s.add_argument("--dims", type=int, default=3, help="teams per instance (2 to 5)")
    s.add_argument("--trials", type=int, default=200, help="random instances")
    s.add_argument("--max-games", type=int, default=4, help="games per instance at most")
    s.add_argument("--nodes", type=int, default=40, help="Gauss-Hermite nodes per dimension")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out")
    s.set_defaults(func=cmd_verify)

    for name, func, helptext in (("simulate", cmd_simulate, "simulate a season from the model"),
                                 ("bias-study", cmd_bias_study, "repeat simulate-and-fit to measure bias")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--schedule", help="CSV with home,away[,fcs] team indices")
        s.add_argument("--season-shape", action="store_true", help="120 FBS + 118 FCS conference schedule")
        s.add_argument("--teams", type=int, default=100)
        s.add_argument("--games-per-team", type=int, default=12)
        s.add_argument("--schedule-seed", type=int, default=0)
        s.add_argument("--sigma2", default="0.8", help="variance(s), comma separated")
        s.add_argument("--beta", type=float, default=None)
        s.add_argument("--link", choices=["probit", "logit"], default="probit")
        s.add_argument("--seed", type=int, default=None, help="RNG seed (default $RANKCLI_SEED or 0)")
        s.add_argument("--out", required=(name == "simulate"))
        if name == "simulate":
            s.add_argument("--roster-out")
        else:
            s.add_argument("--methods", default="pql-ml,la,fe", help="comma-separated methods")
            s.add_argument("--reps", type=int, default=50, help="simulated seasons")
            s.add_argument("--fcs-mode", type=int, choices=[0, 1, 2], default=0)
        s.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if getattr(args, "seed", None) is None and hasattr(args, "seed"):
        args.seed = _default_seed()
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataIntegrityError, ScheduleError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
