"""Regenerate the frozen synthetic season used when the real seasons are absent.

The season has 120 FBS and 118 FCS teams on a conference-shaped schedule
with 86 FBS-vs-FCS games.  Outcomes are simulated once from the separate-
variance probit model; the golden values are this implementation's fits
on that season.  Rerunning the script must reproduce the committed files
byte for byte.

    python3 scripts/make_synthetic_fixture.py [outdir]
"""

import json
import sys
import time
from pathlib import Path

from mmrank.fitting import fit_model
from mmrank.model import ModelConfig
from mmrank.oracle import simulate_season, true_parameters
from mmrank.report import rank_teams
from mmrank.schedule import build_design, format_games, format_roster, parse_games, parse_roster
from mmrank.synthetic import season_schedule

SEED = 2008
TRUTH = dict(beta=2.03, variances=(0.65, 0.87))

# (key, link, fcs_mode, method)
GRID = [
    ("PQL.P.0", "probit", 0, "pql-ml"),
    ("LA.P.0", "probit", 0, "la"),
    ("FE.P.0", "probit", 0, "fe"),
    ("PQL.P.1.ML", "probit", 1, "pql-ml"),
    ("PQL.P.1.REML", "probit", 1, "pql-reml"),
    ("FE.P.2", "probit", 2, "fe"),
    ("FE.L.0", "logit", 0, "fe"),
    ("MEASE.P.0", "probit", 0, "mease"),
]


def write_season(outdir: Path):
    sched, is_fcs = season_schedule(seed=SEED)
    season = simulate_season(sched, true_parameters(**TRUTH), "probit", seed=SEED, is_fcs=is_fcs)
    records, roster = season.to_records()
    (outdir / "synthetic_season.csv").write_text(format_games(records), encoding="utf-8")
    (outdir / "synthetic_season.roster.csv").write_text(format_roster(roster), encoding="utf-8")


def load_season(outdir: Path):
    records = parse_games((outdir / "synthetic_season.csv").read_text(encoding="utf-8"))
    roster = parse_roster((outdir / "synthetic_season.roster.csv").read_text(encoding="utf-8"))
    return records, roster


def golden_values(outdir: Path) -> dict:
    records, roster = load_season(outdir)
    doc = {"seed": SEED, "truth": {"beta": TRUTH["beta"], "variances": list(TRUTH["variances"])},
           "n_games": len(records), "fits": {}}
    for key, link, mode, method in GRID:
        design, index = build_design(records, mode, roster)
        t0 = time.perf_counter()
        fit = fit_model(design, design.r, ModelConfig(link, mode, method), team_names=index.names)
        print(f"{key}: {time.perf_counter() - t0:.1f} s", file=sys.stderr)
        table = rank_teams(fit, index)
        beta = None if fit.params is None else fit.params.beta
        doc["fits"][key] = {
            "beta": None if beta is None else round(beta, 6),
            "variances": [] if fit.params is None else [round(v, 6) for v in fit.params.variances],
            "top3": table.teams()[:3],
            "top3_ratings": [round(r.rating, 6) for r in table.rows[:3]],
            "converged": fit.converged,
        }
    return doc


def main(argv):
    outdir = Path(argv[1]) if len(argv) > 1 else Path(__file__).resolve().parents[1] / "tests" / "data"
    outdir.mkdir(parents=True, exist_ok=True)
    write_season(outdir)
    doc = golden_values(outdir)
    (outdir / "synthetic_golden.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n",
                                                  encoding="utf-8")


if __name__ == "__main__":
    main(sys.argv)
