"""Ranking tables, model-to-model comparisons, and plot-ready text."""

from __future__ import annotations

import csv
import io
import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .model import FitResult, mease_penalty_density

logger = logging.getLogger(__name__)

Z_95 = 1.96


@dataclass(frozen=True)
class RankingRow:
    rank: int
    team: str
    rating: float
    std_error: float
    interval_low: float
    interval_high: float


@dataclass
class RankingTable:
    rows: list[RankingRow]
    model_label: str
    variance_estimates: dict[str, float] = field(default_factory=dict)
    beta: float | None = None

    def __len__(self):
        return len(self.rows)

    def rank_of(self) -> dict[str, int]:
        return {row.team: row.rank for row in self.rows}

    def rating_of(self) -> dict[str, float]:
        return {row.team: row.rating for row in self.rows}

    def teams(self) -> list[str]:
        return [row.team for row in self.rows]


def variance_labels(fit: FitResult) -> dict[str, float]:
    if fit.params is None:
        return {}
    v = fit.params.variances
    if len(v) == 2:
        return {"sigma2_1": v[0], "sigma2_2": v[1]}
    return {"sigma2_t": v[0]}


def rank_teams(fit: FitResult, team_index=None, division_filter: str | None = "FBS",
               allow_unconverged: bool = False) -> RankingTable:
    """Sort ratings (descending, ties by team name) into a ranking table.

    ``division_filter`` keeps only ``"FBS"`` or ``"FCS"`` teams (``None``
    keeps all); ranks restart at 1 after filtering.  Intervals are
    ``rating +/- 1.96 * std_error``.
    """
    if not fit.converged and not allow_unconverged:
        warnings.warn(f"ranking an unconverged {fit.config.label} fit", stacklevel=2)
    if team_index is not None:
        names, divisions = list(team_index.names), list(team_index.division)
    else:
        names = fit.team_names or [f"team{j}" for j in range(len(fit.eta_hat))]
        is_fcs = fit.is_fcs if fit.is_fcs is not None else np.zeros(len(names), bool)
        divisions = ["FCS" if f else "FBS" for f in is_fcs]
    se = fit.std_error
    keep = [j for j, d in enumerate(divisions) if division_filter is None or d == division_filter]
    keep.sort(key=lambda j: (-fit.eta_hat[j], names[j]))
    rows = []
    for k, j in enumerate(keep, start=1):
        rating, s = float(fit.eta_hat[j]), float(se[j])
        rows.append(RankingRow(k, names[j], rating, s, rating - Z_95 * s, rating + Z_95 * s))
    beta = None if fit.params is None else fit.params.beta
    return RankingTable(rows, fit.config.label, variance_labels(fit), beta)


@dataclass
class RankComparison:
    pairs: dict[str, tuple[int, int, float, float]]
    displaced: list[str]
    kendall_tau: float
    max_displacement: int
    swapped_pairs: list[tuple[str, str]]
    label_a: str = "a"
    label_b: str = "b"
    only_in_a: list[str] = field(default_factory=list)
    only_in_b: list[str] = field(default_factory=list)

    def rank_deltas(self) -> dict[str, int]:
        return {t: rb - ra for t, (ra, rb, _, _) in self.pairs.items()}


def compare_rankings(a: RankingTable, b: RankingTable, top_k: int | None = None) -> RankComparison:
    """Per-team rank and rating differences plus Kendall's tau.

    The comparison runs over teams present in both tables; with ``top_k``
    only the first ``top_k`` teams of table ``a`` are compared.
    """
    ra, rb = a.rank_of(), b.rank_of()
    va, vb = a.rating_of(), b.rating_of()
    common = [t for t in a.teams() if t in rb]
    only_a = sorted(set(ra) - set(rb))
    only_b = sorted(set(rb) - set(ra))
    if top_k is not None:
        common = [t for t in common if ra[t] <= top_k]
    pairs = {t: (ra[t], rb[t], va[t], vb[t]) for t in common}
    displaced = [t for t in common if ra[t] != rb[t]]
    swapped = []
    for i, s in enumerate(common):
        for t in common[i + 1:]:
            if (ra[s] - ra[t]) * (rb[s] - rb[t]) < 0:
                swapped.append((s, t))
    # ranks never tie, so tau is exactly 1 - 2 * discordant / pairs
    n_pairs = len(common) * (len(common) - 1) // 2
    tau = 1.0 - 2.0 * len(swapped) / n_pairs if n_pairs else 1.0
    maxd = max((abs(ra[t] - rb[t]) for t in common), default=0)
    return RankComparison(pairs, displaced, tau, int(maxd), swapped, a.model_label, b.model_label,
                          only_a, only_b)


@dataclass
class MonotonicityReport:
    violations: list[tuple[str, int, int, int]]
    checked: int

    @property
    def ok(self) -> bool:
        return not self.violations


def monotonicity_report(pql: RankingTable, la: RankingTable, fe: RankingTable) -> MonotonicityReport:
    """Teams whose LA rank falls outside the closed PQL..FE rank interval."""
    rp, rl, rf = pql.rank_of(), la.rank_of(), fe.rank_of()
    teams = [t for t in pql.teams() if t in rl and t in rf]
    bad = []
    for t in teams:
        lo, hi = sorted((rp[t], rf[t]))
        if not lo <= rl[t] <= hi:
            bad.append((t, rp[t], rl[t], rf[t]))
    return MonotonicityReport(bad, len(teams))


# ---------------------------------------------------------------------------
# text output
# ---------------------------------------------------------------------------


def _r3(x):
    return f"{x:.3f}"


def _v2(x):
    return f"{x:.2f}"


def _table_records(table):
    if isinstance(table, RankingTable):
        header = ["rank", "team", "rating", "std_error", "interval_low", "interval_high"]
        body = [[str(r.rank), r.team, _r3(r.rating), _r3(r.std_error), _r3(r.interval_low),
                 _r3(r.interval_high)] for r in table.rows]
        footer = [[k, _v2(v)] for k, v in table.variance_estimates.items()]
        if table.beta is not None:
            footer.append(["beta", _v2(table.beta)])
        return header, body, footer
    header = ["team", f"rank_{table.label_a}", f"rank_{table.label_b}", "rank_delta",
              f"rating_{table.label_a}", f"rating_{table.label_b}"]
    body = [[t, str(ra), str(rb), str(rb - ra), _r3(va), _r3(vb)]
            for t, (ra, rb, va, vb) in table.pairs.items()]
    footer = [["kendall_tau", f"{table.kendall_tau:.4f}"],
              ["max_displacement", str(table.max_displacement)],
              ["displaced", str(len(table.displaced))]]
    return header, body, footer


def emit_table(table, format: str = "delimited") -> str:
    """Render a ranking table or comparison.

    ``format`` is ``"delimited"`` (CSV with ``#`` footer lines),
    ``"structured"`` (JSON) or ``"markdown"`` (aligned pipe table).
    Ratings print with 3 decimals, variances with 2.
    """
    header, body, footer = _table_records(table)
    if format == "delimited":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(body)
        for k, v in footer:
            buf.write(f"# {k},{v}\n")
        return buf.getvalue()
    if format == "structured":
        label = table.model_label if isinstance(table, RankingTable) else f"{table.label_a} vs {table.label_b}"
        doc = {"model": label, "columns": header, "rows": body, "summary": dict(footer)}
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"
    if format == "markdown":
        cells = [header] + body
        widths = [max(len(row[c]) for row in cells) for c in range(len(header))]
        numeric = [all(_is_num(row[c]) for row in body) for c in range(len(header))]

        def line(row):
            out = []
            for c, val in enumerate(row):
                out.append(val.rjust(widths[c]) if numeric[c] else val.ljust(widths[c]))
            return "| " + " | ".join(out) + " |"

        lines = [line(header)]
        lines.append("|" + "|".join((("-" * (w + 1)) + ":" if numeric[c] else "-" * (w + 2))
                                    for c, w in enumerate(widths)) + "|")
        lines += [line(row) for row in body]
        if footer:
            lines.append("")
            lines += [f"{k}: {v}" for k, v in footer]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown table format {format!r}")


def _is_num(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def emit_plot_data(fits, kind: str, team_index=None, grid=None, penalty: bool = False,
                   penalty_reference_var: float = 0.815) -> str:
    """Columnar text for caterpillar, scatter and density plots."""
    fits = list(fits)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if kind == "caterpillar":
        if len(fits) != 1:
            raise ValueError("caterpillar data takes exactly one fit")
        table = rank_teams(fits[0], team_index, division_filter=None, allow_unconverged=True)
        w.writerow(["team", "rating", "low", "high"])
        for r in table.rows:
            w.writerow([r.team, _r3(r.rating), _r3(r.interval_low), _r3(r.interval_high)])
        return buf.getvalue()
    if kind == "scatter":
        if len(fits) != 2:
            raise ValueError("scatter data takes exactly two fits")
        indices = team_index if isinstance(team_index, (list, tuple)) else (team_index, team_index)
        ta, tb = (rank_teams(f, ix, division_filter=None, allow_unconverged=True)
                  for f, ix in zip(fits, indices))
        va, vb = ta.rating_of(), tb.rating_of()
        common = [t for t in ta.teams() if t in vb]
        if len(common) != len(va) or len(common) != len(vb):
            msg = f"team universes differ; plotting the {len(common)} shared teams"
            warnings.warn(msg, stacklevel=2)
        w.writerow(["team", f"rating_{ta.model_label}", f"rating_{tb.model_label}"])
        for t in common:
            w.writerow([t, _r3(va[t]), _r3(vb[t])])
        return buf.getvalue()
    if kind == "density":
        grid = np.linspace(-4.0, 4.0, 161) if grid is None else np.asarray(grid, float)
        cols, curves = ["x"], []
        for f in fits:
            labels = variance_labels(f)
            beta = f.params.beta if f.params is not None else None
            for name, var in labels.items():
                mean = 0.0
                cols.append(f"{f.config.label}:{name}")
                curves.append(stats.norm.pdf(grid, mean, np.sqrt(var)))
            if beta is not None:
                # FCS population centred at -beta relative to FBS hosts
                var = labels.get("sigma2_2", labels.get("sigma2_t"))
                cols.append(f"{f.config.label}:fcs_shifted")
                curves.append(stats.norm.pdf(grid, -beta, np.sqrt(var)))
        if penalty:
            cols += ["penalty", f"normal_{penalty_reference_var:g}"]
            curves.append(mease_penalty_density(grid))
            curves.append(stats.norm.pdf(grid, 0.0, np.sqrt(penalty_reference_var)))
        w.writerow(cols)
        for k, x in enumerate(grid):
            w.writerow([f"{x:.4f}"] + [f"{c[k]:.6f}" for c in curves])
        return buf.getvalue()
    raise ValueError(f"unknown plot kind {kind!r}")


def penalty_normal_discrepancy(reference_var: float = 0.815, lo: float = -4.0, hi: float = 4.0,
                               points: int = 8001) -> float:
    """Largest absolute gap between the normalized penalty density and N(0, reference_var)."""
    x = np.linspace(lo, hi, points)
    return float(np.max(np.abs(mease_penalty_density(x) - stats.norm.pdf(x, 0.0, np.sqrt(reference_var)))))
