import csv
import io
import json

import numpy as np
import pytest
from scipy import stats

from mmrank.model import FitResult, ModelConfig, ParameterVector
from mmrank.report import (
    RankingRow,
    RankingTable,
    compare_rankings,
    emit_plot_data,
    emit_table,
    monotonicity_report,
    penalty_normal_discrepancy,
    rank_teams,
)


def make_fit(ratings, names=None, variances=(0.76,), beta=None, is_fcs=None, label=("probit", 0, "fe"),
             converged=True):
    ratings = np.asarray(ratings, float)
    k = ratings.size
    cfg = ModelConfig(*label)
    params = ParameterVector(beta, variances) if variances else None
    return FitResult(cfg, params, ratings, np.diag(np.linspace(0.1, 0.2, k)), -1.0, 3, converged,
                     team_names=names or [f"t{j}" for j in range(k)],
                     is_fcs=np.zeros(k, bool) if is_fcs is None else np.asarray(is_fcs, bool))


def table_of(order, label="x"):
    rows = [RankingRow(k, t, float(-k), 0.1, -k - 0.2, -k + 0.2) for k, t in enumerate(order, start=1)]
    return RankingTable(rows, label)


class TestRankTeams:
    def test_sorted_with_intervals(self):
        t = rank_teams(make_fit([0.2, 1.714, 1.631], ["Texas", "Oklahoma", "Utah"]))
        assert t.teams() == ["Oklahoma", "Utah", "Texas"]
        assert [r.rank for r in t.rows] == [1, 2, 3]
        r = t.rows[0]
        assert r.interval_low < r.rating < r.interval_high
        assert r.interval_high - r.rating == pytest.approx(1.96 * r.std_error)

    def test_ties_alphabetical(self):
        t = rank_teams(make_fit([0.5, 0.5, 0.9], ["Navy", "Army", "Air Force"]))
        assert t.teams() == ["Air Force", "Army", "Navy"]
        assert [r.rank for r in t.rows] == [1, 2, 3]

    def test_division_filter(self):
        fit = make_fit([1.0, 0.5, -0.2, 0.1], ["A", "B", "X", "Y"], variances=(0.65, 0.87), beta=2.0,
                       is_fcs=[False, False, True, True], label=("probit", 2, "fe"))
        fcs = rank_teams(fit, division_filter="FCS")
        assert fcs.teams() == ["Y", "X"] and fcs.rows[0].rank == 1
        assert rank_teams(fit).teams() == ["A", "B"]
        assert len(rank_teams(fit, division_filter=None)) == 4
        assert fcs.variance_estimates == {"sigma2_1": 0.65, "sigma2_2": 0.87}

    def test_pure_sort_and_scale_invariance(self):
        rng = np.random.default_rng(0)
        ratings = rng.normal(size=30)
        fit = make_fit(ratings)
        t = rank_teams(fit)
        assert sorted((r.team, r.rating) for r in t.rows) == sorted(zip(fit.team_names, ratings))
        assert sorted(r.rank for r in t.rows) == list(range(1, 31))
        assert rank_teams(make_fit(3.7 * ratings)).teams() == t.teams()

    def test_unconverged_warns(self):
        with pytest.warns(UserWarning, match="unconverged"):
            rank_teams(make_fit([0.0, 1.0], converged=False))


class TestCompare:
    def test_identity(self):
        a = table_of("ABCDE")
        c = compare_rankings(a, a)
        assert c.kendall_tau == 1.0 and c.displaced == [] and c.max_displacement == 0

    def test_reversal(self):
        c = compare_rankings(table_of("ABC"), table_of("CBA"))
        assert c.kendall_tau == pytest.approx(-1.0)
        assert len(c.swapped_pairs) == 3

    def test_swap_and_antisymmetry(self):
        a, b = table_of("LAOX"), table_of("LOAX")
        ab, ba = compare_rankings(a, b), compare_rankings(b, a)
        assert ab.displaced == ["A", "O"] and ab.swapped_pairs == [("A", "O")]
        assert ab.rank_deltas() == {t: -d for t, d in ba.rank_deltas().items()}
        assert -1 <= ab.kendall_tau <= 1

    def test_tau_matches_scipy(self):
        rng = np.random.default_rng(1)
        teams = [f"t{k}" for k in range(25)]
        a, b = table_of(teams), table_of(list(rng.permutation(teams)))
        c = compare_rankings(a, b)
        ref = stats.kendalltau([a.rank_of()[t] for t in teams], [b.rank_of()[t] for t in teams]).statistic
        assert c.kendall_tau == pytest.approx(ref, abs=1e-12)

    def test_top_k_and_universe(self):
        a, b = table_of("ABCDE"), table_of("BAQCD")
        c = compare_rankings(a, b, top_k=2)
        assert list(c.pairs) == ["A", "B"]
        full = compare_rankings(a, b)
        assert full.only_in_a == ["E"] and full.only_in_b == ["Q"]


class TestMonotonicity:
    def test_identical(self):
        t = table_of("ABC")
        assert monotonicity_report(t, t, t).ok

    def test_violation(self):
        rep = monotonicity_report(table_of("ABC"), table_of("BCA"), table_of("ABC"))
        assert not rep.ok
        assert rep.violations[0][0] == "A"


class TestEmit:
    def test_one_row(self):
        t = rank_teams(make_fit([1.0, 0.0], ["A", "FCS (all)"], is_fcs=[False, True]))
        text = emit_table(t, "delimited")
        lines = text.splitlines()
        assert lines[0] == "rank,team,rating,std_error,interval_low,interval_high"
        assert lines[1].startswith("1,A,1.000,")
        assert text.endswith("\n")

    def test_variance_two_decimals(self):
        t = rank_teams(make_fit([1.0, 0.0], variances=(0.7600001,)))
        assert "# sigma2_t,0.76\n" in emit_table(t, "delimited")
        assert "sigma2_t: 0.76" in emit_table(t, "markdown")
        assert json.loads(emit_table(t, "structured"))["summary"]["sigma2_t"] == "0.76"

    @pytest.mark.parametrize("fmt", ["delimited", "structured", "markdown"])
    def test_deterministic(self, fmt):
        t = rank_teams(make_fit([0.3, 0.1, 0.2]))
        c = compare_rankings(t, t)
        assert emit_table(t, fmt) == emit_table(t, fmt)
        assert emit_table(c, fmt) == emit_table(c, fmt)

    def test_markdown_alignment(self):
        lines = emit_table(rank_teams(make_fit([0.3, -1.1])), "markdown").splitlines()
        assert len({len(line) for line in lines[:4]}) == 1

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            emit_table(table_of("AB"), "html")


class TestPlotData:
    def test_caterpillar(self):
        text = emit_plot_data([make_fit([0.1, 0.4])], "caterpillar")
        rows = list(csv.reader(io.StringIO(text)))
        assert rows[0] == ["team", "rating", "low", "high"]
        assert [r[0] for r in rows[1:]] == ["t1", "t0"]

    def test_scatter_identity(self):
        fit = make_fit([0.1, 0.4, -0.3])
        rows = list(csv.reader(io.StringIO(emit_plot_data([fit, fit], "scatter"))))[1:]
        assert all(r[1] == r[2] for r in rows)

    def test_scatter_universe_warning(self):
        a = make_fit([0.1, 0.4], ["A", "B"])
        b = make_fit([0.1, 0.4, 0.0], ["A", "B", "C"])
        with pytest.warns(UserWarning, match="2 shared"):
            emit_plot_data([a, b], "scatter")

    def test_density_with_penalty(self):
        text = emit_plot_data([make_fit([0.0, 1.0])], "density", penalty=True)
        rows = list(csv.reader(io.StringIO(text)))
        assert rows[0] == ["x", "FE.P.0:sigma2_t", "penalty", "normal_0.815"]
        vals = np.array(rows[1:], float)
        assert vals.shape == (161, 4)
        assert np.max(np.abs(vals[:, 2] - vals[:, 3])) == pytest.approx(penalty_normal_discrepancy(), abs=1e-5)

    def test_wrong_fit_count(self):
        with pytest.raises(ValueError):
            emit_plot_data([make_fit([0.0, 1.0])], "scatter")
