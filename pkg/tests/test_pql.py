import math

import numpy as np
import pytest
from scipy import optimize, stats

from instances import random_season
from mmrank.model import Method, ModelConfig, ParameterVector
from mmrank.pql import fit_mease, fit_pql, lmm_solve, working_variates
from mmrank.schedule import DesignMatrices

CYCLE = DesignMatrices.from_arrays([0, 1, 2], [1, 2, 0], [1, 1, 1], 3)


def dense_working_loglik(t, W, Z, X, dvec, reml=False):
    """Profiled working-model log-likelihood straight from V = W^-1 + Z D Z'."""
    V = np.diag(1.0 / W) + (Z * dvec) @ Z.T
    Vi = np.linalg.inv(V)
    n = t.size
    if X is not None:
        X = X.reshape(-1, 1)
        xvx = X.T @ Vi @ X
        beta = np.linalg.solve(xvx, X.T @ Vi @ t)
        res = t - X @ beta
    else:
        beta, res = None, t
    ll = -0.5 * (np.linalg.slogdet(V)[1] + res @ Vi @ res + n * math.log(2 * math.pi))
    if reml and X is not None:
        ll += -0.5 * np.linalg.slogdet(xvx)[1] + 0.5 * math.log(2 * math.pi)
    eta = dvec * (Z.T @ Vi @ res)
    return ll, beta, eta


class TestWorkingVariates:
    def test_probit_at_zero(self):
        design = DesignMatrices.from_arrays([0], [1], [1.0], 2)
        cfg = ModelConfig("probit", 0, "pql-ml")
        wm = working_variates(design, design.r, cfg, None, np.zeros(2))
        assert wm.t[0] == pytest.approx(0.5 / stats.norm.pdf(0))
        assert wm.t[0] == pytest.approx(1.2533, abs=1e-4)
        assert wm.W[0] == pytest.approx(0.63662, abs=1e-5)

    def test_logit_at_zero(self):
        design = DesignMatrices.from_arrays([0], [1], [0.0], 2)
        cfg = ModelConfig("logit", 0, "pql-ml")
        wm = working_variates(design, design.r, cfg, None, np.zeros(2))
        assert wm.t[0] == pytest.approx(-2.0)
        assert wm.W[0] == pytest.approx(0.25)

    def test_weights_positive(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            design, r, cfg, params, eta = random_season(rng)
            wm = working_variates(design, r, cfg.with_(method="pql-ml"), params, 10 * eta)
            assert np.all(wm.W > 0) and np.all(np.isfinite(wm.t))

    def test_weight_floor(self):
        design = DesignMatrices.from_arrays([0], [1], [0.0], 2)
        cfg = ModelConfig("probit", 0, "pql-ml")
        wm = working_variates(design, design.r, cfg, None, np.array([25.0, -25.0]))
        assert wm.floored == 1 and wm.W[0] == cfg.weight_floor


class TestLmmSolve:
    def test_dense_oracle(self):
        rng = np.random.default_rng(8)
        for mode in (0, 1, 2):
            design, r, cfg, params, eta = random_season(rng, fcs_mode=mode, n_teams=5, n_games=12)
            cfg = cfg.with_(method="pql-reml")
            wm = working_variates(design, r, cfg, params, 0.3 * eta)
            with_x = design.X is not None and design.X.any()
            for reml in (False, True):
                p, e, _, ll = lmm_solve(wm, design, cfg, "REML" if reml else "ML", params.variances)
                dvec = params.team_variances(design.is_fcs)
                ll_ref, b_ref, e_ref = dense_working_loglik(
                    wm.t, wm.W, design.Z.toarray(), design.X if with_x else None, dvec, reml)
                assert ll == pytest.approx(ll_ref, rel=1e-10)
                np.testing.assert_allclose(e, e_ref, atol=1e-10)
                if with_x:
                    assert p.beta == pytest.approx(float(b_ref[0]), rel=1e-10)

    def test_variance_maximizes_profile(self):
        rng = np.random.default_rng(4)
        design, r, cfg, params, eta = random_season(rng, fcs_mode=0, n_teams=6, n_games=20)
        cfg = cfg.with_(method="pql-ml")
        wm = working_variates(design, r, cfg, ParameterVector(None, (0.5,)), np.zeros(6))
        p, _, _, _ = lmm_solve(wm, design, cfg, "ML")
        Z = design.Z.toarray()

        def neg(lv):
            return -dense_working_loglik(wm.t, wm.W, Z, None, np.full(6, math.exp(lv)))[0]

        ref = optimize.minimize_scalar(neg, bounds=(-10, 5), method="bounded", options={"xatol": 1e-10})
        assert p.variances[0] == pytest.approx(math.exp(ref.x), rel=1e-5)

    def test_two_team_single_game(self):
        design = DesignMatrices.from_arrays([0], [1], [1.0], 2)
        cfg = ModelConfig("probit", 0, "pql-ml")
        wm = working_variates(design, design.r, cfg, None, np.zeros(2))
        _, e, cov, _ = lmm_solve(wm, design, cfg, "ML", (1.0,))
        Z = np.array([[1.0, -1.0]])
        _, _, e_ref = dense_working_loglik(wm.t, wm.W, Z, None, np.ones(2))
        np.testing.assert_allclose(e, e_ref, atol=1e-14)
        C = Z.T @ np.diag(wm.W) @ Z + np.eye(2)
        np.testing.assert_allclose(cov, np.linalg.inv(C), atol=1e-14)

    def test_cycle_ratings_zero(self):
        cfg = ModelConfig("probit", 0, "pql-ml")
        for s2 in (0.1, 1.0, 7.0):
            wm = working_variates(CYCLE, CYCLE.r, cfg, None, np.zeros(3))
            _, e, _, _ = lmm_solve(wm, CYCLE, cfg, "ML", (s2,))
            np.testing.assert_allclose(e, 0.0, atol=1e-14)


class TestFitPql:
    def test_ml_equals_reml_without_fixed_effect(self):
        rng = np.random.default_rng(12)
        design, r, cfg, _, _ = random_season(rng, fcs_mode=0, n_teams=8, n_games=30)
        ml = fit_pql(design, r, cfg.with_(method="pql-ml"))
        reml = fit_pql(design, r, cfg.with_(method="pql-reml"))
        assert ml.params.variances[0] == pytest.approx(reml.params.variances[0], abs=1e-8)

    def test_fixed_point(self):
        rng = np.random.default_rng(13)
        design, r, cfg, _, _ = random_season(rng, fcs_mode=1, n_teams=8, n_games=40)
        cfg = cfg.with_(method="pql-reml")
        fit = fit_pql(design, r, cfg)
        assert fit.converged
        again = fit_pql(design, r, cfg, init=fit)
        assert again.iterations <= 2
        np.testing.assert_allclose(again.params.as_array(), fit.params.as_array(), atol=1e-6)
        np.testing.assert_allclose(again.eta_hat, fit.eta_hat, atol=1e-6)
        assert np.all(np.diag(fit.cond_cov) > 0)

    def test_symmetric_round_robin(self):
        cfg = ModelConfig("logit", 0, "pql-ml")
        fit = fit_pql(CYCLE, CYCLE.r, cfg)
        np.testing.assert_allclose(fit.eta_hat, fit.eta_hat[0], atol=1e-12)

    def test_fixed_variance_held(self):
        cfg = ModelConfig("probit", 0, "fixed", fixed_variance=2.5)
        rng = np.random.default_rng(1)
        design, r, _, _, _ = random_season(rng, fcs_mode=0, n_teams=5)
        fit = fit_pql(design, r, cfg)
        assert fit.params.variances == (2.5,)

    def test_iteration_cap(self):
        rng = np.random.default_rng(6)
        design, r, cfg, _, _ = random_season(rng, fcs_mode=0, n_teams=8, n_games=30)
        fit = fit_pql(design, r, cfg.with_(method="pql-ml", max_iter=1))
        assert not fit.converged
        assert "iteration cap" in fit.warnings[-1]


class TestMease:
    def test_matches_generic_optimizer(self):
        rng = np.random.default_rng(21)
        design, r, _, _, _ = random_season(rng, link="probit", fcs_mode=0, n_teams=7, n_games=25)
        fit = fit_mease(design, r)
        s = 2 * r - 1

        def negobj(theta):
            nu = theta[design.home] - theta[design.away]
            val = np.sum(stats.norm.logcdf(s * nu)) + np.sum(stats.norm.logcdf(theta) + stats.norm.logcdf(-theta))
            lam = lambda x: np.exp(stats.norm.logpdf(x) - stats.norm.logcdf(x))  # noqa: E731
            g_game = s * lam(s * nu)
            grad = np.bincount(design.home, g_game, 7) - np.bincount(design.away, g_game, 7)
            grad += lam(theta) - lam(-theta)
            return -val, -grad

        ref = optimize.minimize(negobj, np.zeros(7), jac=True, method="BFGS", options={"gtol": 1e-12})
        np.testing.assert_allclose(fit.eta_hat, ref.x, atol=1e-6)
        assert np.all(np.linalg.eigvalsh(fit.cond_cov) > 0)

    def test_single_team(self):
        design = DesignMatrices.from_arrays([], [], [], 1)
        fit = fit_mease(design, design.r)
        np.testing.assert_allclose(fit.eta_hat, [0.0], atol=1e-14)

    def test_dispatch_through_fit_pql(self):
        cfg = ModelConfig("probit", 0, Method.MEASE)
        fit = fit_pql(CYCLE, CYCLE.r, cfg)
        assert fit.params is None and fit.config.label == "MEASE.P.0"
