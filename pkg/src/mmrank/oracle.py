"""Brute-force reference values and a synthetic-season simulator.

``oracle_integrate`` evaluates the marginal likelihood and the posterior
moments of the team effects by tensor-product Gauss-Hermite quadrature
under the normal prior.  It is only usable for a handful of teams, which
is all the verification suites need.  ``simulate_season`` and
``bias_study`` draw seasons from the model itself to compare estimators
against known truth.
"""

from __future__ import annotations

import csv
import io
import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, ndtr

from .model import FcsMode, Method, ModelConfig, ParameterVector, game_derivatives, win_probability

logger = logging.getLogger(__name__)

MAX_ORACLE_DIM = 5
_CHUNK = 1 << 18


class OracleDimensionError(ValueError):
    """Too many team effects for tensor quadrature."""


@dataclass
class OracleResult:
    marginal_loglik: float
    posterior_mean: np.ndarray
    posterior_cov: np.ndarray
    nodes_per_dim: int


def oracle_integrate(design, outcomes, config: ModelConfig, params: ParameterVector,
                     nodes_per_dim: int = 40) -> OracleResult:
    """Marginal log-likelihood and posterior moments by tensor quadrature.

    Nodes are the Gauss-Hermite abscissae scaled by each team's prior
    standard deviation, so the prior density is absorbed into the weights.
    """
    k = design.n_teams
    if k > MAX_ORACLE_DIM:
        raise OracleDimensionError(
            f"tensor quadrature is limited to {MAX_ORACLE_DIM} team effects, got {k}"
        )
    if config.prior_kind() == "mease-penalty":
        raise ValueError("the quadrature oracle supports normal priors only")
    x, w = np.polynomial.hermite.hermgauss(nodes_per_dim)
    x = x * math.sqrt(2.0)
    logw = np.log(w) - 0.5 * math.log(math.pi)
    sd = np.sqrt(params.team_variances(design.is_fcs))
    r = np.asarray(outcomes, float)
    offset = np.zeros(design.n)
    if design.X is not None and params.beta is not None:
        offset = design.X * params.beta

    total = nodes_per_dim ** k
    grid_idx = np.indices((nodes_per_dim,) * k).reshape(k, -1).T if total <= _CHUNK else None
    firsts, seconds = np.zeros(k), np.zeros((k, k))
    # accumulate in log space per chunk, then combine
    chunks = []
    for start in range(0, total, _CHUNK):
        stop = min(total, start + _CHUNK)
        if grid_idx is not None:
            idx = grid_idx[start:stop]
        else:
            idx = np.array(np.unravel_index(np.arange(start, stop), (nodes_per_dim,) * k)).T
        eta = x[idx] * sd
        lw = logw[idx].sum(axis=1)
        if design.n:
            nu = eta[:, design.home] - eta[:, design.away] + offset
            ll = game_derivatives(config.link, nu, np.broadcast_to(r, nu.shape), 0)[0].sum(axis=1)
        else:
            ll = np.zeros(eta.shape[0])
        lt = lw + ll
        cmax = lt.max()
        p = np.exp(lt - cmax)
        chunks.append((cmax, p.sum(), p @ eta, (eta * p[:, None]).T @ eta))
    gmax = max(c[0] for c in chunks)
    Z = sum(math.exp(c[0] - gmax) * c[1] for c in chunks)
    for cmax, _, m1, m2 in chunks:
        f = math.exp(cmax - gmax)
        firsts += f * m1
        seconds += f * m2
    mean = firsts / Z
    cov = seconds / Z - np.outer(mean, mean)
    cov = 0.5 * (cov + cov.T)
    return OracleResult(
        marginal_loglik=float(gmax + math.log(Z)),
        posterior_mean=mean,
        posterior_cov=cov,
        nodes_per_dim=nodes_per_dim,
    )


def single_game_win_probability(beta: float, x: float, var_home: float, var_away: float) -> float:
    """Closed-form marginal ``P(home win)`` for one probit game."""
    return float(ndtr(x * beta / math.sqrt(1.0 + var_home + var_away)))


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------


@dataclass
class SyntheticSeason:
    schedule: list[tuple[int, int, int]]
    true_params: ParameterVector
    true_eta: np.ndarray
    outcomes: np.ndarray
    seed: object
    is_fcs: np.ndarray
    team_names: list[str] = field(default_factory=list)

    def to_records(self, start_date=None):
        """Game records and roster for the ingestion path."""
        import datetime as dt

        from .schedule import FBS, FCS, GameRecord

        start_date = start_date or dt.date(2000, 9, 1)
        names = self.team_names or [f"T{j:03d}" for j in range(len(self.true_eta))]
        recs = []
        for i, (h, a, x) in enumerate(self.schedule):
            recs.append(GameRecord(start_date + dt.timedelta(days=i // 50), names[h], names[a],
                                   int(self.outcomes[i]), int(x)))
        roster = {n: (FCS if f else FBS) for n, f in zip(names, self.is_fcs)}
        return recs, roster


def _variance_vector(true_params, is_fcs):
    v = np.asarray(true_params.variances, float)
    if v.size == 1:
        return np.full(is_fcs.shape[0], v[0])
    return np.where(is_fcs, v[1], v[0])


def simulate_season(schedule, true_params, link: str = "probit", seed=0, is_fcs=None,
                    team_names=None) -> SyntheticSeason:
    """Draw team effects once from the prior, then every game outcome.

    ``schedule`` is a sequence of ``(home, away, fcs_visit)`` team-index
    triples.  Zero variances are allowed here (all effects are then zero).
    """
    schedule = [tuple(int(v) for v in g) for g in schedule]
    if not schedule:
        raise ValueError("empty schedule")
    n_teams = 1 + max(max(h, a) for h, a, _ in schedule)
    if is_fcs is None:
        is_fcs = np.zeros(n_teams, dtype=bool)
    is_fcs = np.asarray(is_fcs, bool)
    n_teams = max(n_teams, is_fcs.shape[0])
    rng = np.random.default_rng(seed)
    var = _variance_vector(true_params, is_fcs)
    eta = rng.standard_normal(n_teams) * np.sqrt(var)
    h = np.array([g[0] for g in schedule])
    a = np.array([g[1] for g in schedule])
    x = np.array([g[2] for g in schedule], float)
    nu = eta[h] - eta[a] + x * (true_params.beta or 0.0)
    p = win_probability(link, nu)
    r = (rng.random(len(schedule)) < p).astype(float)
    return SyntheticSeason(schedule, true_params, eta, r, seed, is_fcs, list(team_names or []))


def _true_params(beta, variances):
    """ParameterVector that tolerates zero variances (simulation only)."""
    pv = object.__new__(ParameterVector)
    pv.beta = beta
    pv.variances = tuple(float(v) for v in variances)
    return pv


def true_parameters(beta=None, variances=(0.8,)) -> ParameterVector:
    """Simulation truth; unlike fitted parameters, zero variances are allowed."""
    if any(v < 0 for v in variances):
        raise ValueError("variances must be non-negative")
    return _true_params(beta, variances)


def round_robin_fragment(n_teams: int, games_per_team: int, seed=0):
    """Random regular-ish schedule: each team plays about ``games_per_team`` games."""
    rng = np.random.default_rng(seed)
    games = []
    for rnd in range(games_per_team):
        perm = rng.permutation(n_teams)
        for k in range(0, n_teams - 1, 2):
            h, a = int(perm[k]), int(perm[k + 1])
            if rng.random() < 0.5:
                h, a = a, h
            games.append((h, a, 0))
    return games


def _rank_displacement(est, truth):
    order_est = np.argsort(np.argsort(-est, kind="stable"), kind="stable")
    order_true = np.argsort(np.argsort(-truth, kind="stable"), kind="stable")
    return float(np.mean(np.abs(order_est - order_true)))


@dataclass
class BiasStudySummary:
    true_params: ParameterVector
    replications: int
    rows: list[dict]

    def to_text(self, delimiter: str = ",") -> str:
        buf = io.StringIO()
        cols = ["method", "n_ok", "n_failed", "parameter", "truth", "mean", "sd", "mean_rank_displacement"]
        w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
        w.writerow(cols)
        for row in self.rows:
            w.writerow([_fmt(row[c]) for c in cols])
        return buf.getvalue()

    def mean_of(self, method: str, parameter: str = "sigma2_1") -> float:
        for row in self.rows:
            if row["method"] == method and row["parameter"] == parameter:
                return row["mean"]
        raise KeyError((method, parameter))


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6f}"
    return str(v)


def bias_study(schedule_template, true_params, methods, replications: int, seed=0,
               link: str = "probit", fcs_mode=FcsMode.CONSOLIDATED, is_fcs=None,
               jobs: int = 1) -> BiasStudySummary:
    """Simulate ``replications`` seasons and fit each with every method.

    Replication ``k`` uses the RNG stream ``(seed, k)``.  Failed fits are
    counted, not raised.
    """
    from .fitting import fit_model

    if replications < 1:
        raise ValueError("replications must be >= 1")
    methods = [Method(m) for m in methods]

    def one(rep):
        season = simulate_season(schedule_template, true_params, link, seed=[int(seed), rep], is_fcs=is_fcs)
        design = _design_from_season(season, fcs_mode)
        out = {}
        for m in methods:
            cfg = ModelConfig(link=link, fcs_mode=fcs_mode, method=m)
            try:
                fit = fit_model(design, design.r, cfg)
                out[m] = (fit.params, _rank_displacement(fit.eta_hat, season.true_eta[: design.n_teams]))
            except Exception as exc:  # recorded, not fatal
                logger.warning("replication %d, %s failed: %s", rep, m.value, exc)
                out[m] = None
        return out

    if jobs > 1:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=jobs)(delayed(one)(k) for k in range(replications))
    else:
        results = [one(k) for k in range(replications)]

    rows = []
    names = _param_names(true_params)
    for m in methods:
        ok = [r[m] for r in results if r[m] is not None]
        failed = replications - len(ok)
        disp = float(np.mean([d for _, d in ok])) if ok else float("nan")
        for pname, truth in names:
            vals = np.array([_param_value(p, pname) for p, _ in ok], float)
            vals = vals[~np.isnan(vals)]
            rows.append({
                "method": m.value,
                "n_ok": len(ok),
                "n_failed": failed,
                "parameter": pname,
                "truth": float(truth),
                "mean": float(vals.mean()) if vals.size else float("nan"),
                "sd": float(vals.std(ddof=1)) if vals.size > 1 else float("nan"),
                "mean_rank_displacement": disp,
            })
    return BiasStudySummary(true_params, replications, rows)


def _param_names(true_params):
    out = []
    if true_params.beta is not None:
        out.append(("beta", true_params.beta))
    for k, v in enumerate(true_params.variances, start=1):
        out.append((f"sigma2_{k}", v))
    return out


def _param_value(params, name):
    if name == "beta":
        return np.nan if params.beta is None else params.beta
    k = int(name.split("_")[1]) - 1
    return params.variances[k] if k < len(params.variances) else np.nan


def _design_from_season(season: SyntheticSeason, fcs_mode):
    """Design straight from team indices (teams that never play are kept)."""
    from .schedule import DesignMatrices

    fcs_mode = FcsMode(int(fcs_mode))
    h = np.array([g[0] for g in season.schedule])
    a = np.array([g[1] for g in season.schedule])
    x = np.array([g[2] for g in season.schedule], float)
    is_fcs = season.is_fcs
    if fcs_mode is FcsMode.CONSOLIDATED and is_fcs.any():
        recs, roster = season.to_records()
        from .schedule import build_design

        design, _ = build_design(recs, fcs_mode, roster)
        return design
    X = x if fcs_mode is not FcsMode.CONSOLIDATED else None
    return DesignMatrices.from_arrays(h, a, season.outcomes, len(is_fcs), X=X, is_fcs=is_fcs)


def enumerate_outcomes(n_games: int):
    """All ``2**n_games`` outcome vectors (tiny instances only)."""
    return [np.array(bits, float) for bits in itertools.product((0, 1), repeat=n_games)]


def log_marginal_by_enumeration_check(results) -> float:
    """``logsumexp`` of marginal log-likelihoods over all outcome vectors (should be 0)."""
    return float(logsumexp(results))
