"""Game records, cleaning, and the multi-membership design.

Raw season files list every game once per participating team, so games
between two teams of the same division show up twice (once from each
side).  ``preprocess_raw`` collapses those mirrors, drops games against
teams outside the roster, and applies the season cutoff.  ``build_design``
then turns the cleaned records into the sparse ``Z`` (one ``+1`` for the
home team, one ``-1`` for the visitor per row) and the FCS-visit column
``X``.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import logging
import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .model import FcsMode

logger = logging.getLogger(__name__)

FBS = "FBS"
FCS = "FCS"
PSEUDO_FCS = "FCS (all)"

# canonical field -> header name
DEFAULT_MAPPING = {
    "home": "home",
    "date": "date",
    "away": "away",
    "home_score": "home_score",
    "away_score": "away_score",
    "home_win": "home_win",
    "fcs": "fcs",
    "neutral": "neutral",
}

# the layout of the published processed files
TABLE_LAYOUT_MAPPING = {
    "home": "home",
    "date": "Game Date",
    "away": "away",
    "home_score": "home_score",
    "away_score": "away_score",
    "home_win": "home_win",
    "fcs": "fcs",
}

CANONICAL_HEADER = ["date", "home", "away", "home_win", "fcs", "neutral"]


class ScheduleError(ValueError):
    """Malformed input file."""


class DataIntegrityError(ValueError):
    """Contradictory or otherwise inconsistent game data."""


@dataclass(frozen=True)
class GameRecord:
    date: dt.date
    home: str
    away: str
    home_win: int
    fcs_visit: int = 0
    neutral_site: bool = False

    def __post_init__(self):
        if self.home == self.away:
            raise ScheduleError(f"team {self.home!r} cannot play itself")
        if self.home_win not in (0, 1) or self.fcs_visit not in (0, 1):
            raise ScheduleError("home_win and fcs_visit must be 0 or 1")

    @property
    def winner(self) -> str:
        return self.home if self.home_win else self.away

    @property
    def pair(self) -> frozenset:
        return frozenset((self.home, self.away))


@dataclass
class TeamIndex:
    """Dense team numbering: FBS teams first, then FCS teams."""

    names: list[str]
    division: list[str]
    p: int
    q: int
    lookup: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.lookup:
            self.lookup = {name: j for j, name in enumerate(self.names)}
        if self.p < 2:
            raise ScheduleError(f"need at least two FBS teams, got {self.p}")

    def __len__(self) -> int:
        return len(self.names)

    def __getitem__(self, name: str) -> int:
        return self.lookup[name]

    @property
    def is_fcs(self) -> np.ndarray:
        return np.array([d == FCS for d in self.division], dtype=bool)


@dataclass
class DesignMatrices:
    """Design for ``n`` games on ``p + q`` teams.

    ``home``/``away`` are the column indices of the ``+1``/``-1`` entries
    of each row of ``Z``; ``X`` is ``None`` when the model has no FCS
    effect.  ``r`` holds the aligned outcomes.
    """

    home: np.ndarray
    away: np.ndarray
    X: np.ndarray | None
    r: np.ndarray
    n_teams: int
    is_fcs: np.ndarray

    @property
    def n(self) -> int:
        return int(self.home.shape[0])

    @property
    def Z(self) -> sparse.csr_matrix:
        n = self.n
        rows = np.repeat(np.arange(n), 2)
        cols = np.column_stack([self.home, self.away]).ravel()
        vals = np.tile([1.0, -1.0], n)
        return sparse.csr_matrix((vals, (rows, cols)), shape=(n, self.n_teams))

    @classmethod
    def from_arrays(cls, home, away, r, n_teams, X=None, is_fcs=None):
        home = np.asarray(home, dtype=np.intp)
        away = np.asarray(away, dtype=np.intp)
        if is_fcs is None:
            is_fcs = np.zeros(n_teams, dtype=bool)
        return cls(
            home=home,
            away=away,
            X=None if X is None else np.asarray(X, dtype=float),
            r=np.asarray(r, dtype=float),
            n_teams=int(n_teams),
            is_fcs=np.asarray(is_fcs, dtype=bool),
        )


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


def _parse_date(text: str) -> dt.date:
    text = text.strip()
    for fmt in ("%Y-%m-%d", "%m/%d/%Y", "%m/%d/%y"):
        try:
            return dt.datetime.strptime(text, fmt).date()
        except ValueError:
            pass
    raise ValueError(f"unrecognised date {text!r}")


def _flag(text: str | None) -> int:
    if text is None or text.strip() == "":
        return 0
    t = text.strip().lower()
    if t in ("1", "true", "yes", "y", "t"):
        return 1
    if t in ("0", "false", "no", "n", "f"):
        return 0
    raise ValueError(f"bad indicator {text!r}")


def parse_mapping(text: str) -> dict[str, str]:
    """Read a ``field=header`` column mapping (one per line, ``#`` comments)."""
    mapping = dict(DEFAULT_MAPPING)
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScheduleError(f"mapping line without '=': {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULT_MAPPING:
            raise ScheduleError(f"unknown mapping field {key!r}")
        mapping[key] = value
    return mapping


def parse_games(file_contents: str, format_spec: dict[str, str] | None = None,
                delimiter: str | None = None) -> list[GameRecord]:
    """Parse delimiter-separated game rows into records.

    The header must name the home and away teams, the date, the FCS-visit
    indicator, and either a binary ``home_win`` column or both scores.
    The delimiter is sniffed from the header when not given.
    """
    mapping = dict(DEFAULT_MAPPING)
    if format_spec:
        mapping.update(format_spec)
    lines = file_contents.splitlines()
    if not lines or not lines[0].strip():
        raise ScheduleError("missing header row")
    if delimiter is None:
        header_line = lines[0]
        delimiter = max((",", "\t", ";", "|"), key=header_line.count)
    reader = csv.reader(io.StringIO(file_contents), delimiter=delimiter)
    header = [h.strip() for h in next(reader)]
    col = {name: j for j, name in enumerate(header)}

    def where(key):
        return col.get(mapping[key])

    need = ["home", "away", "date", "fcs"]
    missing = [mapping[k] for k in need if where(k) is None]
    has_win = where("home_win") is not None
    has_scores = where("home_score") is not None and where("away_score") is not None
    if not (has_win or has_scores):
        missing.append(f"{mapping['home_win']} (or both score columns)")
    if missing:
        raise ScheduleError(f"header lacks required column(s): {', '.join(missing)}")

    records = []
    for rowno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            if len(row) < len(header):
                raise ValueError(f"expected {len(header)} fields, got {len(row)}")
            get = lambda k: row[where(k)].strip() if where(k) is not None else None  # noqa: E731
            if has_scores and get("home_score") not in (None, "") and get("away_score") not in (None, ""):
                hs, as_ = float(get("home_score")), float(get("away_score"))
                if hs == as_:
                    raise ValueError(f"tied score {hs:g}-{as_:g}; games cannot end level")
                home_win = int(hs > as_)
                if has_win and get("home_win") not in (None, "") and _flag(get("home_win")) != home_win:
                    raise ValueError("home_win disagrees with the scores")
            else:
                home_win = _flag(get("home_win"))
            records.append(
                GameRecord(
                    date=_parse_date(get("date")),
                    home=get("home"),
                    away=get("away"),
                    home_win=home_win,
                    fcs_visit=_flag(get("fcs")),
                    neutral_site=bool(_flag(get("neutral"))),
                )
            )
        except (ValueError, IndexError) as exc:
            raise ScheduleError(f"row {rowno}: {exc}") from exc
    return records


def parse_roster(text: str) -> dict[str, str]:
    """Read ``team,division`` rows (header optional) into a mapping."""
    roster = {}
    delimiter = max((",", "\t", ";", "|"), key=text.splitlines()[0].count) if text.strip() else ","
    for rowno, row in enumerate(csv.reader(io.StringIO(text), delimiter=delimiter), start=1):
        if not row or not row[0].strip():
            continue
        team, div = row[0].strip(), row[1].strip().upper() if len(row) > 1 else ""
        if rowno == 1 and div not in (FBS, FCS):
            continue  # header
        if div not in (FBS, FCS):
            raise ScheduleError(f"roster row {rowno}: division must be FBS or FCS, got {div!r}")
        roster[team] = div
    return roster


def format_games(records) -> str:
    """Canonical processed file, sorted by date then home team."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CANONICAL_HEADER)
    for g in sorted(records, key=lambda g: (g.date, g.home, g.away)):
        w.writerow([g.date.isoformat(), g.home, g.away, g.home_win, g.fcs_visit, int(g.neutral_site)])
    return buf.getvalue()


def format_roster(roster: dict[str, str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["team", "division"])
    for team in sorted(roster):
        w.writerow([team, roster[team]])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# cleaning
# ---------------------------------------------------------------------------


def preprocess_raw(records, division_roster: dict[str, str], cutoff: dt.date | None = None) -> list[GameRecord]:
    """Deduplicate, drop off-roster opponents and post-cutoff games.

    Two records describe the same game when they share the unordered team
    pair and the date; the first one seen is kept.  The FCS-visit flag is
    recomputed from the roster (FCS visitor at an FBS host).
    """
    out: list[GameRecord] = []
    seen: dict[tuple, GameRecord] = {}
    for g in records:
        if g.home not in division_roster or g.away not in division_roster:
            continue
        if cutoff is not None and g.date > cutoff:
            continue
        key = (g.pair, g.date)
        prior = seen.get(key)
        if prior is not None:
            if prior.winner != g.winner:
                a, b = sorted(g.pair)
                raise DataIntegrityError(
                    f"contradictory duplicate records for {a} vs {b} on {g.date.isoformat()}"
                )
            continue
        fcs_visit = int(division_roster[g.home] == FBS and division_roster[g.away] == FCS)
        if fcs_visit != g.fcs_visit:
            g = GameRecord(g.date, g.home, g.away, g.home_win, fcs_visit, g.neutral_site)
        seen[key] = g
        out.append(g)
    return out


# ---------------------------------------------------------------------------
# design
# ---------------------------------------------------------------------------


def _infer_roster(records) -> dict[str, str]:
    roster = {}
    for g in records:
        roster.setdefault(g.home, FBS)
        roster[g.away] = FCS if g.fcs_visit else roster.get(g.away, FBS)
    return roster


def build_design(records, fcs_mode=FcsMode.CONSOLIDATED, roster: dict[str, str] | None = None):
    """Build ``(DesignMatrices, TeamIndex)`` for the chosen FCS handling.

    Without a roster, visitors flagged by ``fcs_visit`` are FCS and every
    other team is FBS.
    """
    fcs_mode = FcsMode(int(fcs_mode))
    roster = dict(roster) if roster is not None else _infer_roster(records)
    for g in records:
        for t in (g.home, g.away):
            if t not in roster:
                raise ScheduleError(f"team {t!r} missing from roster")

    if fcs_mode is FcsMode.CONSOLIDATED:
        games = [g for g in records if not (roster[g.home] == FCS and roster[g.away] == FCS)]
        relabel = lambda t: PSEUDO_FCS if roster[t] == FCS else t  # noqa: E731
    else:
        games = list(records)
        relabel = lambda t: t  # noqa: E731

    played = Counter()
    for g in games:
        played[relabel(g.home)] += 1
        played[relabel(g.away)] += 1
    all_teams = {relabel(t) for t in roster}
    if fcs_mode is FcsMode.CONSOLIDATED and any(d == FCS for d in roster.values()):
        all_teams.add(PSEUDO_FCS)
    idle = sorted(t for t in all_teams if played[t] == 0)
    if idle:
        msg = f"dropping {len(idle)} team(s) with no games: {', '.join(idle[:10])}"
        warnings.warn(msg, stacklevel=2)
        logger.warning(msg)

    def div_of(t):
        return FCS if t == PSEUDO_FCS else roster[t]

    active = [t for t in played if played[t] > 0]
    fbs = sorted(t for t in active if div_of(t) == FBS)
    fcs = sorted(t for t in active if div_of(t) == FCS)
    names = fbs + fcs
    index = TeamIndex(names=names, division=[FBS] * len(fbs) + [FCS] * len(fcs),
                      p=len(fbs), q=len(fcs))

    home = np.array([index[relabel(g.home)] for g in games], dtype=np.intp)
    away = np.array([index[relabel(g.away)] for g in games], dtype=np.intp)
    r = np.array([g.home_win for g in games], dtype=float)
    X = None
    if fcs_mode is not FcsMode.CONSOLIDATED:
        X = np.array([g.fcs_visit for g in games], dtype=float)
        X[X > 0] = [1.0 if index.division[a] == FCS else 0.0 for a in away[X > 0]]
    design = DesignMatrices(home=home, away=away, X=X, r=r, n_teams=len(names), is_fcs=index.is_fcs)
    return design, index


def team_records(records) -> dict[str, tuple[int, int]]:
    """Wins and losses per team."""
    wl: dict[str, list[int]] = {}
    for g in records:
        wl.setdefault(g.home, [0, 0])
        wl.setdefault(g.away, [0, 0])
        wl[g.winner][0] += 1
        loser = g.away if g.home_win else g.home
        wl[loser][1] += 1
    return {t: (w, l) for t, (w, l) in wl.items()}


@dataclass
class SeparationReport:
    cross_division_games: int
    fcs_wins: int
    separated: bool
    undefeated: int
    winless: int
    recommendation: str


def detect_separation(records, roster: dict[str, str] | None = None) -> SeparationReport:
    """Check whether the FCS effect is estimable.

    The FCS effect diverges (quasi-complete separation) when the FBS host
    won every FBS-vs-FCS game, including the vacuous case of no such games.
    Undefeated and winless teams are counted for information only; the
    random team effects keep their ratings finite.
    """
    if roster is None:
        cross = [g for g in records if g.fcs_visit]
        fcs_won = sum(1 - g.home_win for g in cross)
    else:
        cross = [g for g in records if roster.get(g.home) != roster.get(g.away)]
        fcs_won = sum(roster.get(g.winner) == FCS for g in cross)
    separated = fcs_won == 0 or fcs_won == len(cross)
    wl = team_records(records)
    rec = (
        "drop the FCS effect and the FCS teams (use consolidated mode)"
        if separated
        else "FCS effect is estimable"
    )
    return SeparationReport(
        cross_division_games=len(cross),
        fcs_wins=int(fcs_won),
        separated=bool(separated),
        undefeated=sum(1 for w, l in wl.values() if l == 0),
        winless=sum(1 for w, l in wl.values() if w == 0),
        recommendation=rec,
    )
