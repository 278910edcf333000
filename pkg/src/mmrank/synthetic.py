"""Season-shaped synthetic schedules.

Conference blocks play most of their games internally; each FBS team adds
a few non-conference games, some of them hosting an FCS visitor.  FCS
teams fill the rest of their schedule against each other.
"""

from __future__ import annotations

import numpy as np


def conference_schedule(n_teams: int, conf_size: int, conf_games: int, extra_games: int, rng,
                        offset: int = 0):
    """Home/away pairs for ``n_teams`` split into conferences."""
    teams = np.arange(n_teams)
    games = []
    confs = [teams[k:k + conf_size] for k in range(0, n_teams, conf_size)]
    for conf in confs:
        size = len(conf)
        if size < 2:
            continue
        played = set()
        per_team = min(conf_games, size - 1)
        for _ in range(per_team * size // 2 * 3):
            cnt = np.zeros(n_teams, int)
            for a, b in played:
                cnt[a] += 1
                cnt[b] += 1
            short = [t for t in conf if cnt[t] < per_team]
            if len(short) < 2:
                break
            a, b = rng.choice(short, 2, replace=False)
            key = (min(a, b), max(a, b))
            if key in played:
                continue
            played.add(key)
        for a, b in sorted(played):
            h, w = (a, b) if rng.random() < 0.5 else (b, a)
            games.append((int(h) + offset, int(w) + offset))
    for _ in range(extra_games):
        perm = rng.permutation(n_teams)
        for k in range(0, n_teams - 1, 2):
            games.append((int(perm[k]) + offset, int(perm[k + 1]) + offset))
    return games


def season_schedule(n_fbs: int = 120, n_fcs: int = 118, fcs_visits: int = 86, seed=2008):
    """Schedule of ``(home, away, fcs_visit)`` with FBS teams ``0..n_fbs-1``.

    Returns ``(schedule, is_fcs)``.  FCS visitors only travel to FBS hosts.
    """
    rng = np.random.default_rng(seed)
    fbs = conference_schedule(n_fbs, 12, 8, 4, rng)
    fcs = conference_schedule(n_fcs, 10, 7, 4, rng, offset=n_fbs)
    sched = [(h, a, 0) for h, a in fbs] + [(h, a, 0) for h, a in fcs]
    hosts = rng.choice(n_fbs, fcs_visits, replace=fcs_visits > n_fbs)
    visitors = n_fbs + rng.choice(n_fcs, fcs_visits, replace=fcs_visits > n_fcs)
    sched += [(int(h), int(a), 1) for h, a in zip(hosts, visitors)]
    order = rng.permutation(len(sched))
    sched = [sched[k] for k in order]
    is_fcs = np.r_[np.zeros(n_fbs, bool), np.ones(n_fcs, bool)]
    return sched, is_fcs
