"""Raw per-team game files to design matrices.

Each school's file lists its own games, so a game between two schools of
the same division appears twice.  Preprocessing keeps one copy, drops
opponents outside the roster and recomputes the FCS-visit flag.  The
design then depends on how FCS teams are handled.

    python3 demos/01_ingest_and_design.py
"""

import numpy as np

from mmrank.model import FcsMode
from mmrank.schedule import TABLE_LAYOUT_MAPPING, build_design, detect_separation, parse_games, preprocess_raw

ball_state = """home,Game Date,away,home_score,away_score,fcs
Ball St.,8/28/2008,Northeastern,48,14,1
Ball St.,9/6/2008,Navy,35,23,0
Army,9/20/2008,Ball St.,3,42,0
"""
navy = """home,Game Date,away,home_score,away_score,fcs
Ball St.,9/6/2008,Navy,35,23,0
Navy,9/13/2008,Army,34,0,0
Navy,10/4/2008,Northeastern,14,17,1
Northeastern,9/27/2008,Maine,10,24,0
Maine,10/11/2008,Bowdoin,50,0,0
"""
roster = {"Ball St.": "FBS", "Navy": "FBS", "Army": "FBS", "Northeastern": "FCS", "Maine": "FCS"}

raw = parse_games(ball_state, TABLE_LAYOUT_MAPPING) + parse_games(navy, TABLE_LAYOUT_MAPPING)
games = preprocess_raw(raw, roster)
print(f"{len(raw)} raw rows -> {len(games)} games (mirror row and off-roster opponent removed)")
for g in games:
    print(f"  {g.date}  {g.home:>12} vs {g.away:<12} home_win={g.home_win} fcs_visit={g.fcs_visit}")

# mode 0 folds every FCS team into one pseudo-team and ignores FCS-only games
for mode in FcsMode:
    design, index = build_design(games, mode, roster)
    print(f"\nfcs_mode {int(mode)}: {design.n} games, teams {index.names}")
    print(np.array2string(design.Z.toarray().astype(int)))
    if design.X is not None:
        print("X (FBS host vs FCS visitor):", design.X.astype(int))

print("\n" + detect_separation(games, roster).recommendation)
