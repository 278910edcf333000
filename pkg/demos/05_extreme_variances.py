"""What the team variance does to a ranking.

A tiny variance makes every rating proportional to wins minus losses; a
huge one lets strength of schedule dominate.  Below, W0 has the best
record but played only the weak conference, while the three strong teams
split games among themselves and swept the weak teams they met.

    python3 demos/05_extreme_variances.py
"""

import numpy as np

from mmrank.fitting import fit_model
from mmrank.model import ModelConfig
from mmrank.schedule import DesignMatrices

names = ["S0", "S1", "S2", "W0", "W1", "W2", "W3", "W4", "W5"]
t = {n: k for k, n in enumerate(names)}
winners_losers = [("S0", "S1"), ("S1", "S2"), ("S2", "S0"),
                  ("W0", "W2"), ("W0", "W3"), ("W0", "W4"), ("W0", "W5"), ("W1", "W0"),
                  ("W2", "W1"), ("W3", "W2"), ("W4", "W3"), ("W5", "W4"), ("W1", "W5"),
                  ("S0", "W1"), ("S1", "W2"), ("S2", "W3"), ("S0", "W4"), ("S1", "W5"), ("S2", "W1")]
design = DesignMatrices.from_arrays([t[w] for w, _ in winners_losers], [t[l] for _, l in winners_losers],
                                    np.ones(len(winners_losers)), len(names))

record = np.zeros(len(names), int)
np.add.at(record, design.home, 1)
np.add.at(record, design.away, -1)
print("wins minus losses:", dict(zip(names, record.tolist())))

for s2 in (1e-4, 1.0, 100.0):
    fit = fit_model(design, design.r, ModelConfig("probit", 0, "fixed", fixed_variance=s2))
    order = [names[j] for j in np.lexsort((names, -fit.eta_hat))]
    print(f"sigma2 = {s2:g}: {' > '.join(order)}")
