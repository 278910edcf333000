"""Simulation study of the variance estimators.

Seasons are simulated on a fixed schedule with team variance 0.8 and
refitted by each method.  With about a dozen games per team all methods
underestimate the variance; PQL is lowest and the fully exponential EM
closest to the truth.

    python3 demos/04_bias_study.py
"""

from mmrank.oracle import bias_study, round_robin_fragment, true_parameters

schedule = round_robin_fragment(100, 12, seed=6)
summary = bias_study(schedule, true_parameters(None, (0.8,)), ["pql-ml", "la", "fe"], 10, seed=1)
print(summary.to_text())
for m in ("pql-ml", "la", "fe"):
    print(f"{m:7} mean sigma2 {summary.mean_of(m):.3f}  (bias {summary.mean_of(m) - 0.8:+.3f})")
