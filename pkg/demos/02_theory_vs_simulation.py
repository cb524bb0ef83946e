"""Closed-form cover-time series against a handful of simulated trials.

Run: python demos/02_theory_vs_simulation.py   (about a minute)
"""
# %%
import numpy as np

from census import analysis
from census.harness import Scenario, expand, run_specs

# how many neighbours must be unvisited before one is almost surely next door
for row in analysis.lemma1_table(0.95, 10):
    print(f"h={row['h']}: an unvisited node within {row['h']} hop(s) w.p. 0.95 "
          f"until {row['coverage']:.0%} coverage")

# %%
sizes = (125, 250, 500)
s = Scenario(name="demo", variants=("local", "gradient"), n_list=sizes, repetitions=3, seed_base=20)
rows = [r["row"] for r in run_specs(expand(s))]


def mean_transfers(variant, n):
    return np.mean([r["token_transfers"] for r in rows if r["variant"] == variant and r["n"] == n])


# %%
print(f"{'N':>5} {'local sim':>10} {'local th':>9} {'grad sim':>9} {'grad th':>8}")
for n in sizes:
    print(f"{n:5d} {mean_transfers('local', n):10.0f} {analysis.local_bias_cover_series(n, 10):9.0f} "
          f"{mean_transfers('gradient', n):9.0f} {analysis.gradient_cover_series(n, 10):8.0f}")

# %%
# the series grows a little faster than N for local bias and linearly with gradients
for variant in ("local", "gradient"):
    slope = analysis.loglog_slope([(n, mean_transfers(variant, n)) for n in sizes])
    print(f"{variant}: transfers grow as N^{slope:.2f}")
