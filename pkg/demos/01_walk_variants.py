"""Three ways to pass one token around a mobile network, side by side.

Run: python demos/01_walk_variants.py
"""
# %%
import numpy as np

from census import ProtocolConfig, TrialConfig, derive_world, exploration_ratio, run_trial

# 200 nodes, 10 neighbours on average, 100 m radio range; the square grows with N
world = derive_world(200, d=10, R=100.0)
print(f"deployment side {world.side:.0f} m, {world.n_nodes} nodes")

# %%
# the same seed gives every variant the same placement and the same node motion
results = {}
for variant in ("pure", "local", "gradient"):
    m = run_trial(TrialConfig(world=world, protocol=ProtocolConfig(variant=variant), seed=7))
    results[variant] = m
    print(f"{variant:>8}: covered in {m.cover_transactions:5d} transactions, "
          f"{m.token_transfers:5d} transfers, {m.gradient_msgs:6d} gradient messages")

# %%
# transfers per newly visited node: local bias wastes more and more moves near the end
fractions = np.array([0.5, 0.7, 0.8, 0.9, 1.0])
print("coverage  " + "  ".join(f"{f:5.0%}" for f in fractions))
for variant, m in results.items():
    ratios = [exploration_ratio(m, f) for f in fractions]
    print(f"{variant:>8}  " + "  ".join(f"{r:5.2f}" for r in ratios))

# %%
# with gradients the last holder notices that nothing is left to visit
g = results["gradient"]
print(f"full coverage at slot {g.cover_slots}, termination detected at slot {g.termination_detect_slot}")
