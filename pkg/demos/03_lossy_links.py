"""Acknowledged transfers, checkpoints and the final flood on a lossy channel.

Run: python demos/03_lossy_links.py
"""
# %%
from census import ProtocolConfig, TrialConfig, derive_world, flood_exfiltrate
from census.engine import Trial

# one packet in five is dropped; three tokens, up to three retries per hand-off
cfg = TrialConfig(world=derive_world(200, 10, 100.0, loss=0.2),
                  protocol=ProtocolConfig(variant="gradient", reliable=True, max_retries=3),
                  n_tokens=3, seed=3)
trial = Trial(cfg)
m = trial.run()
print(f"visited {m.visited_count}/{m.n_nodes}, {m.retries} retries, {m.checkpoints} checkpoints")

# %%
# a checkpoint freezes the aggregate under the old token id; if the hand-off did
# arrive after all, both copies share that id and only the newer one is counted
tokens = trial.live_tokens()
frozen = {r.old_token_id: r.frozen_aggregate.n for t in tokens for r in t.checkpoints}
naive = sum(t.aggregate.n for t in tokens) + sum(frozen.values())
print(f"{len(tokens)} token copies carrying {len({t.token_id for t in tokens})} ids, "
      f"{len(frozen)} frozen checkpoints")
print(f"adding every copy and checkpoint gives {naive}; "
      f"deduplicated total {m.final_total.n} (ground truth {m.visited_count})")

# %%
# every holder floods its token once the census is over
holders = [h for h, q in sorted(trial.queues.items()) for _ in q]
rep = flood_exfiltrate(trial.channel, [t for q in trial.queues.values() for t in q], holders)
print(f"flood: {rep.messages} broadcasts, total {rep.total}, nodes reached per token {rep.reached}")
