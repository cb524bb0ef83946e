"""Experiment scenarios: parameter grids, seeded trial execution and CSV output.

A scenario is a grid over variants, network sizes, token counts, densities,
mobility models, speed ranges and loss rates, repeated ``repetitions`` times.
Trial ``i`` of the grid (in a fixed row-major order) runs with seed
``seed_base + i``, so results do not depend on how trials are scheduled.
"""
from __future__ import annotations

import configparser
import csv
import dataclasses
import hashlib
import itertools
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import aggregation as agg
from . import analysis
from .engine import TrialConfig, run_trial
from .metrics import MetricsError, exploration_ratio
from .mobility import make_mobility
from .protocol import ProtocolConfig, Variant
from .world import InvalidParameter, derive_world

CSV_VERSION = 1
TOKEN_RULES = ("fixed", "sqrt", "log2")
RATIO_POINTS = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0)


def token_rule(rule: str, n: int, k: int = 1) -> int:
    """Token count for a network of ``n`` nodes: a fixed ``k``, ``round(sqrt N)`` or ``round(log2 N)``."""
    if n < 1:
        raise InvalidParameter(f"N must be >= 1, got {n}")
    if rule == "fixed":
        out = int(k)
    elif rule == "sqrt":
        out = int(round(math.sqrt(n)))
    elif rule == "log2":
        out = max(1, int(round(math.log2(n))))
    else:
        raise InvalidParameter(f"unknown token rule {rule!r}; choose from {TOKEN_RULES}")
    if out < 1 or out > n:
        raise InvalidParameter(f"token count {out} is outside [1, {n}]")
    return out


@dataclass(frozen=True)
class Scenario:
    name: str = "custom"
    variants: tuple = ("gradient",)
    n_list: tuple = (500,)
    token_rule: str = "fixed"
    tokens: tuple = (1,)                 # used by the fixed rule
    densities: tuple = (10.0,)
    mobility: tuple = ("rw2d",)
    speeds: tuple = ((2.0, 4.0),)
    loss_probs: tuple = (0.0,)
    repetitions: int = 10
    seed_base: int = 1
    stop_coverage: float = 1.0
    union_trials: int = 1                # >1 groups consecutive repetitions into unions
    aggregate: str = "count"
    range_R: float = 100.0
    leg_len: float = 100.0
    reliable: bool = False
    max_retries: int = 3
    timeline: bool = False

    def __post_init__(self):
        for v in self.variants:
            Variant(v)
        if self.token_rule not in TOKEN_RULES:
            raise InvalidParameter(f"unknown token rule {self.token_rule!r}")
        if self.repetitions < 1:
            raise InvalidParameter("repetitions must be >= 1")
        if not 0 < self.stop_coverage <= 1:
            raise InvalidParameter("stop_coverage must be in (0, 1]")
        if self.union_trials < 1:
            raise InvalidParameter("union_trials must be >= 1")
        if self.union_trials > 1:
            if self.repetitions % self.union_trials:
                raise InvalidParameter("repetitions must be a multiple of union_trials")
            # overlapping trials would count a node once per trial
            if self.aggregate not in ("min", "max", "histogram"):
                raise InvalidParameter("union trials need a duplicate-insensitive aggregate (min, max, histogram)")
        for lo, hi in self.speeds:
            if lo < 0 or hi < lo:
                raise InvalidParameter(f"bad speed range {lo}:{hi}")
        for p in self.loss_probs:
            if not 0 <= p < 1:
                raise InvalidParameter(f"loss probability {p} outside [0, 1)")

    def with_seed_base(self, seed_base: int) -> "Scenario":
        return dataclasses.replace(self, seed_base=int(seed_base))


@dataclass(frozen=True)
class TrialSpec:
    index: int
    scenario: str
    variant: str
    n: int
    k: int
    density: float
    mobility: str
    v_low: float
    v_high: float
    loss_prob: float
    rep: int
    seed: int
    stop_coverage: float = 1.0
    aggregate: str = "count"
    range_R: float = 100.0
    leg_len: float = 100.0
    reliable: bool = False
    max_retries: int = 3
    timeline: bool = False

    def to_config(self) -> TrialConfig:
        world = derive_world(self.n, self.density, self.range_R, self.loss_prob)
        params = {"leg_len": self.leg_len} if self.mobility == "rw2d" else {}
        mob = make_mobility(self.mobility, self.v_low, self.v_high, **params)
        proto = ProtocolConfig(variant=self.variant, reliable=self.reliable, max_retries=self.max_retries)
        edges = tuple(range(0, 101, 10)) if self.aggregate == "histogram" else ()
        return TrialConfig(world=world, mobility=mob, protocol=proto, n_tokens=self.k,
                           aggregate=self.aggregate, bucket_edges=edges, seed=self.seed,
                           stop_coverage=self.stop_coverage)


def expand(s: Scenario) -> list[TrialSpec]:
    """Every trial of ``s`` in row-major grid order, repetitions innermost."""
    specs = []
    grid = itertools.product(s.variants, s.n_list, s.densities, s.mobility, s.speeds, s.loss_probs)
    i = 0
    for variant, n, d, mob, (lo, hi), loss in grid:
        ks = sorted({token_rule(s.token_rule, int(n), k) for k in s.tokens})
        if s.token_rule != "fixed":
            ks = ks[:1]
        for k in ks:
            for rep in range(s.repetitions):
                specs.append(TrialSpec(
                    index=i, scenario=s.name, variant=Variant(variant).value, n=int(n), k=k,
                    density=float(d), mobility=mob, v_low=float(lo), v_high=float(hi),
                    loss_prob=float(loss), rep=rep, seed=s.seed_base + i,
                    stop_coverage=s.stop_coverage, aggregate=s.aggregate, range_R=s.range_R,
                    leg_len=s.leg_len, reliable=s.reliable, max_retries=s.max_retries,
                    timeline=s.timeline))
                i += 1
    # validate the whole grid before any trial runs
    for sp in specs:
        sp.to_config()
    return specs


TRIAL_COLUMNS = (
    "index", "scenario", "variant", "n", "k", "density", "mobility", "v_low", "v_high",
    "loss_prob", "rep", "seed", "seeded", "visited", "coverage", "cover_slots",
    "cover_transactions", "token_transfers", "transfer_msgs", "gradient_msgs", "announces",
    "requests", "acks", "retries", "checkpoints", "lost_tokens", "slots_run",
) + tuple(f"ratio_{int(round(f * 100))}" for f in RATIO_POINTS) + (
    "slot_60", "slot_90", "termination_detect_slot", "termination_violation", "termination_partitioned", "final_total",
    "lemma_transactions", "lemma_hits",
)
TIMELINE_COLUMNS = ("index", "slot", "visited", "transfers")
THEORY_COLUMNS = ("n", "d", "k", "local_transfers", "gradient_transfers", "gradient_bound",
                  "gradient_messages")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(round(v, 10))
    return str(v)


def _total_value(a) -> object:
    if a is None:
        return None
    if isinstance(a, agg.Count):
        return a.n
    if isinstance(a, agg.Sum):
        return a.total
    if isinstance(a, agg.Average):
        return a.mean
    if isinstance(a, agg.Histogram):
        return "|".join(str(c) for c in a.counts)
    return a.v


def run_spec(spec: TrialSpec) -> dict:
    """Run one trial and flatten it into a result record."""
    m = run_trial(spec.to_config())
    row = {c: getattr(spec, c) for c in ("index", "scenario", "variant", "n", "k", "density",
                                         "mobility", "v_low", "v_high", "loss_prob", "rep", "seed")}
    row.update(seeded=m.seeded, visited=m.visited_count, coverage=m.coverage,
               cover_slots=m.cover_slots, cover_transactions=m.cover_transactions,
               token_transfers=m.token_transfers, transfer_msgs=m.transfer_msgs,
               gradient_msgs=m.gradient_msgs, announces=m.announces, requests=m.requests,
               acks=m.acks, retries=m.retries, checkpoints=m.checkpoints,
               lost_tokens=m.lost_tokens, slots_run=m.slots_run)
    for f in RATIO_POINTS:
        try:
            row[f"ratio_{int(round(f * 100))}"] = exploration_ratio(m, f)
        except MetricsError:
            row[f"ratio_{int(round(f * 100))}"] = None
    row["slot_60"] = m.cover_slot_at(0.6)
    row["slot_90"] = m.cover_slot_at(0.9)
    row["termination_detect_slot"] = m.termination_detect_slot
    row["termination_violation"] = m.termination_violation
    row["termination_partitioned"] = m.termination_partitioned
    row["final_total"] = _total_value(m.final_total)
    below = [hit for frac, hit in zip(m.lemma_fraction, m.lemma_hit) if frac < 0.7]
    row["lemma_transactions"] = len(below)
    row["lemma_hits"] = int(sum(below))
    timeline = []
    if spec.timeline:
        transfers = dict(m.transfers_timeline)
        t_cum = 0
        slots = sorted({s for s, _ in m.coverage_timeline} | set(transfers))
        cov = dict(m.coverage_timeline)
        v = 0
        for s in slots:
            v = cov.get(s, v)
            t_cum = transfers.get(s, t_cum)
            timeline.append({"index": spec.index, "slot": s, "visited": v, "transfers": t_cum})
    return {"row": row, "timeline": timeline, "visited": sorted(m.visited_set)}


def run_specs(specs, workers: int = 1) -> list[dict]:
    """Run trials, sequentially or on a process pool; results come back in spec order."""
    specs = list(specs)
    if workers <= 1 or len(specs) <= 1:
        return [run_spec(s) for s in specs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_spec, specs, chunksize=1))


def theory_rows(s: Scenario) -> list[dict]:
    ks = sorted(set(s.tokens)) if s.token_rule == "fixed" else [1]
    rows = []
    for d in s.densities:
        for k in ks:
            rows.extend(analysis.cover_table([int(n) for n in s.n_list], float(d),
                                             lambda n, k=k: token_rule(s.token_rule, n, min(k, n))))
    return rows


def union_rows(s: Scenario, results) -> list[dict]:
    """Union coverage of each block of ``union_trials`` consecutive repetitions."""
    rows = []
    by_cell: dict = {}
    for res in results:
        r = res["row"]
        key = (r["variant"], r["n"], r["k"], r["density"], r["mobility"], r["v_low"], r["v_high"],
               r["loss_prob"])
        by_cell.setdefault(key, []).append(res)
    for key, group in by_cell.items():
        group.sort(key=lambda x: x["row"]["rep"])
        c = s.union_trials
        for g in range(len(group) // c):
            members = group[g * c:(g + 1) * c]
            seen = set()
            for res in members:
                seen.update(res["visited"])
            n = key[1]
            rows.append({"variant": key[0], "n": n, "k": key[2], "group": g,
                         "trials": c, "stop_coverage": s.stop_coverage,
                         "union_coverage": len(seen) / n,
                         "theory": analysis.union_coverage_theory(min(s.stop_coverage, 1 - 1e-12), c)})
    return rows


def write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def run_scenario(s: Scenario, out_dir, workers: int = 1) -> dict:
    """Run every trial of ``s`` and write trials/timeline/theory CSVs plus a manifest.

    ``CENSUS_SEED`` in the environment replaces the scenario's seed base.
    Returns the manifest dictionary.
    """
    from . import __version__

    env_seed = os.environ.get("CENSUS_SEED")
    if env_seed:
        s = s.with_seed_base(int(env_seed))
    specs = expand(s)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.strftime("%Y-%m-%dT%H:%M:%S")
    t0 = time.perf_counter()
    results = run_specs(specs, workers)
    files = {"trials": out / "trials.csv", "theory": out / "theory.csv"}
    write_csv(files["trials"], TRIAL_COLUMNS, [r["row"] for r in results])
    write_csv(files["theory"], THEORY_COLUMNS, theory_rows(s))
    if s.timeline:
        files["timeline"] = out / "timeline.csv"
        write_csv(files["timeline"], TIMELINE_COLUMNS, [t for r in results for t in r["timeline"]])
    if s.union_trials > 1:
        files["union"] = out / "union.csv"
        cols = ("variant", "n", "k", "group", "trials", "stop_coverage", "union_coverage", "theory")
        write_csv(files["union"], cols, union_rows(s, results))
    manifest = {
        "scenario": scenario_to_dict(s),
        "version": __version__,
        "csv_version": CSV_VERSION,
        "trial_columns": list(TRIAL_COLUMNS),
        "seeds": [sp.seed for sp in specs],
        "workers": workers,
        "started": started,
        "elapsed_s": round(time.perf_counter() - t0, 3),
        "files": {k: str(v.name) for k, v in files.items()},
        "sha256": {k: file_sha256(v) for k, v in files.items()},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    return manifest


# scenario (de)serialisation --------------------------------------------------

def scenario_to_dict(s: Scenario) -> dict:
    d = dataclasses.asdict(s)
    d["speeds"] = [list(p) for p in s.speeds]
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}


def scenario_from_dict(d: dict) -> Scenario:
    return Scenario(**{k: _coerce(k, v) for k, v in d.items()})


_FIELDS = {f.name: f for f in dataclasses.fields(Scenario)}


def _coerce(key: str, value):
    if key not in _FIELDS:
        raise InvalidParameter(f"unknown scenario key {key!r}")
    default = _FIELDS[key].default
    if isinstance(value, str):
        value = value.strip()
        if key == "speeds":
            return tuple(parse_speed(p) for p in _split(value))
        if isinstance(default, tuple):
            kind = type(default[0]) if default else str
            return tuple(kind(x) if kind is not str else x for x in _split(value))
        if isinstance(default, bool):
            if value.lower() not in ("1", "0", "true", "false", "yes", "no"):
                raise InvalidParameter(f"{key} expects a boolean, got {value!r}")
            return value.lower() in ("1", "true", "yes")
        return type(default)(value)
    if key == "speeds":
        return tuple(tuple(float(x) for x in p) for p in value)
    if isinstance(default, tuple):
        return tuple(value)
    return value


def _split(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def parse_speed(text: str) -> tuple[float, float]:
    """``"2:4"`` -> ``(2.0, 4.0)``; a single number means a constant speed."""
    parts = str(text).split(":")
    try:
        if len(parts) == 1:
            v = float(parts[0])
            return (v, v)
        if len(parts) == 2:
            return (float(parts[0]), float(parts[1]))
    except ValueError:
        pass
    raise InvalidParameter(f"speed range must look like LOW:HIGH, got {text!r}")


def load_scenario_file(path) -> Scenario:
    """Read a flat ``key = value`` scenario file (``#`` comments, comma-separated lists)."""
    text = Path(path).read_text(encoding="utf-8")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    cp.optionxform = str
    cp.read_string("[scenario]\n" + text)
    return scenario_from_dict(dict(cp["scenario"]))


SIZES = (125, 250, 500, 1000)


def _builtins() -> dict:
    mk = Scenario
    return {s.name: s for s in (
        mk(name="fig2a", variants=("pure", "local", "gradient"), n_list=(100, 200, 300, 400, 500)),
        mk(name="convergence", variants=("pure", "local", "gradient"), n_list=(500,),
           repetitions=1, timeline=True),
        mk(name="ratio_vs_coverage", variants=("local", "gradient"), n_list=SIZES, timeline=True),
        mk(name="overhead_vs_n", variants=("local", "gradient"), n_list=SIZES),
        mk(name="sqrtN", variants=("gradient", "local"), n_list=SIZES + (2000, 4000), token_rule="sqrt"),
        mk(name="logN", variants=("gradient", "local"), n_list=SIZES + (2000, 4000), token_rule="log2"),
        mk(name="tokens", variants=("gradient", "local"), n_list=(500,), tokens=(1, 5, 11, 22)),
        mk(name="density", variants=("local", "gradient"), n_list=SIZES, densities=(7.0, 10.0, 13.0)),
        mk(name="mobility", variants=("local", "gradient"), n_list=SIZES, mobility=("rw2d", "rwp", "gm")),
        mk(name="speed", variants=("local", "gradient"), n_list=SIZES,
           speeds=((2.0, 4.0), (5.0, 7.0), (8.0, 10.0), (11.0, 13.0), (14.0, 16.0))),
        mk(name="union", variants=("local",), n_list=SIZES, stop_coverage=0.6, repetitions=50,
           union_trials=5, aggregate="max"),
        mk(name="partial60", variants=("local",), n_list=SIZES, token_rule="sqrt", stop_coverage=0.6),
        mk(name="reliability", variants=("gradient",), n_list=(200,), loss_probs=(0.05, 0.2),
           reliable=True, repetitions=20),
    )}


BUILTINS = _builtins()


def builtin(name: str) -> Scenario:
    try:
        return BUILTINS[name]
    except KeyError:
        raise InvalidParameter(f"unknown scenario {name!r}; choose from {sorted(BUILTINS)}")
