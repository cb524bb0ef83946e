"""Command-line entry point: ``census run|sweep|theory|report``."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
from pathlib import Path

from . import analysis
from .harness import (BUILTINS, Scenario, builtin, load_scenario_file, parse_speed, run_scenario,
                      token_rule, write_csv)
from .metrics import summarize_values
from .world import InvalidParameter

SWEEPABLE = {"n": "n_list", "tokens": "tokens", "density": "densities", "mobility": "mobility",
             "speed": "speeds", "loss": "loss_probs", "variant": "variants"}


def _add_trial_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, help="network size")
    p.add_argument("--variant", choices=("pure", "local", "gradient"))
    p.add_argument("--tokens", type=int, help="fixed token count")
    p.add_argument("--token-rule", choices=("fixed", "sqrt", "log2"))
    p.add_argument("--density", type=float)
    p.add_argument("--mobility", choices=("rw2d", "rwp", "gm"))
    p.add_argument("--speed", help="speed range LOW:HIGH in m/s")
    p.add_argument("--loss", type=float, help="per-receiver loss probability")
    p.add_argument("--reps", type=int, help="repetitions per grid cell")
    p.add_argument("--seed", type=int, help="seed base")
    p.add_argument("--stop", type=float, help="stop each trial at this coverage fraction")
    p.add_argument("--aggregate", choices=("count", "sum", "min", "max", "average", "histogram"))
    p.add_argument("--reliable", action="store_true", help="acknowledged transfers with checkpoints")
    p.add_argument("--timeline", action="store_true", help="also write timeline.csv")
    p.add_argument("--workers", type=int, default=1, help="parallel trial processes")
    p.add_argument("--out", default="results", help="output directory")


def _scenario_from_args(args, base: Scenario | None = None) -> Scenario:
    if args.scenario and args.config:
        raise InvalidParameter("give either --scenario or --config, not both")
    if args.scenario:
        s = builtin(args.scenario)
    elif args.config:
        s = load_scenario_file(args.config)
    else:
        s = base or Scenario(name="cli", repetitions=1)
    over = {}
    if args.n is not None:
        over["n_list"] = (args.n,)
    if args.variant:
        over["variants"] = (args.variant,)
    if args.tokens is not None:
        over["tokens"] = (args.tokens,)
        over.setdefault("token_rule", "fixed")
    if args.token_rule:
        over["token_rule"] = args.token_rule
    if args.density is not None:
        over["densities"] = (args.density,)
    if args.mobility:
        over["mobility"] = (args.mobility,)
    if args.speed:
        over["speeds"] = (parse_speed(args.speed),)
    if args.loss is not None:
        over["loss_probs"] = (args.loss,)
    if args.reps is not None:
        over["repetitions"] = args.reps
    if args.seed is not None:
        over["seed_base"] = args.seed
    if args.stop is not None:
        over["stop_coverage"] = args.stop
    if args.aggregate:
        over["aggregate"] = args.aggregate
    if args.reliable:
        over["reliable"] = True
    if args.timeline:
        over["timeline"] = True
    return dataclasses.replace(s, **over) if over else s


def _print_manifest(m: dict, out: str) -> None:
    print(f"{len(m['seeds'])} trials in {m['elapsed_s']} s -> {out}")
    for k, v in sorted(m["files"].items()):
        print(f"  {k}: {v}  sha256={m['sha256'][k][:16]}")


def cmd_run(args) -> int:
    s = _scenario_from_args(args)
    m = run_scenario(s, args.out, workers=args.workers)
    _print_manifest(m, args.out)
    return 0


def cmd_sweep(args) -> int:
    field = SWEEPABLE[args.param]
    base = _scenario_from_args(args)
    raw = [v.strip() for v in args.values.split(",") if v.strip()]
    if not raw:
        raise InvalidParameter("--values is empty")
    if field == "speeds":
        vals = tuple(parse_speed(v) for v in raw)
    elif field in ("n_list", "tokens"):
        vals = tuple(int(v) for v in raw)
    elif field in ("densities", "loss_probs"):
        vals = tuple(float(v) for v in raw)
    else:
        vals = tuple(raw)
    over = {field: vals, "name": f"{base.name}-sweep-{args.param}"}
    if field == "tokens":
        over["token_rule"] = "fixed"
    s = dataclasses.replace(base, **over)
    m = run_scenario(s, args.out, workers=args.workers)
    _print_manifest(m, args.out)
    return 0


def cmd_theory(args) -> int:
    if args.table == "lemma1":
        rows = analysis.lemma1_table(args.p, args.d, hops=tuple(range(1, args.max_hops + 1)))
        cols = ("p", "d", "h", "theta", "threshold", "coverage")
    elif args.table == "cover":
        n_list = [int(x) for x in args.n_list.split(",")]
        rows = analysis.cover_table(n_list, args.d, lambda n: token_rule(args.token_rule, n, args.tokens))
        cols = ("n", "d", "k", "local_transfers", "gradient_transfers", "gradient_bound",
                "gradient_messages")
    else:
        rows = [{"m": m, "c": c, "coverage": analysis.union_coverage_theory(m, c)}
                for m in (0.5, 0.6, 0.7, 0.8) for c in range(1, args.max_trials + 1)]
        cols = ("m", "c", "coverage")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        write_csv(Path(args.out), cols, rows)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([f"{r[c]:.6g}" if isinstance(r[c], float) else r[c] for c in cols])
    return 0


REPORT_METRICS = ("cover_transactions", "token_transfers", "ratio_70", "ratio_100", "gradient_msgs",
                  "transfer_msgs")
GROUP_KEYS = ("variant", "n", "k", "density", "mobility", "v_low", "v_high", "loss_prob")


def cmd_report(args) -> int:
    path = Path(args.results) / "trials.csv"
    if not path.exists():
        raise InvalidParameter(f"no trials.csv in {args.results}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    groups: dict = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in GROUP_KEYS), []).append(r)
    out_rows = []
    for key, members in groups.items():
        rec = dict(zip(GROUP_KEYS, key))
        rec["trials"] = len(members)
        rec["violations"] = sum(r["termination_violation"] == "1" for r in members)
        for metric in REPORT_METRICS:
            vals = [float(r[metric]) for r in members if r.get(metric, "") != ""]
            if vals:
                s = summarize_values(metric, vals)
                rec[f"{metric}_mean"] = s.mean
                rec[f"{metric}_stderr"] = s.stderr
        out_rows.append(rec)
    cols = GROUP_KEYS + ("trials", "violations") + tuple(
        f"{m}_{x}" for m in REPORT_METRICS for x in ("mean", "stderr"))
    write_csv(Path(args.results) / "summary.csv", cols, out_rows)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(cols)
    for r in out_rows:
        w.writerow([f"{r[c]:.4g}" if isinstance(r.get(c), float) else r.get(c, "") for c in cols])
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="census", description="Biased random-walk census simulator")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a builtin, config-file or flag-defined scenario")
    run.add_argument("--scenario", help=f"builtin name: {', '.join(sorted(BUILTINS))}")
    run.add_argument("--config", help="flat key = value scenario file")
    _add_trial_flags(run)
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="grid over one parameter")
    sw.add_argument("--param", required=True, choices=sorted(SWEEPABLE))
    sw.add_argument("--values", required=True, help="comma-separated values")
    sw.add_argument("--scenario")
    sw.add_argument("--config")
    _add_trial_flags(sw)
    sw.set_defaults(func=cmd_sweep)

    th = sub.add_parser("theory", help="print analysis tables")
    th.add_argument("--table", required=True, choices=("lemma1", "cover", "union"))
    th.add_argument("--p", type=float, default=0.95)
    th.add_argument("--d", type=float, default=10.0)
    th.add_argument("--max-hops", type=int, default=4)
    th.add_argument("--n-list", default="125,250,500,1000,2000,4000")
    th.add_argument("--token-rule", choices=("fixed", "sqrt", "log2"), default="fixed")
    th.add_argument("--tokens", type=int, default=1)
    th.add_argument("--max-trials", type=int, default=6)
    th.add_argument("--out", help="also write the table as CSV")
    th.set_defaults(func=cmd_theory)

    rp = sub.add_parser("report", help="summarise a results directory")
    rp.add_argument("results")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidParameter, analysis.TheoryError, ValueError, OSError) as exc:
        print(f"census: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
