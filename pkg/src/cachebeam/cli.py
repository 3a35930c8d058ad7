"""Command-line interface: cache training, single-scenario delivery,
Monte-Carlo sweeps, and the verification battery.

Exit codes: 0 success, 1 configuration/usage error, 2 solver failure,
3 verification failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from cachebeam import beamforming as bf
from cachebeam import caching, delivery, harness, model, verification

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_VERIFY = 3

_DELIVERY_SCHEMES = ("greedy", "exhaustive", "coordinated", "full-coop")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_CONFIG)


def _load_config(path: str | None) -> model.SystemConfig:
    if path is None:
        return model.desk_config()
    return model.load_config(path)


def _parse_values(raw: str) -> tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in raw.split(",") if tok)
    except ValueError as exc:
        raise model.ConfigError(f"bad sweep values {raw!r}: {exc}") from exc


def _parse_grid(raw: str) -> tuple[tuple[int, int], ...]:
    pairs = []
    for tok in raw.split(","):
        if not tok:
            continue
        try:
            nt, ne = tok.lower().split("x")
            pairs.append((int(nt), int(ne)))
        except ValueError as exc:
            raise model.ConfigError(
                f"bad antenna grid entry {tok!r}; expected NtxNe like 4x2") from exc
    return tuple(pairs)


def _cmd_train(args) -> int:
    cfg = _load_config(args.config)
    pop = model.zipf_popularity(cfg.num_files, cfg.zipf_exponent)
    try:
        cache, dropped = harness.train_proposed_cache(
            cfg, pop, args.scenarios, args.seed)
    except RuntimeError as exc:
        print(f"solver failure during training: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    caching.save_cache(cache, cfg, args.out)
    print(f"trained cache written to {args.out} "
          f"({args.scenarios - dropped}/{args.scenarios} scenarios used)")
    return EXIT_OK


def _cmd_deliver(args) -> int:
    cfg = _load_config(args.config)
    pop = model.zipf_popularity(cfg.num_files, cfg.zipf_exponent)
    scen = model.generate_scenario(cfg, pop, args.seed)
    cache = (caching.load_cache(args.cache, cfg) if args.cache
             else caching.uniform_caching(cfg))
    runners = {
        "greedy": lambda: delivery.greedy_delivery(scen, cache),
        "exhaustive": lambda: delivery.exhaustive_delivery(scen, cache),
        "coordinated": lambda: delivery.coordinated_baseline(scen, cache),
        "full-coop": lambda: delivery.full_coop_baseline(scen),
    }
    out = runners[args.scheme]()
    print(f"scheme: {args.scheme}")
    print(f"requests: {[(r.user, r.file) for r in scen.requests]}")
    print(f"backhaul Mbps: {np.round(scen.backhaul_bps / 1e6, 3).tolist()}")
    if out.outage:
        kind = "solver failure" if out.solver_failure else "infeasible"
        print(f"outcome: OUTAGE ({kind}) after {out.solve_count} solves")
        return EXIT_SOLVER if out.solver_failure else EXIT_OK
    dbm = model.watts_to_dbm(out.total_power_w) if out.total_power_w > 0 else -math.inf
    print(f"outcome: feasible, total power {out.total_power_w:.6g} W ({dbm:.2f} dBm)")
    print(f"cooperating BSs: {out.plan.cooperating_bs_count()} "
          f"iterations: {out.iterations} solves: {out.solve_count}")
    print("cooperation plan (rows = requested files, columns = BSs):")
    for f, row in zip(out.plan.files, out.plan.q.astype(int)):
        print(f"  file {f}: {row.tolist()}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    if args.values is not None:
        values = _parse_values(args.values)
    elif args.sweep == "cache_capacity":
        values = tuple(v * 1e6 for v in (1000.0, 2000.0, 3000.0, 4000.0))  # bytes
    else:
        raise model.ConfigError("--values is required for antenna sweeps")
    spec = harness.ExperimentSpec(
        config=cfg,
        sweep_name=args.sweep,
        sweep_values=values,
        schemes=tuple(tok for tok in args.schemes.split(",") if tok),
        num_eval_scenarios=args.scenarios,
        num_training_scenarios=args.training,
        seed=args.seed,
        antenna_grid=_parse_grid(args.antenna_grid) if args.antenna_grid else (),
    )
    try:
        records = harness.run_experiment(spec)
    except RuntimeError as exc:
        print(f"solver failure during sweep: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    os.makedirs(args.out, exist_ok=True)
    out_csv = os.path.join(args.out, "results.csv")
    harness.export_results(records, out_csv, spec)
    print(f"wrote {len(records)} rows to {out_csv}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    ok = verification.run_verification(args.seed)
    if not ok:
        print("verification FAILED", file=sys.stderr)
        return EXIT_VERIFY
    print("verification passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cachebeam",
                     description="cache-enabled secure cooperative delivery simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", parents=[], help="train a cache placement")
    p_train.add_argument("--config", default=None, help="config file (default: desk profile)")
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--scenarios", type=int, default=10,
                         help="number of training scenarios")
    p_train.add_argument("--out", required=True, help="cache state output path")

    p_del = sub.add_parser("deliver", help="run one delivery scenario")
    p_del.add_argument("--config", default=None)
    p_del.add_argument("--seed", type=int, default=0)
    p_del.add_argument("--scheme", choices=_DELIVERY_SCHEMES, required=True)
    p_del.add_argument("--cache", default=None,
                       help="cache state file (default: uniform caching)")

    p_sweep = sub.add_parser("sweep", help="Monte-Carlo sweep with CSV export")
    p_sweep.add_argument("--config", default=None)
    p_sweep.add_argument("--seed", type=int, default=0)
    p_sweep.add_argument("--scenarios", type=int, default=50,
                         help="evaluation scenarios per sweep point")
    p_sweep.add_argument("--training", type=int, default=10,
                         help="training scenarios per sweep point")
    p_sweep.add_argument("--schemes", default="proposed,full-coop")
    p_sweep.add_argument("--sweep", default="cache_capacity",
                         choices=harness.SWEEP_AXES)
    p_sweep.add_argument("--values", default=None,
                         help="comma-separated sweep values "
                              "(cache capacity in bytes; default 1000..4000 MB)")
    p_sweep.add_argument("--antenna-grid", default=None,
                         help="comma-separated NtxNe variants, e.g. 4x2,2x2")
    p_sweep.add_argument("--out", required=True, help="output directory")

    p_ver = sub.add_parser("verify", help="run the invariant battery")
    p_ver.add_argument("--seed", type=int, default=0)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers = {"train": _cmd_train, "deliver": _cmd_deliver,
                "sweep": _cmd_sweep, "verify": _cmd_verify}
    try:
        return handlers[args.command](args)
    except (model.ConfigError, delivery.InstanceTooLargeError,
            bf.InvalidProblemError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
