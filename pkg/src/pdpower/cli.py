"""Command-line entry point: ``pdpower <subcommand> [flags]``.

Subcommands: train, eval, sweep, oracle, gradcheck, report. The default output
directory is ``$PDPOWER_OUT`` or ``./results``.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import gradcheck as gc
from .baselines import cmac_dual_oracle, cmac_short_term, grid_oracle, heuristics, maxmin_bisection, wmmse
from .distributed import DistributedPolicy, Topology, train_distributed
from .harness import (BUILTIN_CONFIGS, SUMMARY_COLUMNS, ExperimentConfig, ResultTable, default_out_dir, emit,
                      load_config, plan_jobs, run_experiment)
from .problems import make_problem, problem_from_description
from .trainer import CentralizedPolicy, TrainConfig, evaluate, evaluate_decisions, rng_streams, train

BASELINES = ("oracle", "short_term", "fixed", "wmmse", "grid", "maxmin_exact", "peak", "random")


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _bits(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 32:
        raise argparse.ArgumentTypeError("backhaul bits must be an unsigned 32-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pdpower", description="Primal-dual learned power control.")
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, problem=True):
        sp.add_argument("--config", help="built-in config name or YAML path")
        sp.add_argument("--seed", type=_seed, default=None)
        sp.add_argument("--out", type=Path, default=None, help="output directory")
        sp.add_argument("--scale", choices=("desk", "paper"), default=None)
        if problem:
            sp.add_argument("--problem", choices=("p3", "p4", "p5"), default=None)
            sp.add_argument("--n", type=int, default=None, help="number of nodes")
            sp.add_argument("--snr-db", type=float, default=None)
            sp.add_argument("--peak-ratio", type=float, default=1.0, help="P_P / P_A (p4, p5)")
            sp.add_argument("--backhaul-bits", type=_bits, default=None)
            sp.add_argument("--iterations", type=int, default=None)
            sp.add_argument("--test-size", type=int, default=10_000)

    sp = sub.add_parser("train", help="train one policy and save checkpoint, log and test metrics")
    common(sp)
    sp.add_argument("--method", choices=("centralized", "distributed"), default="centralized")

    sp = sub.add_parser("eval", help="evaluate a saved checkpoint on a fresh seeded test set")
    sp.add_argument("checkpoint", type=Path)
    sp.add_argument("--seed", type=_seed, default=0)
    sp.add_argument("--test-size", type=int, default=10_000)
    sp.add_argument("--stochastic", action="store_true", help="sample message bits instead of taking signs")

    sp = sub.add_parser("sweep", help="run a configured sweep and write CSV plus plotspecs")
    common(sp, problem=False)
    sp.add_argument("--workers", type=int, default=None)
    sp.add_argument("--iterations", type=int, default=None)
    sp.add_argument("--dry-run", action="store_true", help="print the resolved config and job count")

    sp = sub.add_parser("oracle", help="run a non-learned reference method on a seeded test set")
    common(sp)
    sp.add_argument("--method", choices=BASELINES, default=None)

    sp = sub.add_parser("gradcheck", help="finite-difference checks of every primitive and a full network")
    sp.add_argument("--cases", type=int, default=100)
    sp.add_argument("--seed", type=_seed, default=0)

    sp = sub.add_parser("report", help="print the seed-aggregated table of a sweep output directory")
    sp.add_argument("results", type=Path, nargs="?", default=None)
    return p


# ---------------------------------------------------------------- helpers

def _base_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    over = {}
    if getattr(args, "problem", None):
        over["problem"] = args.problem
        if args.n is None and args.problem != cfg.problem:
            over["n"] = 2 if args.problem == "p3" else 3
        if args.problem != cfg.problem:
            over["methods"] = []
    if getattr(args, "n", None):
        over["n"] = args.n
    if args.scale:
        over["scale"] = args.scale
    if getattr(args, "iterations", None) is not None:
        over["iterations"] = args.iterations
    return cfg.with_overrides(**over)


def _point(args, cfg: ExperimentConfig):
    snr = args.snr_db if args.snr_db is not None else cfg.snr_db[0]
    problem = make_problem(cfg.problem, cfg.n, snr, cfg.gamma, args.peak_ratio)
    seed = 0 if args.seed is None else args.seed
    test_a = problem.sample(args.test_size, np.random.default_rng(np.random.SeedSequence([seed, 7])))
    return snr, problem, test_a


def _metrics_json(m) -> dict:
    return {"metric": m.metric, "metric_ci": m.ci95, "constraint_means": m.constraint_means.tolist(),
            "bounds": m.bounds.tolist(), "feasible": m.feasible.tolist()}


def _print(obj) -> None:
    print(json.dumps(obj, indent=2))


# ---------------------------------------------------------------- commands

def cmd_train(args) -> int:
    cfg = _base_config(args)
    snr, problem, test_a = _point(args, cfg)
    seed = cfg.seeds[0] if args.seed is None else args.seed
    tc = TrainConfig(**{**cfg.train.__dict__, "seed": seed})
    arch = cfg.arch.resolve(cfg.problem, cfg.n)
    out = args.out or default_out_dir() / f"{cfg.problem}_{args.method}_snr{snr:g}_seed{seed}"
    out.mkdir(parents=True, exist_ok=True)
    if args.method == "centralized":
        streams = rng_streams(seed)
        policy = CentralizedPolicy(problem, streams["init"], arch)
        res = train(problem, policy, tc, streams=streams, log_path=out / "convergence.csv",
                    progress=args.verbose)
    else:
        bits = cfg.backhaul_bits[0] if args.backhaul_bits is None else args.backhaul_bits
        res = train_distributed(problem, Topology.uniform(cfg.n, bits), tc, arch,
                                log_path=out / "convergence.csv", progress=args.verbose)
    res.policy.save(out / "checkpoint")
    m = evaluate(res.policy, problem, test_a)
    report = {"problem": problem.describe(), "method": args.method, "seed": seed,
              "multipliers": res.dual.lam.tolist(), "diverged": res.log.diverged,
              "skipped_steps": res.state.skipped, **_metrics_json(m)}
    (out / "metrics.json").write_text(json.dumps(report, indent=2))
    _print(report)
    return 0


def load_policy(directory: Path):
    meta = json.loads((directory / "policy.json").read_text())
    problem = problem_from_description(meta["problem"])
    if meta["kind"] == "centralized":
        return CentralizedPolicy.load(directory, problem), problem
    return DistributedPolicy.load(directory, problem), problem


def cmd_eval(args) -> int:
    directory = args.checkpoint
    if not (directory / "policy.json").exists() and (directory / "checkpoint" / "policy.json").exists():
        directory = directory / "checkpoint"
    policy, problem = load_policy(directory)
    test_a = problem.sample(args.test_size, np.random.default_rng(np.random.SeedSequence([args.seed, 7])))
    if args.stochastic and isinstance(policy, DistributedPolicy):
        x = policy.act(test_a, stochastic=True)
    else:
        x = policy.act(test_a)
    _print({"problem": problem.describe(), **_metrics_json(evaluate_decisions(problem, test_a, x))})
    return 0


def cmd_sweep(args) -> int:
    if not args.config:
        raise ValueError(f"sweep needs --config (built-ins: {', '.join(sorted(BUILTIN_CONFIGS))})")
    cfg = _base_config(args)
    over = {}
    if args.seed is not None:
        over["seeds"] = [args.seed]
    if args.workers:
        over["workers"] = args.workers
    cfg = cfg.with_overrides(**over)
    if args.dry_run:
        print(cfg.to_yaml(), end="")
        print(f"# {len(plan_jobs(cfg))} jobs")
        return 0
    out = args.out or default_out_dir() / cfg.name
    table = run_experiment(cfg, artifacts_dir=out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(cfg.to_yaml())
    for p in emit(table, out, name=cfg.name):
        print(p)
    failed = [r for r in table.rows if not r.ok]
    for r in failed:
        print(f"failed: {r.method} snr={r.snr_db} B={r.backhaul_bits} seed={r.seed}: {r.status}", file=sys.stderr)
    return 1 if failed else 0


def cmd_oracle(args) -> int:
    cfg = _base_config(args)
    snr, problem, test_a = _point(args, cfg)
    method = args.method or ("oracle" if cfg.problem == "p3" else "wmmse" if cfg.problem == "p4" else "maxmin_exact")
    extra = {}
    if method == "oracle":
        if cfg.problem != "p3":
            raise ValueError("the dual oracle is for p3")
        orc = cmac_dual_oracle(problem, np.random.default_rng(args.seed or 0), test_a=test_a)
        extra = {"multipliers": orc.multipliers.tolist(), "converged": orc.converged,
                 "iterations": orc.iterations, "solve_sample_violation": orc.max_violation}
        m = orc.test_metrics
    else:
        if method == "short_term":
            ch = problem.unpack(test_a)
            x = cmac_short_term(ch.h, ch.g, problem.power, problem.gamma)
        elif method == "fixed":
            x = heuristics("fixed_cmac", problem, test_a)
        elif method in ("peak", "random"):
            x = heuristics(method, problem, test_a, np.random.default_rng(args.seed or 0))
        elif method == "wmmse":
            x = wmmse(problem.channel_matrix(test_a), problem.peak_power)
        else:
            test_a = test_a[:100]
            Hs = problem.channel_matrix(test_a)
            if method == "grid":
                x = np.array([grid_oracle(H, problem.peak_power, 100, problem.objective)[0] for H in Hs])
            else:
                x = np.array([maxmin_bisection(H, problem.peak_power)[0] for H in Hs])
        m = evaluate_decisions(problem, test_a, x)
    _print({"problem": problem.describe(), "method": method, **extra, **_metrics_json(m)})
    return 0


def cmd_gradcheck(args) -> int:
    results = gc.run_all(args.cases, args.seed)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<34} cases={r.cases:<4} worst_rel_err={r.worst:.2e}")
    return 0 if all(r.passed for r in results) else 1


def cmd_report(args) -> int:
    directory = args.results or default_out_dir()
    path = directory / "results.csv" if directory.is_dir() else directory
    table = ResultTable.from_csv(path.read_text())
    rows = sorted(table.summary(), key=lambda r: (r["peak_ratio"], r["snr_db"], r["method"],
                                                   -1 if r["backhaul_bits"] is None else r["backhaul_bits"]))
    w = csv.writer(sys.stdout, delimiter="\t", lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for r in rows:
        w.writerow([("" if r[c] is None else f"{r[c]:.4f}" if isinstance(r[c], float) else r[c])
                    for c in SUMMARY_COLUMNS])
    return 0


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "sweep": cmd_sweep, "oracle": cmd_oracle,
            "gradcheck": cmd_gradcheck, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 and usage on bad flags
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValueError, FileNotFoundError, KeyError, TypeError) as exc:
        parser.print_usage(sys.stderr)
        print(f"pdpower {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
