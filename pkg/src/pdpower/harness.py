"""Experiment orchestration: sweep configs, paired evaluation, CSV and plotspec output.

Every (sweep point, method, backhaul, seed) combination becomes one row of a
:class:`ResultTable`. All methods at a sweep point are scored on the same
seeded test set; its SHA-256 prefix is stored in each row so pairing can be
checked after the fact.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np
import yaml
from scipy import stats

from .baselines import (NaiveDistributedPolicy, cmac_dual_oracle, cmac_short_term, grid_oracle, heuristics,
                        maxmin_bisection, wmmse)
from .distributed import Topology, train_distributed
from .mlp import Architecture
from .problems import Problem, make_problem
from .trainer import CentralizedPolicy, EvalMetrics, TrainConfig, evaluate, evaluate_decisions, rng_streams, train

log = logging.getLogger(__name__)

OUT_ENV = "PDPOWER_OUT"


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, "results"))


METHODS = {
    "p3": ("centralized", "distributed", "oracle", "short_term", "fixed", "peak"),
    "p4": ("centralized", "distributed", "wmmse", "naive", "peak", "random", "grid"),
    "p5": ("centralized", "distributed", "naive", "peak", "random", "grid", "maxmin_exact"),
}
# stable codes so derived seeds do not depend on method list order
_METHOD_CODE = {m: i for i, m in enumerate(
    ("centralized", "distributed", "oracle", "short_term", "fixed", "peak", "wmmse", "naive",
     "random", "grid", "maxmin_exact"))}


# ---------------------------------------------------------------- config

@dataclass
class ArchOverrides:
    centralized: list | None = None
    optimizer: list | None = None
    quantizer: list | None = None
    batch_norm: bool | None = None
    input_transform: str | None = None

    def resolve(self, problem_id: str, n: int) -> Architecture:
        base = Architecture.default(problem_id, n)
        kw = {k: (tuple(v) if isinstance(v, list) else v)
              for k, v in dataclasses.asdict(self).items() if v is not None}
        return dataclasses.replace(base, **kw)


@dataclass
class ExperimentConfig:
    """One sweep. Field names double as the YAML schema (``train`` and ``arch`` are nested)."""

    name: str = "experiment"
    problem: str = "p3"
    n: int = 2
    gamma: float = 1.0
    snr_db: list = field(default_factory=lambda: [0.0, 5.0, 10.0])
    backhaul_bits: list = field(default_factory=lambda: [0, 1, 2, 3])
    peak_ratio: list = field(default_factory=lambda: [1.0])
    methods: list = field(default_factory=lambda: ["centralized", "oracle"])
    seeds: list = field(default_factory=lambda: [0])
    scale: str = "desk"
    test_size: int = 10_000
    test_seed: int = 2024
    grid_samples: int = 100
    grid_steps: int = 100
    feasibility_tol: float = 0.02
    stochastic_inference: bool = True
    workers: int = 1
    train: TrainConfig = field(default_factory=TrainConfig)
    arch: ArchOverrides = field(default_factory=ArchOverrides)

    def __post_init__(self):
        self.problem = self.problem.lower()
        if self.problem not in METHODS:
            raise ValueError(f"unknown problem {self.problem!r}")
        bad = [m for m in self.methods if m not in METHODS[self.problem]]
        if bad:
            raise ValueError(f"methods {bad} not available for {self.problem}; choose from {METHODS[self.problem]}")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if any(b < 0 or int(b) != b for b in self.backhaul_bits):
            raise ValueError("backhaul_bits must be nonnegative integers")
        if self.problem == "p3" and any(r != 1.0 for r in self.peak_ratio):
            raise ValueError("peak_ratio only applies to p4/p5")
        if any(r < 1.0 for r in self.peak_ratio):
            raise ValueError("peak_ratio must be >= 1")
        if self.scale not in ("desk", "paper"):
            raise ValueError("scale must be desk or paper")
        if self.test_size < 1 or self.n < 1:
            raise ValueError("test_size and n must be positive")
        if "grid" in self.methods and self.n > 3:
            raise ValueError("grid oracle supports n <= 3")
        if isinstance(self.train, dict):
            self.train = TrainConfig(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in self.train.items()})
        if isinstance(self.arch, dict):
            self.arch = ArchOverrides(**self.arch)
        if self.scale == "paper":
            self.train = TrainConfig.paper(seed=self.train.seed, checkpoint_every=self.train.checkpoint_every)

    # (de)serialisation -----------------------------------------------------
    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["train"]["lr_decay_at"] = list(d["train"]["lr_decay_at"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def from_yaml(cls, text: str) -> "ExperimentConfig":
        d = yaml.safe_load(text)
        if not isinstance(d, dict):
            raise ValueError("config must be a mapping")
        return cls.from_dict(d)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        d = self.to_dict()
        for k, v in kw.items():
            if v is None:
                continue
            if k in ("iterations", "batch_size", "lr", "lr_dual", "val_size", "checkpoint_every"):
                d["train"][k] = v
            else:
                d[k] = v
        return self.from_dict(d)

    def build_problem(self, snr_db: float, peak_ratio: float) -> Problem:
        return make_problem(self.problem, self.n, snr_db, self.gamma, peak_ratio)


def load_config(name_or_path: str) -> ExperimentConfig:
    """Built-in config name (see :data:`BUILTIN_CONFIGS`) or a YAML file path."""
    if name_or_path in BUILTIN_CONFIGS:
        return ExperimentConfig.from_dict(json.loads(json.dumps(BUILTIN_CONFIGS[name_or_path])))
    path = Path(name_or_path)
    if not path.exists():
        raise FileNotFoundError(f"no built-in config or file named {name_or_path!r}; "
                                f"built-ins: {sorted(BUILTIN_CONFIGS)}")
    return ExperimentConfig.from_yaml(path.read_text())


# ---------------------------------------------------------------- results

COLUMNS = ("problem", "n", "method", "snr_db", "peak_ratio", "backhaul_bits", "seed", "metric",
           "metric_ci", "feasible", "max_rel_violation", "constraint_means", "bounds", "multipliers",
           "test_hash", "status")


@dataclass
class ResultRow:
    problem: str
    n: int
    method: str
    snr_db: float
    peak_ratio: float
    backhaul_bits: int | None
    seed: int | None
    metric: float
    metric_ci: float
    feasible: bool
    max_rel_violation: float
    constraint_means: tuple
    bounds: tuple
    multipliers: tuple
    test_hash: str
    status: str = "ok"

    def __eq__(self, other):
        if not isinstance(other, ResultRow):
            return NotImplemented
        for name in COLUMNS:
            a, b = getattr(self, name), getattr(other, name)
            if isinstance(a, float) and isinstance(b, float) and math.isnan(a) and math.isnan(b):
                continue
            if a != b:
                return False
        return True

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ";".join(repr(float(x)) for x in v)
    return str(v)


_PARSE = {
    "n": int, "snr_db": float, "peak_ratio": float, "metric": float, "metric_ci": float,
    "max_rel_violation": float,
    "backhaul_bits": lambda s: None if s == "" else int(s),
    "seed": lambda s: None if s == "" else int(s),
    "feasible": lambda s: s == "true",
    "constraint_means": lambda s: tuple(float(x) for x in s.split(";")) if s else (),
    "bounds": lambda s: tuple(float(x) for x in s.split(";")) if s else (),
    "multipliers": lambda s: tuple(float(x) for x in s.split(";")) if s else (),
}


@dataclass
class ResultTable:
    rows: list = field(default_factory=list)
    # trained policies keyed by (method, snr_db, peak_ratio, backhaul_bits, seed); not serialised
    policies: dict = field(default_factory=dict, repr=False, compare=False)
    logs: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self):
        return len(self.rows)

    def select(self, **where) -> list[ResultRow]:
        return [r for r in self.rows if all(getattr(r, k) == v for k, v in where.items())]

    def metric(self, **where) -> float:
        """Mean metric over the matching rows (typically over seeds)."""
        rows = self.select(**where)
        if not rows:
            raise KeyError(f"no rows match {where}")
        return float(np.mean([r.metric for r in rows]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(getattr(r, c)) for c in COLUMNS])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ResultTable":
        reader = csv.reader(io.StringIO(text))
        header = tuple(next(reader))
        if header != COLUMNS:
            raise ValueError(f"unexpected columns {header}")
        rows = []
        for rec in reader:
            kw = {c: _PARSE.get(c, str)(v) for c, v in zip(COLUMNS, rec)}
            rows.append(ResultRow(**kw))
        return cls(rows)

    def summary(self) -> list[dict]:
        """Seed-aggregated rows: mean and 95% t-interval across seeds.

        With a single seed the interval falls back to the test-sample CI.
        """
        groups: dict[tuple, list[ResultRow]] = {}
        for r in self.rows:
            if r.ok:
                groups.setdefault((r.problem, r.n, r.method, r.snr_db, r.peak_ratio, r.backhaul_bits), []).append(r)
        out = []
        for key, rows in groups.items():
            vals = np.array([r.metric for r in rows])
            if len(vals) > 1:
                ci = float(stats.t.ppf(0.975, len(vals) - 1) * vals.std(ddof=1) / math.sqrt(len(vals)))
            else:
                ci = rows[0].metric_ci
            out.append(dict(zip(("problem", "n", "method", "snr_db", "peak_ratio", "backhaul_bits"), key),
                            seeds=len(vals), metric_mean=float(vals.mean()), metric_ci=ci,
                            feasible_all=all(r.feasible for r in rows)))
        return out


SUMMARY_COLUMNS = ("problem", "n", "method", "snr_db", "peak_ratio", "backhaul_bits", "seeds",
                   "metric_mean", "metric_ci", "feasible_all")


# ---------------------------------------------------------------- running

def batch_hash(a: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(a, dtype=np.float64).tobytes()).hexdigest()[:16]


def _point_codes(snr_db: float, peak_ratio: float) -> list[int]:
    return [int(round((snr_db + 1000.0) * 1000)), int(round(peak_ratio * 1000))]


def paired_test_set(config: ExperimentConfig, problem: Problem, snr_db: float, peak_ratio: float) -> np.ndarray:
    ss = np.random.SeedSequence([config.test_seed, *_point_codes(snr_db, peak_ratio)])
    return problem.sample(config.test_size, np.random.default_rng(ss))


def derived_seed(seed: int, snr_db: float, peak_ratio: float, method: str, bits: int | None) -> int:
    ss = np.random.SeedSequence([seed, *_point_codes(snr_db, peak_ratio), _METHOD_CODE[method],
                                 0 if bits is None else bits + 1])
    return int(ss.generate_state(1, np.uint32)[0])


@dataclass
class Job:
    snr_db: float
    peak_ratio: float
    method: str
    bits: int | None = None
    seed: int | None = None
    also_naive: bool = False


def plan_jobs(config: ExperimentConfig) -> list[Job]:
    jobs = []
    for ratio in config.peak_ratio:
        for snr in config.snr_db:
            for m in config.methods:
                if m == "centralized" or (m == "naive" and "centralized" not in config.methods):
                    for s in config.seeds:
                        jobs.append(Job(snr, ratio, "centralized", seed=s, also_naive="naive" in config.methods))
                elif m == "distributed":
                    for b in config.backhaul_bits:
                        for s in config.seeds:
                            jobs.append(Job(snr, ratio, m, bits=int(b), seed=s))
                elif m == "naive":
                    continue  # evaluated inside the centralized job
                elif m == "random":
                    for s in config.seeds:
                        jobs.append(Job(snr, ratio, m, seed=s))
                else:
                    jobs.append(Job(snr, ratio, m))
    return jobs


def _row(config, problem, job: Job, method: str, m: EvalMetrics, test_hash: str,
         multipliers=(), bits=None) -> ResultRow:
    rel = (m.constraint_means - m.bounds) / np.abs(m.bounds)
    return ResultRow(
        problem=config.problem, n=config.n, method=method, snr_db=float(job.snr_db),
        peak_ratio=float(job.peak_ratio), backhaul_bits=bits, seed=job.seed,
        metric=m.metric, metric_ci=m.ci95,
        feasible=bool(np.all(m.constraint_means <= m.bounds * (1 + config.feasibility_tol))),
        max_rel_violation=float(rel.max()), constraint_means=tuple(float(x) for x in m.constraint_means),
        bounds=tuple(float(x) for x in m.bounds), multipliers=tuple(float(x) for x in multipliers),
        test_hash=test_hash)


def _error_row(config, job: Job, method: str, exc: BaseException) -> ResultRow:
    nan = float("nan")
    return ResultRow(config.problem, config.n, method, float(job.snr_db), float(job.peak_ratio), job.bits,
                     job.seed, nan, nan, False, nan, (), (), (), "", f"error: {type(exc).__name__}: {exc}")


def run_job(config: ExperimentConfig, job: Job) -> tuple[list[ResultRow], dict, dict]:
    """Rows, trained policies and convergence logs for one job. Failures become error rows."""
    problem = config.build_problem(job.snr_db, job.peak_ratio)
    test_a = paired_test_set(config, problem, job.snr_db, job.peak_ratio)
    h = batch_hash(test_a)
    rows, policies, logs = [], {}, {}
    key = (job.method, job.snr_db, job.peak_ratio, job.bits, job.seed)
    try:
        rows, policies, logs = _run(config, job, problem, test_a, h, key)
    except Exception as exc:  # recorded per row; the sweep continues
        log.exception("job %s failed", key)
        rows = [_error_row(config, job, job.method, exc)]
    # the test set must come out of every method untouched
    assert batch_hash(test_a) == h, "test set mutated during evaluation"
    return rows, policies, logs


def _run(config, job, problem, test_a, h, key):
    rows, policies, logs = [], {}, {}
    arch = config.arch.resolve(config.problem, config.n)
    if job.method == "centralized":
        tc = dataclasses.replace(config.train, seed=derived_seed(job.seed, job.snr_db, job.peak_ratio, "centralized", None))
        streams = rng_streams(tc.seed)
        policy = CentralizedPolicy(problem, streams["init"], arch)
        res = train(problem, policy, tc, streams=streams)
        policies[key], logs[key] = policy, res.log
        if "centralized" in config.methods:
            rows.append(_row(config, problem, job, "centralized", evaluate(policy, problem, test_a), h, res.dual.lam))
        if job.also_naive:
            naive = NaiveDistributedPolicy(policy, problem)
            rows.append(_row(config, problem, job, "naive",
                             evaluate_decisions(problem, test_a, naive.act(test_a)), h, res.dual.lam))
    elif job.method == "distributed":
        tc = dataclasses.replace(config.train, seed=derived_seed(job.seed, job.snr_db, job.peak_ratio, "distributed", job.bits))
        res = train_distributed(problem, Topology.uniform(config.n, job.bits), tc, arch)
        policy = res.policy
        policies[key], logs[key] = policy, res.log
        rows.append(_row(config, problem, job, "distributed", evaluate(policy, problem, test_a), h,
                         res.dual.lam, job.bits))
        if config.stochastic_inference and job.bits > 0:
            policy.reseed_noise(np.random.default_rng(np.random.SeedSequence([config.test_seed, tc.seed])))
            m = evaluate_decisions(problem, test_a, policy.act(test_a, stochastic=True))
            rows.append(_row(config, problem, job, "distributed_stoch", m, h, res.dual.lam, job.bits))
    elif job.method == "oracle":
        rng = np.random.default_rng(derived_seed(0, job.snr_db, job.peak_ratio, "oracle", None))
        orc = cmac_dual_oracle(problem, rng, test_a=test_a)
        if not orc.converged:
            log.warning("oracle at %s dB stopped at KKT residual %.2e", job.snr_db, orc.history[-1][3])
        rows.append(_row(config, problem, job, "oracle", orc.test_metrics, h, orc.multipliers))
        policies[key] = orc
    elif job.method == "short_term":
        ch = problem.unpack(test_a)
        x = cmac_short_term(ch.h, ch.g, problem.power, problem.gamma)
        rows.append(_row(config, problem, job, "short_term", evaluate_decisions(problem, test_a, x), h))
    elif job.method == "fixed":
        x = heuristics("fixed_cmac", problem, test_a)
        rows.append(_row(config, problem, job, "fixed", evaluate_decisions(problem, test_a, x), h))
    elif job.method in ("peak", "random"):
        rng = None
        if job.method == "random":
            rng = np.random.default_rng(derived_seed(job.seed, job.snr_db, job.peak_ratio, "random", None))
        x = heuristics(job.method, problem, test_a, rng)
        rows.append(_row(config, problem, job, job.method, evaluate_decisions(problem, test_a, x), h))
    elif job.method == "wmmse":
        # sum-rate WMMSE honours only the peak budget; on average-constrained
        # points it is still reported, with its feasibility flag
        x = wmmse(problem.channel_matrix(test_a), problem.peak_power, p_init=problem.avg_power)
        rows.append(_row(config, problem, job, "wmmse", evaluate_decisions(problem, test_a, x), h))
    elif job.method in ("grid", "maxmin_exact"):
        sub = test_a[:config.grid_samples]
        Hs = problem.channel_matrix(sub)
        if job.method == "grid":
            x = np.array([grid_oracle(H, problem.peak_power, config.grid_steps, problem.objective)[0] for H in Hs])
        else:
            x = np.array([maxmin_bisection(H, problem.peak_power)[0] for H in Hs])
        rows.append(_row(config, problem, job, job.method, evaluate_decisions(problem, sub, x),
                         batch_hash(sub)))
    else:
        raise ValueError(f"unknown method {job.method!r}")
    return rows, policies, logs


def run_experiment(config: ExperimentConfig, artifacts_dir: str | Path | None = None) -> ResultTable:
    """Run every job of ``config``; rows come out in plan order whatever the worker count."""
    jobs = plan_jobs(config)
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            results = list(pool.map(run_job, [config] * len(jobs), jobs))
    else:
        results = [run_job(config, j) for j in jobs]
    table = ResultTable()
    for rows, pols, logs in results:
        table.rows.extend(rows)
        table.policies.update(pols)
        table.logs.update(logs)
    _check_pairing(table)
    if artifacts_dir is not None:
        save_artifacts(table, artifacts_dir)
    return table


def _check_pairing(table: ResultTable) -> None:
    by_point: dict[tuple, set] = {}
    for r in table.rows:
        if r.ok and r.method not in ("grid", "maxmin_exact"):
            by_point.setdefault((r.snr_db, r.peak_ratio), set()).add(r.test_hash)
    for point, hashes in by_point.items():
        if len(hashes) != 1:
            raise AssertionError(f"methods at sweep point {point} saw different test sets")


def _key_name(key) -> str:
    method, snr, ratio, bits, seed = key
    parts = [method, f"snr{snr:g}", f"ratio{ratio:g}"]
    if bits is not None:
        parts.append(f"B{bits}")
    if seed is not None:
        parts.append(f"seed{seed}")
    return "_".join(parts)


def save_artifacts(table: ResultTable, directory: str | Path) -> None:
    directory = Path(directory)
    for key, clog in table.logs.items():
        (directory / "logs").mkdir(parents=True, exist_ok=True)
        clog.to_csv(directory / "logs" / f"{_key_name(key)}.csv")
    for key, pol in table.policies.items():
        if hasattr(pol, "save"):
            pol.save(directory / "checkpoints" / _key_name(key))


# ---------------------------------------------------------------- emission

METRIC_LABEL = {"p3": "average sum capacity (nats)", "p4": "average sum rate (nats)",
                "p5": "average minimum rate (nats)"}


def _series(rows: Iterable[dict]) -> list[dict]:
    seen = {}
    for r in rows:
        label = r["method"] if r["backhaul_bits"] is None else f"{r['method']} B={r['backhaul_bits']}"
        where = {"method": r["method"], "backhaul_bits": "" if r["backhaul_bits"] is None else str(r["backhaul_bits"])}
        seen.setdefault(label, where)
    return [{"label": k, "where": v} for k, v in seen.items()]


def plotspecs(table: ResultTable, name: str) -> dict[str, dict]:
    """Line-chart descriptions over ``summary.csv``: one per figure analog."""
    summary = [r for r in table.summary() if r["method"] not in ("grid", "maxmin_exact")]
    if not summary:
        return {}
    problem = summary[0]["problem"]
    ylab = METRIC_LABEL[problem]
    specs = {}
    snrs = sorted({r["snr_db"] for r in summary})
    ratios = sorted({r["peak_ratio"] for r in summary})
    bits = sorted({r["backhaul_bits"] for r in summary if r["backhaul_bits"] is not None})
    for ratio in ratios:
        if len(snrs) > 1:
            suffix = "" if len(ratios) == 1 else f"_ratio{ratio:g}"
            specs[f"{name}{suffix}"] = {
                "version": 1, "kind": "line", "title": f"{problem} metric vs SNR (P_P/P_A={ratio:g})",
                "data": "summary.csv", "filter": {"peak_ratio": repr(float(ratio))},
                "x": {"column": "snr_db", "label": "SNR (dB)"},
                "y": {"column": "metric_mean", "error": "metric_ci", "label": ylab},
                "series": _series(r for r in summary if r["peak_ratio"] == ratio)}
    if len(bits) > 1:
        specs[f"{name}_vs_bits"] = {
            "version": 1, "kind": "line", "title": f"{problem} distributed metric vs backhaul bits",
            "data": "summary.csv", "filter": {"method": "distributed"},
            "x": {"column": "backhaul_bits", "label": "B (bits per link)"},
            "y": {"column": "metric_mean", "error": "metric_ci", "label": ylab},
            "series": [{"label": f"SNR {s:g} dB", "where": {"snr_db": repr(float(s))}} for s in snrs]}
    if len(ratios) > 1:
        specs[f"{name}_vs_ratio"] = {
            "version": 1, "kind": "line", "title": f"{problem} metric vs P_P/P_A at SNR {snrs[0]:g} dB",
            "data": "summary.csv", "filter": {"snr_db": repr(float(snrs[0]))},
            "x": {"column": "peak_ratio", "label": "P_P / P_A"},
            "y": {"column": "metric_mean", "error": "metric_ci", "label": ylab},
            "series": _series(r for r in summary if r["snr_db"] == snrs[0])}
    if not specs:  # single point: still one spec so every run is plottable
        specs[name] = {
            "version": 1, "kind": "bar", "title": f"{problem} metric by method",
            "data": "summary.csv", "filter": {},
            "x": {"column": "method", "label": "method"},
            "y": {"column": "metric_mean", "error": "metric_ci", "label": ylab},
            "series": [{"label": "all", "where": {}}]}
    return specs


def emit(table: ResultTable, out_dir: str | Path | None = None, name: str = "results",
         formats: Iterable[str] = ("csv", "plotspec")) -> list[Path]:
    if not table.rows:
        raise ValueError("cannot emit an empty table")
    out = Path(out_dir) if out_dir is not None else default_out_dir()
    out.mkdir(parents=True, exist_ok=True)
    written = []
    formats = set(formats)
    unknown = formats - {"csv", "plotspec"}
    if unknown:
        raise ValueError(f"unknown formats {sorted(unknown)}")
    if "csv" in formats:
        p = out / "results.csv"
        p.write_text(table.to_csv())
        written.append(p)
    if "plotspec" in formats:
        p = out / "summary.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SUMMARY_COLUMNS)
            for r in table.summary():
                w.writerow([_fmt(r[c]) for c in SUMMARY_COLUMNS])
        written.append(p)
        for spec_name, spec in plotspecs(table, name).items():
            p = out / f"{spec_name}.plot.json"
            p.write_text(json.dumps(spec, indent=2))
            written.append(p)
    return written


# ---------------------------------------------------------------- built-in configs

def _desk_train(**kw) -> dict:
    base = {"iterations": 50_000, "batch_size": 1000, "lr": 1e-3, "checkpoint_every": 500,
            "val_size": 100_000}
    base.update(kw)
    return base


BUILTIN_CONFIGS: dict[str, dict[str, Any]] = {
    "fig3-desk": {
        "name": "fig3-desk", "problem": "p3", "n": 2, "gamma": 1.0,
        "snr_db": [-2.0, 0.0, 2.0, 4.0, 6.0, 8.0, 10.0], "backhaul_bits": [0, 1, 2, 3],
        "methods": ["centralized", "distributed", "oracle", "short_term", "fixed"],
        "seeds": [0, 1, 2], "train": _desk_train()},
    "fig4-desk": {
        "name": "fig4-desk", "problem": "p3", "n": 2, "snr_db": [5.0], "backhaul_bits": [3],
        "methods": ["centralized", "distributed", "oracle"], "seeds": [0],
        "train": _desk_train(checkpoint_every=100)},
    "fig6-desk": {
        "name": "fig6-desk", "problem": "p4", "n": 3, "snr_db": [0.0, 5.0, 10.0, 15.0, 20.0],
        "backhaul_bits": [0, 1, 2],
        "methods": ["centralized", "distributed", "wmmse", "naive", "peak", "random"],
        "seeds": [0, 1, 2], "train": _desk_train()},
    "fig7-desk": {
        "name": "fig7-desk", "problem": "p4", "n": 3, "snr_db": [10.0], "peak_ratio": [1.0, 2.0, 4.0, 8.0],
        "backhaul_bits": [1], "methods": ["centralized", "distributed", "peak", "random"],
        "seeds": [0, 1, 2], "train": _desk_train()},
    "fig8-desk": {
        "name": "fig8-desk", "problem": "p5", "n": 3, "snr_db": [0.0, 5.0, 10.0, 15.0, 20.0],
        "backhaul_bits": [0, 1, 2],
        "methods": ["centralized", "distributed", "naive", "peak", "random", "maxmin_exact"],
        "seeds": [0, 1, 2], "train": _desk_train()},
    "smoke": {
        "name": "smoke", "problem": "p3", "n": 2, "snr_db": [0.0, 5.0], "backhaul_bits": [0, 1],
        "methods": ["centralized", "distributed", "oracle", "short_term", "fixed"], "seeds": [0, 1],
        "test_size": 2000, "train": _desk_train(iterations=200, batch_size=200, checkpoint_every=100,
                                                val_size=1000)},
}
