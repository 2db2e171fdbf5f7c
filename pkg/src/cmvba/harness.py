"""Experiment runner, aggregation, and trace-level property checks.

A run is identified by (strategy, n, l, seed); a cell groups the seeds of one
(strategy, n, l).  ``run_experiment`` writes one CSV row per run and a JSON
summary with per-cell means, p95s, normalised complexity columns and the
good-set decay table.  ``check_scaling`` and ``check_lemmas`` read those
results back and either return a report or raise.
"""

from __future__ import annotations

import csv
import json
import math
import os
import statistics
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .adversary import get_strategy
from .crypto import SysConfig
from .errors import CmvbaError, ConfigError, LemmaViolation, ScalingViolation
from .simnet import Trace, run_simulation


@dataclass
class ExperimentSpec:
    ns: list
    strategies: list
    seeds: int = 10
    instances: int = 1
    payload_sizes: list = field(default_factory=lambda: [32])
    lam: int = 32
    master_seed: str = "00" * 32
    per_candidate: bool = False
    save_traces: bool = False
    workers: int = 1

    def __post_init__(self):
        if not self.ns or not self.strategies or not self.payload_sizes:
            raise ConfigError("ns, strategies and payload_sizes must be non-empty")
        if self.seeds < 1 or self.instances < 1 or self.workers < 1:
            raise ConfigError("seeds, instances and workers must be positive")
        for n in self.ns:
            for l in self.payload_sizes:
                self.config(n, l)
        for s in self.strategies:
            self.strategy(s)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown spec fields: {sorted(extra)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def config(self, n: int, l: int) -> SysConfig:
        return SysConfig.for_n(n, l=l, lam=self.lam, master_seed=bytes.fromhex(self.master_seed))

    @staticmethod
    def strategy(entry):
        if isinstance(entry, str):
            return get_strategy(entry)
        return get_strategy(entry["name"], **entry.get("params", {}))

    def jobs(self):
        for entry in self.strategies:
            for n in self.ns:
                for l in self.payload_sizes:
                    for seed in range(self.seeds):
                        yield entry, n, l, seed


def run_id(header: dict) -> str:
    return f"{header['strategy']}/n{header['n']}/l{header['l']}/seed{header['seed']}"


# trace analysis

@dataclass
class GoodSetReport:
    instance: int
    good: list
    order: list
    first_hit: int | None


@dataclass
class InstanceAnalysis:
    instance: int
    holders: int
    holders_cand: int | None
    R: int
    zero_decided: int
    zero_votes: int
    good: GoodSetReport
    good_decided_zero: list


@dataclass
class TraceAnalysis:
    run: str
    strategy: str
    n: int
    f: int
    l: int
    seed: int
    honest: int
    instances: list


def analyse_trace(trace: Trace) -> TraceAnalysis:
    """Extract holder counts, agreement-loop tallies and the good set per instance."""
    h = trace.header
    n, f = h["n"], h["f"]
    byz = set(h["byzantine"])
    per = defaultdict(lambda: {
        "complete_t": -1, "holds": [], "byz_gets": [], "R": 0, "zero": set(), "votes0": set(),
        "starts": [], "order": None, "decided": defaultdict(set),
    })
    cand_of_seq = {}
    for e in trace.events:
        typ = e["type"]
        k = e.get("instance")
        if typ == "send":
            if "cand" in e:
                cand_of_seq[e["seq"]] = e["cand"]
            if e["kind"] == "ABBA_VOTE" and e["round"] == 1 and e["bit"] == 0 and e["from"] not in byz:
                per[k]["votes0"].add((e["from"], e["cand"]))
            continue
        if typ == "deliver":
            if e["to"] in byz and e["from"] not in byz and e["kind"] in ("PROPOSE", "RECOMMENDATION"):
                per[k]["byz_gets"].append((e["t"], e["to"], cand_of_seq[e["seq"]]))
            continue
        if e["from"] in byz:
            continue
        rec = per[k]
        if typ == "hold":
            rec["holds"].append((e["t"], e["from"], e["cand"]))
        elif typ == "recs_complete":
            rec["complete_t"] = max(rec["complete_t"], e["t"])
        elif typ == "seq_abba_start":
            rec["starts"].append(e["info"])
        elif typ == "perm" and rec["order"] is None:
            rec["order"] = e["info"]
        elif typ == "abba_decide":
            rec["decided"][e["cand"]].add(e["bit"])
            if e["bit"] == 0:
                rec["zero"].add(e["cand"])
        elif typ == "decide":
            rec["R"] = max(rec["R"], e["iterations"])
    out = []
    for k in range(1, h["instances"] + 1):
        rec = per[k]
        cutoff = rec["complete_t"]
        holders = defaultdict(set)
        for t, who, cand in rec["holds"] + rec["byz_gets"]:
            if t <= cutoff:
                holders[cand].add(who)
        best = max(holders, key=lambda c: (len(holders[c]), -c), default=None)
        counts = defaultdict(int)
        for entries in rec["starts"]:
            for c in entries:
                counts[c] += 1
        good = sorted(c for c, v in counts.items() if v >= f + 1)
        order = rec["order"] or []
        hit = next((pos + 1 for pos, c in enumerate(order) if c in good), None)
        out.append(InstanceAnalysis(
            instance=k,
            holders=len(holders[best]) if best is not None else 0,
            holders_cand=best,
            R=rec["R"],
            zero_decided=len(rec["zero"]),
            zero_votes=len(rec["votes0"]),
            good=GoodSetReport(k, good, list(order), hit),
            good_decided_zero=sorted(c for c in good if 0 in rec["decided"].get(c, ())),
        ))
    return TraceAnalysis(run_id(h), h["strategy"], n, f, h["l"], h["seed"], n - len(byz), out)


def lemma_failures(a: TraceAnalysis) -> list[tuple[str, str]]:
    """Per-trace checks; returns (lemma, message) pairs."""
    n, f = a.n, a.f
    bad = []
    for ia in a.instances:
        k = ia.instance
        if ia.holders < 2 * f + 1:
            bad.append(("lemma1", f"instance {k}: best candidate held by {ia.holders} < 2f+1 parties"))
        if not 1 <= ia.R <= f + 1:
            bad.append(("lemma2", f"instance {k}: R={ia.R} outside [1, f+1]"))
        # tally over the iterations that decided 0
        r0 = ia.zero_decided
        if r0 * (f + 1) > f * (n - f):
            bad.append(("lemma2", f"instance {k}: {r0} zero iterations, {r0 * (f + 1)} > f(n-f)={f * (n - f)}"))
        if ia.zero_votes < r0 * (f + 1):
            bad.append(("lemma2", f"instance {k}: {ia.zero_votes} honest zero votes < {r0}(f+1)"))
        if ia.zero_votes > f * a.honest:
            bad.append(("lemma2", f"instance {k}: {ia.zero_votes} honest round-1 zero votes > f*{a.honest}"))
        if not ia.good.good:
            bad.append(("lemma3", f"instance {k}: good set is empty"))
        if ia.good_decided_zero:
            bad.append(("lemma3", f"instance {k}: good candidates {ia.good_decided_zero} decided 0"))
    return bad


def miss_table(first_hits: list, f: int) -> list[float]:
    """Pr[first t picks all miss the good set], t = 1..f+1."""
    hits = [p for p in first_hits if p is not None]
    if not hits:
        return []
    return [sum(p > t for p in hits) / len(hits) for t in range(1, f + 2)]


def fit_beta(table: list[float]) -> float | None:
    """Least-squares fit of miss(t) = beta^-t through the origin in log space."""
    pts = [(t, math.log(m)) for t, m in enumerate(table, 1) if m > 0]
    if not pts:
        return None
    slope = sum(t * y for t, y in pts) / sum(t * t for t, _ in pts)
    return math.exp(-slope)


@dataclass
class LemmaReport:
    runs: int
    failures: list
    cells: dict

    @property
    def passed(self) -> bool:
        return not self.failures


def check_lemmas(traces, strict: bool = True) -> LemmaReport:
    """Check holder counts, the agreement-loop bound and the good set on every
    trace, and aggregate mean R and the decay table per cell.

    ``traces`` may hold Trace objects or precomputed TraceAnalysis records.
    """
    failures = []
    cells = defaultdict(list)
    count = 0
    for item in traces:
        a = item if isinstance(item, TraceAnalysis) else analyse_trace(item)
        count += 1
        for lemma, msg in lemma_failures(a):
            if strict:
                raise LemmaViolation(lemma, f"{a.run}: {msg}", a.run)
            failures.append((lemma, a.run, msg))
        cells[(a.strategy, a.n, a.l)].append(a)
    summary = {}
    for key, group in sorted(cells.items()):
        f = group[0].f
        inst = [ia for a in group for ia in a.instances]
        hits = [ia.good.first_hit for ia in inst]
        table = miss_table(hits, f)
        known = [p for p in hits if p is not None]
        summary[key] = {
            "R_mean": statistics.fmean(ia.R for ia in inst),
            "first_hit_mean": statistics.fmean(known) if known else None,
            "good_size_mean": statistics.fmean(len(ia.good.good) for ia in inst),
            "miss_table": table,
            "beta": fit_beta(table),
        }
    return LemmaReport(count, failures, summary)


# running

CSV_FIELDS = (
    "strategy", "n", "f", "l", "seed", "instances", "messages", "bytes", "payload_bytes",
    "overhead_bytes", "m_over_n2", "b_over_ln2", "R_mean", "R_max", "coin_rounds", "depth",
    "good_size", "first_hit", "trace_hash",
)


def _label(entry) -> str:
    if isinstance(entry, str):
        return entry
    params = entry.get("params", {})
    suffix = ",".join(f"{k}={params[k]}" for k in sorted(params))
    return f"{entry['name']}[{suffix}]" if suffix else entry["name"]


def _one(job):
    spec, entry, n, l, seed, trace_dir = job
    config = spec.config(n, l)
    strategy = spec.strategy(entry)
    try:
        trace = run_simulation(config, strategy, seed, spec.instances, spec.per_candidate)
    except CmvbaError as exc:
        bad = getattr(exc, "trace", None)
        if bad is not None and trace_dir is not None:
            path = Path(trace_dir) / "failures" / f"{strategy.name}-n{n}-l{l}-s{seed}.jsonl"
            path.parent.mkdir(parents=True, exist_ok=True)
            bad.write(path)
            exc.path = str(path)
            exc.args = (f"{exc.args[0]} [trace: {path}]",) + exc.args[1:]
        raise
    if spec.save_traces and trace_dir is not None:
        path = Path(trace_dir) / "traces" / f"{strategy.name}-n{n}-l{l}-s{seed}.jsonl"
        path.parent.mkdir(parents=True, exist_ok=True)
        trace.write(path)
    m = trace.metrics
    a = analyse_trace(trace)
    lam = config.lam
    inst = a.instances
    row = {
        "strategy": _label(entry), "n": n, "f": config.f, "l": l, "seed": seed,
        "instances": spec.instances,
        "messages": m["messages_mean"], "bytes": m["bytes_mean"],
        "payload_bytes": m["payload_mean"], "overhead_bytes": m["overhead_mean"],
        "m_over_n2": m["messages_mean"] / n ** 2,
        "b_over_ln2": m["bytes_mean"] / ((l + lam) * n ** 2),
        "R_mean": m["R_mean"], "R_max": m["R_max"],
        "coin_rounds": statistics.fmean(m["coin_rounds"]), "depth": m["depth_mean"],
        "good_size": statistics.fmean(len(ia.good.good) for ia in inst),
        "first_hit": statistics.fmean(ia.good.first_hit or 0 for ia in inst),
        "trace_hash": trace.hash,
    }
    a.strategy = row["strategy"]
    return row, a


@dataclass
class ExperimentResult:
    rows: list
    analyses: list
    summary: dict


def _p95(values):
    values = list(values)
    if len(values) < 2:
        return values[0]
    return statistics.quantiles(values, n=20, method="inclusive")[-1]


def summarise(rows, analyses, spec: ExperimentSpec | None = None) -> dict:
    cells = defaultdict(list)
    for row in rows:
        cells[(row["strategy"], row["n"], row["l"])].append(row)
    lemma = check_lemmas(analyses, strict=False)
    out = []
    for key in sorted(cells):
        group = cells[key]
        strategy, n, l = key
        cell = {"strategy": strategy, "n": n, "f": group[0]["f"], "l": l, "runs": len(group)}
        for col in ("messages", "bytes", "payload_bytes", "overhead_bytes", "R_mean", "depth",
                    "coin_rounds"):
            vals = [r[col] for r in group]
            cell[f"{col}_mean"] = statistics.fmean(vals)
            cell[f"{col}_p95"] = _p95(vals)
        cell["R_max"] = max(r["R_max"] for r in group)
        cell["m_over_n2"] = cell["messages_mean"] / n ** 2
        lam = spec.lam if spec else 32
        cell["b_over_ln2"] = cell["bytes_mean"] / ((l + lam) * n ** 2)
        info = lemma.cells.get(key, {})
        cell.update({k: info.get(k) for k in ("first_hit_mean", "good_size_mean", "miss_table", "beta")})
        out.append(cell)
    return {
        "spec": asdict(spec) if spec else None,
        "cells": out,
        "lemma_failures": [list(x) for x in lemma.failures],
    }


def execute(spec: ExperimentSpec, trace_dir=None) -> ExperimentResult:
    jobs = [(spec, e, n, l, s, trace_dir) for e, n, l, s in spec.jobs()]
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as pool:
            results = list(pool.map(_one, jobs, chunksize=4))
    else:
        results = [_one(j) for j in jobs]
    results.sort(key=lambda ra: (ra[0]["strategy"], ra[0]["n"], ra[0]["l"], ra[0]["seed"]))
    rows = [r for r, _ in results]
    analyses = [a for _, a in results]
    return ExperimentResult(rows, analyses, summarise(rows, analyses, spec))


def run_experiment(spec: ExperimentSpec, out_dir) -> dict:
    """Run every cell and write ``runs.csv`` and ``summary.json`` under ``out_dir``.

    Traces of failing runs land in ``<trace root>/failures``; with
    ``save_traces`` every trace is kept under ``<trace root>/traces``.  The
    trace root is ``CMVBA_TRACE_DIR`` when set, else ``out_dir``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace_dir = Path(os.environ.get("CMVBA_TRACE_DIR") or out)
    result = execute(spec, trace_dir)
    csv_path = out / "runs.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(result.rows)
    summary_path = out / "summary.json"
    with open(summary_path, "w") as fh:
        json.dump(result.summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {"csv": str(csv_path), "summary": str(summary_path), "result": result}


# scaling

@dataclass
class ScalingRow:
    strategy: str
    l: int
    metric: str
    ratios: dict
    spread: float
    passed: bool


def check_scaling(summary: dict, exponent: float = 2, tolerance: float = 0.35,
                  lam: int | None = None, strict: bool = True) -> list[ScalingRow]:
    """Normalised complexity must stay within a (1 + tolerance) band across n.

    For every (strategy, l): m(n)/n^exponent and b(n)/((l+lam) n^exponent).
    Needs at least three distinct n per group.
    """
    if lam is None:
        lam = (summary.get("spec") or {}).get("lam", 32)
    groups = defaultdict(dict)
    for cell in summary["cells"]:
        groups[(cell["strategy"], cell["l"])][cell["n"]] = cell
    rows = []
    for (strategy, l), by_n in sorted(groups.items()):
        if len(by_n) < 3:
            raise ConfigError(f"{strategy} (l={l}): scaling needs >= 3 values of n, got {sorted(by_n)}")
        for metric in ("messages", "bytes"):
            ratios = {}
            for n, cell in sorted(by_n.items()):
                scale = n ** exponent * ((l + lam) if metric == "bytes" else 1)
                ratios[n] = cell[f"{metric}_mean"] / scale
            spread = max(ratios.values()) / min(ratios.values())
            rows.append(ScalingRow(strategy, l, metric, ratios, spread, spread <= 1 + tolerance))
    if strict:
        for row in rows:
            if not row.passed:
                raise ScalingViolation(
                    f"{row.strategy} l={row.l}: {row.metric} max/min ratio {row.spread:.3f} "
                    f"exceeds {1 + tolerance:.2f}", row.spread)
    return rows


def check_depth(summary: dict, strategy: str = "honest_random", bound: float = 1.5) -> tuple[float, bool]:
    """Mean causal depth at the largest n over the smallest n, for one strategy."""
    cells = [c for c in summary["cells"] if c["strategy"] == strategy]
    if len({c["n"] for c in cells}) < 2:
        raise ConfigError("depth check needs at least two values of n")
    lo = min(cells, key=lambda c: (c["n"], c["l"]))
    hi = max(cells, key=lambda c: (c["n"], -c["l"]))
    ratio = hi["depth_mean"] / lo["depth_mean"]
    return ratio, ratio <= bound
