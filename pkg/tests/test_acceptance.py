"""Acceptance criteria, one test each; every test prints a pass/fail line.

Run alone with ``pytest tests/test_acceptance.py -v``; the summary lines are
repeated at the end of the session under "acceptance criteria".
"""

import itertools
import random
import statistics

import pytest

from cmvba.adversary import builtin_strategies, get_strategy
from cmvba.crypto import PublicKit, SysConfig, ThresholdKit, coin_share, sig_share
from cmvba.errors import CmvbaError, InsufficientShares
from cmvba.explore import AbbaSystem, explore_abba, explore_pvcbc
from cmvba.harness import ExperimentSpec, analyse_trace, check_scaling, execute, lemma_failures, miss_table
from cmvba.simnet import Trace, derive_master, run_simulation
from cmvba.tags import cs_tag, vcbc_tag
from conftest import report

NS = (4, 7, 10)
SEEDS = 100
INSTANCES = 2


def independent_check(config, trace):
    """Agreement and external validity re-derived from the decisions."""
    kit = PublicKit(config.with_seed(derive_master(config, trace.header["seed"])))
    problems = []
    for k in range(1, trace.header["instances"] + 1):
        chosen = {(d[k].proposal.proposer, d[k].proposal.payload) for d in trace.decisions.values()}
        if len(chosen) != 1:
            problems.append(f"instance {k}: {len(chosen)} distinct decisions")
        for d in trace.decisions.values():
            tag = vcbc_tag(k, d[k].proposal.proposer)
            digest = kit.digest(tag, d[k].proposal.payload)
            if not kit.proof_verify(tag, digest, d[k].proof):
                problems.append(f"instance {k}: proof does not verify")
    return problems


@pytest.fixture(scope="module")
def grid():
    runs, errors = [], []
    for strategy in builtin_strategies():
        for n in NS:
            config = SysConfig.for_n(n)
            for seed in range(SEEDS):
                try:
                    trace = run_simulation(config, strategy, seed, INSTANCES)
                except CmvbaError as exc:
                    errors.append(f"{strategy.name}/n{n}/seed{seed}: {exc}")
                    continue
                errors.extend(f"{strategy.name}/n{n}/seed{seed}: {p}" for p in independent_check(config, trace))
                runs.append(analyse_trace(trace))
    return runs, errors


def test_c1_agreement_and_validity(grid):
    runs, errors = grid
    expected = len(builtin_strategies()) * len(NS) * SEEDS
    ok = not errors and len(runs) == expected
    report(1, ok, f"{len(runs)}/{expected} runs, {len(errors)} violations")
    assert ok, errors[:5]


def test_c2_proposal_reaches_quorum(grid):
    runs, _ = grid
    short = [(a.run, ia.instance, ia.holders) for a in runs for ia in a.instances if ia.holders < 2 * a.f + 1]
    total = sum(len(a.instances) for a in runs)
    report(2, not short and runs, f"{total - len(short)}/{total} instances have a proposal held by >= 2f+1")
    assert runs and not short, short[:5]


def test_c3_iteration_bound(grid):
    runs, _ = grid
    bad = [(a.run, msg) for a in runs for lemma, msg in lemma_failures(a) if lemma == "lemma2"]
    worst = max((ia.R, a.f) for a in runs for ia in a.instances if a.strategy == "worst_order")
    report(3, not bad, f"{len(bad)} violations of R <= f+1 or the zero-vote tally; worst_order max R {worst[0]} at f={worst[1]}")
    assert not bad, bad[:5]


def test_c4_constant_expectation(grid):
    runs, _ = grid
    honest = {}
    for a in runs:
        if a.strategy == "honest_random":
            honest.setdefault(a.n, []).extend(ia.R for ia in a.instances)
    honest_means = {n: statistics.fmean(v) for n, v in honest.items()}
    spec = ExperimentSpec(ns=[10], strategies=["worst_order"], seeds=500)
    res = execute(spec)
    inst = [ia for a in res.analyses for ia in a.instances]
    f = 3
    forced = sum(len(ia.good.good) == 1 for ia in inst) / len(inst)
    hits = [ia.good.first_hit for ia in inst]
    mean_hit = statistics.fmean(hits)
    # uniform-permutation oracle: analytic and sampled
    analytic = (f + 2) / 2
    rng = random.Random(2024)
    sampled = statistics.fmean(rng.sample(range(f + 1), f + 1).index(0) + 1 for _ in range(100_000))
    table = miss_table(hits, f)
    positive = [m for m in table if m > 0]
    monotone = all(a > b for a, b in zip(table, table[1:]) if a > 0) and positive == table[: len(positive)]
    ok = (all(m <= 1.2 for m in honest_means.values()) and abs(mean_hit - analytic) <= 0.3
          and abs(sampled - analytic) < 0.02 and monotone and forced == 1.0)
    report(4, ok, f"honest mean R {({n: round(m, 3) for n, m in honest_means.items()})}; worst_order f=3: "
                  f"|good|=1 in {forced:.0%}, mean first hit {mean_hit:.3f} vs {analytic}, "
                  f"miss table {[round(m, 3) for m in table]}")
    assert ok


def test_c5_message_scaling():
    names = [s.name for s in builtin_strategies()]
    spec = ExperimentSpec(ns=[4, 7, 10, 13], strategies=names, seeds=20, payload_sizes=[32, 1024])
    rows = check_scaling(execute(spec).summary, exponent=2, tolerance=0.35, strict=False)
    for r in rows:
        print(f"  {'ok  ' if r.passed else 'FAIL'} {r.strategy:28s} l={r.l:<5d} {r.metric:8s} "
              f"max/min {r.spread:.3f} " + " ".join(f"n={n}:{v:.2f}" for n, v in r.ratios.items()))
    failed = [f"{r.strategy} l={r.l} {r.metric} {r.spread:.3f}" for r in rows if not r.passed]
    report(5, not failed, f"{len(rows) - len(failed)}/{len(rows)} (strategy, l, metric) bands within 35%"
                          + (f"; over: {', '.join(failed)}" if failed else ""))
    assert not failed


ABBA_CONFIGS = [
    # (honest inputs, corrupted behaviour, delay bound)
    ({0: 1, 1: 1, 2: 0, 3: 0}, None, 3),
    ({0: 1, 1: 0, 2: 0}, "equivocate", 3),
    ({0: 1, 1: 1, 2: 0}, "equivocate", 3),
    ({0: 0, 1: 0, 2: 1}, "equivocate", 3),
    ({1: 1, 2: 0, 3: 0}, "equivocate", 3),
    ({0: 1, 1: 1, 2: 0}, "silent", 3),
    ({0: 1, 1: 0, 2: 0}, "silent", 3),
]


def test_c6_abba_suite():
    unanimity_fail = 0
    for bit in (0, 1):
        system = AbbaSystem(4, 1, {i: bit for i in range(4)})
        for seed in range(50):
            out = system.run_random(seed)
            unanimity_fail += set(out.decisions.values()) != {bit}
    schedules = violations = 0
    for inputs, mode, bound in ABBA_CONFIGS:
        for out in explore_abba(AbbaSystem(4, 1, inputs, mode), bound):
            schedules += 1
            violations += (not out.agreed) or None in out.decisions.values()
    split = AbbaSystem(4, 1, {0: 1, 1: 0, 2: 0}, "equivocate")
    within = 0
    for seed in range(500):
        out = split.run_random(seed)
        within += out.agreed and None not in out.decisions.values() and out.max_round <= 20
    ok = unanimity_fail == 0 and schedules >= 100_000 and violations == 0 and within / 500 >= 0.99
    report(6, ok, f"unanimity failures {unanimity_fail}/100; explored {schedules} schedules, "
                  f"{violations} violations; split inputs done within 20 rounds in {within}/500")
    assert ok


def test_c7_pvcbc_consistency():
    schedules, violations = explore_pvcbc()
    report(7, violations == 0, f"{schedules} equivocation schedules, {violations} with two proofs")
    assert violations == 0


def test_c8_crypto_subset_independence():
    kit = ThresholdKit(SysConfig(n=4, f=1, master_seed=bytes(range(32))))
    tag = cs_tag(1)
    coins = [coin_share(kit.party_keys(i).coin, tag) for i in range(4)]
    stag = vcbc_tag(1, 0)
    digest = kit.digest(stag, b"payload")
    sigs = [sig_share(kit.party_keys(i).sig, stag, digest) for i in range(4)]
    checked = 0
    ok = True
    for t in (2, 3):
        seeds, proofs = set(), set()
        for size in range(0, 5):
            for sub in itertools.combinations(range(4), size):
                checked += 1
                try:
                    seeds.add(kit.coin_toss(tag, [coins[i] for i in sub], t))
                    proofs.add(kit.sig_combine(stag, digest, [sigs[i] for i in sub], t))
                    ok &= size >= t
                except InsufficientShares:
                    ok &= size < t
        ok &= len(seeds) == 1 and len(proofs) == 1
    report(8, ok, f"{checked} subsets over thresholds 2 and 3; one coin value and one proof per threshold")
    assert ok


def test_c9_determinism(tmp_path):
    rng = random.Random(99)
    names = [s.name for s in builtin_strategies()]
    mismatches = []
    for i in range(50):
        n = rng.choice((4, 7, 10))
        name = rng.choice(names)
        seed = rng.randrange(10**6)
        trace = run_simulation(SysConfig.for_n(n), get_strategy(name), seed, instances=rng.choice((1, 2)))
        path = tmp_path / f"{i}.jsonl"
        trace.write(path)
        h = Trace.read(path).header
        config = SysConfig(n=h["n"], f=h["f"], l=h["l"], lam=h["lam"], master_seed=bytes.fromhex(h["master_seed"]))
        again = run_simulation(config, get_strategy(h["strategy"], **h["params"]), h["seed"], h["instances"])
        if again.hash != trace.hash or again.to_jsonl() != path.read_text():
            mismatches.append(f"{name}/n{n}/seed{seed}")
    report(9, not mismatches, f"{50 - len(mismatches)}/50 replays reproduce the trace hash")
    assert not mismatches
