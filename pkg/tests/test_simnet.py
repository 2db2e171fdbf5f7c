from collections import defaultdict

import pytest

from cmvba.adversary import Adversary, builtin_strategies, get_strategy, register, scenario4_targets
from cmvba.crypto import SysConfig
from cmvba.errors import CmvbaError, ConfigError
from cmvba.simnet import Trace, run_simulation

CFG4 = SysConfig.for_n(4)
CFG7 = SysConfig.for_n(7)


def test_honest_seed7_agreement():
    trace = run_simulation(CFG4, get_strategy("honest_random"), 7)
    values = {d[1].proposal for d in trace.decisions.values()}
    assert len(trace.decisions) == 4 and len(values) == 1


def test_same_inputs_same_hash():
    a = run_simulation(CFG7, get_strategy("equivocator"), 3, instances=2)
    b = run_simulation(CFG7, get_strategy("equivocator"), 3, instances=2)
    assert a.hash == b.hash
    c = run_simulation(CFG7, get_strategy("equivocator"), 4, instances=2)
    assert c.hash != a.hash


def test_every_envelope_delivered():
    trace = run_simulation(CFG7, get_strategy("scenario1_silent_committee"), 2)
    sent = {e["seq"] for e in trace.events if e["type"] == "send"}
    delivered = [e["seq"] for e in trace.events if e["type"] == "deliver"]
    assert sent == set(delivered) and len(delivered) == len(sent)


def test_trace_roundtrip(tmp_path):
    trace = run_simulation(CFG4, get_strategy("worst_order"), 1)
    path = tmp_path / "t.jsonl"
    trace.write(path)
    back = Trace.read(path)
    assert back.to_jsonl() == trace.to_jsonl()
    assert back.header["strategy"] == "worst_order"


@pytest.mark.parametrize("seed", range(10))
def test_scenario1_bounded_iterations(seed):
    trace = run_simulation(CFG7, get_strategy("scenario1_silent_committee"), seed)
    assert 1 <= trace.metrics["R_max"] <= CFG7.f + 1


def test_builtin_list():
    names = [s.name for s in builtin_strategies()]
    assert len(names) >= 7 and "worst_order" in names


def test_scenario4_params():
    trace = run_simulation(CFG7, get_strategy("scenario4_partial", t=1, m=5), 0)
    assert trace.metrics["R_max"] <= 3
    with pytest.raises(ConfigError):
        scenario4_targets(CFG7, 0, 5)
    with pytest.raises(ConfigError):
        scenario4_targets(CFG7, 1, 4)


@pytest.mark.parametrize("seed", range(15))
def test_equivocator_never_gets_two_proofs(seed):
    trace = run_simulation(CFG7, get_strategy("equivocator"), seed)
    digests = defaultdict(set)
    for inst, proposer, digest in trace.byzantine_proofs:
        digests[(inst, proposer)].add(digest)
    assert all(len(d) == 1 for d in digests.values())


def test_bad_delay_rejected():
    class Bad(Adversary):
        def delay(self, env, default):
            return 0

    register("test_bad_delay", lambda c, k, s: Bad(c, k, s))
    with pytest.raises(CmvbaError):
        run_simulation(CFG4, get_strategy("test_bad_delay"), 0)


def test_too_many_corrupted_rejected():
    def build(c, k, s):
        adv = Adversary(c, k, s)
        adv.byzantine = frozenset({0, 1})
        return adv

    register("test_two_bad", build)
    with pytest.raises(CmvbaError):
        run_simulation(CFG4, get_strategy("test_two_bad"), 0)


def test_unknown_strategy():
    with pytest.raises(ConfigError):
        get_strategy("nope")


@pytest.fixture(scope="module")
def traces():
    out = []
    for name in ("honest_random", "byzantine_silent", "equivocator", "worst_order",
                 "scenario1_silent_committee"):
        for seed in range(4):
            out.append(run_simulation(CFG7, get_strategy(name), seed, instances=2))
    return out


def _committees(trace):
    return {e["instance"]: set(e["info"]) for e in trace.events if e["type"] == "committee"}


def test_only_committee_members_get_proofs(traces):
    for t in traces:
        com = _committees(t)
        for e in t.events:
            if e["type"] == "proof":
                assert e["from"] in com[e["instance"]]


def test_proof_implies_availability(traces):
    # every proposer with a proof had its payload echoed by f+1 honest parties
    for t in traces:
        byz = set(t.header["byzantine"])
        echoed = defaultdict(set)
        for e in t.events:
            if e["type"] == "send" and e["kind"] == "VCBC_ECHO" and e["from"] not in byz:
                echoed[(e["instance"], e["to"])].add(e["from"])
            if e["type"] == "proof":
                assert len(echoed[(e["instance"], e["from"])]) >= t.header["f"] + 1


def test_one_recommendation_per_instance(traces):
    for t in traces:
        byz = set(t.header["byzantine"])
        counts = defaultdict(int)
        for e in t.events:
            if e["type"] == "send" and e["kind"] == "RECOMMENDATION" and e["from"] not in byz:
                counts[(e["from"], e["instance"])] += 1
        assert all(c == t.header["n"] for c in counts.values())


def test_order_fixed_after_enough_honest_shares(traces):
    for t in traces:
        n, f = t.header["n"], t.header["f"]
        byz = set(t.header["byzantine"])
        emitted = defaultdict(set)
        complete = defaultdict(set)
        first_perm = {}
        for e in t.events:
            k = e.get("instance")
            if e["type"] == "recs_complete":
                complete[k].add(e["from"])
            if e["type"] == "send" and e["kind"] == "PERM_SHARE" and e["from"] not in byz:
                # honest parties release only after their recommendations complete
                assert e["from"] in complete[k]
                emitted[k].add(e["from"])
            if e["type"] == "perm" and k not in first_perm:
                first_perm[k] = len(emitted[k])
                assert sorted(e["info"]) == sorted(_committees(t)[k])
        for k, count in first_perm.items():
            # the adversary adds at most f shares of its own
            assert count + f >= n - f and count >= f + 1


def test_honest_parties_agree_on_committee(traces):
    for t in traces:
        seen = defaultdict(set)
        for e in t.events:
            if e["type"] == "committee":
                seen[e["instance"]].add(tuple(e["info"]))
        assert all(len(v) == 1 for v in seen.values())
