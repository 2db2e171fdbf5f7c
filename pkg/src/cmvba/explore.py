"""Schedule explorers for the binary agreement and the consistent broadcast.

:class:`AbbaSystem` runs one binary agreement among ``n`` parties, with an
optional corrupted party that either stays silent or equivocates in round 1
(VOTE 0 to some parties, a justified VOTE 1 to the others).  It is driven
either by a seeded random scheduler or by an explicit choice sequence.

:func:`explore_abba` enumerates schedules exhaustively under a delay bound:
pending envelopes are kept in send order, picking the k-th one costs ``k``
delays, and every schedule whose total cost stays within the bound is run
(stateless re-execution, odometer order).
"""

from __future__ import annotations

import heapq
import itertools
import random
from dataclasses import dataclass, field

from .abba import AbbaState
from .crypto import SysConfig, ThresholdKit, sig_share
from .messages import AbbaVote, Send, VcbcSend
from .pvcbc import PvcbcReceiver
from .committee import CommitteeSet
from .tags import abba_tag, vcbc_tag
from .errors import InsufficientShares, MixedDigests


def make_rho(kit: ThresholdKit, config: SysConfig, instance: int, cand: int, payload: bytes = b"value"):
    """A genuine proof for ``cand``'s payload, signed by the first n - f parties."""
    tag = vcbc_tag(instance, cand)
    digest = kit.digest(tag, payload)
    shares = [sig_share(kit.party_keys(i).sig, tag, digest) for i in range(config.quorum)]
    return kit.sig_combine(tag, digest, shares, config.quorum)


@dataclass
class AbbaOutcome:
    decisions: dict
    rounds: dict
    steps: int
    schedule: list = field(default_factory=list)

    @property
    def agreed(self) -> bool:
        return len(set(self.decisions.values())) <= 1

    @property
    def max_round(self) -> int:
        return max(self.rounds.values()) if self.rounds else 0


class AbbaSystem:
    def __init__(self, n: int, f: int, inputs: dict, byzantine: str | None = None,
                 master_seed: bytes = bytes(32), instance: int = 1, candidate: int = 0):
        """``inputs`` maps honest party -> 0/1; 1 inputs get a valid proof.
        ``byzantine`` is None, "silent" or "equivocate" and applies to every
        party missing from ``inputs``."""
        self.config = SysConfig(n=n, f=f, master_seed=master_seed)
        self.kit = ThresholdKit(self.config)
        self.instance = instance
        self.candidate = candidate
        self.inputs = dict(inputs)
        self.byzantine_mode = byzantine
        self.byzantine = [i for i in range(n) if i not in inputs]
        if len(self.byzantine) > f:
            raise ValueError("more corrupted parties than f")
        self.rho = make_rho(self.kit, self.config, instance, candidate)
        tag = vcbc_tag(instance, candidate)
        self.validator = lambda p, kit=self.kit, tag=tag: (
            isinstance(getattr(p, "digest", None), bytes) and kit.proof_verify(tag, p.digest, p))

    def fresh(self):
        states = {}
        for i, bit in self.inputs.items():
            states[i] = AbbaState(self.config, self.kit, self.instance, self.candidate,
                                  self.kit.party_keys(i), self.validator)
        return states

    def _initial(self, states):
        sends = []
        for i in sorted(states):
            bit = self.inputs[i]
            for s in states[i].input(bit, self.rho if bit else None):
                sends.append((i, s))
        if self.byzantine_mode == "equivocate":
            tag = abba_tag(self.instance, self.candidate)
            probe = next(iter(states.values()))
            n = self.config.n
            for b in self.byzantine:
                keys = self.kit.party_keys(b)
                for dst in range(n):
                    bit = 1 if dst >= n // 2 else 0
                    vote = AbbaVote(self.instance, self.candidate, 1, bit,
                                    sig_share(keys.sig, tag, probe._vdigest(1, bit)),
                                    rho=self.rho if bit else None)
                    sends.append((b, Send(dst, vote)))
        return sends

    def _expand(self, src, send):
        targets = range(self.config.n) if send.to is None else (send.to,)
        return [(src, dst, send.msg) for dst in targets if dst in self.inputs]

    def run_choices(self, choices, default=0):
        """Deliver by explicit choices; returns (outcome, pending sizes seen)."""
        states = self.fresh()
        pending = []
        for src, s in self._initial(states):
            pending.extend(self._expand(src, s))
        sizes = []
        step = 0
        while pending and any(st.decided is None for st in states.values()):
            k = choices[step] if step < len(choices) else default
            sizes.append(len(pending))
            src, dst, msg = pending.pop(k)
            for s in states[dst].on_message(src, msg):
                pending.extend(self._expand(dst, s))
            step += 1
        return self._outcome(states, step), sizes

    def run_random(self, seed: int, max_delay: int = 16):
        rng = random.Random(seed)
        states = self.fresh()
        queue = []
        counter = itertools.count()

        def push(items):
            for src, dst, msg in items:
                heapq.heappush(queue, (rng.randint(1, max_delay) + now, next(counter), src, dst, msg))

        now = 0
        for src, s in self._initial(states):
            push(self._expand(src, s))
        steps = 0
        while queue and any(st.decided is None for st in states.values()):
            now, _, src, dst, msg = heapq.heappop(queue)
            for s in states[dst].on_message(src, msg):
                push(self._expand(dst, s))
            steps += 1
        return self._outcome(states, steps)

    @staticmethod
    def _outcome(states, steps):
        return AbbaOutcome(
            decisions={i: st.decided for i, st in states.items()},
            rounds={i: st.decided_round or st.round for i, st in states.items()},
            steps=steps,
        )


def explore_abba(system: AbbaSystem, max_delays: int, limit: int | None = None):
    """Yield the outcome of every schedule within the delay bound."""
    choices: list[int] = []
    count = 0
    while True:
        outcome, sizes = system.run_choices(choices)
        outcome.schedule = list(choices)
        yield outcome
        count += 1
        if limit is not None and count >= limit:
            return
        full = choices + [0] * (len(sizes) - len(choices))
        spent = sum(full)
        for j in range(len(sizes) - 1, -1, -1):
            spent -= full[j]
            if full[j] + 1 < sizes[j] and spent + full[j] + 1 <= max_delays:
                choices = full[:j] + [full[j] + 1]
                break
        else:
            return


# consistent broadcast, equivocating sender

SEND_PATTERNS = ((), ("A",), ("B",), ("A", "B"), ("B", "A"))


def explore_pvcbc(n: int = 4, f: int = 1, master_seed: bytes = bytes(32)):
    """Exhaust every way a corrupted proposer can feed two payloads to the
    honest receivers, in every delivery interleaving.

    Returns ``(schedules, violations)`` where a violation is a schedule after
    which verifying proofs exist for both payloads.
    """
    config = SysConfig(n=n, f=f, master_seed=master_seed)
    kit = ThresholdKit(config)
    instance, proposer = 1, n - 1
    committee = CommitteeSet(instance, (proposer,))
    tag = vcbc_tag(instance, proposer)
    payloads = {"A": b"payload-A", "B": b"payload-B"}
    digests = {k: kit.digest(tag, v) for k, v in payloads.items()}
    own = kit.party_keys(proposer)
    honest = [i for i in range(n) if i != proposer]
    schedules = violations = 0
    for patterns in itertools.product(SEND_PATTERNS, repeat=len(honest)):
        deliveries = [(dst, label) for dst, pat in zip(honest, patterns) for label in pat]
        for order in _interleavings(deliveries):
            schedules += 1
            receivers = {i: PvcbcReceiver(config, kit, kit.party_keys(i)) for i in honest}
            shares = {k: {proposer: sig_share(own.sig, tag, d)} for k, d in digests.items()}
            for dst, label in order:
                echo = receivers[dst].on_send(proposer, VcbcSend(instance, proposer, payloads[label]), committee)
                if echo is not None:
                    share = echo.msg.share
                    for k, d in digests.items():
                        if share.digest == d:
                            shares[k][dst] = share
            proofs = set()
            for k, d in digests.items():
                try:
                    p = kit.sig_combine(tag, d, shares[k].values(), config.quorum)
                except (InsufficientShares, MixedDigests):
                    continue
                if kit.proof_verify(tag, d, p):
                    proofs.add(k)
            if len(proofs) > 1:
                violations += 1
    return schedules, violations


def _interleavings(deliveries):
    """Distinct orderings that keep each receiver's own sequence intact."""
    by_dst = {}
    for dst, label in deliveries:
        by_dst.setdefault(dst, []).append(label)
    dsts = [d for d, _ in deliveries]
    seen = set()
    for perm in itertools.permutations(dsts):
        if perm in seen:
            continue
        seen.add(perm)
        cursors = {d: 0 for d in by_dst}
        order = []
        for d in perm:
            order.append((d, by_dst[d][cursors[d]]))
            cursors[d] += 1
        yield order


def expected_schedule(config: SysConfig, seed: int, instance: int = 1):
    """Committee and agreement order a simulation run with ``seed`` will use.

    Both coins are subset independent, so any qualifying share set gives the
    value the parties compute.
    """
    from .committee import select_committee
    from .crypto import coin_share
    from .permutation import order_committee
    from .simnet import derive_master
    from .tags import cs_tag, perm_tag

    cfg = config.with_seed(derive_master(config, seed))
    kit = ThresholdKit(cfg)
    cs = [coin_share(kit.party_keys(i).coin, cs_tag(instance)) for i in range(cfg.f + 1)]
    committee = select_committee(kit.coin_toss(cs_tag(instance), cs, cfg.f + 1), cfg.n, cfg.f, instance)
    ps = [coin_share(kit.party_keys(i).coin, perm_tag(instance)) for i in range(cfg.quorum)]
    order = order_committee(kit.coin_toss(perm_tag(instance), ps, cfg.quorum), committee)
    return committee, order.order
