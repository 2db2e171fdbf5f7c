"""Per-party protocol engine.

One :class:`Party` runs the instance loop: committee selection, broadcast of
its own proposal when selected, propose-recommend, random order, and the
sequential agreement loop over the permuted committee.  A decision for
candidate ``p`` needs ``p``'s payload; a party that decided 1 without it asks
with FETCH and takes the first SUPPLY whose payload matches the proof.

Every handler returns a list of :class:`~cmvba.messages.Send`; observable
milestones are appended to ``notes`` for the simulator's trace.
"""

from __future__ import annotations

import hashlib
from collections import defaultdict, deque
from dataclasses import dataclass
from typing import Callable, Optional

from .abba import AbbaState
from .committee import CommitteeSet, CsState
from .crypto import PartyKeys, Proof, PublicKit, SysConfig
from .errors import DoubleDecide, Exhausted
from .messages import (ABBA_KINDS, Fetch, PermShare, Propose, Recommendation, Send, Share, Supply,
                       VcbcEcho, VcbcSend)
from .permutation import PermState
from .pvcbc import Proposal, PvcbcReceiver, PvcbcSender, make_proposal
from .recommend import RecommendState
from .tags import vcbc_tag

PHASES = ("CS", "BROADCAST", "RECOMMEND", "PERMUTE", "SEQ_ABBA", "DONE")
HISTORY = 4


@dataclass(frozen=True)
class RoundTag:
    instance: int
    origin: int


@dataclass(frozen=True)
class Decision:
    instance: int
    proposal: Proposal
    proof: Proof
    iterations_used: int
    coin_rounds: int = 0


RequestSource = Callable[[int, int], bytes]


def default_requests(config: SysConfig) -> RequestSource:
    """Deterministic ``l``-byte payloads keyed by (master seed, instance, party)."""

    def source(instance: int, index: int) -> bytes:
        h = hashlib.shake_256(config.master_seed + f"|req|{instance}|{index}".encode())
        return h.digest(config.l)

    return source


class Party:
    def __init__(self, config: SysConfig, kit: PublicKit, keys: PartyKeys,
                 requests: Optional[RequestSource] = None, max_instances: int = 1,
                 per_candidate: bool = False, buffer_cap: Optional[int] = None):
        self.config = config
        self.kit = kit
        self.keys = keys
        self.index = keys.index
        self.requests = requests or default_requests(config)
        self.max_instances = max_instances
        self.per_candidate = per_candidate
        self.buffer_cap = buffer_cap if buffer_cap is not None else 8 * config.n
        self.receiver = PvcbcReceiver(config, kit, keys)
        self.decisions: dict[int, Decision] = {}
        self.held: dict[int, dict] = {}
        self.future: dict[int, deque] = {}
        self.notes: list[dict] = []
        self.metrics = defaultdict(int)
        self.instance = 0
        self.phase = "CS"
        self.started = False

    @property
    def round_tag(self) -> RoundTag:
        return RoundTag(self.instance, self.index)

    def _note(self, type_, **fields):
        self.notes.append({"type": type_, "instance": self.instance, **fields})

    def _set_phase(self, phase):
        if PHASES.index(phase) > PHASES.index(self.phase):
            self.phase = phase
            self._note("phase", info=phase)

    # instance lifecycle
    def start(self) -> list[Send]:
        """engine_start_instance for the first instance."""
        if self.started:
            return []
        self.started = True
        return self._start_instance(1)

    def _start_instance(self, k: int) -> list[Send]:
        self.instance = k
        self.phase = "CS"
        self._note("phase", info="CS")
        self.cs = CsState(self.config, self.kit, k, self.keys)
        self.sender = PvcbcSender(self.config, self.kit, k, self.keys)
        self.perm = PermState(self.config, self.kit, k, self.keys)
        self.committee: Optional[CommitteeSet] = None
        self.recs: Optional[RecommendState] = None
        self.order: Optional[tuple] = None
        self.cursor = 0
        self.abba: Optional[AbbaState] = None
        self.abba_buffer: dict[int, list] = defaultdict(list)
        self.pending: list = []
        self.awaiting: Optional[int] = None
        self.iterations = 0
        self.coin_rounds = 0
        out = self.cs.start()
        for sender, msg in self.future.pop(k, ()):
            out.extend(self.dispatch(sender, msg))
        return out

    # routing
    def dispatch(self, sender: int, msg) -> list[Send]:
        """engine_dispatch: route one delivered message."""
        if isinstance(msg, Fetch):
            return self._serve_fetch(sender, msg)
        inst = getattr(msg, "instance", None)
        if not isinstance(inst, int):
            self.metrics["unroutable"] += 1
            return []
        if inst < self.instance or self.phase == "DONE" and inst == self.instance:
            self.metrics["stale"] += 1
            return []
        if inst > self.instance:
            if inst > self.max_instances:
                self.metrics["unroutable"] += 1
                return []
            box = self.future.setdefault(inst, deque())
            if len(box) >= self.buffer_cap:
                box.popleft()
                self.metrics["buffer_dropped"] += 1
            box.append((sender, msg))
            return []
        if isinstance(msg, Share):
            committee = self.cs.on_share(sender, msg)
            return self._on_committee(committee) if committee else []
        if self.committee is None:
            self.pending.append((sender, msg))
            return []
        return self._route(sender, msg)

    def _route(self, sender, msg) -> list[Send]:
        if isinstance(msg, VcbcSend):
            echo = self.receiver.on_send(sender, msg, self.committee)
            return [echo] if echo else []
        if isinstance(msg, VcbcEcho):
            proof = self.sender.on_echo(sender, msg)
            if proof is None:
                return []
            p = self.sender.proposal
            self._note("proof", cand=self.index)
            self._set_phase("RECOMMEND")
            return [Send(None, Propose(self.instance, self.index, p.payload, proof))]
        if isinstance(msg, Propose):
            return self._recs_call(lambda: (self.recs.on_propose(sender, msg), None))
        if isinstance(msg, Recommendation):
            return self._recs_call(lambda: self.recs.on_recommendation(sender, msg))
        if isinstance(msg, PermShare):
            self.perm.on_share(sender, msg, self.committee)
            return self._maybe_seq_abba()
        if msg.kind in ABBA_KINDS:
            return self._on_abba(sender, msg)
        if isinstance(msg, Supply):
            return self._on_supply(sender, msg)
        self.metrics["unroutable"] += 1
        return []

    def _on_committee(self, committee: CommitteeSet) -> list[Send]:
        self.committee = committee
        self._note("committee", info=list(committee.members))
        self.recs = RecommendState(self.config, self.kit, self.instance, committee, self.per_candidate)
        self.held[self.instance] = self.recs.list.entries
        for old in [k for k in self.held if k <= self.instance - HISTORY]:
            del self.held[old]
        out: list[Send] = []
        if self.index in committee:
            self._set_phase("BROADCAST")
            payload = self.requests(self.instance, self.index)
            out.extend(self.sender.send(make_proposal(self.kit, self.instance, self.index, payload), committee))
        else:
            self._set_phase("RECOMMEND")
        pending, self.pending = self.pending, []
        for sender, msg in pending:
            out.extend(self._route(sender, msg))
        return out

    def _recs_call(self, call) -> list[Send]:
        before = set(self.recs.list.entries)
        out, completed = call()
        for cand in sorted(set(self.recs.list.entries) - before):
            self._note("hold", cand=cand)
        if completed is not None:
            self._note("recs_complete", info=sorted(completed.entries))
            self._set_phase("PERMUTE")
            out = list(out) + self.perm.start()
            self.perm.try_output(self.committee)
            out.extend(self._maybe_seq_abba())
        return out

    # sequential agreement
    def _maybe_seq_abba(self) -> list[Send]:
        if self.phase != "PERMUTE" or self.perm.output is None:
            return []
        self.order = self.perm.output.order
        self._note("perm", info=list(self.order))
        self._set_phase("SEQ_ABBA")
        self._note("seq_abba_start", info=sorted(self.recs.list.entries))
        return self._start_abba()

    def _validator(self, cand):
        tag = vcbc_tag(self.instance, cand)
        kit = self.kit
        return lambda p: isinstance(getattr(p, "digest", None), bytes) and kit.proof_verify(tag, p.digest, p)

    def _start_abba(self) -> list[Send]:
        """sequential_abba: run the agreement on the candidate under the cursor."""
        cand = self.order[self.cursor]
        self.iterations = self.cursor + 1
        self.abba = AbbaState(self.config, self.kit, self.instance, cand, self.keys, self._validator(cand))
        entry = self.recs.list.entries.get(cand)
        out = self.abba.input(1, entry[1]) if entry else self.abba.input(0)
        for sender, msg in self.abba_buffer.pop(cand, ()):
            if self.abba.decided is not None:
                break
            out.extend(self.abba.on_message(sender, msg))
        out.extend(self._after_abba())
        return out

    def _on_abba(self, sender, msg) -> list[Send]:
        cand = msg.candidate
        if self.abba is not None and cand == self.abba.candidate:
            if self.abba.decided is not None:
                return []
            out = self.abba.on_message(sender, msg)
            out.extend(self._after_abba())
            return out
        if self.order is not None and cand in self.order[: self.cursor]:
            self.metrics["stale"] += 1
            return []
        if self.committee is not None and cand not in self.committee:
            self.metrics["unroutable"] += 1
            return []
        self.abba_buffer[cand].append((sender, msg))
        return []

    def _after_abba(self) -> list[Send]:
        abba = self.abba
        if abba.decided is None or self.awaiting is not None:
            return []
        cand = abba.candidate
        self.coin_rounds += abba.decided_round
        self._note("abba_decide", cand=cand, bit=abba.decided, round=abba.decided_round)
        if abba.decided == 0:
            self.cursor += 1
            if self.cursor >= len(self.order):
                raise Exhausted(f"party {self.index}: all {len(self.order)} candidates decided 0 "
                                f"in instance {self.instance}")
            return self._start_abba()
        return self._complete(cand, abba.rho)

    def _complete(self, cand, rho) -> list[Send]:
        entry = self.recs.list.entries.get(cand)
        if entry is not None:
            return self.decide(Decision(self.instance, entry[0], entry[1], self.iterations, self.coin_rounds))
        payload = self.receiver.payloads.get((self.instance, cand))
        tag = vcbc_tag(self.instance, cand)
        if payload is not None and self.kit.digest(tag, payload) == rho.digest:
            return self.decide(Decision(self.instance, Proposal(cand, payload, rho.digest), rho,
                                        self.iterations, self.coin_rounds))
        return self.recover_value(cand, rho)

    # value recovery
    def recover_value(self, cand, rho) -> list[Send]:
        self.awaiting = cand
        self._note("fetch", cand=cand)
        return [Send(None, Fetch(self.instance, cand, rho))]

    def _serve_fetch(self, sender, msg: Fetch) -> list[Send]:
        tag = vcbc_tag(msg.instance, msg.candidate)
        proof = msg.proof
        if not isinstance(getattr(proof, "digest", None), bytes) or not self.kit.proof_verify(tag, proof.digest, proof):
            self.metrics["dropped"] += 1
            return []
        entry = self.held.get(msg.instance, {}).get(msg.candidate)
        payload = entry[0].payload if entry else self.receiver.payloads.get((msg.instance, msg.candidate))
        if payload is None or self.kit.digest(tag, payload) != proof.digest:
            return []
        return [Send(sender, Supply(msg.instance, msg.candidate, payload, proof))]

    def _on_supply(self, sender, msg: Supply) -> list[Send]:
        if self.awaiting is None or msg.candidate != self.awaiting:
            return []
        rho = self.abba.rho
        tag = vcbc_tag(self.instance, msg.candidate)
        if not self.kit.proof_verify(tag, rho.digest, msg.proof) or self.kit.digest(tag, msg.payload) != rho.digest:
            self.metrics["dropped"] += 1
            return []
        self.awaiting = None
        proposal = Proposal(msg.candidate, msg.payload, rho.digest)
        return self.decide(Decision(self.instance, proposal, rho, self.iterations, self.coin_rounds))

    def decide(self, decision: Decision) -> list[Send]:
        """engine_decide: record the decision and move to the next instance."""
        if decision.instance in self.decisions:
            raise DoubleDecide(f"party {self.index} already decided instance {decision.instance}")
        self.decisions[decision.instance] = decision
        self._note("decide", cand=decision.proposal.proposer, info=decision.proposal.digest.hex(),
                   iterations=decision.iterations_used, rounds=decision.coin_rounds)
        self._set_phase("DONE")
        if decision.instance < self.max_instances:
            return self._start_instance(decision.instance + 1)
        return []
