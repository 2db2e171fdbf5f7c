"""Deterministic discrete-event asynchronous network.

Envelopes sit in a priority queue keyed by ``(delivery time, seq)``.  Each
send draws a default delay from the run's seeded RNG and hands it to the
adversary, which may stretch it arbitrarily (but finitely) and never drops
honest traffic.  The loop drains the queue completely, so every envelope is
delivered before the run ends.  Logical time ``t`` in the trace is the event
index.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import random
from dataclasses import dataclass, field
from typing import Optional

from .crypto import SysConfig, ThresholdKit
from .engine import Party, default_requests
from .errors import CmvbaError, InvariantViolation, Stalled
from .messages import candidate_of
from .tags import vcbc_tag

DEFAULT_MAX_DELAY = 64
MAX_DELAY = 10 ** 9
MAX_EVENTS = 5_000_000


@dataclass(slots=True)
class Envelope:
    seq: int
    src: int
    dst: int
    kind: str
    msg: object
    instance: int
    sent_at: int
    payload_bytes: int
    overhead_bytes: int
    depth: int
    deliver_time: int = 0
    delivered_at: Optional[int] = None

    @property
    def bytes(self) -> int:
        return self.payload_bytes + self.overhead_bytes


@dataclass
class ByzantineContext:
    """Everything a corrupted party may use: its own keys and the public kit."""

    config: SysConfig
    kit: object
    keys: object
    instances: int
    requests: object


@dataclass
class Trace:
    header: dict
    events: list
    metrics: dict = field(default_factory=dict)
    decisions: dict = field(default_factory=dict)
    byzantine_proofs: list = field(default_factory=list)

    def lines(self) -> list[str]:
        dump = lambda obj: json.dumps(obj, sort_keys=True, separators=(",", ":"))
        out = [dump(self.header)]
        out.extend(dump(e) for e in self.events)
        out.append(dump({"type": "metrics", **self.metrics}))
        return out

    def to_jsonl(self) -> str:
        return "\n".join(self.lines()) + "\n"

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.to_jsonl().encode()).hexdigest()

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_jsonl())

    @classmethod
    def read(cls, path) -> "Trace":
        with open(path) as fh:
            rows = [json.loads(line) for line in fh if line.strip()]
        metrics = rows[-1] if rows and rows[-1].get("type") == "metrics" else {}
        body = rows[1:-1] if metrics else rows[1:]
        metrics = {k: v for k, v in metrics.items() if k != "type"}
        return cls(header=rows[0], events=body, metrics=metrics)


def derive_master(config: SysConfig, seed: int) -> bytes:
    return hashlib.sha256(b"cmvba/run|" + config.master_seed + seed.to_bytes(8, "big", signed=True)).digest()


class Simulation:
    def __init__(self, config: SysConfig, strategy, seed: int, instances: int = 1,
                 per_candidate: bool = False):
        self.base_config = config
        self.config = config.with_seed(derive_master(config, seed))
        self.strategy = strategy
        self.seed = seed
        self.instances = instances
        self.per_candidate = per_candidate
        self.kit = ThresholdKit(self.config)
        self.public = self.kit.public()
        self.rng = random.Random(seed)
        self.adversary = strategy.build(self.config, self.public, seed)
        self.byzantine = frozenset(self.adversary.byzantine)
        if len(self.byzantine) > config.f:
            raise CmvbaError(f"strategy {strategy.name} corrupts {len(self.byzantine)} > f parties")
        requests = default_requests(self.config)
        self.parties = {}
        for i in range(self.config.n):
            keys = self.kit.party_keys(i)
            if i in self.byzantine:
                ctx = ByzantineContext(self.config, self.public, keys, instances, requests)
                self.parties[i] = self.adversary.make_party(i, ctx)
            else:
                self.parties[i] = Party(self.config, self.public, keys, requests, instances, per_candidate)
        self.honest = [i for i in range(self.config.n) if i not in self.byzantine]
        self.queue: list = []
        self.events: list[dict] = []
        self.seq = 0
        self.t = 0
        self.now = 0
        self.clocks = [0] * self.config.n
        self.sent = 0
        self.delivered = 0

    def header(self) -> dict:
        c = self.base_config
        return {
            "type": "run", "n": c.n, "f": c.f, "l": c.l, "lam": c.lam,
            "master_seed": c.master_seed.hex(), "seed": self.seed, "instances": self.instances,
            "strategy": self.strategy.name, "params": dict(self.strategy.params),
            "per_candidate": self.per_candidate, "byzantine": sorted(self.byzantine),
        }

    def _event(self, **fields):
        fields["t"] = self.t
        self.t += 1
        self.events.append(fields)

    def _emit(self, src: int, sends) -> None:
        n = self.config.n
        lam = self.config.lam
        depth = self.clocks[src] + 1
        for to, msg in sends:
            payload, overhead = msg.wire_size(lam)
            kind = msg.kind
            inst = msg.instance
            extra = {}
            cand = candidate_of(msg)
            if cand is not None:
                extra["cand"] = cand
            if kind == "ABBA_VOTE":
                extra["round"] = msg.round
                extra["bit"] = msg.bit
            elif kind == "ABBA_COMMIT":
                extra["round"] = msg.round
                extra["bit"] = -1 if msg.value is None else msg.value
            targets = range(n) if to is None else (to,)
            for dst in targets:
                env = Envelope(self.seq, src, dst, kind, msg, inst, self.t, payload, overhead, depth)
                self.seq += 1
                default = self.rng.randint(1, DEFAULT_MAX_DELAY)
                delay = self.adversary.delay(env, default)
                if not isinstance(delay, int) or not 1 <= delay <= MAX_DELAY:
                    raise CmvbaError(f"strategy {self.strategy.name} chose delay {delay!r}; "
                                     f"delays must be integers in [1, {MAX_DELAY}]")
                env.deliver_time = self.now + delay
                heapq.heappush(self.queue, (env.deliver_time, env.seq, env))
                self.sent += 1
                self._event(type="send", seq=env.seq, **{"from": src}, to=dst, kind=kind,
                            bytes=payload + overhead, payload=payload, instance=inst, **extra)

    def _drain_notes(self, idx):
        party = self.parties[idx]
        notes = getattr(party, "notes", None)
        if not notes:
            return
        for note in notes:
            self._event(**{"from": idx}, clock=self.clocks[idx], **note)
        notes.clear()

    def _call(self, idx, fn, *args):
        try:
            out = fn(*args)
        except CmvbaError as exc:
            if idx in self.byzantine:
                raise
            raise InvariantViolation(f"party {idx}: {exc}", self.trace()) from exc
        self._drain_notes(idx)
        self._emit(idx, out)

    def run(self) -> Trace:
        for i in range(self.config.n):
            self._call(i, self.parties[i].start)
        while self.queue:
            if self.t > MAX_EVENTS:
                raise Stalled("event budget exhausted", self.trace())
            self.now, _, env = heapq.heappop(self.queue)
            env.delivered_at = self.t
            self.delivered += 1
            dst = env.dst
            if env.depth > self.clocks[dst]:
                self.clocks[dst] = env.depth
            self._event(type="deliver", seq=env.seq, **{"from": env.src}, to=dst, kind=env.kind,
                        instance=env.instance)
            party = self.parties[dst]
            handler = party.dispatch if dst not in self.byzantine else party.on_message
            self._call(dst, handler, env.src, env.msg)
        trace = self.trace()
        self._check(trace)
        return trace

    def trace(self) -> Trace:
        from .metrics import compute_metrics

        trace = Trace(self.header(), self.events)
        trace.decisions = {i: dict(self.parties[i].decisions) for i in self.honest}
        for i in self.byzantine:
            trace.byzantine_proofs.extend(getattr(self.parties[i], "proofs", ()))
        trace.metrics = compute_metrics(trace)
        drops = {}
        for i in self.honest:
            for key, value in self.parties[i].metrics.items():
                drops[key] = drops.get(key, 0) + value
        trace.metrics["drops"] = dict(sorted(drops.items()))
        return trace

    def _check(self, trace: Trace) -> None:
        cfg = self.config
        if self.sent != self.delivered:
            raise InvariantViolation(f"{self.sent - self.delivered} envelopes never delivered", trace)
        for i in self.honest:
            missing = [k for k in range(1, self.instances + 1) if k not in self.parties[i].decisions]
            if missing:
                raise Stalled(f"party {i} never decided instances {missing}", trace)
        for k in range(1, self.instances + 1):
            decided = {i: self.parties[i].decisions[k] for i in self.honest}
            values = {(d.proposal.proposer, d.proposal.payload) for d in decided.values()}
            if len(values) != 1:
                raise InvariantViolation(f"instance {k}: honest parties decided {len(values)} values", trace)
            for i, d in decided.items():
                tag = vcbc_tag(k, d.proposal.proposer)
                if d.proposal.digest != self.public.digest(tag, d.proposal.payload) or \
                        not self.public.proof_verify(tag, d.proposal.digest, d.proof):
                    raise InvariantViolation(f"instance {k}: party {i} decided without a valid proof", trace)
                if d.iterations_used > cfg.f + 1:
                    raise InvariantViolation(
                        f"instance {k}: party {i} used {d.iterations_used} > f+1 iterations", trace)


def run_simulation(config: SysConfig, strategy, seed: int, instances: int = 1,
                   per_candidate: bool = False) -> Trace:
    """Run all parties to a decision on ``instances`` instances and return the trace.

    Raises InvariantViolation on a safety failure and Stalled if an honest
    party is left undecided once the queue is empty; both carry the trace.
    """
    return Simulation(config, strategy, seed, instances, per_candidate).run()
