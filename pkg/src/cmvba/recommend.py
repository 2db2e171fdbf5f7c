"""Propose-recommend: spread verified (proposal, rho) pairs and gather n - f recommendations."""

from __future__ import annotations

from dataclasses import dataclass, field

from .committee import CommitteeSet
from .crypto import Proof, PublicKit, SysConfig
from .messages import Propose, Recommendation, Send
from .pvcbc import Proposal
from .tags import vcbc_tag


@dataclass
class RecommendationList:
    instance: int
    entries: dict[int, tuple[Proposal, Proof]] = field(default_factory=dict)
    senders: set[int] = field(default_factory=set)

    @property
    def sender_count(self) -> int:
        return len(self.senders)


class RecommendState:
    def __init__(self, config: SysConfig, kit: PublicKit, instance: int,
                 committee: CommitteeSet, per_candidate: bool = False):
        self.config = config
        self.kit = kit
        self.instance = instance
        self.committee = committee
        self.per_candidate = per_candidate
        self.list = RecommendationList(instance)
        self.recommended: set[int] = set()
        self.complete = False
        self.dropped = 0

    @property
    def has_recommended(self) -> bool:
        return bool(self.recommended)

    def _check(self, msg) -> Proposal | None:
        if msg.instance != self.instance or msg.proposer not in self.committee:
            return None
        tag = vcbc_tag(msg.instance, msg.proposer)
        digest = self.kit.digest(tag, msg.payload)
        if not self.kit.proof_verify(tag, digest, msg.proof):
            return None
        return Proposal(msg.proposer, msg.payload, digest)

    def _accept(self, proposal: Proposal, proof: Proof) -> list[Send]:
        self.list.entries.setdefault(proposal.proposer, (proposal, proof))
        if self.per_candidate:
            if proposal.proposer in self.recommended:
                return []
        elif self.recommended:
            return []
        self.recommended.add(proposal.proposer)
        return [Send(None, Recommendation(self.instance, proposal.proposer, proposal.payload, proof))]

    def on_propose(self, sender: int, msg: Propose) -> list[Send]:
        proposal = self._check(msg) if sender == msg.proposer else None
        if proposal is None:
            self.dropped += 1
            return []
        return self._accept(proposal, msg.proof)

    def on_recommendation(self, sender: int, msg: Recommendation) -> tuple[list[Send], RecommendationList | None]:
        if sender in self.list.senders:
            return [], None
        proposal = self._check(msg)
        if proposal is None:
            self.dropped += 1
            return [], None
        self.list.senders.add(sender)
        out = self._accept(proposal, msg.proof)
        if not self.complete and self.list.sender_count >= self.config.quorum:
            self.complete = True
            return out, self.list
        return out, None
