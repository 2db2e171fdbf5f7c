"""Prioritized verifiable consistent broadcast.

Only committee members broadcast.  The exchange is SEND then ECHO: every
receiver signs the digest of the first payload it sees from a given proposer
and unicasts the share back; n - f shares combine into the proof ``rho``.
Two proofs for different digests would need n - 2f > f honest parties to
sign twice, which the one-digest rule forbids.
"""

from __future__ import annotations

from dataclasses import dataclass

from .committee import CommitteeSet
from .crypto import PartyKeys, Proof, PublicKit, SysConfig, sig_share
from .errors import AlreadySent, NotCommitteeMember
from .messages import Send, VcbcEcho, VcbcSend
from .tags import vcbc_tag


@dataclass(frozen=True)
class Proposal:
    proposer: int
    payload: bytes
    digest: bytes


def make_proposal(kit: PublicKit, instance: int, proposer: int, payload: bytes) -> Proposal:
    return Proposal(proposer, payload, kit.digest(vcbc_tag(instance, proposer), payload))


class PvcbcSender:
    def __init__(self, config: SysConfig, kit: PublicKit, instance: int, keys: PartyKeys):
        self.config = config
        self.kit = kit
        self.instance = instance
        self.keys = keys
        self.tag = vcbc_tag(instance, keys.index)
        self.proposal: Proposal | None = None
        self.received: dict[int, object] = {}
        self.output: Proof | None = None

    def send(self, proposal: Proposal, committee: CommitteeSet) -> list[Send]:
        if self.keys.index not in committee:
            raise NotCommitteeMember(f"party {self.keys.index} is not on the instance-{self.instance} committee")
        if self.proposal is not None:
            raise AlreadySent(f"party {self.keys.index} already broadcast in instance {self.instance}")
        self.proposal = proposal
        return [Send(None, VcbcSend(self.instance, self.keys.index, proposal.payload))]

    def on_echo(self, sender: int, msg: VcbcEcho) -> Proof | None:
        if self.proposal is None or self.output is not None or sender in self.received:
            return None
        if msg.instance != self.instance or msg.proposer != self.keys.index:
            return None
        if not self.kit.sig_share_verify(self.tag, self.proposal.digest, sender, msg.share):
            return None
        self.received[sender] = msg.share
        if len(self.received) >= self.config.quorum:
            self.output = self.kit.sig_combine(
                self.tag, self.proposal.digest, self.received.values(), self.config.quorum)
            return self.output
        return None


class PvcbcReceiver:
    """Per-party echo side; remembers the one digest signed for each proposer."""

    def __init__(self, config: SysConfig, kit: PublicKit, keys: PartyKeys):
        self.config = config
        self.kit = kit
        self.keys = keys
        self.signed: dict[tuple[int, int], bytes] = {}
        self.payloads: dict[tuple[int, int], bytes] = {}
        self.equivocations = 0
        self.dropped = 0

    def on_send(self, sender: int, msg: VcbcSend, committee: CommitteeSet) -> Send | None:
        if sender != msg.proposer or sender not in committee or msg.instance != committee.instance:
            self.dropped += 1
            return None
        key = (msg.instance, sender)
        tag = vcbc_tag(msg.instance, sender)
        digest = self.kit.digest(tag, msg.payload)
        prior = self.signed.get(key)
        if prior is not None and prior != digest:
            self.equivocations += 1
            return None
        self.signed[key] = digest
        self.payloads[key] = msg.payload
        return Send(sender, VcbcEcho(msg.instance, sender, sig_share(self.keys.sig, tag, digest)))
