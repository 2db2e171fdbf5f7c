"""Wire messages and their byte accounting.

Sizes follow a fixed model rather than a serializer: an envelope costs a
16-byte header plus its body, integers are 4 bytes, bits 1 byte, shares and
digests ``lam`` bytes, a proof ``2 * lam`` (digest and signature), and the
proposal payload its own length.  ``wire_size`` reports ``(payload, overhead)``
so the payload part of the traffic can be separated from everything else.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar, NamedTuple, Optional

from .crypto import CoinShare, Proof, RandomSeed, SigShare

HEADER_BYTES = 16
INT = 4
BIT = 1


class Send(NamedTuple):
    """An outgoing message; ``to=None`` means every party, the sender included."""

    to: Optional[int]
    msg: object


def _proof(lam, p):
    return 2 * lam if p is not None else 0


@dataclass(frozen=True, slots=True)
class Share:
    kind: ClassVar[str] = "SHARE"
    instance: int
    share: CoinShare

    def wire_size(self, lam):
        return 0, HEADER_BYTES + 2 * INT + lam


@dataclass(frozen=True, slots=True)
class VcbcSend:
    kind: ClassVar[str] = "VCBC_SEND"
    instance: int
    proposer: int
    payload: bytes

    def wire_size(self, lam):
        return len(self.payload), HEADER_BYTES + 2 * INT


@dataclass(frozen=True, slots=True)
class VcbcEcho:
    kind: ClassVar[str] = "VCBC_ECHO"
    instance: int
    proposer: int
    share: SigShare

    def wire_size(self, lam):
        return 0, HEADER_BYTES + 3 * INT + 2 * lam


@dataclass(frozen=True, slots=True)
class Propose:
    kind: ClassVar[str] = "PROPOSE"
    instance: int
    proposer: int
    payload: bytes
    proof: Proof

    def wire_size(self, lam):
        return len(self.payload), HEADER_BYTES + 2 * INT + 2 * lam


@dataclass(frozen=True, slots=True)
class Recommendation:
    kind: ClassVar[str] = "RECOMMENDATION"
    instance: int
    proposer: int
    payload: bytes
    proof: Proof

    def wire_size(self, lam):
        return len(self.payload), HEADER_BYTES + 2 * INT + 2 * lam


@dataclass(frozen=True, slots=True)
class PermShare:
    kind: ClassVar[str] = "PERM_SHARE"
    instance: int
    share: CoinShare

    def wire_size(self, lam):
        return 0, HEADER_BYTES + 2 * INT + lam


@dataclass(frozen=True, slots=True)
class AbbaVote:
    """Round-r vote.  ``rho`` backs a 1; ``cert`` carries the previous round's
    justification (a commit certificate, or an all-abstain certificate plus
    ``coin``)."""

    kind: ClassVar[str] = "ABBA_VOTE"
    instance: int
    candidate: int
    round: int
    bit: int
    share: SigShare
    rho: Optional[Proof] = None
    cert: Optional[Proof] = None
    coin: Optional[RandomSeed] = None

    def body_size(self, lam):
        size = 3 * INT + BIT + INT + lam + _proof(lam, self.rho) + _proof(lam, self.cert)
        if self.coin is not None:
            size += lam
        return size

    def wire_size(self, lam):
        return 0, HEADER_BYTES + self.body_size(lam)


@dataclass(frozen=True, slots=True)
class AbbaCommit:
    """Round-r commit of 0, 1 or abstain (``value=None``).

    A 0/1 commit carries the certificate of n-f matching votes; an abstain
    carries one vote for each bit as evidence of conflict.  From round 2 on
    the commit also piggybacks the sender's share of the round coin.
    """

    kind: ClassVar[str] = "ABBA_COMMIT"
    instance: int
    candidate: int
    round: int
    value: Optional[int]
    share: SigShare
    cert: Optional[Proof] = None
    conflict: Optional[tuple] = None
    coin_share: Optional[CoinShare] = None
    rho: Optional[Proof] = None

    def wire_size(self, lam):
        size = 3 * INT + BIT + INT + lam + _proof(lam, self.cert) + _proof(lam, self.rho)
        if self.conflict is not None:
            size += sum(v.body_size(lam) for v in self.conflict)
        if self.coin_share is not None:
            size += INT + lam
        return 0, HEADER_BYTES + size


@dataclass(frozen=True, slots=True)
class AbbaDecide:
    kind: ClassVar[str] = "ABBA_DECIDE"
    instance: int
    candidate: int
    round: int
    bit: int
    evidence: Proof
    rho: Optional[Proof] = None

    def wire_size(self, lam):
        return 0, HEADER_BYTES + 3 * INT + BIT + 2 * lam + _proof(lam, self.rho)


@dataclass(frozen=True, slots=True)
class Fetch:
    kind: ClassVar[str] = "FETCH"
    instance: int
    candidate: int
    proof: Proof

    def wire_size(self, lam):
        return 0, HEADER_BYTES + 2 * INT + 2 * lam


@dataclass(frozen=True, slots=True)
class Supply:
    kind: ClassVar[str] = "SUPPLY"
    instance: int
    candidate: int
    payload: bytes
    proof: Proof

    def wire_size(self, lam):
        return len(self.payload), HEADER_BYTES + 2 * INT + 2 * lam


ABBA_KINDS = frozenset({"ABBA_VOTE", "ABBA_COMMIT", "ABBA_DECIDE"})


def candidate_of(msg) -> Optional[int]:
    """The proposer a message is about, if any (used for trace annotation)."""
    cand = getattr(msg, "proposer", None)
    if cand is None:
        cand = getattr(msg, "candidate", None)
    return cand
