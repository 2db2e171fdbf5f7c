"""Random order of the committee, drawn from an n - f share coin.

The threshold is deliberately higher than the committee coin's f+1: with
n - f shares required, at least f+1 honest parties must have released
theirs, and honest parties release only after their recommendation list is
complete.  The order is therefore fixed only once proposals are locked in.
"""

from __future__ import annotations

from dataclasses import dataclass

from .committee import CommitteeSet
from .crypto import PartyKeys, PublicKit, RandomSeed, SysConfig, coin_share
from .errors import AlreadyStarted
from .messages import PermShare, Send
from .shuffle import seeded_shuffle
from .tags import perm_tag


@dataclass(frozen=True)
class PermutationList:
    instance: int
    order: tuple[int, ...]


def order_committee(seed: RandomSeed, committee: CommitteeSet) -> PermutationList:
    return PermutationList(committee.instance, tuple(seeded_shuffle(committee.members, seed.value)))


class PermState:
    def __init__(self, config: SysConfig, kit: PublicKit, instance: int, keys: PartyKeys):
        self.config = config
        self.kit = kit
        self.instance = instance
        self.keys = keys
        self.tag = perm_tag(instance)
        self.shares: dict[int, object] = {}
        self.seed: RandomSeed | None = None
        self.output: PermutationList | None = None
        self.started = False
        self.dropped = 0

    def start(self) -> list[Send]:
        if self.started:
            raise AlreadyStarted(f"permutation already started for instance {self.instance}")
        self.started = True
        return [Send(None, PermShare(self.instance, coin_share(self.keys.coin, self.tag)))]

    def on_share(self, sender: int, msg: PermShare, committee: CommitteeSet | None) -> PermutationList | None:
        if sender in self.shares:
            return None
        if msg.instance != self.instance or not self.kit.coin_share_verify(self.tag, sender, msg.share):
            self.dropped += 1
            return None
        self.shares[sender] = msg.share
        return self.try_output(committee)

    def try_output(self, committee: CommitteeSet | None) -> PermutationList | None:
        if self.output is not None or committee is None or len(self.shares) < self.config.quorum:
            return None
        self.seed = self.kit.coin_toss(self.tag, self.shares.values(), self.config.quorum)
        self.output = order_committee(self.seed, committee)
        return self.output
