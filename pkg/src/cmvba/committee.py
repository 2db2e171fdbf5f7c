"""Committee selection: an f+1 threshold coin picks f+1 proposers per instance."""

from __future__ import annotations

from dataclasses import dataclass

from .crypto import PartyKeys, PublicKit, RandomSeed, SysConfig, coin_share
from .errors import AlreadyStarted
from .messages import Send, Share
from .shuffle import seeded_shuffle
from .tags import cs_tag


@dataclass(frozen=True)
class CommitteeSet:
    instance: int
    members: tuple[int, ...]

    def __contains__(self, index) -> bool:
        return index in self.members


def select_committee(seed: RandomSeed, n: int, f: int, instance: int = 0) -> CommitteeSet:
    """First f+1 entries of a seed-keyed Fisher-Yates shuffle of range(n)."""
    if n < 3 * f + 1:
        raise ValueError(f"need n >= 3f+1, got n={n} f={f}")
    order = seeded_shuffle(range(n), seed.value)
    return CommitteeSet(instance, tuple(order[: f + 1]))


class CsState:
    def __init__(self, config: SysConfig, kit: PublicKit, instance: int, keys: PartyKeys):
        self.config = config
        self.kit = kit
        self.instance = instance
        self.keys = keys
        self.tag = cs_tag(instance)
        self.shares: dict[int, object] = {}
        self.output: CommitteeSet | None = None
        self.started = False
        self.dropped = 0

    def start(self) -> list[Send]:
        if self.started:
            raise AlreadyStarted(f"CS already started for instance {self.instance}")
        self.started = True
        return [Send(None, Share(self.instance, coin_share(self.keys.coin, self.tag)))]

    def on_share(self, sender: int, msg: Share) -> CommitteeSet | None:
        share = msg.share
        if sender in self.shares:
            return None
        if msg.instance != self.instance or not self.kit.coin_share_verify(self.tag, sender, share):
            self.dropped += 1
            return None
        self.shares[sender] = share
        if self.output is None and len(self.shares) >= self.config.f + 1:
            seed = self.kit.coin_toss(self.tag, self.shares.values(), self.config.f + 1)
            self.output = select_committee(seed, self.config.n, self.config.f, self.instance)
            return self.output
        return None
