"""Adversary strategies.

A strategy is a named, parameterised factory.  ``build`` returns a per-run
:class:`Adversary` that fixes the corrupted set, assigns delivery delays to
every envelope as it is sent, and creates the code that replaces corrupted
parties.  Adversaries see envelopes in flight and the public kit; corrupted
parties see only their own keys.

Non-responsiveness of an honest party is modelled by withholding: its
envelopes for the targeted instance get a delay far beyond the span of the
run, so they land only after everyone else has moved on.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .committee import select_committee
from .crypto import sig_share
from .engine import Party
from .errors import ConfigError, InsufficientShares
from .messages import AbbaVote, Propose, Send, VcbcEcho, VcbcSend
from .tags import cs_tag, vcbc_tag

WITHHOLD = 1_000_000


class SilentParty:
    """A crashed party: it never sends."""

    def __init__(self, ctx=None):
        self.decisions = {}

    def start(self):
        return []

    def on_message(self, sender, msg):
        return []


class Adversary:
    def __init__(self, config, kit, seed, byzantine=()):
        self.config = config
        self.kit = kit
        self.rng = random.Random(f"adversary|{seed}")
        self.byzantine = frozenset(byzantine)

    def delay(self, env, default: int) -> int:
        return default

    def make_party(self, index, ctx):
        return SilentParty(ctx)

    def pick(self, k):
        return frozenset(self.rng.sample(range(self.config.n), k))


class CommitteeWatcher(Adversary):
    """Learns each instance's committee from the public coin shares in flight."""

    def __init__(self, config, kit, seed, byzantine=()):
        super().__init__(config, kit, seed, byzantine)
        self.shares = {}
        self.committees = {}

    def committee(self, env):
        inst = env.instance
        if inst in self.committees:
            return self.committees[inst]
        if env.kind == "SHARE":
            box = self.shares.setdefault(inst, {})
            box[env.src] = env.msg.share
            try:
                seed = self.kit.coin_toss(cs_tag(inst), box.values(), self.config.f + 1)
            except InsufficientShares:
                return None
            self.committees[inst] = select_committee(seed, self.config.n, self.config.f, inst)
            return self.committees[inst]
        return None


class Withholding(CommitteeWatcher):
    """Withholds, per instance, the traffic of parties picked from the committee."""

    def __init__(self, config, kit, seed, targets):
        super().__init__(config, kit, seed)
        self.targets = targets
        self.withheld = {}

    def delay(self, env, default):
        committee = self.committee(env)
        if committee is None:
            return default
        inst = env.instance
        if inst not in self.withheld:
            self.withheld[inst] = frozenset(self.targets(committee, self.config))
        if env.src in self.withheld[inst]:
            return WITHHOLD + default
        return default


class WrappedParty:
    """A corrupted party that drives a private honest engine and rewrites its output."""

    def __init__(self, ctx):
        self.ctx = ctx
        self.index = ctx.keys.index
        self.inner = Party(ctx.config, ctx.kit, ctx.keys, ctx.requests, ctx.instances)
        self.decisions = {}
        self.proofs = []

    def start(self):
        return self.rewrite(self.inner.start())

    def on_message(self, sender, msg):
        return self.rewrite(self.inner.dispatch(sender, msg))

    def rewrite(self, sends):
        self.inner.notes.clear()
        return sends


class Equivocator(WrappedParty):
    """When selected, sends one payload to half the parties and another to the rest,
    then tries to certify both."""

    def __init__(self, ctx):
        super().__init__(ctx)
        self.alt = {}
        self.alt_shares = {}

    def rewrite(self, sends):
        self.inner.notes.clear()
        out = []
        n = self.ctx.config.n
        for to, msg in sends:
            if isinstance(msg, VcbcSend) and to is None:
                twin = bytes([msg.payload[0] ^ 0xFF]) + msg.payload[1:]
                tag = vcbc_tag(msg.instance, self.index)
                digest = self.ctx.kit.digest(tag, twin)
                self.alt[msg.instance] = (twin, digest)
                self.alt_shares[msg.instance] = {
                    self.index: sig_share(self.ctx.keys.sig, tag, digest)}
                for dst in range(n):
                    payload = msg.payload if dst < n // 2 or dst == self.index else twin
                    out.append(Send(dst, VcbcSend(msg.instance, self.index, payload)))
            elif isinstance(msg, Propose):
                self.proofs.append((msg.instance, self.index, msg.proof.digest))
                out.append(Send(to, msg))
            else:
                out.append(Send(to, msg))
        return out

    def on_message(self, sender, msg):
        extra = []
        if isinstance(msg, VcbcEcho) and msg.proposer == self.index and msg.instance in self.alt:
            twin, digest = self.alt[msg.instance]
            box = self.alt_shares[msg.instance]
            tag = vcbc_tag(msg.instance, self.index)
            if self.ctx.kit.sig_share_verify(tag, digest, sender, msg.share):
                box[sender] = msg.share
                if len(box) == self.ctx.config.quorum:
                    proof = self.ctx.kit.sig_combine(tag, digest, box.values(), self.ctx.config.quorum)
                    self.proofs.append((msg.instance, self.index, digest))
                    extra.append(Send(None, Propose(msg.instance, self.index, twin, proof)))
        return super().on_message(sender, msg) + extra


class ZeroVoter(WrappedParty):
    """Takes part in every phase but votes 0 in the first round of every agreement."""

    def rewrite(self, sends):
        self.inner.notes.clear()
        out = []
        for to, msg in sends:
            if isinstance(msg, AbbaVote) and msg.round == 1 and msg.bit == 1:
                abba = self.inner.abba
                share = sig_share(self.ctx.keys.sig, abba.tag, abba._vdigest(1, 0))
                msg = AbbaVote(msg.instance, msg.candidate, 1, 0, share)
            out.append(Send(to, msg))
        return out


class OrderAttack(Adversary):
    """Lets only the first honest proposal of each instance circulate in time."""

    def __init__(self, config, kit, seed):
        super().__init__(config, kit, seed)
        self.byzantine = self.pick(config.f)
        self.favored = {}

    def delay(self, env, default):
        if env.kind == "PROPOSE":
            favored = self.favored.setdefault(env.instance, env.src)
            if env.src != favored:
                return WITHHOLD + default
        return default


@dataclass(frozen=True)
class AdversaryStrategy:
    name: str
    params: dict = field(default_factory=dict)

    def build(self, config, kit, seed) -> Adversary:
        return _BUILDERS[self.name](config, kit, seed, **self.params)


def _honest_random(config, kit, seed):
    return Adversary(config, kit, seed)


def _silent(config, kit, seed):
    adv = Adversary(config, kit, seed)
    adv.byzantine = adv.pick(config.f)
    return adv


def _scenario1(config, kit, seed):
    return Withholding(config, kit, seed, lambda c, cfg: c.members[: cfg.f])


def _scenario2(config, kit, seed):
    def targets(c, cfg):
        return [i for i in range(cfg.n) if i not in c][: cfg.f]

    return Withholding(config, kit, seed, targets)


def _scenario3(config, kit, seed):
    adv = Adversary(config, kit, seed)
    adv.byzantine = adv.pick(config.f)
    adv.make_party = lambda index, ctx: ZeroVoter(ctx)
    return adv


def scenario4_targets(config, t, m):
    f, n = config.f, config.n
    if not 1 <= t <= f + 1 or not 2 * f + 1 <= m <= n:
        raise ConfigError(f"scenario4 needs 1 <= t <= f+1 and 2f+1 <= m <= n, got t={t} m={m}")
    silent_members = f + 1 - t
    silent_others = n - m - silent_members
    if silent_others < 0 or n - m > f:
        raise ConfigError(f"scenario4 with t={t}, m={m} is infeasible for n={n}, f={f}")

    def targets(c, cfg):
        others = [i for i in range(cfg.n) if i not in c]
        return list(c.members[:silent_members]) + others[:silent_others]

    return targets


def _scenario4(config, kit, seed, t=1, m=None):
    m = 2 * config.f + 1 if m is None else m
    return Withholding(config, kit, seed, scenario4_targets(config, t, m))


def _equivocator(config, kit, seed):
    adv = Adversary(config, kit, seed)
    adv.byzantine = adv.pick(config.f)
    adv.make_party = lambda index, ctx: Equivocator(ctx)
    return adv


def _worst_order(config, kit, seed):
    return OrderAttack(config, kit, seed)


_BUILDERS = {
    "honest_random": _honest_random,
    "byzantine_silent": _silent,
    "scenario1_silent_committee": _scenario1,
    "scenario2_silent_outsiders": _scenario2,
    "scenario3_all_responsive": _scenario3,
    "scenario4_partial": _scenario4,
    "equivocator": _equivocator,
    "worst_order": _worst_order,
}


def register(name, builder):
    """Add a strategy builder ``builder(config, kit, seed, **params) -> Adversary``."""
    _BUILDERS[name] = builder


def strategy_names() -> list[str]:
    return list(_BUILDERS)


def get_strategy(name: str, **params) -> AdversaryStrategy:
    if name not in _BUILDERS:
        raise ConfigError(f"unknown adversary {name!r}; choose from {', '.join(_BUILDERS)}")
    return AdversaryStrategy(name, params)


def builtin_strategies() -> list[AdversaryStrategy]:
    return [AdversaryStrategy(name) for name in _BUILDERS if name in BUILTIN]


BUILTIN = tuple(_BUILDERS)
