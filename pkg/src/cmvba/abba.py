"""Biased asynchronous binary agreement with a threshold common coin.

Each round has a VOTE phase and a COMMIT phase.

* VOTE(r, b): a 1 must carry ``rho``, a verifying proof for the candidate's
  proposal.  From round 2 on, a vote also carries the justification for its
  bit: either a commit certificate for ``b`` from round r-1, or an abstain
  certificate from round r-1 together with the round coin equal to ``b``.
* After n-f valid votes: COMMIT(b) with a certificate combined from n-f vote
  shares if they agree on ``b``, otherwise COMMIT(abstain) carrying one vote
  for each bit as evidence of conflict.
* After n-f valid commits: n-f commits for ``b`` decide ``b``; any commit for
  ``b`` moves the estimate to ``b``; if all abstain, the estimate becomes the
  round coin.  The round-1 coin is fixed to 1, which is the bias: when at
  least f+1 honest parties hold ``rho`` no 0-certificate can form in round 1,
  so every honest party enters round 2 with estimate 1 and decides 1 there.

Honest parties vote once per round, so at most one bit can collect n-f votes
in a round; a decision on ``b`` leaves every honest party with estimate ``b``
and no valid justification for the other bit, which gives agreement.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Callable, Optional

from .crypto import PartyKeys, Proof, PublicKit, SysConfig, coin_share, sig_share
from .errors import AlreadyStarted, ProtocolError, UnjustifiedOne
from .messages import AbbaCommit, AbbaDecide, AbbaVote, Send
from .tags import abba_tag, coin_tag

ABSTAIN = None


class AbbaState:
    def __init__(self, config: SysConfig, kit: PublicKit, instance: int, candidate: int,
                 keys: PartyKeys, validate_rho: Callable[[Proof], bool]):
        self.config = config
        self.kit = kit
        self.instance = instance
        self.candidate = candidate
        self.keys = keys
        self.validate_rho = validate_rho
        self.tag = abba_tag(instance, candidate)
        self.quorum = config.quorum
        self.round = 0
        self.estimate: Optional[int] = None
        self.rho: Optional[Proof] = None
        self.votes: dict[int, dict[int, AbbaVote]] = defaultdict(dict)
        self.commits: dict[int, dict[int, AbbaCommit]] = defaultdict(dict)
        self.committed: set[int] = set()
        self.decided: Optional[int] = None
        self.decided_round: Optional[int] = None
        self.evidence: Optional[Proof] = None
        self.sent_votes: list[AbbaVote] = []
        self.dropped = 0
        self._digests: dict = {}

    # digests signed by vote and commit shares
    def _vdigest(self, r, b):
        key = ("V", r, b)
        d = self._digests.get(key)
        if d is None:
            d = self._digests[key] = self.kit.digest(self.tag, f"VOTE|{r}|{b}".encode())
        return d

    def _mdigest(self, r, v):
        key = ("M", r, v)
        d = self._digests.get(key)
        if d is None:
            label = "-" if v is None else str(v)
            d = self._digests[key] = self.kit.digest(self.tag, f"COMMIT|{r}|{label}".encode())
        return d

    def _rho_ok(self, rho) -> bool:
        return rho is not None and self.validate_rho(rho)

    # validation
    def valid_vote(self, sender: int, v) -> bool:
        kit = self.kit
        try:
            r, b = v.round, v.bit
            if v.instance != self.instance or v.candidate != self.candidate or r < 1 or b not in (0, 1):
                return False
        except AttributeError:
            return False
        if not kit.sig_share_verify(self.tag, self._vdigest(r, b), sender, v.share):
            return False
        if b == 1 and not self._rho_ok(v.rho):
            return False
        if r == 1:
            return v.cert is None
        cert = v.cert
        if cert is None:
            return False
        if kit.proof_verify(self.tag, self._vdigest(r - 1, b), cert):
            return True
        if not kit.proof_verify(self.tag, self._mdigest(r - 1, ABSTAIN), cert):
            return False
        if r - 1 == 1:
            return b == 1
        return kit.seed_verify(coin_tag(self.instance, self.candidate, r - 1), v.coin) and v.coin.bit == b

    def valid_commit(self, sender: int, c) -> bool:
        kit = self.kit
        try:
            r, v = c.round, c.value
            if c.instance != self.instance or c.candidate != self.candidate or r < 1 or v not in (0, 1, None):
                return False
        except AttributeError:
            return False
        if not kit.sig_share_verify(self.tag, self._mdigest(r, v), sender, c.share):
            return False
        if r >= 2 and not kit.coin_share_verify(coin_tag(self.instance, self.candidate, r), sender, c.coin_share):
            return False
        if v is ABSTAIN:
            pair = c.conflict
            if not isinstance(pair, tuple) or len(pair) != 2:
                return False
            bits = set()
            for vote in pair:
                issuer = getattr(getattr(vote, "share", None), "issuer", None)
                if getattr(vote, "round", None) != r or not self.valid_vote(issuer, vote):
                    return False
                bits.add(vote.bit)
            return bits == {0, 1}
        if v == 1 and not self._rho_ok(c.rho):
            return False
        return kit.proof_verify(self.tag, self._vdigest(r, v), c.cert)

    def valid_decide(self, d) -> bool:
        try:
            if d.instance != self.instance or d.candidate != self.candidate or d.bit not in (0, 1):
                return False
            if d.bit == 1 and not self._rho_ok(d.rho):
                return False
            return self.kit.proof_verify(self.tag, self._mdigest(d.round, d.bit), d.evidence)
        except AttributeError:
            return False

    # transitions
    def _vote(self, r, b, cert=None, coin=None) -> Send:
        vote = AbbaVote(self.instance, self.candidate, r, b,
                        sig_share(self.keys.sig, self.tag, self._vdigest(r, b)),
                        rho=self.rho if b == 1 else None, cert=cert, coin=coin)
        self.sent_votes.append(vote)
        return Send(None, vote)

    def input(self, bit: int, justification: Optional[Proof] = None) -> list[Send]:
        if self.round:
            raise AlreadyStarted(f"agreement on {self.tag!r} already has an input")
        if bit not in (0, 1):
            raise ValueError("bit must be 0 or 1")
        if bit == 1:
            if not self._rho_ok(justification):
                raise UnjustifiedOne(f"input 1 on {self.tag!r} without a verifying proof")
            self.rho = justification
        self.round = 1
        self.estimate = bit
        out = [self._vote(1, bit)]
        out.extend(self._progress())
        return out

    def _learn_rho(self, rho):
        if self.rho is None and rho is not None:
            self.rho = rho

    def on_message(self, sender: int, msg) -> list[Send]:
        if self.decided is not None:
            return []
        if isinstance(msg, AbbaVote):
            box = self.votes[msg.round]
            if sender in box or not self.valid_vote(sender, msg):
                self.dropped += 1
                return []
            box[sender] = msg
            if msg.bit == 1:
                self._learn_rho(msg.rho)
        elif isinstance(msg, AbbaCommit):
            box = self.commits[msg.round]
            if sender in box or not self.valid_commit(sender, msg):
                self.dropped += 1
                return []
            box[sender] = msg
            if msg.value == 1:
                self._learn_rho(msg.rho)
            elif msg.value is ABSTAIN:
                for v in msg.conflict:
                    if v.bit == 1:
                        self._learn_rho(v.rho)
        elif isinstance(msg, AbbaDecide):
            if not self.valid_decide(msg):
                self.dropped += 1
                return []
            if msg.bit == 1:
                self._learn_rho(msg.rho)
            return self._decide(msg.bit, msg.round, msg.evidence)
        else:
            self.dropped += 1
            return []
        if not self.round:
            return []
        return self._progress()

    def _decide(self, bit, r, evidence) -> list[Send]:
        self.decided = bit
        self.decided_round = r
        self.evidence = evidence
        self.estimate = bit
        return [Send(None, AbbaDecide(self.instance, self.candidate, r, bit, evidence,
                                      self.rho if bit == 1 else None))]

    def _progress(self) -> list[Send]:
        out: list[Send] = []
        q = self.quorum
        kit = self.kit
        while self.decided is None:
            r = self.round
            if r not in self.committed:
                votes = self.votes[r]
                if len(votes) < q:
                    break
                out.append(self._commit(r, votes))
                continue
            commits = self.commits[r]
            if len(commits) < q:
                break
            by_value = defaultdict(list)
            for c in commits.values():
                by_value[c.value].append(c)
            for b in (0, 1):
                if len(by_value[b]) >= q:
                    evidence = kit.sig_combine(self.tag, self._mdigest(r, b),
                                               [c.share for c in by_value[b]], q)
                    out.extend(self._decide(b, r, evidence))
                    return out
            coin = None
            if by_value[0] or by_value[1]:
                first = (by_value[0] or by_value[1])[0]
                b, cert = first.value, first.cert
            else:
                cert = kit.sig_combine(self.tag, self._mdigest(r, ABSTAIN),
                                       [c.share for c in commits.values()], q)
                if r == 1:
                    b = 1
                else:
                    coin = kit.coin_toss(coin_tag(self.instance, self.candidate, r),
                                         [c.coin_share for c in commits.values()], q)
                    b = coin.bit
            if b == 1 and self.rho is None:
                raise ProtocolError(f"estimate 1 on {self.tag!r} without a known proof")
            self.round = r + 1
            self.estimate = b
            out.append(self._vote(r + 1, b, cert=cert, coin=coin))
        return out

    def _commit(self, r, votes) -> Send:
        q = self.quorum
        by_bit = {0: [], 1: []}
        for v in votes.values():
            by_bit[v.bit].append(v)
        cert = conflict = None
        value = ABSTAIN
        for b in (0, 1):
            if len(by_bit[b]) >= q:
                value = b
                cert = self.kit.sig_combine(self.tag, self._vdigest(r, b),
                                            [v.share for v in by_bit[b]], q)
                break
        else:
            conflict = (by_bit[0][0], by_bit[1][0])
        self.committed.add(r)
        cshare = coin_share(self.keys.coin, coin_tag(self.instance, self.candidate, r)) if r >= 2 else None
        commit = AbbaCommit(self.instance, self.candidate, r, value,
                            sig_share(self.keys.sig, self.tag, self._mdigest(r, value)),
                            cert=cert, conflict=conflict, coin_share=cshare,
                            rho=self.rho if value == 1 else None)
        return Send(None, commit)
