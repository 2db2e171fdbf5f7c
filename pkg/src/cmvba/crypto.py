"""Simulation-grade threshold signatures and common coins.

Shares are keyed BLAKE2b outputs under per-party keys derived from the
master seed.  A combined artifact (coin value or threshold signature) is a
keyed hash under a master key, recomputed by the combiner only after it has
counted ``threshold`` valid shares from distinct issuers.  The combined value
therefore depends on nothing but the master seed and the inputs, so any
qualifying subset of shares yields byte-identical output.

Forgery is impossible inside the simulator because share creation needs the
issuer's :class:`PartyKey` and adversary code only ever receives the keys of
the parties it corrupts, together with the :class:`PublicKit` view.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass, field, replace
from typing import Iterable

from .errors import ConfigError, InsufficientShares, MixedDigests

ROLES = ("coin", "sig")


@dataclass(frozen=True)
class SysConfig:
    n: int
    f: int
    l: int = 32
    lam: int = 32
    master_seed: bytes = bytes(32)

    def __post_init__(self):
        if self.f < 0:
            raise ConfigError(f"f must be non-negative, got {self.f}")
        if self.n < 3 * self.f + 1:
            raise ConfigError(f"need n >= 3f+1, got n={self.n} f={self.f}")
        if not 16 <= self.lam <= 64:
            raise ConfigError(f"lam must lie in [16, 64], got {self.lam}")
        if self.l < 1:
            raise ConfigError(f"l must be positive, got {self.l}")
        if len(self.master_seed) != 32:
            raise ConfigError("master_seed must be 32 bytes")

    @property
    def quorum(self) -> int:
        """n - f; equals 2f+1 when n = 3f+1."""
        return self.n - self.f

    def with_seed(self, master_seed: bytes) -> "SysConfig":
        return replace(self, master_seed=master_seed)

    @classmethod
    def for_n(cls, n: int, f: int | None = None, **kw) -> "SysConfig":
        return cls(n=n, f=(n - 1) // 3 if f is None else f, **kw)


def _mac(key: bytes, size: int, *parts: bytes) -> bytes:
    h = hashlib.blake2b(key=key, digest_size=size)
    for p in parts:
        h.update(len(p).to_bytes(4, "big"))
        h.update(p)
    return h.digest()


def _derive(master: bytes, role: str, index: int) -> bytes:
    return _mac(master, 32, role.encode(), str(index).encode())


@dataclass(frozen=True)
class PartyKey:
    index: int
    role: str
    secret: bytes = field(repr=False)
    lam: int = 32


@dataclass(frozen=True)
class PartyKeys:
    coin: PartyKey
    sig: PartyKey

    @property
    def index(self) -> int:
        return self.coin.index


@dataclass(frozen=True)
class CoinShare:
    tag: bytes
    issuer: int
    share_bytes: bytes


@dataclass(frozen=True)
class SigShare:
    tag: bytes
    digest: bytes
    issuer: int
    share_bytes: bytes


@dataclass(frozen=True)
class Proof:
    tag: bytes
    digest: bytes
    sig_bytes: bytes


@dataclass(frozen=True)
class RandomSeed:
    value: bytes

    @property
    def bit(self) -> int:
        return self.value[0] & 1


def coin_share(party_key: PartyKey, tag: bytes) -> CoinShare:
    if party_key.role != "coin":
        raise ValueError("coin_share needs a coin key")
    return CoinShare(tag, party_key.index, _mac(party_key.secret, party_key.lam, b"cshare", tag))


def sig_share(party_key: PartyKey, tag: bytes, digest: bytes) -> SigShare:
    if party_key.role != "sig":
        raise ValueError("sig_share needs a sig key")
    if len(digest) != party_key.lam:
        raise ValueError(f"digest must be {party_key.lam} bytes")
    return SigShare(tag, digest, party_key.index,
                    _mac(party_key.secret, party_key.lam, b"sshare", tag, digest))


class PublicKit:
    """Verification and combination; the view every party, honest or not, gets."""

    def __init__(self, config: SysConfig):
        self.config = config
        self.lam = config.lam
        master = config.master_seed
        self.__coin_master = _derive(master, "coin-master", 0)
        self.__sig_master = _derive(master, "sig-master", 0)
        self.__keys = {
            role: [_derive(master, role, i) for i in range(config.n)] for role in ROLES
        }
        self._verified: set = set()

    def _party_secret(self, role: str, index: int) -> bytes | None:
        if not isinstance(index, int) or not 0 <= index < self.config.n:
            return None
        return self.__keys[role][index]

    def digest(self, tag: bytes, payload: bytes) -> bytes:
        """Proposal digest bound to both the broadcast tag and the payload."""
        return _mac(b"cmvba-digest", self.lam, tag, payload)

    def coin_share_verify(self, tag: bytes, issuer: int, s) -> bool:
        try:
            if s.tag != tag or s.issuer != issuer:
                return False
            key = ("c", tag, issuer, s.share_bytes)
        except (AttributeError, TypeError):
            return False
        if key in self._verified:
            return True
        secret = self._party_secret("coin", issuer)
        if secret is None or not isinstance(s.share_bytes, bytes):
            return False
        ok = hmac.compare_digest(s.share_bytes, _mac(secret, self.lam, b"cshare", tag))
        if ok:
            self._verified.add(key)
        return ok

    def sig_share_verify(self, tag: bytes, digest: bytes, issuer: int, s) -> bool:
        try:
            if s.tag != tag or s.digest != digest or s.issuer != issuer:
                return False
            key = ("s", tag, digest, issuer, s.share_bytes)
        except (AttributeError, TypeError):
            return False
        if key in self._verified:
            return True
        secret = self._party_secret("sig", issuer)
        if secret is None or not isinstance(s.share_bytes, bytes) or not isinstance(digest, bytes):
            return False
        ok = hmac.compare_digest(s.share_bytes, _mac(secret, self.lam, b"sshare", tag, digest))
        if ok:
            self._verified.add(key)
        return ok

    def _count_coin(self, tag, shares):
        issuers = set()
        for s in shares:
            if self.coin_share_verify(tag, getattr(s, "issuer", None), s):
                issuers.add(s.issuer)
        return len(issuers)

    def coin_toss(self, tag: bytes, shares: Iterable[CoinShare], threshold: int) -> RandomSeed:
        have = self._count_coin(tag, shares)
        if have < threshold:
            raise InsufficientShares(f"{have} valid coin shares for {tag!r}, need {threshold}")
        return RandomSeed(_mac(self.__coin_master, self.lam, b"toss", tag))

    def seed_verify(self, tag: bytes, seed) -> bool:
        """Check a coin value someone else combined (plays the role of the coin's public check)."""
        value = getattr(seed, "value", None)
        if not isinstance(value, bytes):
            return False
        return hmac.compare_digest(value, _mac(self.__coin_master, self.lam, b"toss", tag))

    def sig_combine(self, tag: bytes, digest: bytes, shares: Iterable[SigShare], threshold: int) -> Proof:
        shares = list(shares)
        digests = {getattr(s, "digest", None) for s in shares}
        if len(digests) > 1 or (digests and digest not in digests):
            raise MixedDigests(f"shares for {tag!r} cover {len(digests | {digest})} digests")
        issuers = {s.issuer for s in shares if self.sig_share_verify(tag, digest, s.issuer, s)}
        if len(issuers) < threshold:
            raise InsufficientShares(f"{len(issuers)} valid signature shares for {tag!r}, need {threshold}")
        return Proof(tag, digest, _mac(self.__sig_master, self.lam, b"proof", tag, digest))

    def proof_verify(self, tag: bytes, digest: bytes, p) -> bool:
        try:
            if p.tag != tag or p.digest != digest:
                return False
            key = ("p", tag, digest, p.sig_bytes)
        except (AttributeError, TypeError):
            return False
        if key in self._verified:
            return True
        if not isinstance(p.sig_bytes, bytes) or not isinstance(digest, bytes):
            return False
        ok = hmac.compare_digest(p.sig_bytes, _mac(self.__sig_master, self.lam, b"proof", tag, digest))
        if ok:
            self._verified.add(key)
        return ok


class ThresholdKit(PublicKit):
    """The trusted setup: the public view plus per-party key issuance."""

    def party_keys(self, index: int) -> PartyKeys:
        if not 0 <= index < self.config.n:
            raise ValueError(f"party index {index} out of range")
        lam = self.lam
        return PartyKeys(
            coin=PartyKey(index, "coin", self._party_secret("coin", index), lam),
            sig=PartyKey(index, "sig", self._party_secret("sig", index), lam),
        )

    def public(self) -> PublicKit:
        view = PublicKit.__new__(PublicKit)
        view.__dict__.update(self.__dict__)
        return view
