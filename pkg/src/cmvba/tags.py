"""Byte layout of the tags that scope shares, proofs and coins.

Every tag is ASCII: ``PREFIX|INSTANCE`` optionally followed by ``|PARTY``.
Round coins of the binary agreement carry one more field, the round:
``COIN|INSTANCE|CANDIDATE|ROUND``.  Examples::

    b"CS|3"          committee-selection coin, instance 3
    b"VCBC|3|1"      broadcast of party 1's proposal in instance 3
    b"PERM|3"        permutation coin, instance 3
    b"ABBA|3|1"      binary agreement on candidate 1, instance 3
    b"COIN|3|1|2"    round-2 coin of that agreement
"""

PREFIXES = ("CS", "VCBC", "PERM", "ABBA", "COIN")


def make_tag(prefix: str, instance: int, *fields: int) -> bytes:
    if prefix not in PREFIXES:
        raise ValueError(f"unknown tag prefix {prefix!r}")
    parts = [prefix, str(int(instance))]
    parts.extend(str(int(x)) for x in fields)
    return "|".join(parts).encode("ascii")


def parse_tag(tag: bytes) -> tuple[str, int, tuple[int, ...]]:
    prefix, *rest = tag.decode("ascii").split("|")
    if prefix not in PREFIXES or not rest:
        raise ValueError(f"malformed tag {tag!r}")
    numbers = tuple(int(x) for x in rest)
    return prefix, numbers[0], numbers[1:]


def cs_tag(instance: int) -> bytes:
    return make_tag("CS", instance)


def vcbc_tag(instance: int, proposer: int) -> bytes:
    return make_tag("VCBC", instance, proposer)


def perm_tag(instance: int) -> bytes:
    return make_tag("PERM", instance)


def abba_tag(instance: int, candidate: int) -> bytes:
    return make_tag("ABBA", instance, candidate)


def coin_tag(instance: int, candidate: int, round_: int) -> bytes:
    return make_tag("COIN", instance, candidate, round_)
