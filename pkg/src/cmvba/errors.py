"""Exception hierarchy shared across the protocol modules."""


class CmvbaError(Exception):
    pass


class ConfigError(CmvbaError, ValueError):
    pass


class CryptoError(CmvbaError):
    pass


class InsufficientShares(CryptoError):
    pass


class MixedDigests(CryptoError):
    pass


class ProtocolError(CmvbaError):
    pass


class AlreadyStarted(ProtocolError):
    pass


class AlreadySent(ProtocolError):
    pass


class NotCommitteeMember(ProtocolError):
    pass


class UnjustifiedOne(ProtocolError):
    pass


class Exhausted(ProtocolError):
    """Every candidate in the permutation decided 0."""


class DoubleDecide(ProtocolError):
    pass


class InvariantViolation(CmvbaError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class Stalled(CmvbaError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class ScalingViolation(CmvbaError):
    def __init__(self, message, ratio=None):
        super().__init__(message)
        self.ratio = ratio


class LemmaViolation(CmvbaError):
    def __init__(self, lemma, message, trace=None):
        super().__init__(f"{lemma}: {message}")
        self.lemma = lemma
        self.trace = trace
