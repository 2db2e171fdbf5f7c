"""Committee-based multi-valued validated Byzantine agreement, simulated."""

from .adversary import AdversaryStrategy, builtin_strategies, get_strategy, register, strategy_names
from .committee import CommitteeSet, select_committee
from .crypto import PublicKit, SysConfig, ThresholdKit
from .engine import Decision, Party
from .errors import (CmvbaError, ConfigError, InvariantViolation, LemmaViolation, ScalingViolation,
                     Stalled)
from .harness import ExperimentSpec, GoodSetReport, check_lemmas, check_scaling, run_experiment
from .simnet import Trace, run_simulation

__all__ = [
    "AdversaryStrategy", "builtin_strategies", "get_strategy", "register", "strategy_names",
    "CommitteeSet", "select_committee", "PublicKit", "SysConfig", "ThresholdKit",
    "Decision", "Party", "CmvbaError", "ConfigError", "InvariantViolation", "LemmaViolation",
    "ScalingViolation", "Stalled", "ExperimentSpec", "GoodSetReport", "check_lemmas",
    "check_scaling", "run_experiment", "Trace", "run_simulation",
]
