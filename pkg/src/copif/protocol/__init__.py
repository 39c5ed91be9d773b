"""Collaborative PIF state machine and the classic PIF baseline."""
from .state import (
    ALL_RULES,
    CLASSIC_RULES,
    CLEAN,
    CORRECTION_RULES,
    FEEDBACK,
    MERGE_RULES,
    AppMessage,
    Configuration,
    DlptState,
    MessageKind,
    NodeState,
    Phase,
    Rule,
)
from .rules import PRIORITY, RuleNotEnabled, apply_rule, choose_rule, enabled_rules, feedback_correctness
from .messages import deliver_message
from .classic import run_classic_pif

__all__ = [
    "ALL_RULES", "CLASSIC_RULES", "CLEAN", "CORRECTION_RULES", "FEEDBACK", "MERGE_RULES",
    "AppMessage", "Configuration", "DlptState", "MessageKind", "NodeState", "Phase", "Rule",
    "PRIORITY", "RuleNotEnabled", "apply_rule", "choose_rule", "enabled_rules", "feedback_correctness",
    "deliver_message", "run_classic_pif",
]
