from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from typing import Mapping, Optional

from ..overlay import Overlay
from ..prefix_core import WaveId


class Phase(str, Enum):
    C = "C"
    B = "B"
    FC = "FC"
    FI = "FI"

    def __str__(self) -> str:
        return self.value


FEEDBACK = frozenset({Phase.FC, Phase.FI})


class DlptState(str, Enum):
    UNKNOWN = "Unknown"
    CORRECT = "Correct"
    INCORRECT = "Incorrect"

    def __str__(self) -> str:
        return self.value


class Rule(IntEnum):
    R1 = 1
    R2 = 2
    R3 = 3
    R4 = 4
    R5 = 5
    R6 = 6
    R7 = 7
    R8 = 8
    R9 = 9
    R10 = 10
    R11 = 11
    R12 = 12
    R13 = 13
    R14 = 14
    R15 = 15
    R16 = 16
    R17 = 17
    R18 = 18
    R19 = 19
    R20 = 20

    def __str__(self) -> str:
        return self.name


ALL_RULES = frozenset(Rule)
# single-wave PIF: initiation, broadcast, feedback, completion, cleaning
CLASSIC_RULES = frozenset({Rule.R1, Rule.R3, Rule.R6, Rule.R7, Rule.R8, Rule.R9, Rule.R10, Rule.R11, Rule.R12})
MERGE_RULES = frozenset({Rule.R4, Rule.R5, Rule.R20})
CORRECTION_RULES = frozenset(Rule(i) for i in range(13, 21))


@dataclass(frozen=True, slots=True)
class NodeState:
    """Per-node protocol variables.

    A clean phase always carries no wave and no father; the constructor
    normalizes corrupted clean states to ``(C, NULL, NULL)``.
    ``subscribed_wave`` remembers the wave an Interested message was last sent
    for, so that R2 fires once per (node, wave).
    """

    phase: Phase = Phase.C
    wave: Optional[WaveId] = None
    father: Optional[int] = None
    request_pif: bool = False
    dlpt_state: DlptState = DlptState.UNKNOWN
    list_to_contact: frozenset[int] = frozenset()
    subscribed_wave: Optional[WaveId] = None

    def __post_init__(self) -> None:
        if self.phase is Phase.C:
            object.__setattr__(self, "wave", None)
            object.__setattr__(self, "father", None)
        elif self.wave is None:
            raise ValueError(f"phase {self.phase} needs a wave id")
        if self.phase is not Phase.B and self.subscribed_wave is not None:
            object.__setattr__(self, "subscribed_wave", None)

    @property
    def triple(self) -> tuple[Phase, Optional[WaveId], Optional[int]]:
        return self.phase, self.wave, self.father

    def moved(self, phase: Phase, wave: Optional[WaveId] = None, father: Optional[int] = None, **kw) -> "NodeState":
        return replace(self, phase=phase, wave=wave, father=father, **kw)


CLEAN = NodeState()


class MessageKind(str, Enum):
    INTERESTED = "Interested"
    DLPT_CORRECT = "DlptCorrect"
    DLPT_INCORRECT = "DlptIncorrect"
    CONTACT_FOR_ANSWER = "ContactForAnswer"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True, slots=True)
class AppMessage:
    kind: MessageKind
    from_peer: int
    to_peer: int
    payload: Optional[WaveId] = None

    def __post_init__(self) -> None:
        needs = self.kind in (MessageKind.INTERESTED, MessageKind.CONTACT_FOR_ANSWER)
        if needs != (self.payload is not None):
            raise ValueError(f"{self.kind} message {'needs' if needs else 'takes no'} wave payload")


@dataclass(frozen=True)
class Configuration:
    """Global state: overlay, node states, in-flight messages, recorded verdicts.

    Treat as a value; the mappings are never mutated after construction.
    """

    overlay: Overlay
    states: Mapping[int, NodeState]
    mailbox: tuple[AppMessage, ...] = ()
    answered: Mapping[WaveId, DlptState] = field(default_factory=dict)
    dropped: int = 0

    def __post_init__(self) -> None:
        if set(self.states) != set(self.overlay.nodes):
            raise ValueError("states must cover exactly the overlay's nodes")

    @classmethod
    def clean(cls, overlay: Overlay) -> "Configuration":
        return cls(overlay, {p: CLEAN for p in overlay.nodes})

    def with_states(self, updates: Mapping[int, NodeState]) -> "Configuration":
        states = dict(self.states)
        states.update(updates)
        return replace(self, states=states)

    def with_requests(self, nodes) -> "Configuration":
        return self.with_states({p: replace(self.states[p], request_pif=True) for p in nodes})

    def all_clean(self) -> bool:
        return all(s.phase is Phase.C for s in self.states.values())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Configuration):
            return NotImplemented
        return (
            self.overlay == other.overlay
            and dict(self.states) == dict(other.states)
            and self.mailbox == other.mailbox
            and dict(self.answered) == dict(other.answered)
            and self.dropped == other.dropped
        )
