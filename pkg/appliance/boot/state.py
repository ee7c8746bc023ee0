"""Boot phases and the legal transitions between them."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from ..errors import IllegalTransition
from .events import BootLog


class BootPhase(str, Enum):
    reset = "Reset"
    phase0 = "Phase0"
    phase1 = "Phase1"
    start = "Start"
    running = "Running"
    hunker_down = "HunkerDown"
    call_for_help = "CallForHelp"


LEGAL_TRANSITIONS: dict[BootPhase, frozenset[BootPhase]] = {
    BootPhase.reset: frozenset({BootPhase.phase0}),
    BootPhase.phase0: frozenset({BootPhase.phase1}),
    BootPhase.phase1: frozenset({BootPhase.start, BootPhase.hunker_down, BootPhase.call_for_help}),
    BootPhase.start: frozenset({BootPhase.running}),
    BootPhase.running: frozenset(),
    BootPhase.hunker_down: frozenset(),
    BootPhase.call_for_help: frozenset(),
}


def is_legal(current: BootPhase, target: BootPhase) -> bool:
    # Any phase may be reset by a reboot.
    return target is BootPhase.reset or target in LEGAL_TRANSITIONS[current]


@dataclass
class BootState:
    phase: BootPhase = BootPhase.reset
    epoch: int = 0
    log: BootLog = field(default_factory=BootLog)
    halted: bool = False
    reason: str = ""

    def advance(self, target: BootPhase, reason: str = "") -> None:
        if not is_legal(self.phase, target):
            raise IllegalTransition(f"{self.phase.value} -> {target.value}")
        if target is BootPhase.reset:
            self.epoch += 1
            self.log.epoch = self.epoch
            self.halted = False
        self.log.record("phase", {"from": self.phase.value, "to": target.value, "reason": reason or "-"})
        self.phase = target
        self.reason = reason

    def halt(self, reason: str) -> None:
        """Stop in the current phase (e.g. phase 0 without storage)."""
        self.halted = True
        self.reason = reason
        self.log.record("halt", {"phase": self.phase.value, "reason": reason})

    @property
    def is_terminal(self) -> bool:
        return self.halted or not LEGAL_TRANSITIONS[self.phase]
