"""The human at the console: scripted for tests, interactive for the CLI."""

from __future__ import annotations

import logging
from enum import Enum
from typing import Callable, Protocol

from ..errors import ConfigError
from ..media.medium import VirtualMedium

logger = logging.getLogger(__name__)

YES = frozenset({"y", "yes", "true", "1"})

# Scripted answer keys that are not wizard fields
PARTITION_KEY = "PARTITION"
FLOPPY_LOCK_AFTER_KEY = "FLOPPY_LOCK_AFTER"


class FloppyRequest(str, Enum):
    insert_writable = "insert_writable"
    write_lock = "write_lock"


class Operator(Protocol):
    def confirm(self, key: str, question: str) -> bool: ...
    def ask(self, key: str, prompt: str) -> str: ...
    def tell(self, message: str) -> None: ...
    def handle_floppy(self, floppy: VirtualMedium, request: FloppyRequest) -> None: ...


def apply_floppy_request(floppy: VirtualMedium, request: FloppyRequest) -> None:
    """Carry out the physical action: insert a writable disk or flip its tab."""
    if request is FloppyRequest.insert_writable:
        floppy.present = True
        floppy.write_locked = False
    else:
        floppy.write_locked = True


def parse_answers(text: str) -> dict[str, list[str]]:
    """``KEY=VALUE`` lines; a repeated key queues answers for re-prompts."""
    answers: dict[str, list[str]] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"answers line is not KEY=VALUE: {raw!r}")
        answers.setdefault(key.strip(), []).append(value.strip())
    return answers


class ScriptedOperator:
    """Answers prompts from a prepared answer queue.

    ``FLOPPY_LOCK_AFTER`` is the number of write-lock requests the operator
    ignores before flipping the tab (``never`` to never do it).
    """

    def __init__(self, answers: dict[str, list[str]] | None = None):
        self._answers = {k: list(v) for k, v in (answers or {}).items()}
        self.transcript: list[str] = []
        lock_after = self._answers.get(FLOPPY_LOCK_AFTER_KEY, ["0"])[0]
        self._lock_after = None if lock_after == "never" else int(lock_after)
        self._lock_requests = 0

    @classmethod
    def from_text(cls, text: str) -> ScriptedOperator:
        return cls(parse_answers(text))

    def confirm(self, key: str, question: str) -> bool:
        self.transcript.append(question)
        queue = self._answers.get(key)
        answer = queue.pop(0) if queue else "no"
        return answer.lower() in YES

    def ask(self, key: str, prompt: str) -> str:
        self.transcript.append(prompt)
        queue = self._answers.get(key)
        if not queue:
            raise ConfigError(f"no scripted answer left for {key}")
        return queue.pop(0)

    def tell(self, message: str) -> None:
        logger.info("console: %s", message)
        self.transcript.append(message)

    def handle_floppy(self, floppy: VirtualMedium, request: FloppyRequest) -> None:
        if request is FloppyRequest.write_lock:
            self._lock_requests += 1
            if self._lock_after is None or self._lock_requests <= self._lock_after:
                return
        apply_floppy_request(floppy, request)


class InteractiveOperator:
    """Console prompts on stdin/stdout."""

    def __init__(
        self,
        input_fn: Callable[[str], str] = input,
        output_fn: Callable[[str], None] = print,
    ):
        self._input = input_fn
        self._output = output_fn

    def confirm(self, key: str, question: str) -> bool:
        return self._input(f"{question} [y/N] ").strip().lower() in YES

    def ask(self, key: str, prompt: str) -> str:
        return self._input(f"{prompt}: ").strip()

    def tell(self, message: str) -> None:
        self._output(message)

    def handle_floppy(self, floppy: VirtualMedium, request: FloppyRequest) -> None:
        if request is FloppyRequest.insert_writable:
            self._input("Insert a write-enabled floppy and press Enter ")
        else:
            self._input("Write-lock the floppy and press Enter ")
        apply_floppy_request(floppy, request)
