"""Structured boot log collection."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field


@dataclass(frozen=True)
class BootEvent:
    """One record of the boot log."""
    epoch: int
    t: float
    event: str
    detail: dict[str, str] = field(default_factory=dict)

    def render(self) -> str:
        detail = ";".join(f"{k}={_clean(v)}" for k, v in self.detail.items())
        return f"epoch={self.epoch} t={self.t:.3f} event={self.event} detail={detail or '-'}"

    @classmethod
    def parse(cls, line: str) -> BootEvent:
        head, _, detail = line.partition(" detail=")
        fields = dict(part.split("=", 1) for part in head.split())
        pairs = {}
        if detail and detail != "-":
            for item in detail.split(";"):
                key, _, value = item.partition("=")
                pairs[key] = value
        return cls(int(fields["epoch"]), float(fields["t"]), fields["event"], pairs)


def _clean(value: object) -> str:
    return str(value).replace(";", ",").replace("\n", " ")


class SimClock:
    """Simulated seconds since the machine was first powered on."""

    def __init__(self, start: float = 0.0):
        self.now = start

    def advance(self, seconds: float) -> float:
        if seconds < 0:
            raise ValueError("clock cannot run backwards")
        self.now += seconds
        return self.now


class BootLog:
    """Thread-safe collector of boot events.

    The daemon stub, watchdog and update scheduler may all append once the
    system is running, so every access is lock-guarded.
    """

    def __init__(self, clock: SimClock | None = None, max_history: int = 1_000_000):
        self.clock = clock or SimClock()
        self.epoch = 0
        self._events: list[BootEvent] = []
        self._lock = threading.Lock()
        self._max_history = max_history

    def record(self, event: str, detail: dict | None = None, t: float | None = None) -> BootEvent:
        entry = BootEvent(
            self.epoch,
            self.clock.now if t is None else t,
            event,
            {k: _clean(v) for k, v in (detail or {}).items()},
        )
        with self._lock:
            self._events.append(entry)
            if len(self._events) > self._max_history:
                self._events = self._events[-self._max_history:]
        return entry

    def listener(self, event: str, detail: dict) -> None:
        """Adapter matching the observer signature used by media and network."""
        self.record(event, detail)

    def get_all_events(self) -> list[BootEvent]:
        with self._lock:
            return list(self._events)

    def get_events(self, event: str | None = None, epoch: int | None = None) -> list[BootEvent]:
        with self._lock:
            return [
                e for e in self._events
                if (event is None or e.event == event) and (epoch is None or e.epoch == epoch)
            ]

    def get_recent(self, n: int = 50) -> list[BootEvent]:
        with self._lock:
            return self._events[-n:]

    def render(self, epoch: int | None = None) -> str:
        return "".join(e.render() + "\n" for e in self.get_events(epoch=epoch))

    def clear(self) -> None:
        with self._lock:
            self._events.clear()
