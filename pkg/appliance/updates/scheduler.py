"""The crontab entry that drives automatic update checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInterval


@dataclass(frozen=True)
class UpdateSchedule:
    """Check ``k`` fires at ``start + k * interval`` shifted by up to ±jitter.

    Jitter is drawn from ``(seed, epoch, k)`` so a schedule replays exactly,
    and a reboot (new epoch) installs a fresh one.
    """
    interval_s: float
    jitter_fraction: float
    seed: int = 0
    epoch: int = 0
    start: float = 0.0

    def fire_time(self, k: int) -> float:
        offset = 0.0
        if self.jitter_fraction > 0:
            rng = np.random.default_rng([self.seed, self.epoch, k])
            offset = rng.uniform(-self.jitter_fraction, self.jitter_fraction) * self.interval_s
        return self.start + k * self.interval_s + offset

    def firing_times(self, until: float) -> list[float]:
        times = []
        k = 1
        while True:
            t = self.fire_time(k)
            if t > until:
                # Jitter never exceeds half an interval, so later checks are later still.
                return times
            times.append(t)
            k += 1

    def next_after(self, t: float) -> float:
        k = max(1, int((t - self.start) // self.interval_s))
        while self.fire_time(k) <= t:
            k += 1
        return self.fire_time(k)


def schedule_checks(
    interval_s: float,
    jitter_fraction: float,
    seed: int = 0,
    epoch: int = 0,
    start: float = 0.0,
) -> UpdateSchedule:
    if interval_s <= 0:
        raise InvalidInterval("update interval must be positive")
    if not 0 <= jitter_fraction < 0.5:
        raise InvalidInterval("jitter fraction must be in [0, 0.5)")
    return UpdateSchedule(interval_s, jitter_fraction, seed, epoch, start)
