"""Post-boot life of an appliance in simulated time.

Three tasks share the clock once the system is Running: the daemon stub
heartbeats every few seconds, the watchdog reboots the machine if a
heartbeat is more than its deadline late, and the update scheduler fetches
from a random mirror. A watchdog reboot tears the evanescent root down and
replays the full boot pipeline in a new epoch.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field

from ..errors import NoMirrors
from ..media.medium import ProbeResult, probe_write_lock
from ..settings import HEARTBEAT_INTERVAL_S, WATCHDOG_DEADLINE_S
from ..updates.fetcher import FetchReport, UpdateCache, check_and_fetch
from ..updates.mirrors import MirrorSet, pick_mirror
from .machine import VirtualMachine
from .phases import BootReport, boot_machine
from .process import ROOT, drop_privileges
from .services import send_mail
from .state import BootPhase

logger = logging.getLogger(__name__)


def run_update_check(machine: VirtualMachine) -> FetchReport | None:
    """One update check from the running system; None if there is nowhere to check."""
    disk = machine.first_disk
    if disk is None:
        return None
    try:
        mirror = pick_mirror(MirrorSet(tuple(machine.mirrors), machine.seed), machine.update_draws)
    except NoMirrors:
        logger.warning("No mirrors configured for %s", machine.machine_id)
        return None
    machine.update_draws += 1
    proc = drop_privileges(ROOT, "updater")
    return check_and_fetch(mirror, UpdateCache(disk), proc, machine.iface, machine.log)


def fetch_updates(machine: VirtualMachine, address: str) -> FetchReport | None:
    """Run an update check outside a boot, with the interface up only for the fetch.

    The configuration floppy must probe write-locked first.
    """
    floppy = machine.floppy
    if floppy is not None and probe_write_lock(floppy, machine.log.listener) is ProbeResult.writable:
        machine.log.record("floppy.refuse", {"medium": floppy.medium_id})
        return None
    was_up = machine.iface.up
    if not was_up:
        machine.iface.raise_interface(address)
    try:
        return run_update_check(machine)
    finally:
        if not was_up:
            machine.iface.lower_interface()


@dataclass
class RuntimeReport:
    until: float
    heartbeats: int = 0
    watchdog_reboots: int = 0
    update_checks: int = 0
    fetched_files: int = 0
    boots: list[BootReport] = field(default_factory=list)


class ApplianceRuntime:
    """Discrete-event loop over the three post-boot tasks.

    ``hang_at`` stops the daemon from heartbeating at that simulated time
    (once), which the watchdog must notice.
    """

    def __init__(self, machine: VirtualMachine, hang_at: float | None = None, max_reboots: int = 10):
        self.machine = machine
        self.hang_at = hang_at
        self.max_reboots = max_reboots
        self._queue: list[tuple[float, int, str, int]] = []
        self._seq = 0
        self._last_heartbeat = 0.0
        self._hung = False

    def _push(self, t: float, kind: str) -> None:
        heapq.heappush(self._queue, (t, self._seq, kind, self.machine.state.epoch))
        self._seq += 1

    def _arm_watchdog(self, heartbeat: float) -> None:
        # The timer polls once per heartbeat interval; the first poll past the deadline expires.
        self._push(heartbeat + WATCHDOG_DEADLINE_S + HEARTBEAT_INTERVAL_S, "watchdog")

    def _arm(self) -> None:
        """Schedule the tasks of the epoch that just booted."""
        machine = self.machine
        if machine.state.phase is not BootPhase.running:
            return
        now = machine.clock.now
        if machine.session.daemon_running:
            self._last_heartbeat = now
            self._push(now + HEARTBEAT_INTERVAL_S, "heartbeat")
            self._arm_watchdog(now)
        if machine.session.schedule is not None:
            self._push(machine.session.schedule.next_after(now), "update")

    def run(self, duration_s: float) -> RuntimeReport:
        machine = self.machine
        until = machine.clock.now + duration_s
        report = RuntimeReport(until)
        self._arm()

        while self._queue and self._queue[0][0] <= until:
            t, _, kind, epoch = heapq.heappop(self._queue)
            if epoch != machine.state.epoch:
                continue
            machine.clock.advance(max(0.0, t - machine.clock.now))

            if kind == "heartbeat":
                if self.hang_at is not None and t >= self.hang_at:
                    machine.log.record("daemon.hang", {})
                    self.hang_at = None
                    self._hung = True
                    continue
                if self._hung:
                    continue
                self._last_heartbeat = t
                report.heartbeats += 1
                machine.log.record("heartbeat", {"proc": "daemon"})
                self._push(t + HEARTBEAT_INTERVAL_S, "heartbeat")
                self._arm_watchdog(t)

            elif kind == "watchdog":
                if t <= self._last_heartbeat + WATCHDOG_DEADLINE_S:
                    continue
                machine.log.record("watchdog.expired", {"last_heartbeat": f"{self._last_heartbeat:.3f}"})
                if report.watchdog_reboots >= self.max_reboots:
                    logger.error("%s: watchdog reboot limit reached", machine.machine_id)
                    break
                report.watchdog_reboots += 1
                self._hung = False
                boot = boot_machine(machine, reason="watchdog")
                report.boots.append(boot)
                if machine.state.phase is BootPhase.running:
                    send_mail(machine, "admin", f"{machine.machine_id} rebooted by watchdog")
                self._arm()

            elif kind == "update":
                fetch = run_update_check(machine)
                report.update_checks += 1
                if fetch is not None:
                    report.fetched_files += fetch.files
                schedule = machine.session.schedule
                if schedule is not None:
                    self._push(schedule.next_after(t), "update")

        if machine.clock.now < until:
            machine.clock.advance(until - machine.clock.now)
        return report
