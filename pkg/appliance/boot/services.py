"""The services a running appliance is allowed to have."""

from __future__ import annotations

import logging

from ..errors import NotFound
from ..media.evanescent import ExecDecision, exec_check
from ..settings import (
    DAEMON_BINARY,
    DAEMON_CONFIG_FILES,
    UPDATE_INTERVAL_S,
    UPDATE_JITTER_FRACTION,
    WATCHDOG_DEADLINE_S,
)
from ..updates.scheduler import UpdateSchedule, schedule_checks
from .config import ApplianceConfig
from .machine import VirtualMachine
from .process import ROOT, ProcessTag, drop_privileges

logger = logging.getLogger(__name__)

ESSENTIAL_SERVICES = ("sshd", "mail", "daemon")
EXTRA_SERVICES_KEY = "SERVICES"


def _daemon_ready(machine: VirtualMachine) -> str | None:
    """None if the daemon can start, else why not."""
    mounts = machine.session.mounts
    missing = [p for p in DAEMON_CONFIG_FILES if not mounts.exists(p)]
    if missing:
        return f"daemon configuration missing ({','.join(missing)})"
    try:
        decision = exec_check(DAEMON_BINARY, mounts, machine.log.listener)
    except NotFound:
        return f"daemon binary {DAEMON_BINARY} missing"
    if decision is not ExecDecision.allowed:
        return f"daemon binary {DAEMON_BINARY} is not executable"
    return None


def start_services(machine: VirtualMachine, config: ApplianceConfig) -> dict[str, list[ProcessTag]]:
    """Start sshd, outbound mail and the daemon; refuse anything else.

    sshd runs privilege-separated: a privileged master that never touches
    the network and an unprivileged child that does.
    """
    log = machine.log
    session = machine.session
    extra = [s for s in config.extra.get(EXTRA_SERVICES_KEY, "").split(",") if s.strip()]
    started: dict[str, list[ProcessTag]] = {}

    for name in extra:
        if name.strip() not in ESSENTIAL_SERVICES:
            logger.warning("Refusing to start non-essential service %s", name)
            log.record("service.refused", {"name": name.strip()})

    master = ProcessTag("sshd", privileged=True, network_capable=False)
    started["sshd"] = [master, drop_privileges(master, "sshd-net")]
    log.record("service.start", {
        "name": "sshd",
        "procs": "sshd,sshd-net",
        "hostkey": config.ssh_host_key_id or "-",
    })

    started["mail"] = [drop_privileges(ROOT, "mail")]
    log.record("service.start", {"name": "mail", "inbound": "false"})

    problem = _daemon_ready(machine)
    if problem is None:
        started["daemon"] = [drop_privileges(ROOT, "daemon")]
        session.daemon_running = True
        log.record("service.start", {"name": "daemon", "binary": DAEMON_BINARY})
        log.record("watchdog.arm", {"deadline_s": WATCHDOG_DEADLINE_S})
    else:
        session.warn(f"running without daemon: {problem}")
        log.record("service.skipped", {"name": "daemon", "reason": problem})

    session.services = started
    return started


def send_mail(machine: VirtualMachine, to: str, subject: str) -> None:
    """Outbound-only mail stub."""
    proc = machine.session.services.get("mail", [drop_privileges(ROOT, "mail")])[0]
    machine.log.record("mail.send", {"proc": proc.process_id, "to": to, "subject": subject})


def install_update_schedule(machine: VirtualMachine) -> UpdateSchedule:
    schedule = schedule_checks(
        UPDATE_INTERVAL_S,
        UPDATE_JITTER_FRACTION,
        seed=machine.seed,
        epoch=machine.state.epoch,
        start=machine.clock.now,
    )
    machine.session.schedule = schedule
    machine.log.record("cron.install", {
        "interval_s": UPDATE_INTERVAL_S,
        "jitter": UPDATE_JITTER_FRACTION,
        "first_s": f"{schedule.fire_time(1):.3f}",
    })
    return schedule
