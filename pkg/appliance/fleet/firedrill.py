"""Firedrill: publish a patch to a simulated fleet and watch it roll out.

At t=0 the patch is published to the mirrors and every site is mailed the
upgrade instructions. Each administrator acts after a delay drawn from the
scenario's response distribution: run the update check, then reboot.
Appliances also pick the patch up passively when a scheduled check fetches
it and a later spontaneous reboot installs it.

Boots are real: each distinct update-cache content is booted once through
the full boot pipeline on a desk appliance and the outcome (which daemon
version runs) is shared by every appliance whose cache holds the same files.
"""

from __future__ import annotations

import hashlib
import heapq
import logging
from dataclasses import dataclass, field

import numpy as np

from ..boot.events import BootLog
from ..boot.phases import boot_machine
from ..boot.process import ROOT, drop_privileges
from ..boot.state import BootPhase
from ..media.medium import MediumKind, VirtualMedium
from ..release.desk import make_machine, make_network, make_release, patch_bundle
from ..release.publish import Mailer, publish_and_notify
from ..simnet import NetworkInterface, SimNetwork
from ..updates.fetcher import UpdateCache, check_and_fetch
from ..updates.mirrors import MirrorSet, pick_mirror
from ..updates.scheduler import UpdateSchedule, schedule_checks
from .analyzer import summarize_upgrades
from .costs import boot_duration
from .scenario import FleetScenario

logger = logging.getLogger(__name__)

HOUR = 3600.0


@dataclass(frozen=True)
class BootOutcome:
    phase: BootPhase
    daemon_version: str | None
    reverted: bool


@dataclass
class RolloutCurve:
    """Fraction of the fleet running the patch, sampled at fixed steps."""
    samples: list[tuple[float, float]]
    upgrade_hours: np.ndarray = field(repr=False)

    def fraction_at(self, hours: float) -> float:
        n = len(self.upgrade_hours)
        if n == 0:
            return 0.0
        done = np.sort(self.upgrade_hours[~np.isnan(self.upgrade_hours)])
        return float(np.searchsorted(done, hours, side="right") / n)

    def render(self) -> str:
        return "".join(f"{h:g} {f:.4f}\n" for h, f in self.samples)


@dataclass
class FiredrillResult:
    scenario: FleetScenario
    curve: RolloutCurve
    trace: list[str]
    reverted: int = 0
    unreachable_mirrors: list[str] = field(default_factory=list)
    real_boots: int = 0

    def render_trace(self) -> str:
        return "".join(line + "\n" for line in self.trace)

    def summary(self) -> dict:
        summary = summarize_upgrades(self.curve.upgrade_hours)
        summary["reverted"] = self.reverted
        return summary


@dataclass
class _Appliance:
    index: int
    cache: UpdateCache
    iface: NetworkInterface
    mirrors: MirrorSet
    rng: np.random.Generator
    schedule: UpdateSchedule
    epoch: int = 0
    draws: int = 0
    running: str | None = None
    upgraded_at: float = float("nan")


class _BootOracle:
    """Boots one desk appliance per distinct cache content."""

    def __init__(self, scenario: FleetScenario, release, network: SimNetwork, mirrors: list[str]):
        self.scenario = scenario
        self.release = release
        self.network = network
        self.mirrors = mirrors
        self._memo: dict[str, BootOutcome] = {}

    @property
    def boots(self) -> int:
        return len(self._memo)

    def outcome(self, cache: UpdateCache) -> BootOutcome:
        h = hashlib.sha256()
        for name in cache.names():
            h.update(name.encode() + b"\0" + hashlib.sha256(cache.read(name)).digest())
        key = h.hexdigest()
        if key not in self._memo:
            machine = make_machine(
                self.release, self.network, self.mirrors,
                machine_id=f"probe{len(self._memo)}", seed=self.scenario.seed,
                cost_model=self.scenario.boot_cost,
            )
            probe_cache = UpdateCache(machine.first_disk)
            for name in cache.names():
                probe_cache.put(name, cache.read(name))
            report = boot_machine(machine)
            self._memo[key] = BootOutcome(
                report.final_phase, report.installed.get("daemon"), bool(report.reverted),
            )
            logger.info("Cache %s boots to %s", key[:12], self._memo[key])
        return self._memo[key]


def simulate_firedrill(scenario: FleetScenario) -> FiredrillResult:
    """Run one firedrill; identical scenarios give identical traces."""
    mirrors = [f"mirror{i}" for i in range(scenario.mirror_count)]
    network = make_network(mirrors, down=mirrors[: scenario.dead_mirrors])
    release = make_release(seed=scenario.seed)
    oracle = _BootOracle(scenario, release, network, mirrors)
    boot_s = boot_duration(scenario.boot_cost, scenario.package_bytes)
    interval_s = scenario.check_interval_h * HOUR
    trace: list[str] = []

    def emit(t: float, who: object, event: str, **detail: object) -> None:
        extra = "".join(f" {k}={v}" for k, v in detail.items())
        trace.append(f"t={t / HOUR:.6f} appliance={who} event={event}{extra}")

    initial = oracle.outcome(UpdateCache(VirtualMedium("empty", MediumKind.hard_disk)))
    appliances = []
    for i, seq in enumerate(np.random.SeedSequence(scenario.seed).spawn(scenario.n_appliances)):
        rng = np.random.default_rng(seq)
        mirror_seed = int(seq.generate_state(1)[0])
        # Appliances booted at unrelated times before the drill: phase-shift their schedules.
        start = -float(rng.uniform(0.0, interval_s))
        appliances.append(_Appliance(
            index=i,
            cache=UpdateCache(VirtualMedium(f"wd0.fleet{i}", MediumKind.hard_disk)),
            iface=network.attach(f"fleet{i}", up=True),
            mirrors=MirrorSet(tuple(mirrors), mirror_seed),
            rng=rng,
            schedule=schedule_checks(interval_s, scenario.check_jitter, mirror_seed, 0, start),
            running=initial.daemon_version,
        ))

    drill_log = BootLog()
    mailer = Mailer(drill_log)
    bundle = patch_bundle(release, scenario.patch_version, tampered=scenario.tampered)
    published = publish_and_notify(
        MirrorSet(tuple(mirrors), scenario.seed), bundle, [f"fleet{a.index}" for a in appliances],
        mailer, network, log=drill_log,
    )
    for mirror in published.published:
        emit(0.0, "-", "publish", mirror=mirror, files=len(bundle))
    for mirror in published.unreachable:
        emit(0.0, "-", "publish.failed", mirror=mirror)

    # Event times are seconds since publication; hours appear only in the output.
    queue: list[tuple[float, int, str, int, int]] = []
    seq_no = 0

    def push(t: float, kind: str, appliance: _Appliance) -> None:
        nonlocal seq_no
        heapq.heappush(queue, (t, seq_no, kind, appliance.index, appliance.epoch))
        seq_no += 1

    by_site = {f"fleet{a.index}": a for a in appliances}
    for notification in mailer.outbox:
        appliance = by_site[notification.site]
        delay = scenario.sample_response(appliance.rng)
        push(delay * HOUR, "admin", appliance)
        push(appliance.schedule.next_after(0.0), "check", appliance)
        push(float(appliance.rng.exponential(scenario.reboot_mean_h)) * HOUR, "reboot", appliance)

    proc = drop_privileges(ROOT, "updater")

    def check(t: float, appliance: _Appliance) -> bool:
        mirror = pick_mirror(appliance.mirrors, appliance.draws)
        appliance.draws += 1
        report = check_and_fetch(mirror, appliance.cache, proc, appliance.iface)
        emit(t, appliance.index, "check", mirror=mirror, reachable=str(report.reachable).lower(),
             fetched=report.files)
        return report.reachable

    def reboot(t: float, appliance: _Appliance, reason: str) -> None:
        appliance.epoch += 1
        emit(t, appliance.index, "reboot", reason=reason)
        push(t + boot_s, "booted", appliance)

    reverted: set[int] = set()
    horizon_s = scenario.horizon_h * HOUR
    while queue and queue[0][0] <= horizon_s:
        t, _, kind, index, epoch = heapq.heappop(queue)
        appliance = appliances[index]
        if kind in ("check", "booted") and epoch != appliance.epoch:
            continue

        if kind == "admin":
            if check(t, appliance):
                reboot(t, appliance, "admin")
            else:
                push(t + interval_s, "admin", appliance)
        elif kind == "check":
            check(t, appliance)
            push(appliance.schedule.next_after(t), "check", appliance)
        elif kind == "reboot":
            reboot(t, appliance, "spontaneous")
            push(t + float(appliance.rng.exponential(scenario.reboot_mean_h)) * HOUR, "reboot", appliance)
        elif kind == "booted":
            outcome = oracle.outcome(appliance.cache)
            appliance.running = outcome.daemon_version
            appliance.schedule = schedule_checks(
                interval_s, scenario.check_jitter, appliance.mirrors.rng_seed, appliance.epoch, t,
            )
            push(appliance.schedule.next_after(t), "check", appliance)
            if outcome.reverted:
                reverted.add(appliance.index)
            emit(t, appliance.index, "booted", phase=outcome.phase.value,
                 daemon=outcome.daemon_version or "-", reverted=str(outcome.reverted).lower())
            if outcome.daemon_version == scenario.patch_version and np.isnan(appliance.upgraded_at):
                appliance.upgraded_at = t / HOUR
                emit(t, appliance.index, "upgraded", version=scenario.patch_version)

    upgrade_hours = np.array([a.upgraded_at for a in appliances], dtype=float)
    curve = RolloutCurve([], upgrade_hours)
    steps = int(np.floor(scenario.horizon_h / scenario.sample_step_h + 1e-9))
    curve.samples = [
        (k * scenario.sample_step_h, curve.fraction_at(k * scenario.sample_step_h)) for k in range(steps + 1)
    ]
    logger.info(
        "Firedrill over %d appliances: %.4f upgraded at horizon, %d real boots",
        scenario.n_appliances, curve.fraction_at(scenario.horizon_h), oracle.boots,
    )
    return FiredrillResult(
        scenario=scenario,
        curve=curve,
        trace=trace,
        reverted=len(reverted),
        unreachable_mirrors=published.unreachable,
        real_boots=oracle.boots,
    )
