"""The boot pipeline: phase 0 (storage), phase 1 (platform), start (services).

Each phase takes the machine, advances its :class:`BootState` and leaves the
per-epoch artifacts (mount table, evanescent root, plan) in
``machine.session``. :func:`boot_machine` runs the whole sequence and
returns a :class:`BootReport`.
"""

from __future__ import annotations

import logging
import posixpath
from dataclasses import dataclass, field

from ..errors import (
    ApplianceError,
    ConfigError,
    EvanescentFull,
    FloppyNotLocked,
    FormatError,
    NoStorage,
    NotFound,
    PathEscape,
    PermissionDenied,
)
from ..fleet.costs import STAGES, boot_stages
from ..media.evanescent import (
    Backing,
    EvanescentRoot,
    ExecDecision,
    MemoryStore,
    Mount,
    MountTable,
    assemble_evanescent_root,
    exec_check,
    mount_memory_filesystem,
    teardown,
)
from ..media.layout import MountFlags, parse_disklabel, plan_storage_layout, render_disklabel
from ..media.medium import MediumKind, ProbeResult, VirtualMedium, probe_write_lock
from ..packages.manifest import PackageCategory
from ..packages.payload import confine, read_payload
from ..packages.resolver import (
    InstallPlan,
    InstallStep,
    PlanStatus,
    build_valid_digest_list,
    resolve_install_plan,
)
from ..packages.scan import PackagePathEntry, ScanResult, scan_package_path
from ..packages.versions import Ordering, compare_versions, parse_version
from ..settings import (
    CACHE_DIR,
    CONFIG_FILE,
    DISK_CONTENT_DIR,
    DISKLABEL_PATH,
    FLOPPY_MOUNTPOINT,
    FLOPPY_PACKAGE_DIR,
    IMAGE_CONFIG_DIR,
    IMAGE_MOUNTPOINT,
    IMAGE_PACKAGE_DIRS,
    IMAGE_RAMDISK_DIR,
    KEYRING_FILE,
    MFS_MOUNTPOINT,
    RAMDISK_TMP_CAPACITY_BYTES,
    REQUIRED_FILE,
    REVOCATION_CACHE_FILE,
    SYSTEM_DIRS,
    VERIFIER_TOOL,
)
from ..trust.keys import Keyring, parse_keyring
from ..trust.revocation import check_revocation, parse_revocation_list, render_revocation_list
from ..updates.fetcher import UpdateCache
from .config import ApplianceConfig, config_from_values, parse_config_text, render_config
from .machine import BootSession, VirtualMachine
from .operator import PARTITION_KEY, FloppyRequest
from .process import ROOT, drop_privileges
from .services import install_update_schedule, start_services
from .state import BootPhase, BootState
from .trace import media_fingerprint
from .wizard import run_config_wizard, wait_for_floppy

logger = logging.getLogger(__name__)

TMP_DIR = "/tmp"
STAGED_FSTAB = "/tmp/fstab"


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------
@dataclass
class InstallOutcome:
    installed: list[InstallStep] = field(default_factory=list)
    files: int = 0
    executables: list[str] = field(default_factory=list)
    aborted: bool = False
    reason: str = ""


@dataclass
class BootReport:
    epoch: int
    plan: InstallPlan
    durations: dict[str, float]
    warnings: list[str]
    final_phase: BootPhase
    installed: dict[str, str] = field(default_factory=dict)
    reverted: list[str] = field(default_factory=list)
    store_hash: str = ""
    daemon_running: bool = False
    finished_at: float = 0.0

    @property
    def total_seconds(self) -> float:
        return sum(self.durations.values())

    def render(self) -> str:
        lines = [
            f"epoch={self.epoch}",
            f"phase={self.final_phase.value}",
            f"plan={self.plan.describe()}",
        ]
        lines += [f"installed {name}={version}" for name, version in self.installed.items()]
        lines += [f"reverted {note}" for note in self.reverted]
        lines += [f"stage {stage}={self.durations.get(stage, 0.0):.3f}" for stage in STAGES]
        lines.append(f"total_s={self.total_seconds:.3f}")
        lines.append(f"daemon={'running' if self.daemon_running else 'absent'}")
        lines.append(f"store_hash={self.store_hash or '-'}")
        lines += [f"warning {w}" for w in self.warnings]
        return "\n".join(lines) + "\n"


def _charge(machine: VirtualMachine, stage: str, seconds: float) -> None:
    machine.session.durations[stage] = machine.session.durations.get(stage, 0.0) + seconds
    machine.clock.advance(seconds)


def _record_media(machine: VirtualMachine) -> None:
    for medium in machine.media():
        if medium.kind is MediumKind.boot_image or not medium.present:
            continue
        machine.log.record("media.hash", {"medium": medium.medium_id, "hash": media_fingerprint(medium)})


# ---------------------------------------------------------------------------
# Phase 0: storage
# ---------------------------------------------------------------------------
def run_phase0(machine: VirtualMachine) -> BootState:
    """Plan or load the disk layout, turn on swap and stage the fstab."""
    state = machine.state
    log = machine.log
    state.advance(BootPhase.phase0)
    session = machine.session = BootSession(durations={stage: 0.0 for stage in STAGES})
    _charge(machine, "fixed_overhead", machine.cost_model.fixed_overhead_s)

    disks = [d for d in machine.disks if d.present]
    stored = None
    partitioned = bool(disks) and disks[0].exists(DISKLABEL_PATH)
    try:
        if partitioned:
            stored = parse_disklabel(disks[0].read(DISKLABEL_PATH))
        layout = plan_storage_layout(
            [(d.medium_id, d.size_bytes) for d in disks],
            partitioned,
            lambda question: machine.operator.confirm(PARTITION_KEY, question),
            stored,
        )
    except (NoStorage, PermissionDenied, FormatError) as e:
        state.halt(f"{e.code}: {e}")
        return state

    if not partitioned:
        disks[0].write(DISKLABEL_PATH, render_disklabel(layout))
        log.record("disk.partition", {
            "disks": ",".join(d.medium_id for d in disks),
            "content": len(layout.content_filesystems),
        })
    session.layout = layout
    log.record("swap.on", {"device": layout.fstab_entries[0].device, "bytes": layout.swap_bytes})

    tmp = MemoryStore("ramdisk.tmp", RAMDISK_TMP_CAPACITY_BYTES)
    session.mounts.mount(Mount(TMP_DIR, tmp, Backing.evanescent, device="rd0", fstype="ramdisk"))
    session.mounts.write(STAGED_FSTAB, layout.render_fstab().encode())
    log.record("fstab.staged", {"path": STAGED_FSTAB, "entries": len(layout.fstab_entries)})
    _record_media(machine)
    return state


# ---------------------------------------------------------------------------
# Phase 1: the platform
# ---------------------------------------------------------------------------
def _image_problem(image: VirtualMedium | None) -> str | None:
    if image is None or not image.present:
        return "boot image absent"
    if image.kind is not MediumKind.boot_image:
        return f"{image.medium_id} is not a boot image"
    if not image.exists(VERIFIER_TOOL) or not image.is_dir(IMAGE_RAMDISK_DIR):
        return f"{image.medium_id} is not a recognized boot image"
    return None


def _call_for_help(machine: VirtualMachine, reason: str) -> BootState:
    machine.log.record("call_for_help", {"reason": reason})
    machine.operator.tell(f"Cannot continue booting ({reason}). Please call for help.")
    machine.state.advance(BootPhase.call_for_help, reason)
    return machine.state


def _relocate_tmp(mounts: MountTable, log) -> None:
    """Move the ramdisk /tmp into the memory filesystem, keeping its contents."""
    staged = {path: mounts.read(path) for path in mounts.list(TMP_DIR)}
    for path, data in staged.items():
        mounts.write(MFS_MOUNTPOINT + path, data)
    mounts.unmount(TMP_DIR)
    mounts.redirect(TMP_DIR, MFS_MOUNTPOINT + TMP_DIR)
    for path, data in staged.items():
        assert mounts.read(path) == data, f"{path} lost while relocating {TMP_DIR}"
    log.record("tmp.relocated", {"target": MFS_MOUNTPOINT + TMP_DIR, "files": len(staged)})


def _read_text(medium: VirtualMedium | None, path: str) -> str | None:
    if medium is None or not medium.present or not medium.exists(path):
        return None
    return medium.read(path).decode()


def _ensure_floppy(machine: VirtualMachine) -> VirtualMedium:
    if machine.floppy is None:
        machine.floppy = VirtualMedium("floppy0", MediumKind.config_floppy, present=False)
    return machine.floppy


def _load_configuration(machine: VirtualMachine, template: Keyring) -> tuple[ApplianceConfig, Keyring]:
    """Floppy checks, the wizard if needed, then config and keyring from the floppy."""
    log = machine.log
    session = machine.session
    floppy = _ensure_floppy(machine)

    result = probe_write_lock(floppy, log.listener)
    if result is ProbeResult.writable:
        log.record("floppy.refuse", {"medium": floppy.medium_id})
        machine.operator.tell("The configuration floppy is write-enabled; refusing to proceed.")
        wait_for_floppy(floppy, machine.operator, FloppyRequest.write_lock, ProbeResult.locked, log)
        result = ProbeResult.locked

    values = parse_config_text(_read_text(machine.boot_image, f"{IMAGE_CONFIG_DIR}/{CONFIG_FILE}") or "")
    floppy_config = _read_text(floppy, "/" + CONFIG_FILE) if result is ProbeResult.locked else None
    if floppy_config is None:
        config = run_config_wizard(machine.operator, machine.iface, floppy, template, log, machine.seed)
        floppy_config = render_config(config)
    values.update(parse_config_text(floppy_config))
    config = config_from_values(values)

    keyring_text = _read_text(floppy, "/" + KEYRING_FILE)
    if keyring_text is None:
        session.warn(f"{floppy.medium_id} holds no keyring; using the boot image template")
        keyring = template.copy()
    else:
        keyring = parse_keyring(keyring_text, origin_medium=floppy.medium_id)
    return config, keyring


def _revocation_window(machine: VirtualMachine, keyring: Keyring, sources: list[str]) -> None:
    """Bring the interface up with no daemons running, consult revocation sources, take it down."""
    session = machine.session
    disk = machine.first_disk
    cache = UpdateCache(disk) if disk is not None else None
    cached_name = REVOCATION_CACHE_FILE
    if cache is not None and cache.has(cached_name):
        remembered = parse_revocation_list(cache.read(cached_name).decode(), source="cache")
        for key_id in sorted(remembered.revoked_key_ids):
            keyring.revoke(key_id)
    else:
        remembered = None

    machine.iface.raise_interface(session.config.ip_address)
    machine.log.record("net.window", {"daemons": 0, "sources": len(sources)})
    try:
        report = check_revocation(
            keyring, sources, machine.iface, drop_privileges(ROOT, "revocation-check"), machine.clock.now,
        )
    finally:
        machine.iface.lower_interface()
    session.revocation = report
    session.warnings.extend(report.warnings)
    for key_id in report.newly_revoked:
        machine.log.record("key.revoked", {"key": key_id})

    if report.reachable and cache is not None:
        merged = report.merged if remembered is None else report.merged.merge(remembered)
        try:
            cache.put(cached_name, render_revocation_list(merged).encode())
        except ApplianceError as e:
            session.warn(f"cannot remember revocations: {e}")


def parse_required(text: str) -> list[tuple[str, PackageCategory]]:
    """``<name> <Base|Port|Application>`` per line."""
    required = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise FormatError(f"bad required-package line: {raw!r}")
        try:
            required.append((parts[0], PackageCategory(parts[1])))
        except ValueError:
            raise FormatError(f"unknown package category in {raw!r}") from None
    return required


def package_path(machine: VirtualMachine) -> list[PackagePathEntry]:
    """Floppy, then the boot image's package directories, then the disk cache."""
    path = []
    if machine.floppy is not None and machine.floppy.present:
        path.append(PackagePathEntry(machine.floppy, FLOPPY_PACKAGE_DIR))
    path += [PackagePathEntry(machine.boot_image, d) for d in IMAGE_PACKAGE_DIRS]
    if machine.first_disk is not None:
        path.append(PackagePathEntry(machine.first_disk, CACHE_DIR))
    return path


def _reverted(plan: InstallPlan, scan: ScanResult) -> list[str]:
    notes = []
    for step in plan.steps:
        newer = [
            c.version for c in scan.candidates_named(step.name)
            if compare_versions(c.version, step.version) is Ordering.greater
        ]
        if newer:
            best = max(newer, key=parse_version)
            notes.append(f"{step.name} {best} rejected, running {step.version}")
    return notes


def _hunker_down(machine: VirtualMachine, reason: str) -> BootState:
    iface = machine.iface
    if iface.up:
        iface.lower_interface()
    iface.accepting = False
    machine.log.record("hunker_down", {"reason": reason})
    machine.operator.tell(
        f"Hunkering down ({reason}). Add a validating signature to the floppy and reboot."
    )
    _unmount_removables(machine.session.mounts)
    machine.state.advance(BootPhase.hunker_down, reason)
    return machine.state


def _unmount_removables(mounts: MountTable) -> None:
    for mountpoint in (IMAGE_MOUNTPOINT, FLOPPY_MOUNTPOINT):
        mounts.unmount(mountpoint)


def run_phase1(
    machine: VirtualMachine,
    keyring_sources: list[str] | None = None,
    required_packages: list[tuple[str, PackageCategory]] | None = None,
) -> BootState:
    """Verify and install the platform into a fresh evanescent root.

    ``keyring_sources`` are the revocation sources consulted while the
    network is briefly up; ``required_packages`` defaults to the boot
    image's list.
    """
    state = machine.state
    log = machine.log
    session = machine.session
    mounts = session.mounts
    state.advance(BootPhase.phase1)

    problem = _image_problem(machine.boot_image)
    if problem is not None:
        return _call_for_help(machine, problem)
    image = machine.boot_image
    mounts.mount(Mount(
        "/", image, Backing.boot_image, read_only=True,
        source_root=IMAGE_RAMDISK_DIR, device=image.medium_id, fstype="ramdisk",
    ))
    mounts.mount(Mount(
        IMAGE_MOUNTPOINT, image, Backing.boot_image, read_only=True,
        device=image.medium_id, fstype="cd9660",
    ))
    if exec_check(IMAGE_MOUNTPOINT + VERIFIER_TOOL, mounts, log.listener) is not ExecDecision.allowed:
        return _call_for_help(machine, "verifier on the boot image cannot run")

    mount_memory_filesystem(mounts, session.layout, state.epoch)
    _relocate_tmp(mounts, log)

    template_text = _read_text(image, f"{IMAGE_CONFIG_DIR}/{KEYRING_FILE}") or ""
    try:
        template = parse_keyring(template_text, origin_medium=image.medium_id)
        session.config, session.keyring = _load_configuration(machine, template)
    except FloppyNotLocked as e:
        state.halt(f"{e.code}: {e}")
        return state
    except (ConfigError, FormatError) as e:
        return _call_for_help(machine, f"{e.code}: {e}")
    floppy = machine.floppy
    mounts.mount(Mount(
        FLOPPY_MOUNTPOINT, floppy, Backing.persistent, MountFlags.persistent(),
        read_only=True, device="fd0", fstype="msdos",
    ))

    sources = machine.revocation_sources if keyring_sources is None else keyring_sources
    _revocation_window(machine, session.keyring, sources)

    if required_packages is None:
        try:
            required_packages = parse_required(_read_text(image, f"{IMAGE_CONFIG_DIR}/{REQUIRED_FILE}") or "")
        except FormatError as e:
            return _call_for_help(machine, f"{e.code}: {e}")

    scan = scan_package_path(package_path(machine))
    session.scan = scan
    log.record("scan", {
        "manifests": len(scan.manifests),
        "signatures": len(scan.signatures),
        "candidates": len(scan.candidates),
        "orphans": len(scan.orphans),
    })
    valid = build_valid_digest_list(scan, session.keyring)
    session.warnings.extend(valid.warnings)
    _charge(machine, "signature_check", machine.cost_model.signature_check_s)
    log.record("verify", {"digests": len(valid.digests), "algorithms": ",".join(sorted(valid.algorithms)) or "-"})

    plan = resolve_install_plan(required_packages, scan, valid)
    session.plan = plan
    log.record("plan", {
        "status": plan.status.value,
        "steps": ",".join(f"{s.name}-{s.version}@{s.source_medium}" for s in plan.steps) or "-",
        "missing": ",".join(plan.missing) or "-",
    })
    if plan.status is PlanStatus.hunker_down:
        return _hunker_down(machine, f"no valid candidate for {','.join(plan.missing)}")

    root = assemble_evanescent_root(session.layout, SYSTEM_DIRS, mounts, state.epoch)
    session.root = root
    mounts.write("/etc/fstab", mounts.read(STAGED_FSTAB))

    outcome = execute_install_plan(plan, root, mounts, log.listener, machine=machine)
    if outcome.aborted:
        return _hunker_down(machine, f"install aborted: {outcome.reason}")

    _unmount_removables(mounts)
    log.record("phase1.done", {"installed": len(outcome.installed), "files": outcome.files})
    return state


def _swap_in(root: EvanescentRoot, mounts: MountTable, observer) -> None:
    """Redirect every new top-level directory of the store into the namespace."""
    tops = sorted({p.split("/")[1] for p in root.store.tree if p.count("/") >= 2})
    for top in tops:
        path = "/" + top
        if path in mounts.redirections or path == TMP_DIR:
            continue
        mounts.redirect(path, root.store_path(path))
        if observer is not None:
            observer("redirect", {"path": path, "target": root.store_path(path)})


def execute_install_plan(
    plan: InstallPlan,
    root: EvanescentRoot,
    mounts: MountTable | None = None,
    observer=None,
    machine: VirtualMachine | None = None,
) -> InstallOutcome:
    """Unpack every planned payload into the evanescent store, in plan order.

    Base packages go first, then the new directories they created are
    swapped in, then ports and applications. Any payload that is unreadable
    or reaches outside the store aborts the whole install.
    """
    outcome = InstallOutcome()
    if not plan.is_complete:
        outcome.aborted, outcome.reason = True, "plan is not complete"
        return outcome
    if mounts is None:
        mounts = MountTable()
        mounts.mount(Mount(root.mountpoint, root.store, Backing.evanescent, device="swap", fstype="mfs"))

    swapped = False
    base_bytes = other_bytes = 0
    for step in plan.steps:
        if step.category is not PackageCategory.base and not swapped:
            _swap_in(root, mounts, observer)
            swapped = True
        try:
            entries = read_payload(step.payload)
            targets = [confine(root.mountpoint, entry.path) for entry in entries]
            for entry, target in zip(entries, targets):
                mounts.write(target, entry.data)
        except (FormatError, PathEscape, EvanescentFull) as e:
            logger.error("Install of %s %s failed: %s", step.name, step.version, e)
            outcome.aborted, outcome.reason = True, f"{step.name}-{step.version}: {e.code}"
            return outcome
        for entry in entries:
            if entry.executable:
                outcome.executables.append(posixpath.normpath("/" + entry.path))
        outcome.installed.append(step)
        outcome.files += len(entries)
        if step.category is PackageCategory.base:
            base_bytes += len(step.payload)
        else:
            other_bytes += len(step.payload)
        if observer is not None:
            observer("install", {
                "name": step.name,
                "version": step.version,
                "category": step.category.value,
                "source": step.source_medium,
                "files": len(entries),
            })
    _swap_in(root, mounts, observer)

    if machine is not None:
        stages = boot_stages(machine.cost_model, other_bytes)
        if base_bytes:
            _charge(machine, "base_install", stages["base_install"])
        _charge(machine, "package_install", stages["package_install"])

    for path in outcome.executables:
        try:
            decision = exec_check(path, mounts, observer)
        except NotFound:
            decision = ExecDecision.denied_noexec
        if decision is not ExecDecision.allowed:
            outcome.aborted, outcome.reason = True, f"{path} is not executable from the store"
            return outcome
    return outcome


# ---------------------------------------------------------------------------
# Start: services
# ---------------------------------------------------------------------------
def _mount_content(machine: VirtualMachine) -> None:
    session = machine.session
    by_id = {d.medium_id: d for d in machine.disks}
    ffs = [e for e in session.layout.fstab_entries if e.fstype == "ffs"]
    for entry, part in zip(ffs, session.layout.content_filesystems):
        disk = by_id.get(part.medium_id)
        if disk is None:
            session.warn(f"{entry.mountpoint}: disk {part.medium_id} missing")
            continue
        session.mounts.mount(Mount(
            entry.mountpoint, disk, Backing.persistent, MountFlags.persistent(),
            source_root=DISK_CONTENT_DIR, device=entry.device, fstype=entry.fstype,
        ))


def run_start_phase(machine: VirtualMachine, config: ApplianceConfig | None = None) -> BootState:
    """Mount content, start the essential services, arm the watchdog, install the update check."""
    state = machine.state
    session = machine.session
    config = config or session.config
    state.advance(BootPhase.start)
    _mount_content(machine)

    floppy = machine.floppy
    if floppy is not None and probe_write_lock(floppy, machine.log.listener) is ProbeResult.writable:
        wait_for_floppy(floppy, machine.operator, FloppyRequest.write_lock, ProbeResult.locked, machine.log)
    machine.iface.raise_interface(config.ip_address)
    machine.iface.accepting = True

    start_services(machine, config)
    install_update_schedule(machine)
    state.advance(BootPhase.running)
    return state


# ---------------------------------------------------------------------------
# Whole boots
# ---------------------------------------------------------------------------
def reboot_machine(machine: VirtualMachine, reason: str) -> None:
    """Tear the running system down and return to Reset in a new epoch."""
    session = machine.session
    _record_media(machine)
    if session.root is not None:
        teardown(session.root, session.mounts)
    elif session.mounts.mounts:
        for mountpoint in list(session.mounts.mounts):
            source = session.mounts.mounts[mountpoint].source
            if isinstance(source, MemoryStore):
                source.clear()
        session.mounts = MountTable()
    if machine.iface.up:
        machine.iface.lower_interface()
    machine.iface.accepting = True
    machine.log.record("reboot", {"reason": reason})
    machine.state.advance(BootPhase.reset, reason)
    machine.session = BootSession()


def boot_machine(machine: VirtualMachine, reason: str = "power-cycle") -> BootReport:
    """Run one full boot from Reset and report it.

    A machine that has booted before is first rebooted into a new epoch.
    """
    if machine.booted or machine.state.phase is not BootPhase.reset:
        reboot_machine(machine, reason)
    machine.booted = True
    machine.log.record("boot.start", {"machine": machine.machine_id})

    run_phase0(machine)
    if not machine.state.halted:
        run_phase1(machine)
    if not machine.state.halted and machine.state.phase is BootPhase.phase1:
        try:
            run_start_phase(machine)
        except FloppyNotLocked as e:
            machine.state.halt(f"{e.code}: {e}")

    report = build_report(machine)
    _record_media(machine)
    machine.log.record("boot.done", {"phase": report.final_phase.value, "total_s": f"{report.total_seconds:.3f}"})
    if machine.history is not None:
        machine.history.save(machine.machine_id, report)
    return report


def build_report(machine: VirtualMachine) -> BootReport:
    session = machine.session
    plan = session.plan if isinstance(session.plan, InstallPlan) else InstallPlan(
        status=PlanStatus.hunker_down
    )
    warnings = list(session.warnings)
    warnings += [w for w in plan.warnings if w not in warnings]
    if machine.state.halted:
        warnings.append(f"halted: {machine.state.reason}")
    durations = {stage: session.durations.get(stage, 0.0) for stage in STAGES}
    return BootReport(
        epoch=machine.state.epoch,
        plan=plan,
        durations=durations,
        warnings=warnings,
        final_phase=machine.state.phase,
        installed={s.name: s.version for s in plan.steps} if plan.is_complete else {},
        reverted=_reverted(plan, session.scan) if session.scan is not None and plan.is_complete else [],
        store_hash=session.root.tree_hash() if session.root is not None else "",
        daemon_running=session.daemon_running,
        finished_at=machine.clock.now,
    )
