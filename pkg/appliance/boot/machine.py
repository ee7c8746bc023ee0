"""A virtual appliance: its media, its network attachment and its console.

Serialized as a directory::

    machine.txt         KEY=VALUE machine settings
    answers.txt         scripted console answers (optional)
    media/<id>/         one directory per medium (see media.medium)
    net/<endpoint>/     mirrors, revocation sources and DNS servers
    boot.log            structured boot log, appended
    history.db          boot reports
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigError, FormatError
from ..fleet.costs import BootCostModel
from ..media.evanescent import EvanescentRoot, MountTable
from ..media.layout import StorageLayout
from ..media.medium import MediumKind, VirtualMedium, load_medium, save_medium
from ..simnet import NetworkInterface, SimNetwork
from ..trust.keys import Keyring
from ..updates.mirrors import register_mirror_dir, save_mirror_dir
from .config import ApplianceConfig
from .events import BootLog, SimClock
from .history import HISTORY_FILE, BootHistory
from .operator import Operator, ScriptedOperator
from .state import BootState

logger = logging.getLogger(__name__)

MACHINE_FILE = "machine.txt"
ANSWERS_FILE = "answers.txt"
LOG_FILE = "boot.log"
MEDIA_DIR = "media"
NET_DIR = "net"


@dataclass
class BootSession:
    """Everything that exists only for the lifetime of one epoch."""
    mounts: MountTable = field(default_factory=MountTable)
    layout: StorageLayout | None = None
    root: EvanescentRoot | None = None
    config: ApplianceConfig | None = None
    keyring: Keyring | None = None
    plan: object | None = None
    scan: object | None = None
    revocation: object | None = None
    durations: dict[str, float] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    services: dict[str, list] = field(default_factory=dict)
    schedule: object | None = None
    daemon_running: bool = False

    def warn(self, message: str) -> None:
        logger.warning(message)
        self.warnings.append(message)


@dataclass
class VirtualMachine:
    machine_id: str
    boot_image: VirtualMedium | None = None
    floppy: VirtualMedium | None = None
    disks: list[VirtualMedium] = field(default_factory=list)
    network: SimNetwork = field(default_factory=SimNetwork)
    operator: Operator = field(default_factory=ScriptedOperator)
    mirrors: list[str] = field(default_factory=list)
    revocation_sources: list[str] = field(default_factory=list)
    seed: int = 0
    cost_model: BootCostModel = field(default_factory=BootCostModel.calibrated)
    log: BootLog = field(default_factory=BootLog)
    history: BootHistory | None = None
    update_draws: int = 0
    booted: bool = False

    def __post_init__(self) -> None:
        self.state = BootState(log=self.log, epoch=self.log.epoch)
        self.iface: NetworkInterface = self.network.attach(self.machine_id, listener=self.log.listener)
        self.session = BootSession()
        self._flushed = 0

    @property
    def clock(self) -> SimClock:
        return self.log.clock

    @property
    def first_disk(self) -> VirtualMedium | None:
        return self.disks[0] if self.disks else None

    def media(self) -> list[VirtualMedium]:
        out = [m for m in (self.boot_image, self.floppy) if m is not None]
        return out + list(self.disks)


# ---------------------------------------------------------------------------
# Directory form
# ---------------------------------------------------------------------------
def _read_kv(path: Path) -> dict[str, str]:
    values = {}
    for raw in path.read_text().splitlines():
        line = raw.strip()
        if line and not line.startswith("#"):
            key, sep, value = line.partition("=")
            if not sep:
                raise FormatError(f"{path}: {raw!r} is not KEY=VALUE")
            values[key.strip()] = value.strip()
    return values


def _split(value: str) -> list[str]:
    return [v for v in (s.strip() for s in value.split(",")) if v]


def load_machine(directory: Path, operator: Operator | None = None) -> VirtualMachine:
    directory = Path(directory)
    machine_file = directory / MACHINE_FILE
    if not machine_file.is_file():
        raise ConfigError(f"{directory} is not a machine directory (no {MACHINE_FILE})")
    values = _read_kv(machine_file)

    boot_image = floppy = None
    disks = []
    media_root = directory / MEDIA_DIR
    if media_root.is_dir():
        for medium_dir in sorted(p for p in media_root.iterdir() if p.is_dir()):
            medium = load_medium(medium_dir)
            if medium.kind is MediumKind.boot_image:
                boot_image = medium
            elif medium.kind is MediumKind.config_floppy:
                floppy = medium
            else:
                disks.append(medium)

    network = SimNetwork()
    net_root = directory / NET_DIR
    if net_root.is_dir():
        for endpoint_dir in sorted(p for p in net_root.iterdir() if p.is_dir()):
            register_mirror_dir(network, endpoint_dir)

    if operator is None:
        answers = directory / ANSWERS_FILE
        operator = ScriptedOperator.from_text(answers.read_text()) if answers.is_file() else ScriptedOperator()

    log = BootLog(SimClock(float(values.get("CLOCK", "0"))))
    log.epoch = int(values.get("EPOCH", "0"))
    machine = VirtualMachine(
        machine_id=values.get("MACHINE_ID", directory.name),
        boot_image=boot_image,
        floppy=floppy,
        disks=disks,
        network=network,
        operator=operator,
        mirrors=_split(values.get("MIRRORS", "")),
        revocation_sources=_split(values.get("REVOCATION_SOURCES", "")),
        seed=int(values.get("SEED", "0")),
        log=log,
        history=BootHistory(directory / HISTORY_FILE),
        update_draws=int(values.get("UPDATE_DRAWS", "0")),
        booted=values.get("BOOTED", "0") == "1",
    )
    return machine


def save_machine(machine: VirtualMachine, directory: Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / MACHINE_FILE).write_text(
        f"MACHINE_ID={machine.machine_id}\n"
        f"SEED={machine.seed}\n"
        f"MIRRORS={','.join(machine.mirrors)}\n"
        f"REVOCATION_SOURCES={','.join(machine.revocation_sources)}\n"
        f"CLOCK={machine.clock.now!r}\n"
        f"EPOCH={machine.state.epoch}\n"
        f"BOOTED={int(machine.booted)}\n"
        f"UPDATE_DRAWS={machine.update_draws}\n"
    )
    for medium in machine.media():
        save_medium(medium, directory / MEDIA_DIR / medium.medium_id)
    for endpoint in machine.network.endpoints():
        save_mirror_dir(endpoint, directory / NET_DIR / endpoint.endpoint_id)

    events = machine.log.get_all_events()
    with open(directory / LOG_FILE, "a") as f:
        for event in events[machine._flushed:]:
            f.write(event.render() + "\n")
    machine._flushed = len(events)
