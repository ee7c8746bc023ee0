"""Disk partitioning plan and fstab generation for phase 0."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

from ..errors import FormatError, NoStorage, PermissionDenied
from ..settings import (
    ALIGNMENT_BYTES,
    DISK_CONTENT_DIR,
    MFS_MOUNTPOINT,
    SMALL_DISK_THRESHOLD,
    SWAP_TARGET_BYTES,
)

logger = logging.getLogger(__name__)

PermissionCallback = Callable[[str], bool]

PERSISTENT_FLAGS = ("noexec", "nosuid", "nodev")


@dataclass(frozen=True)
class MountFlags:
    noexec: bool = False
    nosuid: bool = False
    nodev: bool = False

    @classmethod
    def persistent(cls) -> MountFlags:
        return cls(noexec=True, nosuid=True, nodev=True)

    @property
    def is_hardened(self) -> bool:
        return self.noexec and self.nosuid and self.nodev

    def as_options(self) -> list[str]:
        return [name for name in PERSISTENT_FLAGS if getattr(self, name)]


@dataclass(frozen=True)
class FstabEntry:
    device: str
    mountpoint: str
    fstype: str
    options: tuple[str, ...] = ()

    def render(self) -> str:
        return f"{self.device} {self.mountpoint} {self.fstype} {','.join(self.options) or 'rw'}"


@dataclass(frozen=True)
class Partition:
    medium_id: str
    start: int
    end: int

    @property
    def size(self) -> int:
        return self.end - self.start


@dataclass
class StorageLayout:
    swap: Partition
    content_filesystems: list[Partition] = field(default_factory=list)
    fstab_entries: list[FstabEntry] = field(default_factory=list)

    @property
    def swap_bytes(self) -> int:
        return self.swap.size

    def assigned_bytes(self, medium_id: str) -> int:
        total = self.swap.size if self.swap.medium_id == medium_id else 0
        return total + sum(p.size for p in self.content_filesystems if p.medium_id == medium_id)

    def render_fstab(self) -> str:
        return "".join(entry.render() + "\n" for entry in self.fstab_entries)


def _align_down(value: int) -> int:
    return value - value % ALIGNMENT_BYTES


def swap_size_for(first_disk_bytes: int) -> int:
    if first_disk_bytes >= SMALL_DISK_THRESHOLD:
        return SWAP_TARGET_BYTES
    return _align_down(first_disk_bytes // 2)


def plan_storage_layout(
    disks: list[tuple[str, int]],
    already_partitioned: bool,
    permission: PermissionCallback,
    stored: StorageLayout | None = None,
) -> StorageLayout:
    """Partition the disks: swap on the first, content everywhere else.

    An already-partitioned machine gets its stored layout back without asking.
    """
    if not disks:
        raise NoStorage("no hard disks found")
    if already_partitioned:
        if stored is None:
            raise FormatError("disks are marked partitioned but carry no layout")
        return stored

    summary = ", ".join(f"{mid} ({size} bytes)" for mid, size in disks)
    if not permission(f"Partition {summary}? All data on them will be lost."):
        raise PermissionDenied("operator refused to partition the disks")

    first_id, first_size = disks[0]
    swap_end = swap_size_for(first_size)
    swap = Partition(first_id, 0, swap_end)
    content = []
    if _align_down(first_size) > swap_end:
        content.append(Partition(first_id, swap_end, _align_down(first_size)))
    for medium_id, size in disks[1:]:
        content.append(Partition(medium_id, 0, _align_down(size)))

    fstab = [FstabEntry(f"/dev/{first_id}b", "none", "swap", ("sw",))]
    for i, part in enumerate(content):
        mountpoint = DISK_CONTENT_DIR if i == 0 else f"{DISK_CONTENT_DIR}{i}"
        fstab.append(FstabEntry(
            f"/dev/{part.medium_id}{'d' if part.medium_id == first_id else 'a'}",
            mountpoint,
            "ffs",
            ("rw",) + PERSISTENT_FLAGS,
        ))
    fstab.append(FstabEntry("swap", MFS_MOUNTPOINT, "mfs", ("rw",)))

    logger.info("Planned layout: swap %d bytes, %d content filesystems", swap.size, len(content))
    return StorageLayout(swap=swap, content_filesystems=content, fstab_entries=fstab)


# ---------------------------------------------------------------------------
# Disklabel: the layout as stored on the first disk
# ---------------------------------------------------------------------------
def render_disklabel(layout: StorageLayout) -> bytes:
    lines = [f"swap {layout.swap.medium_id} {layout.swap.start} {layout.swap.end}"]
    lines += [f"content {p.medium_id} {p.start} {p.end}" for p in layout.content_filesystems]
    lines += [f"fstab {e.render()}" for e in layout.fstab_entries]
    return ("\n".join(lines) + "\n").encode()


def _parse_partition(raw: str, parts: list[str]) -> Partition:
    try:
        start, end = int(parts[1]), int(parts[2])
    except ValueError:
        raise FormatError(f"bad disklabel offsets: {raw!r}") from None
    if not 0 <= start <= end:
        raise FormatError(f"bad disklabel offsets: {raw!r}")
    return Partition(parts[0], start, end)


def parse_disklabel(data: bytes) -> StorageLayout:
    try:
        text = data.decode()
    except UnicodeDecodeError:
        raise FormatError("disklabel is not text") from None
    swap = None
    content = []
    fstab = []
    for raw in text.splitlines():
        kind, _, rest = raw.partition(" ")
        parts = rest.split()
        if kind == "swap" and len(parts) == 3:
            swap = _parse_partition(raw, parts)
        elif kind == "content" and len(parts) == 3:
            content.append(_parse_partition(raw, parts))
        elif kind == "fstab" and len(parts) == 4:
            options = tuple(o for o in parts[3].split(",") if o)
            fstab.append(FstabEntry(parts[0], parts[1], parts[2], options))
        elif raw.strip():
            raise FormatError(f"bad disklabel line: {raw!r}")
    if swap is None:
        raise FormatError("disklabel has no swap partition")
    if not fstab:
        raise FormatError("disklabel has no fstab entries")
    return StorageLayout(swap=swap, content_filesystems=content, fstab_entries=fstab)
