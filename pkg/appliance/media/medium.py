"""Virtual media: boot image, configuration floppy and hard disks."""

from __future__ import annotations

import hashlib
import logging
import os
import posixpath
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable

from ..errors import FormatError, MediumWriteLocked, NotFound

logger = logging.getLogger(__name__)

HEADER_FILE = "MEDIUM"
SCRATCH_PATH = "/.write-probe"


class MediumKind(str, Enum):
    boot_image = "BootImage"
    config_floppy = "ConfigFloppy"
    hard_disk = "HardDisk"


class ProbeResult(str, Enum):
    locked = "Locked"
    writable = "Writable"
    absent = "Absent"


def normalize(path: str) -> str:
    """Canonical absolute form of a medium path."""
    norm = posixpath.normpath("/" + path.lstrip("/"))
    return "/" if norm == "//" else norm


@dataclass
class VirtualMedium:
    """A simulated removable or fixed medium holding a flat path -> bytes tree.

    Writes to a write-locked medium raise and leave the tree unchanged.
    """
    medium_id: str
    kind: MediumKind
    write_locked: bool = False
    present: bool = True
    tree: dict[str, bytes] = field(default_factory=dict)
    size_bytes: int = 0

    def __post_init__(self) -> None:
        if self.kind is MediumKind.boot_image:
            self.write_locked = True
        self.tree = {normalize(p): bytes(d) for p, d in self.tree.items()}

    # ------------------------------------------------------------------
    # Reads
    # ------------------------------------------------------------------
    def exists(self, path: str) -> bool:
        return normalize(path) in self.tree

    def is_dir(self, path: str) -> bool:
        prefix = normalize(path).rstrip("/") + "/"
        return any(p.startswith(prefix) for p in self.tree)

    def read(self, path: str) -> bytes:
        self._require_present()
        try:
            return self.tree[normalize(path)]
        except KeyError:
            raise NotFound(f"{self.medium_id}:{path}") from None

    def list(self, directory: str = "/", recursive: bool = False) -> list[str]:
        """Paths of files under ``directory``, sorted."""
        self._require_present()
        prefix = normalize(directory).rstrip("/") + "/"
        out = []
        for p in self.tree:
            if not p.startswith(prefix):
                continue
            if recursive or "/" not in p[len(prefix):]:
                out.append(p)
        return sorted(out)

    def tree_hash(self) -> str:
        h = hashlib.sha256()
        for path in sorted(self.tree):
            h.update(path.encode() + b"\0" + hashlib.sha256(self.tree[path]).digest())
        return h.hexdigest()

    # ------------------------------------------------------------------
    # Writes
    # ------------------------------------------------------------------
    def write(self, path: str, data: bytes) -> None:
        self._require_writable(path)
        self.tree[normalize(path)] = bytes(data)

    def remove(self, path: str) -> None:
        self._require_writable(path)
        try:
            del self.tree[normalize(path)]
        except KeyError:
            raise NotFound(f"{self.medium_id}:{path}") from None

    def rename(self, src: str, dst: str) -> None:
        """Move ``src`` over ``dst`` in one step."""
        self._require_writable(dst)
        data = self.read(src)
        self.tree[normalize(dst)] = data
        del self.tree[normalize(src)]

    def _require_present(self) -> None:
        if not self.present:
            raise NotFound(f"medium {self.medium_id} is not present")

    def _require_writable(self, path: str) -> None:
        self._require_present()
        if self.write_locked or self.kind is MediumKind.boot_image:
            raise MediumWriteLocked(f"{self.medium_id} is write-locked ({path})")


ProbeObserver = Callable[[str, dict], None]


def probe_write_lock(medium: VirtualMedium, observer: ProbeObserver | None = None) -> ProbeResult:
    """Determine writability by attempting a scratch write.

    A successful scratch write is rolled back. A failed one produces the
    benign diagnostic noise an operator is told to ignore.
    """
    if not medium.present:
        result = ProbeResult.absent
    else:
        try:
            medium.write(SCRATCH_PATH, b"probe")
        except MediumWriteLocked:
            result = ProbeResult.locked
            if observer is not None:
                observer("probe.noise", {
                    "medium": medium.medium_id,
                    "message": f"{medium.medium_id}: write failed, media is write-protected",
                    "benign": "true",
                })
        else:
            medium.remove(SCRATCH_PATH)
            result = ProbeResult.writable
    if observer is not None:
        observer("probe", {"medium": medium.medium_id, "result": result.value})
    return result


# ---------------------------------------------------------------------------
# Host serialization: one directory per medium plus a MEDIUM header file
# ---------------------------------------------------------------------------
def save_medium(medium: VirtualMedium, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for existing in sorted(directory.rglob("*"), reverse=True):
        if existing.name == HEADER_FILE and existing.parent == directory:
            continue
        if existing.is_file():
            existing.unlink()
        elif existing.is_dir():
            existing.rmdir()
    for path, data in medium.tree.items():
        target = directory / path.lstrip("/")
        target.parent.mkdir(parents=True, exist_ok=True)
        tmp = target.with_name(f".tmp-{target.name}")
        tmp.write_bytes(data)
        os.replace(tmp, target)
    header = (
        f"id={medium.medium_id}\n"
        f"kind={medium.kind.value}\n"
        f"locked={int(medium.write_locked)}\n"
        f"present={int(medium.present)}\n"
        f"size={medium.size_bytes}\n"
    )
    (directory / HEADER_FILE).write_text(header)


def load_medium(directory: Path) -> VirtualMedium:
    header_path = directory / HEADER_FILE
    if not header_path.is_file():
        raise FormatError(f"{directory} has no {HEADER_FILE} header")
    header = dict(
        line.split("=", 1) for line in header_path.read_text().splitlines() if "=" in line
    )
    try:
        kind = MediumKind(header["kind"])
        medium_id = header["id"]
    except (KeyError, ValueError):
        raise FormatError(f"{header_path}: bad header") from None
    tree = {}
    for file in sorted(directory.rglob("*")):
        if file.is_file() and file != header_path:
            tree["/" + file.relative_to(directory).as_posix()] = file.read_bytes()
    return VirtualMedium(
        medium_id=medium_id,
        kind=kind,
        write_locked=header.get("locked", "0") == "1",
        present=header.get("present", "1") == "1",
        tree=tree,
        size_bytes=int(header.get("size", "0")),
    )
