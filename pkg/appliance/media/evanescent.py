"""The evanescent root: a memory filesystem in swap, system-directory
redirections into it, and the mount table every path is resolved through.
"""

from __future__ import annotations

import hashlib
import logging
import posixpath
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Protocol

from ..errors import EvanescentFull, MediumWriteLocked, NotFound
from ..settings import MFS_CAPACITY_BYTES, MFS_MOUNTPOINT
from .layout import MountFlags, StorageLayout
from .medium import normalize

logger = logging.getLogger(__name__)

MAX_REDIRECT_DEPTH = 16

Observer = Callable[[str, dict], None]


class Backing(str, Enum):
    evanescent = "evanescent"
    boot_image = "boot_image"
    persistent = "persistent"


class ExecDecision(str, Enum):
    allowed = "Allowed"
    denied_noexec = "DeniedNoexec"


class FileSource(Protocol):
    def read(self, path: str) -> bytes: ...
    def write(self, path: str, data: bytes) -> None: ...
    def exists(self, path: str) -> bool: ...
    def remove(self, path: str) -> None: ...
    def list(self, directory: str = "/", recursive: bool = False) -> list[str]: ...


class MemoryStore:
    """Swap-resident memory filesystem with a hard capacity."""

    def __init__(self, store_id: str, capacity_bytes: int = MFS_CAPACITY_BYTES):
        self.store_id = store_id
        self.capacity_bytes = capacity_bytes
        self.tree: dict[str, bytes] = {}

    @property
    def used_bytes(self) -> int:
        return sum(len(d) for d in self.tree.values())

    def read(self, path: str) -> bytes:
        try:
            return self.tree[normalize(path)]
        except KeyError:
            raise NotFound(f"{self.store_id}:{path}") from None

    def write(self, path: str, data: bytes) -> None:
        path = normalize(path)
        growth = len(data) - len(self.tree.get(path, b""))
        if self.used_bytes + growth > self.capacity_bytes:
            raise EvanescentFull(
                f"{self.store_id}: {path} needs {growth} bytes, "
                f"{self.capacity_bytes - self.used_bytes} free"
            )
        self.tree[path] = bytes(data)

    def exists(self, path: str) -> bool:
        return normalize(path) in self.tree

    def remove(self, path: str) -> None:
        try:
            del self.tree[normalize(path)]
        except KeyError:
            raise NotFound(f"{self.store_id}:{path}") from None

    def list(self, directory: str = "/", recursive: bool = False) -> list[str]:
        prefix = normalize(directory).rstrip("/") + "/"
        return sorted(
            p for p in self.tree
            if p.startswith(prefix) and (recursive or "/" not in p[len(prefix):])
        )

    def tree_hash(self) -> str:
        h = hashlib.sha256()
        for path in sorted(self.tree):
            h.update(path.encode() + b"\0" + hashlib.sha256(self.tree[path]).digest())
        return h.hexdigest()

    def clear(self) -> None:
        self.tree.clear()


@dataclass
class Mount:
    mountpoint: str
    source: FileSource
    backing: Backing
    flags: MountFlags = field(default_factory=MountFlags)
    read_only: bool = False
    source_root: str = "/"
    device: str = "-"
    fstype: str = "ffs"

    def inner(self, path: str) -> str:
        rel = path[len(self.mountpoint):].lstrip("/") if self.mountpoint != "/" else path.lstrip("/")
        return normalize(posixpath.join(self.source_root, rel))


def _under(path: str, prefix: str) -> bool:
    return prefix == "/" or path == prefix or path.startswith(prefix.rstrip("/") + "/")


class MountTable:
    """Mounted filesystems plus the redirections laid over them."""

    def __init__(self) -> None:
        self.mounts: dict[str, Mount] = {}
        self.redirections: dict[str, str] = {}

    def mount(self, mount: Mount) -> None:
        mount.mountpoint = normalize(mount.mountpoint)
        if mount.backing is Backing.persistent and not mount.flags.is_hardened:
            raise ValueError(
                f"persistent filesystem at {mount.mountpoint} must be noexec,nosuid,nodev"
            )
        self.mounts[mount.mountpoint] = mount

    def unmount(self, mountpoint: str) -> None:
        self.mounts.pop(normalize(mountpoint), None)

    def redirect(self, path: str, target: str) -> None:
        self.redirections[normalize(path)] = normalize(target)

    def resolve_path(self, path: str) -> str:
        """Follow redirections (longest prefix first) to a final path."""
        path = normalize(path)
        for _ in range(MAX_REDIRECT_DEPTH):
            match = max(
                (src for src in self.redirections if _under(path, src) and src != "/"),
                key=len,
                default=None,
            )
            if match is None:
                return path
            target = self.redirections[match]
            if _under(path, target):
                return path
            path = normalize(target + path[len(match):])
        raise NotFound(f"redirection loop at {path}")

    def locate(self, path: str) -> tuple[Mount, str]:
        resolved = self.resolve_path(path)
        match = max((mp for mp in self.mounts if _under(resolved, mp)), key=len, default=None)
        if match is None:
            raise NotFound(f"{path} is not on any mounted filesystem")
        mount = self.mounts[match]
        return mount, mount.inner(resolved)

    # ------------------------------------------------------------------
    # File access through the namespace
    # ------------------------------------------------------------------
    def exists(self, path: str) -> bool:
        try:
            mount, inner = self.locate(path)
        except NotFound:
            return False
        return mount.source.exists(inner)

    def read(self, path: str) -> bytes:
        mount, inner = self.locate(path)
        return mount.source.read(inner)

    def write(self, path: str, data: bytes) -> None:
        mount, inner = self.locate(path)
        if mount.read_only:
            raise MediumWriteLocked(f"{mount.mountpoint} is mounted read-only ({path})")
        mount.source.write(inner, data)

    def list(self, directory: str, recursive: bool = True) -> list[str]:
        """Namespace paths of files under ``directory`` (as seen from ``directory``)."""
        directory = normalize(directory)
        mount, inner_dir = self.locate(directory)
        out = []
        for inner in mount.source.list(inner_dir, recursive=recursive):
            rel = inner[len(inner_dir.rstrip("/")) + 1:]
            out.append(normalize(posixpath.join(directory, rel)))
        return sorted(out)


@dataclass
class EvanescentRoot:
    store: MemoryStore
    redirections: dict[str, str]
    epoch: int
    mountpoint: str = MFS_MOUNTPOINT

    def store_path(self, path: str) -> str:
        return normalize(self.mountpoint + normalize(path))

    def contains(self, resolved_path: str) -> bool:
        return _under(normalize(resolved_path), self.mountpoint)

    def tree_hash(self) -> str:
        return self.store.tree_hash()


def mount_memory_filesystem(
    mounts: MountTable,
    layout: StorageLayout,
    epoch: int,
    capacity_bytes: int = MFS_CAPACITY_BYTES,
) -> MemoryStore:
    """Create the swap-backed memory filesystem named in ``layout``'s fstab."""
    entry = next((e for e in layout.fstab_entries if e.fstype == "mfs"), None)
    if entry is None:
        raise NotFound("fstab has no memory filesystem entry")
    capacity = min(capacity_bytes, layout.swap_bytes)
    store = MemoryStore(f"mfs.{epoch}", capacity)
    mounts.mount(Mount(entry.mountpoint, store, Backing.evanescent, device="swap", fstype="mfs"))
    return store


def assemble_evanescent_root(
    layout: StorageLayout,
    system_dirs: list[str] | tuple[str, ...],
    mounts: MountTable,
    epoch: int,
) -> EvanescentRoot:
    """Copy each system directory into the memory filesystem and redirect it there."""
    entry = next((e for e in layout.fstab_entries if e.fstype == "mfs"), None)
    if entry is None or normalize(entry.mountpoint) not in mounts.mounts:
        raise NotFound("memory filesystem is not mounted")
    mountpoint = normalize(entry.mountpoint)
    store = mounts.mounts[mountpoint].source
    root = EvanescentRoot(store, mounts.redirections, epoch, mountpoint)

    for sysdir in system_dirs:
        sysdir = normalize(sysdir)
        files = _list_files(mounts, sysdir)
        for path in files:
            store.write(path, mounts.read(path))
        mounts.redirect(sysdir, root.store_path(sysdir))
        logger.debug("Redirected %s (%d files) into %s", sysdir, len(files), mountpoint)
    return root


def _list_files(mounts: MountTable, directory: str) -> list[str]:
    try:
        return mounts.list(directory)
    except NotFound:
        return []


def teardown(root: EvanescentRoot, mounts: MountTable | None = None) -> None:
    """Destroy the evanescent root. Nothing written into it survives."""
    root.store.clear()
    if mounts is not None:
        mounts.unmount(root.mountpoint)
    root.redirections.clear()


def exec_check(path: str, mounts: MountTable, observer: Observer | None = None) -> ExecDecision:
    """May the file at ``path`` be executed?

    Only files whose backing store is the evanescent root or the read-only
    boot image may run; anything on a noexec or persistent filesystem may not.
    """
    mount, inner = mounts.locate(path)
    if not mount.source.exists(inner):
        raise NotFound(f"{path} does not exist")
    if mount.flags.noexec or mount.backing is Backing.persistent:
        decision = ExecDecision.denied_noexec
    elif mount.backing is Backing.boot_image and not mount.read_only:
        decision = ExecDecision.denied_noexec
    else:
        decision = ExecDecision.allowed
    if observer is not None:
        observer("exec", {
            "path": normalize(path),
            "resolved": mounts.resolve_path(path),
            "backing": mount.backing.value,
            "decision": decision.value,
        })
    return decision
