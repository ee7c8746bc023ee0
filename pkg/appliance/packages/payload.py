"""Package payloads: deterministic tar archives of the files a package installs."""

from __future__ import annotations

import io
import posixpath
import tarfile
from dataclasses import dataclass

from ..errors import FormatError, PathEscape

EXEC_MODE = 0o755
FILE_MODE = 0o644


@dataclass(frozen=True)
class PayloadEntry:
    path: str
    data: bytes
    executable: bool = False


def pack_payload(files: dict[str, bytes], executables: set[str] | frozenset[str] = frozenset()) -> bytes:
    """Build a tar archive with zeroed metadata so equal inputs give equal bytes.

    Paths are stored as given (relative to the install root).
    """
    buf = io.BytesIO()
    with tarfile.open(fileobj=buf, mode="w", format=tarfile.USTAR_FORMAT) as tar:
        for name in sorted(files):
            data = files[name]
            info = tarfile.TarInfo(name)
            info.size = len(data)
            info.mode = EXEC_MODE if name in executables else FILE_MODE
            info.mtime = 0
            info.uid = info.gid = 0
            info.uname = info.gname = ""
            tar.addfile(info, io.BytesIO(data))
    return buf.getvalue()


def read_payload(payload: bytes) -> list[PayloadEntry]:
    try:
        with tarfile.open(fileobj=io.BytesIO(payload), mode="r:") as tar:
            entries = []
            for member in tar.getmembers():
                if member.isdir():
                    continue
                if not member.isfile():
                    raise FormatError(f"payload member {member.name} is not a regular file")
                extracted = tar.extractfile(member)
                data = extracted.read() if extracted is not None else b""
                entries.append(PayloadEntry(member.name, data, bool(member.mode & 0o111)))
            return entries
    except tarfile.TarError as e:
        raise FormatError(f"payload is not a valid archive: {e}") from None


def confine(root: str, member: str) -> str:
    """Absolute destination of ``member`` under ``root``; raise if it would escape."""
    root = posixpath.normpath(root)
    target = posixpath.normpath(posixpath.join(root, member))
    if member.startswith("/") or not target.startswith(root.rstrip("/") + "/"):
        raise PathEscape(f"payload member {member!r} escapes {root}")
    return target
