"""Package artifacts and signed digest manifests."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from ..errors import FormatError
from ..trust.signatures import SUPPORTED_ALGORITHMS, digest_bytes

PACKAGE_SUFFIX = ".pkg"
MANIFEST_SUFFIXES = (".md5", ".dgst")
ALGORITHM_HEADER = "#algorithm="

_HEX_RE = re.compile(r"^[0-9a-f]+$")


class PackageCategory(str, Enum):
    base = "Base"
    port = "Port"
    application = "Application"

    @property
    def rank(self) -> int:
        return _CATEGORY_RANK[self]


_CATEGORY_RANK = {
    PackageCategory.base: 0,
    PackageCategory.port: 1,
    PackageCategory.application: 2,
}


@dataclass(frozen=True)
class PackageArtifact:
    name: str
    version: str
    payload: bytes = field(repr=False)
    found_on: str = ""
    category: PackageCategory = PackageCategory.application

    @property
    def filename(self) -> str:
        return package_filename(self.name, self.version)

    def digest(self, algorithm: str = "sha256") -> str:
        return digest_bytes(self.payload, algorithm)


def package_filename(name: str, version: str) -> str:
    return f"{name}-{version}{PACKAGE_SUFFIX}"


def split_package_filename(filename: str) -> tuple[str, str] | None:
    """``daemon-1.1.pkg`` -> ``("daemon", "1.1")``; None if not a package name.

    The version is checked separately so malformed versions can be reported.
    """
    if not filename.endswith(PACKAGE_SUFFIX):
        return None
    stem = filename[: -len(PACKAGE_SUFFIX)]
    name, sep, version = stem.rpartition("-")
    if not sep or not name or not version:
        return None
    return name, version


def is_manifest_filename(filename: str) -> bool:
    return filename.endswith(MANIFEST_SUFFIXES) and ".sig." not in filename


@dataclass(frozen=True)
class Manifest:
    entries: tuple[tuple[str, str], ...]
    digest_algorithm: str = "sha256"

    def __post_init__(self) -> None:
        width = SUPPORTED_ALGORITHMS.get(self.digest_algorithm)
        if width is None:
            raise FormatError(f"unsupported manifest algorithm {self.digest_algorithm}")
        names = [name for _, name in self.entries]
        if len(names) != len(set(names)):
            raise FormatError("manifest lists a filename twice")
        for digest, name in self.entries:
            if len(digest) != width or not _HEX_RE.match(digest):
                raise FormatError(f"bad {self.digest_algorithm} digest for {name}")

    @property
    def digests(self) -> set[str]:
        return {digest for digest, _ in self.entries}

    def render(self) -> bytes:
        lines = []
        if self.digest_algorithm != "md5":
            lines.append(f"{ALGORITHM_HEADER}{self.digest_algorithm}")
        lines += [f"{digest}  {name}" for digest, name in self.entries]
        return ("\n".join(lines) + "\n").encode()


def build_manifest(artifacts: list[PackageArtifact], algorithm: str = "sha256") -> Manifest:
    return Manifest(
        tuple((a.digest(algorithm), a.filename) for a in artifacts),
        digest_algorithm=algorithm,
    )


def manifest_filename(package_set: str, algorithm: str) -> str:
    return f"{package_set}{'.md5' if algorithm == 'md5' else '.dgst'}"


def parse_manifest(data: bytes) -> Manifest:
    """Parse ``<hex digest>  <filename>`` lines.

    The algorithm comes from an ``#algorithm=`` header, else from the digest
    width.
    """
    try:
        text = data.decode()
    except UnicodeDecodeError:
        raise FormatError("manifest is not text") from None
    algorithm = None
    entries = []
    for raw in text.splitlines():
        line = raw.rstrip()
        if line.startswith(ALGORITHM_HEADER):
            algorithm = line[len(ALGORITHM_HEADER):].strip()
            continue
        if not line or line.startswith("#"):
            continue
        digest, sep, name = line.partition("  ")
        if not sep or not name.strip():
            raise FormatError(f"bad manifest line: {raw!r}")
        entries.append((digest.strip().lower(), name.strip()))
    if algorithm is None:
        widths = {width: alg for alg, width in SUPPORTED_ALGORITHMS.items()}
        found = {len(d) for d, _ in entries}
        if len(found) != 1 or found.pop() not in widths:
            raise FormatError("cannot infer manifest digest algorithm")
        algorithm = widths[len(entries[0][0])]
    return Manifest(tuple(entries), digest_algorithm=algorithm)

