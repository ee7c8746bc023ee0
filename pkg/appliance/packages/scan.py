"""Scan the package path for manifests, detached signatures and packages."""

from __future__ import annotations

import logging
import posixpath
from dataclasses import dataclass, field

from ..errors import ApplianceError
from ..media.medium import VirtualMedium
from ..trust.signatures import DetachedSignature, parse_signature, split_signature_filename
from .manifest import (
    Manifest,
    PackageArtifact,
    PackageCategory,
    is_manifest_filename,
    parse_manifest,
    split_package_filename,
)
from .versions import parse_version

logger = logging.getLogger(__name__)

TEMP_PREFIX = ".tmp-"

# Directory-name hints for the category of a package found there.
CATEGORY_HINTS = {
    "base": PackageCategory.base,
    "ports": PackageCategory.port,
}


@dataclass(frozen=True)
class PackagePathEntry:
    medium: VirtualMedium
    directory: str = "/"


@dataclass(frozen=True)
class ScannedManifest:
    filename: str
    manifest: Manifest
    raw: bytes = field(repr=False)
    medium_id: str
    position: int
    path: str

    @property
    def manifest_id(self) -> str:
        return f"{self.medium_id}:{self.path}"


@dataclass(frozen=True)
class ScannedSignature:
    signed_name: str
    key_id: str
    signature: DetachedSignature
    medium_id: str
    position: int
    path: str


@dataclass(frozen=True)
class Candidate:
    artifact: PackageArtifact
    position: int
    path: str
    order: int

    @property
    def name(self) -> str:
        return self.artifact.name

    @property
    def version(self) -> str:
        return self.artifact.version


@dataclass
class ScanResult:
    manifests: list[ScannedManifest] = field(default_factory=list)
    signatures: list[ScannedSignature] = field(default_factory=list)
    candidates: list[Candidate] = field(default_factory=list)
    orphans: list[ScannedSignature] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def signatures_for(self, filename: str) -> list[ScannedSignature]:
        return [s for s in self.signatures if s.signed_name == filename]

    def candidates_named(self, name: str) -> list[Candidate]:
        return [c for c in self.candidates if c.name == name]

    def _warn(self, message: str) -> None:
        logger.warning(message)
        self.warnings.append(message)


def scan_package_path(path: list[PackagePathEntry]) -> ScanResult:
    """Enumerate everything usable on the package path, tagged with its position."""
    result = ScanResult()
    order = 0
    for position, entry in enumerate(path):
        medium = entry.medium
        try:
            files = medium.list(entry.directory)
        except ApplianceError as e:
            result._warn(f"skipping {medium.medium_id}:{entry.directory}: {e}")
            continue
        hint = CATEGORY_HINTS.get(posixpath.basename(entry.directory.rstrip("/")))

        for file_path in files:
            filename = posixpath.basename(file_path)
            if filename.startswith(TEMP_PREFIX):
                continue
            data = medium.read(file_path)

            sig_name = split_signature_filename(filename)
            if sig_name is not None:
                try:
                    signature = parse_signature(data)
                except ApplianceError as e:
                    result._warn(f"unreadable signature {medium.medium_id}:{file_path}: {e}")
                    continue
                result.signatures.append(ScannedSignature(
                    sig_name[0], sig_name[1], signature, medium.medium_id, position, file_path,
                ))
            elif is_manifest_filename(filename):
                try:
                    manifest = parse_manifest(data)
                except ApplianceError as e:
                    result._warn(f"unreadable manifest {medium.medium_id}:{file_path}: {e}")
                    continue
                result.manifests.append(ScannedManifest(
                    filename, manifest, data, medium.medium_id, position, file_path,
                ))
            else:
                parts = split_package_filename(filename)
                if parts is None:
                    continue
                name, version = parts
                try:
                    parse_version(version)
                except ApplianceError as e:
                    result._warn(f"excluding {medium.medium_id}:{file_path}: {e}")
                    continue
                artifact = PackageArtifact(
                    name=name,
                    version=version,
                    payload=data,
                    found_on=medium.medium_id,
                    category=hint or PackageCategory.application,
                )
                result.candidates.append(Candidate(artifact, position, file_path, order))
                order += 1

    manifest_names = {m.filename for m in result.manifests}
    for sig in result.signatures:
        if sig.signed_name not in manifest_names:
            logger.info("Orphan signature %s:%s ignored", sig.medium_id, sig.path)
            result.orphans.append(sig)
    return result
