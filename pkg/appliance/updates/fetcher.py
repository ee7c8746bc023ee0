"""Unprivileged fetch of new packages, manifests and signatures into the disk cache."""

from __future__ import annotations

import logging
import posixpath
from dataclasses import dataclass, field

from ..boot.events import BootLog
from ..boot.process import ProcessTag, assert_may_use_network
from ..errors import ApplianceError, EndpointUnreachable, InterfaceDown, MalformedVersion, NotFound
from ..media.medium import VirtualMedium, normalize
from ..packages.manifest import is_manifest_filename, split_package_filename
from ..packages.scan import TEMP_PREFIX
from ..packages.versions import Ordering, compare_versions, parse_version
from ..settings import CACHE_DIR
from ..simnet import NetworkInterface
from ..trust.signatures import split_signature_filename

logger = logging.getLogger(__name__)


class UpdateCache:
    """Flat directory of fetched files on the first disk's content filesystem.

    Files appear by rename from a temporary name, so a reader never sees a
    partial download.
    """

    def __init__(self, medium: VirtualMedium, directory: str = CACHE_DIR):
        self.medium = medium
        self.directory = normalize(directory)

    def _path(self, name: str) -> str:
        return posixpath.join(self.directory, name)

    def names(self) -> list[str]:
        return [
            posixpath.basename(p)
            for p in self.medium.list(self.directory)
            if not posixpath.basename(p).startswith(TEMP_PREFIX)
        ]

    def has(self, name: str) -> bool:
        return self.medium.exists(self._path(name))

    def read(self, name: str) -> bytes:
        return self.medium.read(self._path(name))

    def put(self, name: str, data: bytes) -> None:
        tmp = self._path(TEMP_PREFIX + name)
        self.medium.write(tmp, data)
        self.medium.rename(tmp, self._path(name))

    def versions_of(self, package: str) -> list[str]:
        out = []
        for name in self.names():
            parts = split_package_filename(name)
            if parts is not None and parts[0] == package:
                out.append(parts[1])
        return out


@dataclass
class FetchReport:
    mirror: str
    reachable: bool = True
    fetched: list[str] = field(default_factory=list)
    unchanged: list[str] = field(default_factory=list)

    @property
    def files(self) -> int:
        return len(self.fetched)


def _newer_than_cache(name: str, version: str, cache: UpdateCache) -> bool:
    for cached in cache.versions_of(name):
        try:
            if compare_versions(cached, version) is not Ordering.less:
                return False
        except MalformedVersion:
            continue
    return True


def check_and_fetch(
    mirror: str,
    cache: UpdateCache,
    proc: ProcessTag,
    iface: NetworkInterface,
    log: BootLog | None = None,
) -> FetchReport:
    """Download whatever the mirror has that the cache lacks.

    Nothing is verified here; the next boot decides what is trustworthy.
    An unreachable mirror gives an empty report.
    """
    assert_may_use_network(proc)
    report = FetchReport(mirror)
    try:
        names = iface.list_files(mirror, proc)
    except (EndpointUnreachable, InterfaceDown) as e:
        logger.warning("Update check against %s failed: %s", mirror, e)
        report.reachable = False
        names = []

    for name in names:
        package = split_package_filename(name)
        if package is not None:
            try:
                parse_version(package[1])
            except MalformedVersion:
                logger.info("Skipping %s on %s: malformed version", name, mirror)
                continue
            if not _newer_than_cache(package[0], package[1], cache):
                report.unchanged.append(name)
                continue
        elif not (is_manifest_filename(name) or split_signature_filename(name)):
            continue
        try:
            data = iface.fetch(mirror, name, proc)
        except (EndpointUnreachable, NotFound) as e:
            logger.warning("Fetch of %s from %s failed: %s", name, mirror, e)
            continue
        if package is None and cache.has(name) and cache.read(name) == data:
            report.unchanged.append(name)
            continue
        try:
            cache.put(name, data)
        except ApplianceError as e:
            logger.warning("Cannot cache %s: %s", name, e)
            continue
        report.fetched.append(name)

    if log is not None:
        log.record("fetch", {"mirror": mirror, "files": report.files})
    logger.info("Fetched %d files from %s", report.files, mirror)
    return report
