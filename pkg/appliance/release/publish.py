"""Extract a package from a built image, sign it, publish it and tell the sites."""

from __future__ import annotations

import logging
import posixpath
from dataclasses import dataclass, field
from pathlib import Path

from ..boot.events import BootLog
from ..boot.process import ROOT, drop_privileges
from ..errors import EndpointUnreachable, NoSigningKeys, UnknownPackage
from ..media.medium import VirtualMedium
from ..packages.manifest import (
    Manifest,
    PackageArtifact,
    build_manifest,
    manifest_filename,
    split_package_filename,
)
from ..packages.versions import compare_versions, Ordering
from ..settings import DEFAULT_DIGEST_ALGORITHM, IMAGE_PACKAGE_DIRS
from ..simnet import SimNetwork
from ..trust.keys import SecretKey
from ..trust.signatures import DetachedSignature, render_signature, sign_payload, signature_filename
from ..updates.mirrors import MirrorSet
from .image import SET_FOR_CATEGORY

logger = logging.getLogger(__name__)

MULTI_SIG_WARNING = "MultiSigRecommended"

INSTRUCTIONS = (
    "Log in as root on the appliance console.",
    "Run the update check.",
    "Reboot the appliance.",
)


@dataclass
class SignedRelease:
    artifact: PackageArtifact
    manifest: Manifest
    manifest_name: str
    manifest_bytes: bytes = field(repr=False)
    signatures: list[DetachedSignature] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def bundle(self) -> dict[str, bytes]:
        """The release in mirror layout: package, manifest, one file per signature."""
        files = {
            self.artifact.filename: self.artifact.payload,
            self.manifest_name: self.manifest_bytes,
        }
        for sig in self.signatures:
            files[signature_filename(self.manifest_name, sig.signer_key_id)] = render_signature(sig)
        return files


def _find_in_image(image: VirtualMedium, name: str) -> PackageArtifact:
    directory_category = {directory: category for category, (_, directory) in SET_FOR_CATEGORY.items()}
    best = None
    for directory in IMAGE_PACKAGE_DIRS:
        for path in image.list(directory):
            parts = split_package_filename(posixpath.basename(path))
            if parts is None or parts[0] != name:
                continue
            if best is None or compare_versions(parts[1], best.version) is Ordering.greater:
                best = PackageArtifact(
                    name, parts[1], image.read(path), image.medium_id, directory_category[directory],
                )
    if best is None:
        raise UnknownPackage(f"{image.medium_id} has no package named {name}")
    return best


def extract_and_sign_package(
    image: VirtualMedium,
    name: str,
    secrets: list[SecretKey],
    algorithm: str = DEFAULT_DIGEST_ALGORITHM,
) -> SignedRelease:
    """Pull ``name`` out of a built image and sign a one-entry manifest for it.

    The payload is the image's copy byte for byte; there is no separate
    build of distributed packages.
    """
    if not secrets:
        raise NoSigningKeys("at least one signing key is required")
    artifact = _find_in_image(image, name)
    manifest = build_manifest([artifact], algorithm)
    manifest_bytes = manifest.render()
    release = SignedRelease(
        artifact=artifact,
        manifest=manifest,
        manifest_name=manifest_filename(f"{artifact.name}-{artifact.version}", algorithm),
        manifest_bytes=manifest_bytes,
        signatures=[sign_payload(manifest_bytes, secret, algorithm) for secret in secrets],
    )
    if len(secrets) < 2:
        release.warnings.append(
            f"{MULTI_SIG_WARNING}: {artifact.filename} carries a single signature"
        )
        logger.warning("%s signed by a single key", artifact.filename)
    return release


# ---------------------------------------------------------------------------
# Bundles on the host: a flat directory in mirror layout
# ---------------------------------------------------------------------------
def write_bundle(files: dict[str, bytes], directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for name, data in sorted(files.items()):
        tmp = directory / f".tmp-{name}"
        tmp.write_bytes(data)
        tmp.replace(directory / name)


def read_bundle(directory: Path) -> dict[str, bytes]:
    return {
        p.name: p.read_bytes()
        for p in sorted(directory.iterdir())
        if p.is_file() and not p.name.startswith(".tmp-")
    }


# ---------------------------------------------------------------------------
# Publishing
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Notification:
    site: str
    subject: str
    instructions: tuple[str, ...] = INSTRUCTIONS
    confirmation_requested: bool = True

    def render(self) -> str:
        steps = "\n".join(f"{i}. {step}" for i, step in enumerate(self.instructions, start=1))
        return f"To: {self.site}\nSubject: {self.subject}\n\n{steps}\n\nPlease reply to confirm.\n"


class Mailer:
    """Mail stub: keeps an outbox and records one event per message."""

    def __init__(self, log: BootLog | None = None):
        self.log = log
        self.outbox: list[Notification] = []

    def send(self, notification: Notification) -> None:
        self.outbox.append(notification)
        logger.info("Notified %s: %s", notification.site, notification.subject)
        if self.log is not None:
            self.log.record("mail", {
                "site": notification.site,
                "subject": notification.subject,
                "steps": len(notification.instructions),
            })


@dataclass
class PublishReport:
    published: list[str] = field(default_factory=list)
    unreachable: list[str] = field(default_factory=list)
    notified: list[str] = field(default_factory=list)


def publish_and_notify(
    mirrors: MirrorSet,
    bundle: dict[str, bytes],
    sites: list[str],
    mailer: Mailer,
    network: SimNetwork,
    log: BootLog | None = None,
    host_id: str = "release-host",
) -> PublishReport:
    """Upload ``bundle`` to every mirror, then mail every site the upgrade steps.

    An unreachable mirror is reported and skipped.
    """
    if not any(".sig." in name for name in bundle):
        raise NoSigningKeys("bundle carries no signatures")
    iface = network.attach(host_id, listener=log.listener if log is not None else None, up=True)
    proc = drop_privileges(ROOT, "publisher")
    report = PublishReport()
    packages = sorted(n for n in bundle if split_package_filename(n) is not None)

    for mirror in mirrors.servers:
        try:
            for name in sorted(bundle):
                iface.put(mirror, name, bundle[name], proc)
        except EndpointUnreachable as e:
            logger.warning("Mirror %s not published: %s", mirror, e)
            report.unreachable.append(mirror)
            continue
        report.published.append(mirror)
        if log is not None:
            log.record("publish", {"mirror": mirror, "files": len(bundle)})

    subject = f"Security update available: {', '.join(packages) or 'signatures'}"
    for site in sites:
        mailer.send(Notification(site, subject))
        report.notified.append(site)
    return report
