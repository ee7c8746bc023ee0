"""Build a boot image from package sets."""

from __future__ import annotations

import logging

from ..errors import DuplicatePackage
from ..media.medium import MediumKind, VirtualMedium
from ..packages.manifest import PackageArtifact, PackageCategory, build_manifest, manifest_filename
from ..settings import (
    CONFIG_FILE,
    DEFAULT_DIGEST_ALGORITHM,
    IMAGE_CONFIG_DIR,
    IMAGE_PACKAGE_DIRS,
    IMAGE_RAMDISK_DIR,
    KEYRING_FILE,
    REQUIRED_FILE,
    VERIFIER_TOOL,
)
from ..trust.keys import Keyring, SecretKey, render_keyring
from ..trust.signatures import render_signature, sign_payload, signature_filename

logger = logging.getLogger(__name__)

BASE_DIR, PORTS_DIR, APP_DIR = IMAGE_PACKAGE_DIRS

# Package-set name (manifest stem) and directory per category.
SET_FOR_CATEGORY = {
    PackageCategory.base: ("base", BASE_DIR),
    PackageCategory.port: ("ports", PORTS_DIR),
    PackageCategory.application: ("lockss", APP_DIR),
}

DEFAULT_RAMDISK = {
    "/etc/rc": b"#!/bin/sh\n. /etc/rc.0.lockss\n. /etc/rc.1.lockss\n. /etc/lockss.start\n",
    "/etc/motd": b"LOCKSS appliance\n",
    "/bin/sh": b"\x7fELF sh\n",
    "/sbin/init": b"\x7fELF init\n",
    "/sbin/mount": b"\x7fELF mount\n",
    "/usr/bin/sudo": b"\x7fELF sudo (privilege drop only)\n",
}
VERIFIER_BINARY = b"\x7fELF verify\n"


def _group(artifacts: list[PackageArtifact]) -> dict[PackageCategory, list[PackageArtifact]]:
    groups: dict[PackageCategory, list[PackageArtifact]] = {c: [] for c in PackageCategory}
    for artifact in artifacts:
        names = {a.name for a in groups[artifact.category]}
        if artifact.name in names:
            raise DuplicatePackage(f"{artifact.category.value} package {artifact.name} given twice")
        groups[artifact.category].append(artifact)
    return groups


def build_image(
    packages: list[PackageArtifact],
    base_set: list[PackageArtifact],
    keyring_template: Keyring,
    signing_keys: list[SecretKey] | None = None,
    image_id: str = "cd0",
    config_defaults: str = "",
    required: list[tuple[str, PackageCategory]] | None = None,
    algorithm: str = DEFAULT_DIGEST_ALGORITHM,
) -> VirtualMedium:
    """Assemble a write-locked boot image.

    Every nonempty package set gets a manifest, signed by each of
    ``signing_keys``. The required list defaults to every package on the
    image.
    """
    base = [
        PackageArtifact(a.name, a.version, a.payload, image_id, PackageCategory.base) for a in base_set
    ]
    groups = _group(base + list(packages))

    tree = {IMAGE_RAMDISK_DIR + path: data for path, data in DEFAULT_RAMDISK.items()}
    tree[VERIFIER_TOOL] = VERIFIER_BINARY
    for category, artifacts in groups.items():
        if not artifacts:
            continue
        set_name, directory = SET_FOR_CATEGORY[category]
        for artifact in artifacts:
            tree[f"{directory}/{artifact.filename}"] = artifact.payload
        manifest_name = manifest_filename(set_name, algorithm)
        manifest_bytes = build_manifest(artifacts, algorithm).render()
        tree[f"{directory}/{manifest_name}"] = manifest_bytes
        for secret in signing_keys or []:
            sig = sign_payload(manifest_bytes, secret, algorithm)
            tree[f"{directory}/{signature_filename(manifest_name, secret.key_id)}"] = render_signature(sig)

    if required is None:
        required = [(a.name, c) for c, artifacts in groups.items() for a in artifacts]
    tree[f"{IMAGE_CONFIG_DIR}/{REQUIRED_FILE}"] = "".join(
        f"{name} {category.value}\n" for name, category in required
    ).encode()
    tree[f"{IMAGE_CONFIG_DIR}/{KEYRING_FILE}"] = render_keyring(keyring_template).encode()
    tree[f"{IMAGE_CONFIG_DIR}/{CONFIG_FILE}"] = config_defaults.encode()

    image = VirtualMedium(
        medium_id=image_id,
        kind=MediumKind.boot_image,
        write_locked=True,
        tree=tree,
        size_bytes=sum(len(d) for d in tree.values()),
    )
    logger.info(
        "Built %s: %d packages, %d signing keys",
        image_id, sum(len(a) for a in groups.values()), len(signing_keys or []),
    )
    return image
