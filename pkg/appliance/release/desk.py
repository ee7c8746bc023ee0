"""Desk-scale releases and appliances built through the real release pipeline.

Used by the fleet simulator, the CLI's fixture commands and the tests: a
small signed boot image, a locked configuration floppy, a disk and a set of
download mirrors, all wired to one simulated network.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from ..boot.config import ApplianceConfig, hash_password, render_config
from ..boot.machine import VirtualMachine
from ..boot.operator import PARTITION_KEY, ScriptedOperator
from ..fleet.costs import BootCostModel
from ..media.medium import MediumKind, VirtualMedium
from ..packages.manifest import PackageArtifact, PackageCategory
from ..packages.payload import pack_payload
from ..settings import CONFIG_FILE, DNS_PROBE_NAME, GIB, KEYRING_FILE
from ..simnet import SimNetwork
from ..trust.keys import Keyring, SecretKey, generate_keypair, render_keyring
from ..trust.revocation import REVOCATION_RESOURCE
from .image import build_image
from .publish import SignedRelease, extract_and_sign_package

logger = logging.getLogger(__name__)

SIGNING_KEY_IDS = ("release-a", "release-b")
REVOCATION_SOURCE = "keys.lockss.example"
DNS_SERVER = "192.0.2.53"


def base_artifact(version: str = "1.0") -> PackageArtifact:
    payload = pack_payload(
        {
            "bin/ls": f"ls {version}\n".encode(),
            "etc/login.conf": b"default:\n",
            "usr/share/base.version": version.encode(),
        },
        executables={"bin/ls"},
    )
    return PackageArtifact("base", version, payload, category=PackageCategory.base)


def port_artifact(version: str = "1.4") -> PackageArtifact:
    payload = pack_payload(
        {"usr/local/jdk/bin/java": f"java {version}\n".encode()},
        executables={"usr/local/jdk/bin/java"},
    )
    return PackageArtifact("jdk", version, payload, category=PackageCategory.port)


def daemon_artifact(version: str = "1.0", filler: int = 0) -> PackageArtifact:
    """The appliance daemon; ``filler`` pads the payload to model install size."""
    files = {
        "lockss/bin/daemon": f"daemon {version}\n".encode(),
        "etc/lockss/daemon.conf": f"version={version}\n".encode(),
    }
    if filler:
        files["lockss/lib/daemon.jar"] = bytes(filler)
    payload = pack_payload(files, executables={"lockss/bin/daemon"})
    return PackageArtifact("daemon", version, payload, category=PackageCategory.application)


@dataclass
class DeskRelease:
    """Signing keys, the keyring template and a built boot image."""
    secrets: list[SecretKey]
    keyring: Keyring
    image: VirtualMedium
    packages: list[PackageArtifact] = field(default_factory=list)

    def sign(self, name: str, secrets: list[SecretKey] | None = None) -> SignedRelease:
        return extract_and_sign_package(self.image, name, self.secrets if secrets is None else secrets)


def make_release(
    seed: int = 0,
    daemon_version: str = "1.0",
    signers: int = 2,
    daemon_filler: int = 0,
    image_id: str = "cd0",
) -> DeskRelease:
    keyring = Keyring(origin_medium=image_id)
    secrets = [generate_keypair(key_id, seed, keyring)[1] for key_id in SIGNING_KEY_IDS[:signers]]
    base = [base_artifact()]
    packages = [port_artifact(), daemon_artifact(daemon_version, daemon_filler)]
    image = build_image(packages, base, keyring, secrets, image_id=image_id)
    return DeskRelease(secrets, keyring, image, base + packages)


def patch_bundle(release: DeskRelease, version: str, tampered: bool = False) -> dict[str, bytes]:
    """A signed daemon update in mirror layout; ``tampered`` corrupts the payload after signing."""
    patched = build_image(
        [daemon_artifact(version)], [], release.keyring, image_id=f"{release.image.medium_id}-patch",
    )
    signed = extract_and_sign_package(patched, "daemon", release.secrets)
    bundle = signed.bundle()
    if tampered:
        name = signed.artifact.filename
        bundle[name] = bundle[name][:-1] + bytes([bundle[name][-1] ^ 0xFF])
    return bundle


def desk_config(index: int = 0) -> ApplianceConfig:
    ip = f"10.0.{index // 250}.{index % 250 + 2}"
    return ApplianceConfig(
        ip_address=ip,
        netmask="255.255.0.0",
        gateway="10.0.0.1",
        dns_servers=[DNS_SERVER],
        admin_password_digest=hash_password("desk", ip.encode()),
        ssh_host_key_id=f"hostkey-{index}",
    )


def make_floppy(keyring: Keyring, config: ApplianceConfig | None, floppy_id: str = "floppy0") -> VirtualMedium:
    tree = {"/" + KEYRING_FILE: render_keyring(keyring).encode()}
    if config is not None:
        tree["/" + CONFIG_FILE] = render_config(config).encode()
    return VirtualMedium(floppy_id, MediumKind.config_floppy, write_locked=True, tree=tree)


def make_network(mirrors: list[str], revoked: list[str] | None = None, down: list[str] | None = None) -> SimNetwork:
    network = SimNetwork()
    for mirror in mirrors:
        network.add_endpoint(mirror, reachable=mirror not in (down or []))
    network.add_endpoint(
        REVOCATION_SOURCE,
        {REVOCATION_RESOURCE: "".join(f"REVOKE {k}\n" for k in revoked or []).encode()},
    )
    network.add_endpoint(DNS_SERVER, dns_records={DNS_PROBE_NAME: "192.0.2.80"})
    return network


def make_machine(
    release: DeskRelease,
    network: SimNetwork,
    mirrors: list[str],
    machine_id: str = "appliance0",
    index: int = 0,
    seed: int = 0,
    configured: bool = True,
    answers: dict[str, list[str]] | None = None,
    disk_bytes: int = 8 * GIB,
    cost_model: BootCostModel | None = None,
) -> VirtualMachine:
    """An appliance that boots straight to Running unless told otherwise.

    ``configured=False`` leaves the floppy without a config.txt so the
    wizard runs on first boot.
    """
    floppy = make_floppy(release.keyring.copy(), desk_config(index) if configured else None)
    operator_answers = {PARTITION_KEY: ["yes"]}
    operator_answers.update(answers or {})
    machine = VirtualMachine(
        machine_id=machine_id,
        boot_image=VirtualMedium(
            release.image.medium_id, MediumKind.boot_image, tree=dict(release.image.tree),
            size_bytes=release.image.size_bytes,
        ),
        floppy=floppy,
        disks=[VirtualMedium(f"wd0.{machine_id}", MediumKind.hard_disk, size_bytes=disk_bytes)],
        network=network,
        operator=ScriptedOperator(operator_answers),
        mirrors=list(mirrors),
        revocation_sources=[REVOCATION_SOURCE],
        seed=seed,
        cost_model=cost_model or BootCostModel.calibrated(),
    )
    logger.debug("Built desk appliance %s", machine_id)
    return machine
