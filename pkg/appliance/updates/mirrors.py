"""Download mirrors: random selection and their on-host directory form."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import NoMirrors
from ..simnet import Endpoint, SimNetwork

logger = logging.getLogger(__name__)

DOWN_MARKER = "DOWN"
DNS_FILE = "DNS"


@dataclass(frozen=True)
class MirrorSet:
    servers: tuple[str, ...]
    rng_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "servers", tuple(self.servers))


def pick_mirror(mirrors: MirrorSet, draw: int) -> str:
    """Uniform choice fixed by ``(rng_seed, draw)``, so replays pick the same server."""
    if not mirrors.servers:
        raise NoMirrors("mirror list is empty")
    rng = np.random.default_rng([mirrors.rng_seed, draw])
    return mirrors.servers[int(rng.integers(len(mirrors.servers)))]


# ---------------------------------------------------------------------------
# Host directories: one per endpoint, plain files plus optional markers
# ---------------------------------------------------------------------------
def load_mirror_dir(directory: Path) -> tuple[dict[str, bytes], bool, dict[str, str] | None]:
    """Read ``(files, reachable, dns_records)`` from an endpoint directory."""
    files = {}
    reachable = True
    dns = None
    for entry in sorted(directory.iterdir()):
        if not entry.is_file() or entry.name.startswith(".tmp-"):
            continue
        if entry.name == DOWN_MARKER:
            reachable = False
        elif entry.name == DNS_FILE:
            dns = dict(
                line.split("=", 1) for line in entry.read_text().splitlines() if "=" in line
            )
        else:
            files[entry.name] = entry.read_bytes()
    return files, reachable, dns


def save_mirror_dir(endpoint: Endpoint, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for name, data in endpoint.files.items():
        target = directory / name
        tmp = directory / f".tmp-{name}"
        tmp.write_bytes(data)
        tmp.replace(target)
    marker = directory / DOWN_MARKER
    if endpoint.reachable:
        marker.unlink(missing_ok=True)
    else:
        marker.write_text("")
    if endpoint.dns_records is not None:
        (directory / DNS_FILE).write_text(
            "".join(f"{k}={v}\n" for k, v in sorted(endpoint.dns_records.items()))
        )


def register_mirror_dir(network: SimNetwork, directory: Path, endpoint_id: str | None = None) -> Endpoint:
    files, reachable, dns = load_mirror_dir(directory)
    endpoint = network.add_endpoint(endpoint_id or directory.name, files, reachable, dns)
    logger.debug("Loaded endpoint %s (%d files, reachable=%s)", endpoint.endpoint_id, len(files), reachable)
    return endpoint
