"""Process identities and the privilege rules they are held to."""

from __future__ import annotations

from dataclasses import dataclass, replace

from ..errors import PrivilegeViolation


@dataclass(frozen=True)
class ProcessTag:
    """Identity of a simulated process.

    A process may be privileged or network capable, never both.
    """
    process_id: str
    privileged: bool
    network_capable: bool

    def __post_init__(self) -> None:
        if self.privileged and self.network_capable:
            raise PrivilegeViolation(
                f"process {self.process_id} cannot be both privileged and network capable"
            )


ROOT = ProcessTag("boot", privileged=True, network_capable=False)


def drop_privileges(tag: ProcessTag, process_id: str | None = None) -> ProcessTag:
    """Return an unprivileged, network-capable identity derived from ``tag``.

    Models the skeleton ``sudo`` that root can use only to give up privileges.
    """
    return replace(
        tag,
        process_id=process_id or f"{tag.process_id}-unpriv",
        privileged=False,
        network_capable=True,
    )


def assert_may_use_network(tag: ProcessTag) -> None:
    """Raise unless ``tag`` is an unprivileged network-capable process."""
    if tag.privileged or not tag.network_capable:
        raise PrivilegeViolation(
            f"process {tag.process_id} (privileged={tag.privileged}) attempted network I/O"
        )
