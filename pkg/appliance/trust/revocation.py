"""Key revocation lists and the boot-time revocation check."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from ..boot.process import ProcessTag
from ..errors import ApplianceError, FormatError, PrivilegeViolation
from ..simnet import NetworkInterface
from .keys import Keyring

logger = logging.getLogger(__name__)

REVOCATION_RESOURCE = "revocations"


@dataclass(frozen=True)
class RevocationList:
    revoked_key_ids: frozenset[str] = frozenset()
    fetched_at: float = 0.0
    source: str = ""

    def merge(self, other: RevocationList) -> RevocationList:
        """Union of both lists; the later fetch time is kept."""
        sources = "+".join(s for s in (self.source, other.source) if s)
        return RevocationList(
            self.revoked_key_ids | other.revoked_key_ids,
            max(self.fetched_at, other.fetched_at),
            sources,
        )


@dataclass
class RevocationReport:
    reachable: list[str] = field(default_factory=list)
    unreachable: list[str] = field(default_factory=list)
    newly_revoked: list[str] = field(default_factory=list)
    merged: RevocationList = field(default_factory=RevocationList)
    warnings: list[str] = field(default_factory=list)

    @property
    def degraded(self) -> bool:
        """No source could be consulted; keys kept their last-known status."""
        return not self.reachable


def parse_revocation_list(text: str, source: str = "", fetched_at: float = 0.0) -> RevocationList:
    """Parse ``REVOKE <key_id>`` lines; blank lines and ``#`` comments are skipped."""
    ids = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2 or parts[0] != "REVOKE":
            raise FormatError(f"revocation line {lineno}: {raw!r}")
        ids.add(parts[1])
    return RevocationList(frozenset(ids), fetched_at, source)


def render_revocation_list(revoked: RevocationList) -> str:
    return "".join(f"REVOKE {key_id}\n" for key_id in sorted(revoked.revoked_key_ids))


def check_revocation(
    keyring: Keyring,
    sources: list[str],
    net: NetworkInterface,
    proc: ProcessTag,
    now: float = 0.0,
) -> RevocationReport:
    """Consult every revocation source and revoke any listed key in ``keyring``.

    Unreachable sources are recorded, never fatal. Running it twice with the
    same sources has the same effect as running it once.
    """
    report = RevocationReport()
    merged = RevocationList(fetched_at=now)

    for source in sources:
        try:
            body = net.fetch(source, REVOCATION_RESOURCE, proc)
            fetched = parse_revocation_list(body.decode(), source=source, fetched_at=now)
        except PrivilegeViolation:
            raise
        except (ApplianceError, UnicodeDecodeError) as e:
            logger.warning("Revocation source %s unavailable: %s", source, e)
            report.unreachable.append(source)
            continue
        report.reachable.append(source)
        merged = merged.merge(fetched)

    for key_id in sorted(merged.revoked_key_ids):
        if keyring.revoke(key_id):
            report.newly_revoked.append(key_id)

    report.merged = merged
    if report.degraded:
        report.warnings.append(
            "revocation check degraded: no source reachable, keeping last-known key status"
        )
    return report
