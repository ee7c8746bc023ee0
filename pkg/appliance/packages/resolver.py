"""Valid-digest list construction and install-plan resolution."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

from ..trust.keys import Keyring
from ..trust.signatures import digest_bytes, is_deprecated, verify_signature
from .manifest import PackageCategory
from .scan import Candidate, ScanResult
from .versions import Ordering, compare_versions

logger = logging.getLogger(__name__)


@dataclass
class ValidDigestList:
    """Digests vouched for by at least one manifest with a valid signature."""
    digests: set[str] = field(default_factory=set)
    # digest -> [(manifest id, validating key id), ...]
    provenance: dict[str, list[tuple[str, str]]] = field(default_factory=dict)
    algorithms: set[str] = field(default_factory=set)
    warnings: list[str] = field(default_factory=list)

    def __contains__(self, digest: str) -> bool:
        return digest in self.digests

    def admits(self, payload: bytes) -> str | None:
        """The payload's digest if it is in the list under any algorithm in use."""
        for algorithm in sorted(self.algorithms):
            digest = digest_bytes(payload, algorithm)
            if digest in self.digests:
                return digest
        return None


def build_valid_digest_list(scan: ScanResult, keyring: Keyring) -> ValidDigestList:
    """Admit every digest of every manifest carrying at least one valid signature.

    Signatures are matched to manifests by file name across all media, so an
    operator can vouch for a cached manifest with a signature on the floppy.
    """
    valid = ValidDigestList()
    for scanned in scan.manifests:
        signers = []
        for sig in scan.signatures_for(scanned.filename):
            result = verify_signature(scanned.raw, sig.signature, keyring)
            logger.debug("%s by %s: %s", scanned.manifest_id, sig.key_id, result)
            if result.is_valid and result.key_id not in signers:
                signers.append(result.key_id)
        if not signers:
            logger.info("Manifest %s has no valid signature", scanned.manifest_id)
            continue

        algorithm = scanned.manifest.digest_algorithm
        if is_deprecated(algorithm):
            message = f"{scanned.manifest_id} uses deprecated digest {algorithm}"
            logger.warning(message)
            valid.warnings.append(message)
        valid.algorithms.add(algorithm)
        for digest in scanned.manifest.digests:
            valid.digests.add(digest)
            for key_id in signers:
                valid.provenance.setdefault(digest, []).append((scanned.manifest_id, key_id))
    return valid


class PlanStatus(str, Enum):
    complete = "Complete"
    hunker_down = "HunkerDown"


@dataclass(frozen=True)
class InstallStep:
    name: str
    version: str
    source_medium: str
    category: PackageCategory
    path: str
    digest: str
    payload: bytes = field(repr=False)


@dataclass
class InstallPlan:
    steps: list[InstallStep] = field(default_factory=list)
    status: PlanStatus = PlanStatus.complete
    missing: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def is_complete(self) -> bool:
        return self.status is PlanStatus.complete

    def version_of(self, name: str) -> str | None:
        return next((s.version for s in self.steps if s.name == name), None)

    def summary(self) -> list[tuple[str, str, str, str]]:
        return [(s.name, s.version, s.source_medium, s.category.value) for s in self.steps]

    def describe(self) -> str:
        if not self.is_complete:
            return f"HunkerDown({','.join(self.missing)})"
        return "Complete"


def _better(candidate: Candidate, incumbent: Candidate) -> bool:
    """Higher version wins; on equal versions the earlier package-path position."""
    order = compare_versions(candidate.version, incumbent.version)
    if order is not Ordering.equal:
        return order is Ordering.greater
    return (candidate.position, candidate.order) < (incumbent.position, incumbent.order)


def resolve_install_plan(
    required: list[tuple[str, PackageCategory]],
    scan: ScanResult,
    valid: ValidDigestList,
) -> InstallPlan:
    """Pick, for every required package, its highest validly signed version."""
    plan = InstallPlan(warnings=list(scan.warnings))
    seen: set[str] = set()
    chosen: list[tuple[int, int, InstallStep]] = []

    for index, (name, category) in enumerate(required):
        if name in seen:
            continue
        seen.add(name)
        best = None
        best_digest = None
        for candidate in scan.candidates_named(name):
            digest = valid.admits(candidate.artifact.payload)
            if digest is None:
                logger.info(
                    "Ignoring %s %s on %s: digest not validly signed",
                    name, candidate.version, candidate.artifact.found_on,
                )
                continue
            if best is None or _better(candidate, best):
                best, best_digest = candidate, digest
        if best is None:
            plan.missing.append(name)
            continue
        chosen.append((PackageCategory(category).rank, index, InstallStep(
            name=name,
            version=best.version,
            source_medium=best.artifact.found_on,
            category=PackageCategory(category),
            path=best.path,
            digest=best_digest,
            payload=best.artifact.payload,
        )))

    if plan.missing:
        plan.status = PlanStatus.hunker_down
        logger.warning("No valid candidate for %s; hunkering down", ", ".join(plan.missing))
        return plan

    plan.steps = [step for _, _, step in sorted(chosen, key=lambda t: (t[0], t[1]))]
    return plan
