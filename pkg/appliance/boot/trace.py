"""Replay a boot log and report every platform invariant it breaks.

Checked per event, in order:

* no instant at which the interface is up while a probed configuration
  medium is writable;
* no network send or receive by a privileged process;
* every ``Allowed`` exec is backed by the evanescent store or the boot image,
  and never by the update cache;
* persistent media fingerprints taken within one epoch agree, unless the
  medium received explicitly written configuration in between;
* every phase change is a legal transition.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from ..media.evanescent import Backing, ExecDecision
from ..media.medium import ProbeResult, VirtualMedium
from ..settings import CACHE_DIR
from .events import BootEvent
from .state import BootPhase, is_legal


@dataclass(frozen=True)
class TraceViolation:
    kind: str
    epoch: int
    t: float
    detail: str

    def render(self) -> str:
        return f"violation={self.kind} epoch={self.epoch} t={self.t:.3f} {self.detail}"


def media_fingerprint(medium: VirtualMedium, exclude: str = CACHE_DIR) -> str:
    """Tree hash of a persistent medium, ignoring the update cache."""
    prefix = exclude.rstrip("/") + "/"
    h = hashlib.sha256()
    for path in sorted(medium.tree):
        if path.startswith(prefix):
            continue
        h.update(path.encode() + b"\0" + hashlib.sha256(medium.tree[path]).digest())
    return h.hexdigest()


def _flag(value: str) -> bool:
    return value == "true"


def verify_trace(events: list[BootEvent]) -> list[TraceViolation]:
    violations: list[TraceViolation] = []
    net_up = False
    writable: dict[str, bool] = {}
    baseline: dict[tuple[int, str], str] = {}
    rewritten: set[tuple[int, str]] = set()
    exposed = False

    def flag(event: BootEvent, kind: str, detail: str) -> None:
        violations.append(TraceViolation(kind, event.epoch, event.t, detail))

    for event in events:
        d = event.detail
        name = event.event

        if name == "net.up":
            net_up = True
        elif name == "net.down":
            net_up = False
        elif name == "probe":
            writable[d.get("medium", "?")] = d.get("result") == ProbeResult.writable.value
        elif name == "floppy.action":
            writable[d.get("medium", "?")] = _flag(d.get("present", "false")) and not _flag(
                d.get("locked", "true")
            )
        elif name in ("net.send", "net.recv"):
            if _flag(d.get("privileged", "false")):
                flag(event, "privileged-network", f"proc={d.get('proc')} peer={d.get('peer')}")
        elif name == "exec" and d.get("decision") == ExecDecision.allowed.value:
            backing = d.get("backing")
            resolved = d.get("resolved", "")
            if backing not in (Backing.evanescent.value, Backing.boot_image.value):
                flag(event, "exec-provenance", f"path={d.get('path')} backing={backing}")
            elif resolved.startswith(CACHE_DIR.rstrip("/") + "/"):
                flag(event, "exec-from-cache", f"path={d.get('path')}")
        elif name == "config.written":
            rewritten.add((event.epoch, d.get("medium", "?")))
        elif name == "media.hash":
            key = (event.epoch, d.get("medium", "?"))
            first = baseline.setdefault(key, d.get("hash", ""))
            if first != d.get("hash") and key not in rewritten:
                flag(event, "persistent-media-changed", f"medium={key[1]}")
                baseline[key] = d.get("hash", "")
        elif name == "phase":
            try:
                legal = is_legal(BootPhase(d.get("from")), BootPhase(d.get("to")))
            except ValueError:
                legal = False
            if not legal:
                flag(event, "illegal-transition", f"{d.get('from')}->{d.get('to')}")

        open_media = sorted(m for m, w in writable.items() if w) if net_up else []
        if open_media and not exposed:
            flag(event, "network-with-writable-config", f"media={','.join(open_media)} event={name}")
        exposed = bool(open_media)
    return violations
