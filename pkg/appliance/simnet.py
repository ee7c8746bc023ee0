"""Simulated network fabric shared by appliances, mirrors and release hosts.

Nothing here touches a real socket. Endpoints hold flat file maps (mirror
layout) and optional DNS records; hosts talk to them through a
:class:`NetworkInterface` that enforces the privilege rules and reports every
send and receive to an optional listener.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

from .boot.process import ProcessTag, assert_may_use_network
from .errors import EndpointUnreachable, InterfaceDown, NotFound

logger = logging.getLogger(__name__)

NetListener = Callable[[str, dict], None]


@dataclass
class Endpoint:
    """A remote server: download mirror, revocation source or DNS server."""
    endpoint_id: str
    files: dict[str, bytes] = field(default_factory=dict)
    reachable: bool = True
    dns_records: dict[str, str] | None = None


class SimNetwork:
    """The shared fabric: a registry of endpoints and attached host interfaces."""

    def __init__(self) -> None:
        self._endpoints: dict[str, Endpoint] = {}
        self._interfaces: dict[str, NetworkInterface] = {}

    def add_endpoint(
        self,
        endpoint_id: str,
        files: dict[str, bytes] | None = None,
        reachable: bool = True,
        dns_records: dict[str, str] | None = None,
    ) -> Endpoint:
        endpoint = Endpoint(endpoint_id, dict(files or {}), reachable, dns_records)
        self._endpoints[endpoint_id] = endpoint
        return endpoint

    def endpoint(self, endpoint_id: str) -> Endpoint:
        try:
            return self._endpoints[endpoint_id]
        except KeyError:
            raise EndpointUnreachable(f"no route to {endpoint_id}") from None

    def endpoints(self) -> list[Endpoint]:
        return list(self._endpoints.values())

    def set_reachable(self, endpoint_id: str, reachable: bool) -> None:
        self.endpoint(endpoint_id).reachable = reachable

    def attach(self, host_id: str, listener: NetListener | None = None, up: bool = False) -> NetworkInterface:
        """Attach a host and return its interface."""
        iface = NetworkInterface(self, host_id, listener=listener, up=up)
        self._interfaces[host_id] = iface
        return iface

    def connect(self, host_id: str) -> bool:
        """Attempt an inbound connection to ``host_id``; True if it is accepted."""
        iface = self._interfaces.get(host_id)
        if iface is None:
            return False
        return iface.accept_inbound()


class NetworkInterface:
    """One host's network interface."""

    def __init__(
        self,
        network: SimNetwork,
        host_id: str,
        listener: NetListener | None = None,
        up: bool = False,
    ) -> None:
        self.network = network
        self.host_id = host_id
        self.listener = listener
        self.up = up
        self.address: str | None = None
        self.accepting = True

    # ------------------------------------------------------------------
    # Interface state
    # ------------------------------------------------------------------
    def raise_interface(self, address: str | None = None) -> None:
        self.up = True
        self.address = address
        self._emit("net.up", {"address": address or "-"})

    def lower_interface(self) -> None:
        self.up = False
        self._emit("net.down", {})

    def accept_inbound(self) -> bool:
        accepted = self.up and self.accepting
        self._emit("net.inbound", {"accepted": str(accepted).lower()})
        return accepted

    # ------------------------------------------------------------------
    # Traffic
    # ------------------------------------------------------------------
    def fetch(self, endpoint_id: str, name: str, proc: ProcessTag) -> bytes:
        endpoint = self._reach(endpoint_id, proc, "fetch")
        try:
            data = endpoint.files[name]
        except KeyError:
            raise NotFound(f"{endpoint_id} has no {name}") from None
        self._emit("net.recv", _traffic(proc, endpoint_id, name, len(data)))
        return data

    def list_files(self, endpoint_id: str, proc: ProcessTag) -> list[str]:
        endpoint = self._reach(endpoint_id, proc, "list")
        names = sorted(endpoint.files)
        self._emit("net.recv", _traffic(proc, endpoint_id, "-", len(names)))
        return names

    def put(self, endpoint_id: str, name: str, data: bytes, proc: ProcessTag) -> None:
        endpoint = self._reach(endpoint_id, proc, "put")
        endpoint.files[name] = bytes(data)
        self._emit("net.send", _traffic(proc, endpoint_id, name, len(data)))

    def resolve(self, hostname: str, dns_servers: list[str], proc: ProcessTag) -> str | None:
        """Look ``hostname`` up against each server in turn."""
        for server in dns_servers:
            try:
                endpoint = self._reach(server, proc, "dns")
            except EndpointUnreachable:
                continue
            self._emit("net.send", _traffic(proc, server, hostname, 0))
            if endpoint.dns_records and hostname in endpoint.dns_records:
                self._emit("net.recv", _traffic(proc, server, hostname, 1))
                return endpoint.dns_records[hostname]
        return None

    def _reach(self, endpoint_id: str, proc: ProcessTag, op: str) -> Endpoint:
        if self.listener is not None and (proc.privileged or not proc.network_capable):
            # Refused attempts are still recorded.
            self._emit("net.send", _traffic(proc, endpoint_id, op, 0))
        assert_may_use_network(proc)
        if not self.up:
            raise InterfaceDown(f"{self.host_id}: interface down ({op} {endpoint_id})")
        endpoint = self.network.endpoint(endpoint_id)
        if not endpoint.reachable:
            logger.debug("%s unreachable from %s", endpoint_id, self.host_id)
            raise EndpointUnreachable(f"{endpoint_id} is unreachable")
        return endpoint

    def _emit(self, event: str, detail: dict) -> None:
        if self.listener is not None:
            self.listener(event, detail)


def _traffic(proc: ProcessTag, endpoint_id: str, name: str, size: int) -> dict:
    return {
        "proc": proc.process_id,
        "privileged": str(proc.privileged).lower(),
        "peer": endpoint_id,
        "name": name,
        "size": str(size),
    }
