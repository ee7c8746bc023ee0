"""First-boot configuration wizard and the floppy write-lock handshake."""

from __future__ import annotations

import hashlib
import logging
from typing import Callable, TypeVar

from ..errors import ConfigError, FloppyNotLocked
from ..media.medium import ProbeResult, VirtualMedium, probe_write_lock
from ..settings import (
    CONFIG_FILE,
    DNS_PROBE_NAME,
    FLOPPY_MAX_POLLS,
    FLOPPY_POLL_INTERVAL_S,
    HOSTKEY_FILE,
    KEYRING_FILE,
)
from ..simnet import NetworkInterface
from ..trust.keys import Keyring, generate_keypair, render_keyring, render_secret
from .config import (
    ApplianceConfig,
    check_address,
    check_netmask,
    hash_password,
    in_subnet,
    render_config,
)
from .events import BootLog
from .operator import FloppyRequest, Operator
from .process import ROOT, drop_privileges

logger = logging.getLogger(__name__)

T = TypeVar("T")


def wait_for_floppy(
    floppy: VirtualMedium,
    operator: Operator,
    request: FloppyRequest,
    want: ProbeResult,
    log: BootLog,
    max_polls: int = FLOPPY_MAX_POLLS,
) -> int:
    """Probe until the floppy reaches ``want``, asking the operator between probes.

    Returns the number of polls it took.
    """
    polls = 0
    while True:
        result = probe_write_lock(floppy, log.listener)
        if result is want:
            return polls
        if polls >= max_polls:
            if want is ProbeResult.locked:
                raise FloppyNotLocked(f"{floppy.medium_id} still {result.value} after {polls} polls")
            raise ConfigError(f"{floppy.medium_id} still {result.value} after {polls} polls")
        if polls == 0:
            operator.tell(
                "Please write-lock the configuration floppy."
                if request is FloppyRequest.write_lock
                else "Please insert a write-enabled floppy."
            )
        operator.handle_floppy(floppy, request)
        log.record("floppy.action", {
            "medium": floppy.medium_id,
            "request": request.value,
            "present": str(floppy.present).lower(),
            "locked": str(floppy.write_locked).lower(),
        })
        log.clock.advance(FLOPPY_POLL_INTERVAL_S)
        polls += 1


def _prompt(
    operator: Operator,
    log: BootLog,
    key: str,
    prompt: str,
    validate: Callable[[str], T],
) -> T:
    while True:
        raw = operator.ask(key, prompt)
        try:
            return validate(raw)
        except ValueError as e:
            operator.tell(f"{key}: {e}")
            log.record("wizard.reprompt", {"field": key, "reason": str(e)})


def _password(raw: str) -> str:
    if not raw:
        raise ValueError("password must not be empty")
    return raw


def host_key_id(seed: int, ip_address: str) -> str:
    return "hostkey-" + hashlib.sha256(f"{seed}:{ip_address}".encode()).hexdigest()[:12]


def password_salt(seed: int, ip_address: str) -> bytes:
    return hashlib.sha256(f"salt:{seed}:{ip_address}".encode()).digest()[:8]


def run_config_wizard(
    operator: Operator,
    iface: NetworkInterface,
    floppy: VirtualMedium,
    keyring_template: Keyring,
    log: BootLog,
    seed: int = 0,
) -> ApplianceConfig:
    """Walk the operator through configuration and leave it on a locked floppy.

    Does not return until the floppy has been probed write-locked.
    """
    log.record("wizard.start", {"floppy": floppy.medium_id})
    if probe_write_lock(floppy, log.listener) is ProbeResult.writable:
        # The interface comes up for the DNS test below.
        wait_for_floppy(floppy, operator, FloppyRequest.write_lock, ProbeResult.locked, log)

    ip_address = _prompt(operator, log, "IP_ADDRESS", "IP address", check_address)
    netmask = _prompt(operator, log, "NETMASK", "Netmask", check_netmask)

    def gateway_check(raw: str) -> str:
        gateway = check_address(raw)
        if not in_subnet(ip_address, netmask, gateway):
            raise ValueError(f"gateway {gateway} is not in {ip_address}/{netmask}")
        return gateway

    gateway = _prompt(operator, log, "GATEWAY", "Default gateway", gateway_check)

    probe_proc = drop_privileges(ROOT, "wizard-dns")

    def dns_check(raw: str) -> list[str]:
        servers = [check_address(s) for s in raw.split(",") if s.strip()]
        if not servers:
            raise ValueError("at least one DNS server is required")
        iface.raise_interface(ip_address)
        try:
            answer = iface.resolve(DNS_PROBE_NAME, servers, probe_proc)
        finally:
            iface.lower_interface()
        if answer is None:
            raise ValueError(f"lookup of {DNS_PROBE_NAME} failed")
        return servers

    dns_servers = _prompt(operator, log, "DNS_SERVERS", "DNS servers (comma-separated)", dns_check)
    password = _prompt(operator, log, "PASSWORD", "Administrator password", _password)

    key_id = host_key_id(seed, ip_address)
    _, host_secret = generate_keypair(key_id, seed)
    config = ApplianceConfig(
        ip_address=ip_address,
        netmask=netmask,
        gateway=gateway,
        dns_servers=dns_servers,
        admin_password_digest=hash_password(password, password_salt(seed, ip_address)),
        ssh_host_key_id=key_id,
    )

    wait_for_floppy(floppy, operator, FloppyRequest.insert_writable, ProbeResult.writable, log)
    floppy.write("/" + CONFIG_FILE, render_config(config).encode())
    floppy.write("/" + HOSTKEY_FILE, render_secret(host_secret).encode())
    floppy.write("/" + KEYRING_FILE, render_keyring(keyring_template).encode())
    log.record("config.written", {
        "medium": floppy.medium_id,
        "files": ",".join((CONFIG_FILE, HOSTKEY_FILE, KEYRING_FILE)),
    })
    logger.info("Configuration written to %s", floppy.medium_id)

    wait_for_floppy(floppy, operator, FloppyRequest.write_lock, ProbeResult.locked, log)
    log.record("wizard.done", {"hostkey": key_id})
    return config
