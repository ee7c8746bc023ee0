"""Appliance network and administration configuration (``config.txt``)."""

from __future__ import annotations

import hashlib
import ipaddress

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from ..errors import ConfigError

CONFIG_KEYS = ("IP_ADDRESS", "NETMASK", "GATEWAY", "DNS_SERVERS", "PASSWD_DIGEST", "HOSTKEY_ID")


def check_address(value: str) -> str:
    try:
        return str(ipaddress.IPv4Address(value.strip()))
    except (ipaddress.AddressValueError, ValueError) as e:
        raise ValueError(f"not an IPv4 address: {value!r}") from e


def check_netmask(value: str) -> str:
    mask = check_address(value)
    try:
        ipaddress.IPv4Network(f"0.0.0.0/{mask}")
    except ValueError:
        raise ValueError(f"netmask {mask} is not contiguous") from None
    return mask


def in_subnet(address: str, netmask: str, candidate: str) -> bool:
    network = ipaddress.IPv4Network(f"{address}/{netmask}", strict=False)
    return ipaddress.IPv4Address(candidate) in network


class ApplianceConfig(BaseModel):
    ip_address: str
    netmask: str
    gateway: str
    dns_servers: list[str] = Field(min_length=1)
    admin_password_digest: str = ""
    ssh_host_key_id: str = ""
    extra: dict[str, str] = Field(default_factory=dict)

    @field_validator("ip_address", "gateway")
    @classmethod
    def _address(cls, value: str) -> str:
        return check_address(value)

    @field_validator("netmask")
    @classmethod
    def _netmask(cls, value: str) -> str:
        return check_netmask(value)

    @field_validator("dns_servers")
    @classmethod
    def _dns(cls, value: list[str]) -> list[str]:
        return [check_address(v) for v in value]

    @model_validator(mode="after")
    def _gateway_in_subnet(self) -> ApplianceConfig:
        if not in_subnet(self.ip_address, self.netmask, self.gateway):
            raise ValueError(
                f"gateway {self.gateway} is outside {self.ip_address}/{self.netmask}"
            )
        return self


def hash_password(password: str, salt: bytes) -> str:
    digest = hashlib.sha256(salt + password.encode()).hexdigest()
    return f"sha256${salt.hex()}${digest}"


def check_password(password: str, stored: str) -> bool:
    try:
        scheme, salt_hex, _ = stored.split("$")
    except ValueError:
        return False
    return scheme == "sha256" and hash_password(password, bytes.fromhex(salt_hex)) == stored


# ---------------------------------------------------------------------------
# config.txt: KEY=VALUE per line, unknown keys preserved
# ---------------------------------------------------------------------------
def parse_config_text(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"config line is not KEY=VALUE: {raw!r}")
        values[key.strip()] = value.strip()
    return values


def config_from_values(values: dict[str, str]) -> ApplianceConfig:
    missing = [k for k in ("IP_ADDRESS", "NETMASK", "GATEWAY", "DNS_SERVERS") if k not in values]
    if missing:
        raise ConfigError(f"config is missing {', '.join(missing)}")
    try:
        return ApplianceConfig(
            ip_address=values["IP_ADDRESS"],
            netmask=values["NETMASK"],
            gateway=values["GATEWAY"],
            dns_servers=[s for s in values["DNS_SERVERS"].split(",") if s.strip()],
            admin_password_digest=values.get("PASSWD_DIGEST", ""),
            ssh_host_key_id=values.get("HOSTKEY_ID", ""),
            extra={k: v for k, v in values.items() if k not in CONFIG_KEYS},
        )
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e.errors()[0]['msg']}") from None


def render_config(config: ApplianceConfig) -> str:
    values = {
        "IP_ADDRESS": config.ip_address,
        "NETMASK": config.netmask,
        "GATEWAY": config.gateway,
        "DNS_SERVERS": ",".join(config.dns_servers),
        "PASSWD_DIGEST": config.admin_password_digest,
        "HOSTKEY_ID": config.ssh_host_key_id,
        **config.extra,
    }
    return "".join(f"{k}={v}\n" for k, v in values.items())
