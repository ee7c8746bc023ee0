"""Boot-time cost model and the downtime it implies."""

from __future__ import annotations

from dataclasses import dataclass

from pydantic import BaseModel, Field

from ..errors import InvalidInterval, ZeroRate
from ..settings import (
    CALIBRATED_BASE_INSTALL_S,
    CALIBRATED_FIXED_OVERHEAD_S,
    CALIBRATED_PACKAGE_RATE,
    CALIBRATED_SIGNATURE_CHECK_S,
)

STAGES = ("signature_check", "base_install", "package_install", "fixed_overhead")


class BootCostModel(BaseModel):
    """Seconds spent in each boot stage; packages cost bytes / rate."""
    fixed_overhead_s: float = Field(default=CALIBRATED_FIXED_OVERHEAD_S, ge=0)
    signature_check_s: float = Field(default=CALIBRATED_SIGNATURE_CHECK_S, ge=0)
    base_install_s: float = Field(default=CALIBRATED_BASE_INSTALL_S, ge=0)
    package_rate_bytes_per_s: float = Field(default=CALIBRATED_PACKAGE_RATE, ge=0)

    model_config = {"frozen": True}

    @classmethod
    def calibrated(cls) -> BootCostModel:
        return cls()


def boot_stages(model: BootCostModel, package_bytes: int) -> dict[str, float]:
    if model.package_rate_bytes_per_s <= 0:
        raise ZeroRate("package install rate must be positive")
    return {
        "signature_check": model.signature_check_s,
        "base_install": model.base_install_s,
        "package_install": package_bytes / model.package_rate_bytes_per_s,
        "fixed_overhead": model.fixed_overhead_s,
    }


def boot_duration(model: BootCostModel, package_bytes: int) -> float:
    """Reset-to-login seconds for a boot installing ``package_bytes`` of packages."""
    return sum(boot_stages(model, package_bytes).values())


@dataclass(frozen=True)
class Availability:
    downtime_fraction: float

    @property
    def downtime_percent(self) -> float:
        return self.downtime_fraction * 100.0

    def format_percent(self, digits: int = 5) -> str:
        return f"{self.downtime_percent:.{digits}f}%"


def availability(reboot_interval_s: float, boot_seconds: float) -> Availability:
    """Fraction of time spent booting when rebooting every ``reboot_interval_s``."""
    if boot_seconds < 0:
        raise InvalidInterval("boot time cannot be negative")
    if reboot_interval_s <= 0 or reboot_interval_s <= boot_seconds:
        raise InvalidInterval(
            f"reboot interval {reboot_interval_s}s must exceed boot time {boot_seconds}s"
        )
    return Availability(boot_seconds / reboot_interval_s)
