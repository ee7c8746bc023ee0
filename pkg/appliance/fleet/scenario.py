"""Firedrill scenarios: the fleet, its mirrors and how its administrators behave."""

from __future__ import annotations

import logging
from enum import Enum
from pathlib import Path

import numpy as np
from pydantic import BaseModel, Field, ValidationError, model_validator

from ..errors import InvalidScenario
from ..settings import (
    CALIBRATED_PACKAGE_BYTES,
    FIREDRILL_RESPONSE_MU,
    FIREDRILL_RESPONSE_SIGMA,
    SPONTANEOUS_REBOOT_MEAN_H,
)
from .costs import BootCostModel

logger = logging.getLogger(__name__)


class ResponseDistribution(str, Enum):
    lognormal = "lognormal"
    exponential = "exponential"
    constant = "constant"


class FleetScenario(BaseModel):
    """One firedrill. Times are simulated hours unless the name says seconds."""
    n_appliances: int = Field(default=1000, ge=1)
    mirror_count: int = Field(default=3, ge=1)
    dead_mirrors: int = Field(default=0, ge=0)
    response: ResponseDistribution = ResponseDistribution.lognormal
    response_mu: float = Field(default=FIREDRILL_RESPONSE_MU, ge=0)
    response_sigma: float = Field(default=FIREDRILL_RESPONSE_SIGMA, ge=0)
    response_mean_h: float = Field(default=24.0, ge=0)
    response_value_h: float = Field(default=0.0, ge=0)
    check_interval_h: float = Field(default=24.0, gt=0)
    check_jitter: float = Field(default=0.1, ge=0, lt=0.5)
    reboot_mean_h: float = Field(default=SPONTANEOUS_REBOOT_MEAN_H, gt=0)
    horizon_h: float = Field(default=168.0, gt=0)
    sample_step_h: float = Field(default=1.0, gt=0)
    package_bytes: int = Field(default=CALIBRATED_PACKAGE_BYTES, ge=0)
    tampered: bool = False
    patch_version: str = "1.1"
    seed: int = 0
    boot_cost: BootCostModel = Field(default_factory=BootCostModel.calibrated)

    @model_validator(mode="after")
    def _some_mirror_alive(self) -> FleetScenario:
        if self.dead_mirrors >= self.mirror_count:
            raise ValueError("at least one mirror must be reachable")
        return self

    def sample_response(self, rng: np.random.Generator) -> float:
        """One administrator's delay in hours."""
        if self.response is ResponseDistribution.lognormal:
            return float(rng.lognormal(self.response_mu, self.response_sigma))
        if self.response is ResponseDistribution.exponential:
            return float(rng.exponential(self.response_mean_h)) if self.response_mean_h > 0 else 0.0
        return self.response_value_h


# KEY in the scenario file -> field name
SCENARIO_KEYS = {
    "N_APPLIANCES": "n_appliances",
    "MIRRORS": "mirror_count",
    "DEAD_MIRRORS": "dead_mirrors",
    "RESPONSE": "response",
    "RESPONSE_MU": "response_mu",
    "RESPONSE_SIGMA": "response_sigma",
    "RESPONSE_MEAN_H": "response_mean_h",
    "RESPONSE_VALUE_H": "response_value_h",
    "CHECK_INTERVAL_H": "check_interval_h",
    "CHECK_JITTER": "check_jitter",
    "REBOOT_MEAN_H": "reboot_mean_h",
    "HORIZON_H": "horizon_h",
    "SAMPLE_STEP_H": "sample_step_h",
    "PACKAGE_BYTES": "package_bytes",
    "TAMPERED": "tampered",
    "PATCH_VERSION": "patch_version",
    "SEED": "seed",
}
COST_KEYS = {
    "FIXED_OVERHEAD_S": "fixed_overhead_s",
    "SIGNATURE_CHECK_S": "signature_check_s",
    "BASE_INSTALL_S": "base_install_s",
    "PACKAGE_RATE": "package_rate_bytes_per_s",
}


def parse_scenario(text: str, seed: int | None = None) -> FleetScenario:
    """Build a scenario from ``KEY=VALUE`` lines; ``seed`` overrides the file's SEED."""
    fields: dict[str, object] = {}
    costs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip().upper(), value.strip()
        if not sep:
            raise InvalidScenario(f"line {lineno}: {raw!r} is not KEY=VALUE")
        if key in SCENARIO_KEYS:
            fields[SCENARIO_KEYS[key]] = value
        elif key in COST_KEYS:
            costs[COST_KEYS[key]] = value
        else:
            raise InvalidScenario(f"line {lineno}: unknown key {key}")
    if seed is not None:
        fields["seed"] = seed
    try:
        if costs:
            fields["boot_cost"] = BootCostModel(**costs)
        return FleetScenario(**fields)
    except ValidationError as e:
        error = e.errors()[0]
        where = ".".join(str(p) for p in error["loc"]) or "scenario"
        raise InvalidScenario(f"{where}: {error['msg']}") from None


def load_scenario(path: Path, seed: int | None = None) -> FleetScenario:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise InvalidScenario(f"cannot read {path}: {e.strerror}") from None
    return parse_scenario(text, seed)


def render_scenario(scenario: FleetScenario) -> str:
    data = scenario.model_dump(mode="json")
    lines = [f"{key}={data[name]}" for key, name in SCENARIO_KEYS.items()]
    lines += [f"{key}={data['boot_cost'][name]}" for key, name in COST_KEYS.items()]
    return "\n".join(lines) + "\n"
