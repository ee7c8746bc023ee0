"""Tests for the boot cost model, availability and firedrill simulation."""

import numpy as np
import pytest

from appliance.errors import InvalidInterval, InvalidScenario, ZeroRate
from appliance.fleet.analyzer import compute_percentiles, render_summary, summarize_upgrades
from appliance.fleet.costs import BootCostModel, availability, boot_duration, boot_stages
from appliance.fleet.firedrill import simulate_firedrill
from appliance.fleet.scenario import FleetScenario, ResponseDistribution, parse_scenario, render_scenario

DAY = 86400.0


class TestCostModel:
    def test_calibrated_reference_boot(self):
        model = BootCostModel.calibrated()
        assert boot_duration(model, 96_000_000) == pytest.approx(320.0)
        assert boot_duration(model, 0) == pytest.approx(140.0)
        assert boot_duration(model, 48_000_000) == pytest.approx(230.0)

    def test_stages(self):
        stages = boot_stages(BootCostModel.calibrated(), 96_000_000)
        assert stages == pytest.approx({
            "signature_check": 30.0,
            "base_install": 25.0,
            "package_install": 180.0,
            "fixed_overhead": 85.0,
        })

    def test_zero_rate(self):
        with pytest.raises(ZeroRate):
            boot_duration(BootCostModel(package_rate_bytes_per_s=0), 1)


class TestAvailability:
    def test_sixty_day_reboots(self):
        assert availability(60 * DAY, 320).format_percent() == "0.00617%"

    def test_thirty_day_reboots(self):
        assert availability(30 * DAY, 600).format_percent() == "0.02315%"

    def test_monotone(self):
        assert availability(30 * DAY, 320).downtime_fraction > availability(60 * DAY, 320).downtime_fraction

    def test_invalid(self):
        with pytest.raises(InvalidInterval):
            availability(0, 320)
        with pytest.raises(InvalidInterval):
            availability(100, 320)


class TestAnalyzer:
    def test_percentiles(self):
        result = compute_percentiles([1.0, 2.0, 3.0, 4.0])
        assert result["mean"] == 2.5
        assert result["min"] == 1.0
        assert result["max"] == 4.0
        assert compute_percentiles([]) == {}

    def test_summary_counts_never_upgraded(self):
        summary = summarize_upgrades(np.array([1.0, 50.0, np.nan, 47.0]))
        assert summary["appliances"] == 4
        assert summary["upgraded"] == 3
        assert summary["within_48h"] == 0.5
        assert "hours.p50=" in render_summary(summary)


class TestScenarioFile:
    def test_parse(self):
        scenario = parse_scenario(
            "# drill\nN_APPLIANCES=50\nresponse=constant\nRESPONSE_VALUE_H=2\nPACKAGE_RATE=1000\n"
        )
        assert scenario.n_appliances == 50
        assert scenario.response is ResponseDistribution.constant
        assert scenario.boot_cost.package_rate_bytes_per_s == 1000.0
        assert scenario.boot_cost.fixed_overhead_s == 85.0

    def test_seed_override(self):
        assert parse_scenario("SEED=3\n", seed=9).seed == 9

    def test_render_parse(self):
        scenario = FleetScenario(n_appliances=12, tampered=True, seed=4)
        assert parse_scenario(render_scenario(scenario)) == scenario

    @pytest.mark.parametrize("text", [
        "N_APPLIANCES=0\n",
        "BOGUS=1\n",
        "N_APPLIANCES\n",
        "MIRRORS=2\nDEAD_MIRRORS=2\n",
        "RESPONSE=gaussian\n",
        "CHECK_JITTER=0.5\n",
    ])
    def test_invalid(self, text):
        with pytest.raises(InvalidScenario):
            parse_scenario(text)


def _constant(delay_h, **kwargs):
    return FleetScenario(
        response=ResponseDistribution.constant,
        response_value_h=delay_h,
        reboot_mean_h=1e9,
        **kwargs,
    )


class TestFiredrill:
    def test_calibrated_rollout(self):
        result = simulate_firedrill(FleetScenario(n_appliances=1000, seed=0))
        fraction = result.curve.fraction_at(48.0)
        assert 0.94 <= fraction <= 0.98
        values = [f for _, f in result.curve.samples]
        assert values == sorted(values)
        assert values[0] == 0.0
        assert result.curve.samples[-1][0] == 168.0
        assert result.curve.fraction_at(168.0) > 0.99
        assert result.reverted == 0

    def test_immediate_admins(self):
        scenario = _constant(0.0, n_appliances=40)
        boot_h = boot_duration(scenario.boot_cost, scenario.package_bytes) / 3600.0
        result = simulate_firedrill(scenario)
        assert result.curve.fraction_at(boot_h) == 1.0
        assert result.curve.fraction_at(boot_h * 0.5) == 0.0

    def test_horizon_before_any_admin(self):
        result = simulate_firedrill(_constant(3.0, n_appliances=40, horizon_h=1.0))
        assert [f for _, f in result.curve.samples] == [0.0, 0.0]

    def test_tampered_patch_reverts_fleet(self):
        result = simulate_firedrill(_constant(1.0, n_appliances=30, tampered=True))
        assert result.curve.fraction_at(168.0) == 0.0
        assert result.reverted == 30
        assert any("reverted=true" in line for line in result.trace)

    def test_dead_mirror_delays_but_does_not_stop(self):
        result = simulate_firedrill(_constant(1.0, n_appliances=60, mirror_count=3, dead_mirrors=1))
        assert result.unreachable_mirrors == ["mirror0"]
        assert result.curve.fraction_at(1.0) == 0.0
        assert result.curve.fraction_at(168.0) > 0.95
        assert any("reachable=false" in line for line in result.trace)

    def test_deterministic(self):
        scenario = FleetScenario(n_appliances=100, seed=5, horizon_h=72.0)
        a = simulate_firedrill(scenario)
        b = simulate_firedrill(scenario)
        assert a.render_trace() == b.render_trace()
        assert a.curve.render() == b.curve.render()
        c = simulate_firedrill(scenario.model_copy(update={"seed": 6}))
        assert c.render_trace() != a.render_trace()

    def test_real_boots_are_shared(self):
        result = simulate_firedrill(_constant(0.5, n_appliances=50))
        assert result.real_boots == 2

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_scheduled_checks_advance(self, seed):
        result = simulate_firedrill(_constant(0.5, n_appliances=50, seed=seed))
        checks = {}
        times = []
        for line in result.trace:
            fields = dict(part.split("=", 1) for part in line.split())
            times.append(float(fields["t"]))
            if fields["event"] == "check":
                checks[fields["appliance"]] = checks.get(fields["appliance"], 0) + 1
        assert times == sorted(times)
        # one admin check plus at most one scheduled check per interval
        assert max(checks.values()) <= 1 + 168 // 24 + 2
        assert result.curve.fraction_at(168.0) == 1.0
