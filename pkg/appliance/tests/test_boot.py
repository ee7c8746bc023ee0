"""Tests for the boot pipeline, the trace checker and post-boot runtime."""

import random

import pytest

from appliance.boot.config import ApplianceConfig, config_from_values
from appliance.boot.events import BootEvent, BootLog
from appliance.boot.history import BootHistory
from appliance.boot.machine import load_machine, save_machine
from appliance.boot.operator import FLOPPY_LOCK_AFTER_KEY, PARTITION_KEY, InteractiveOperator, ScriptedOperator
from appliance.boot.phases import boot_machine, execute_install_plan
from appliance.boot.process import ProcessTag
from appliance.boot.runtime import ApplianceRuntime
from appliance.boot.state import LEGAL_TRANSITIONS, BootPhase, BootState
from appliance.boot.trace import media_fingerprint, verify_trace
from appliance.boot.wizard import run_config_wizard
from appliance.errors import ConfigError, IllegalTransition, PrivilegeViolation
from appliance.media.evanescent import EvanescentRoot, MemoryStore
from appliance.packages.manifest import PackageArtifact, PackageCategory
from appliance.packages.payload import pack_payload
from appliance.packages.resolver import InstallPlan, InstallStep
from appliance.release.desk import REVOCATION_SOURCE, make_machine, make_network, patch_bundle
from appliance.settings import (
    CALIBRATED_PACKAGE_RATE,
    DISKLABEL_PATH,
    HEARTBEAT_INTERVAL_S,
    WATCHDOG_DEADLINE_S,
)
from appliance.trust.keys import render_keyring
from appliance.updates.fetcher import UpdateCache


def _machine(release, mirrors, **kwargs):
    revoked = kwargs.pop("revoked", None)
    network = make_network(mirrors, revoked=revoked)
    return make_machine(release, network, mirrors, **kwargs)


def _cache_patch(machine, release, version="1.1", tampered=False):
    cache = UpdateCache(machine.first_disk)
    for name, data in sorted(patch_bundle(release, version, tampered=tampered).items()):
        cache.put(name, data)


def _assert_clean_trace(machine):
    violations = verify_trace(machine.log.get_all_events())
    assert violations == [], [v.render() for v in violations]


class TestBootState:
    def test_legal_path(self):
        state = BootState()
        for phase in (BootPhase.phase0, BootPhase.phase1, BootPhase.start, BootPhase.running):
            state.advance(phase)
        assert state.is_terminal

    def test_illegal_transition(self):
        state = BootState()
        with pytest.raises(IllegalTransition):
            state.advance(BootPhase.running)

    def test_random_events_follow_the_table(self):
        rng = random.Random(21)
        phases = list(BootPhase)
        for _ in range(200):
            state = BootState()
            epochs = 0
            for _ in range(30):
                before = (state.phase, state.epoch, state.halted)
                if rng.random() < 0.1:
                    state.halt("stuck")
                    assert state.halted and state.phase is before[0]
                    continue
                target = rng.choice(phases)
                try:
                    state.advance(target)
                except IllegalTransition:
                    assert target is not BootPhase.reset
                    assert target not in LEGAL_TRANSITIONS[before[0]]
                    assert (state.phase, state.epoch, state.halted) == before
                    continue
                assert target is BootPhase.reset or target in LEGAL_TRANSITIONS[before[0]]
                assert state.phase is target
                if target is BootPhase.reset:
                    epochs += 1
                    assert not state.halted
                assert state.epoch == epochs

    def test_reset_starts_new_epoch(self):
        log = BootLog()
        state = BootState(log=log)
        state.advance(BootPhase.phase0)
        state.advance(BootPhase.reset, "watchdog")
        assert state.epoch == 1
        assert log.epoch == 1

    def test_privileged_network_process_cannot_exist(self):
        with pytest.raises(PrivilegeViolation):
            ProcessTag("bad", privileged=True, network_capable=True)


class TestConfig:
    def test_requires_network_fields(self):
        with pytest.raises(ConfigError):
            config_from_values({"IP_ADDRESS": "10.0.0.2"})

    def test_gateway_outside_subnet(self):
        with pytest.raises(ConfigError):
            config_from_values({
                "IP_ADDRESS": "10.0.0.2",
                "NETMASK": "255.255.255.0",
                "GATEWAY": "10.0.1.1",
                "DNS_SERVERS": "10.0.0.53",
            })

    def test_unknown_keys_are_kept(self):
        config = config_from_values({
            "IP_ADDRESS": "10.0.0.2",
            "NETMASK": "255.255.255.0",
            "GATEWAY": "10.0.0.1",
            "DNS_SERVERS": "10.0.0.53,10.0.0.54",
            "SERVICES": "sshd",
        })
        assert isinstance(config, ApplianceConfig)
        assert config.dns_servers == ["10.0.0.53", "10.0.0.54"]
        assert config.extra == {"SERVICES": "sshd"}


class TestHappyBoot:
    def test_boots_to_running(self, release, mirrors):
        machine = _machine(release, mirrors)
        report = boot_machine(machine)
        assert report.final_phase is BootPhase.running
        assert report.installed == {"base": "1.0", "jdk": "1.4", "daemon": "1.0"}
        assert report.daemon_running
        assert report.reverted == []
        assert machine.session.mounts.read("/lockss/bin/daemon") == b"daemon 1.0\n"
        assert machine.iface.up and machine.iface.accepting
        _assert_clean_trace(machine)

    def test_boot_time_follows_cost_model(self, release, mirrors):
        machine = _machine(release, mirrors)
        report = boot_machine(machine)
        other = sum(len(p.payload) for p in release.packages if p.category is not PackageCategory.base)
        assert report.durations["fixed_overhead"] == 85.0
        assert report.durations["signature_check"] == 30.0
        assert report.durations["base_install"] == 25.0
        assert report.total_seconds == pytest.approx(140.0 + other / CALIBRATED_PACKAGE_RATE)

    def test_persistent_media_untouched_by_boot(self, release, mirrors):
        machine = _machine(release, mirrors)
        boot_machine(machine)
        disk_before = media_fingerprint(machine.first_disk)
        floppy_before = machine.floppy.tree_hash()
        boot_machine(machine)
        assert media_fingerprint(machine.first_disk) == disk_before
        assert machine.floppy.tree_hash() == floppy_before

    def test_report_render(self, release, mirrors):
        report = boot_machine(_machine(release, mirrors))
        text = report.render()
        assert "phase=Running\n" in text
        assert "installed daemon=1.0\n" in text
        assert "daemon=running\n" in text


class TestEvanescence:
    def test_reboot_discards_runtime_changes(self, release, mirrors):
        machine = _machine(release, mirrors)
        first = boot_machine(machine)
        machine.session.mounts.write("/etc/planted", b"persist me")
        machine.session.mounts.write("/lockss/bin/daemon", b"trojan")
        second = boot_machine(machine, reason="test")
        assert second.epoch == first.epoch + 1
        assert second.store_hash == first.store_hash
        assert not machine.session.mounts.exists("/etc/planted")
        assert machine.session.mounts.read("/lockss/bin/daemon") == b"daemon 1.0\n"
        _assert_clean_trace(machine)

    def test_install_aborts_on_escaping_payload(self):
        payload = pack_payload({"../escape": b"x"})
        plan = InstallPlan(steps=[InstallStep(
            "evil", "1.0", "wd0", PackageCategory.application, "/c/evil-1.0.pkg", "-", payload,
        )])
        root = EvanescentRoot(MemoryStore("s"), {}, 0)
        outcome = execute_install_plan(plan, root)
        assert outcome.aborted
        assert "PathEscape" in outcome.reason
        assert root.store.tree == {}


class TestUpdatesAndRevocation:
    def test_cached_patch_is_installed(self, release, mirrors):
        machine = _machine(release, mirrors)
        _cache_patch(machine, release)
        report = boot_machine(machine)
        assert report.installed["daemon"] == "1.1"
        assert report.plan.steps[-1].source_medium == machine.first_disk.medium_id
        _assert_clean_trace(machine)

    def test_tampered_patch_reverts(self, release, mirrors):
        machine = _machine(release, mirrors)
        _cache_patch(machine, release, tampered=True)
        report = boot_machine(machine)
        assert report.final_phase is BootPhase.running
        assert report.installed["daemon"] == "1.0"
        assert report.reverted == ["daemon 1.1 rejected, running 1.0"]

    def test_tampered_byte_anywhere_reverts(self, release, mirrors):
        bundle = patch_bundle(release, "1.1")
        rng = random.Random(5)
        for _ in range(100):
            payload = bytearray(bundle["daemon-1.1.pkg"])
            payload[rng.randrange(len(payload))] ^= rng.randint(1, 255)
            machine = _machine(release, mirrors)
            cache = UpdateCache(machine.first_disk)
            for name, data in sorted(bundle.items()):
                cache.put(name, bytes(payload) if name == "daemon-1.1.pkg" else data)
            report = boot_machine(machine)
            assert report.final_phase is BootPhase.running
            assert report.installed["daemon"] == "1.0"

    @pytest.mark.parametrize("key_id", ["release-a", "release-b"])
    def test_one_revoked_key_changes_nothing(self, release, mirrors, key_id):
        baseline = boot_machine(_machine(release, mirrors))
        machine = _machine(release, mirrors, revoked=[key_id])
        report = boot_machine(machine)
        assert report.final_phase is BootPhase.running
        assert report.installed == baseline.installed
        assert report.plan.summary() == baseline.plan.summary()
        assert machine.session.keyring.revoked_ids() == {key_id}

    def test_all_keys_revoked_hunkers_down(self, release, mirrors):
        machine = _machine(release, mirrors, revoked=["release-a", "release-b"])
        report = boot_machine(machine)
        assert report.final_phase is BootPhase.hunker_down
        assert report.installed == {}
        assert not machine.iface.up
        assert machine.network.connect(machine.machine_id) is False
        assert any("Hunkering down" in line for line in machine.operator.transcript)
        _assert_clean_trace(machine)

    def test_revocations_remembered_when_source_unreachable(self, release, mirrors):
        machine = _machine(release, mirrors, revoked=["release-a"])
        boot_machine(machine)
        machine.network.set_reachable(REVOCATION_SOURCE, False)
        report = boot_machine(machine)
        assert machine.session.keyring.revoked_ids() == {"release-a"}
        assert any("degraded" in w for w in report.warnings)


class TestPhaseFailures:
    def test_no_disks_halts_in_phase0(self, release, mirrors):
        machine = _machine(release, mirrors)
        machine.disks = []
        report = boot_machine(machine)
        assert report.final_phase is BootPhase.phase0
        assert machine.state.halted
        assert "NoStorage" in machine.state.reason

    def test_corrupt_disklabel_halts(self, release, mirrors):
        machine = _machine(release, mirrors)
        boot_machine(machine)
        machine.first_disk.write(DISKLABEL_PATH, b"swap wd0a notanumber 10\n")
        report = boot_machine(machine)
        assert report.final_phase is BootPhase.phase0
        assert machine.state.halted
        assert "FormatError" in machine.state.reason

    def test_partition_refused(self, release, mirrors):
        machine = _machine(release, mirrors, answers={PARTITION_KEY: ["no"]})
        boot_machine(machine)
        assert machine.state.halted
        assert "PermissionDenied" in machine.state.reason
        assert machine.first_disk.tree == {}

    def test_missing_boot_image_calls_for_help(self, release, mirrors):
        machine = _machine(release, mirrors)
        machine.boot_image = None
        report = boot_machine(machine)
        assert report.final_phase is BootPhase.call_for_help
        assert any("call for help" in line for line in machine.operator.transcript)

    def test_writable_floppy_is_refused_until_locked(self, release, mirrors):
        machine = _machine(release, mirrors)
        machine.floppy.write_locked = False
        report = boot_machine(machine)
        assert report.final_phase is BootPhase.running
        assert machine.floppy.write_locked
        assert machine.log.get_events("floppy.refuse")
        _assert_clean_trace(machine)

    def test_floppy_never_locked_halts(self, release, mirrors):
        machine = _machine(release, mirrors, answers={FLOPPY_LOCK_AFTER_KEY: ["never"]})
        machine.floppy.write_locked = False
        boot_machine(machine)
        assert machine.state.halted
        assert "FloppyNotLocked" in machine.state.reason
        assert not machine.iface.up


WIZARD_ANSWERS = {
    "IP_ADDRESS": ["999.1.1.1", "10.0.0.5"],
    "NETMASK": ["255.255.0.0"],
    "GATEWAY": ["10.0.0.1"],
    "DNS_SERVERS": ["192.0.2.53"],
    "PASSWORD": ["correct horse"],
}


class TestWizard:
    def test_first_boot_runs_wizard(self, release, mirrors):
        machine = _machine(release, mirrors, configured=False, answers=WIZARD_ANSWERS)
        report = boot_machine(machine)
        assert report.final_phase is BootPhase.running
        assert machine.floppy.write_locked
        assert b"IP_ADDRESS=10.0.0.5" in machine.floppy.read("/config.txt")
        assert machine.floppy.exists("/hostkey")
        assert [e.detail["field"] for e in machine.log.get_events("wizard.reprompt")] == ["IP_ADDRESS"]
        assert machine.iface.address == "10.0.0.5"
        _assert_clean_trace(machine)

    def test_second_boot_skips_wizard(self, release, mirrors):
        machine = _machine(release, mirrors, configured=False, answers=WIZARD_ANSWERS)
        boot_machine(machine)
        boot_machine(machine)
        assert len(machine.log.get_events("wizard.start")) == 1

    def test_answers_file_matches_console(self, release, mirrors):
        text = "".join(f"{key}={value}\n" for key, values in WIZARD_ANSWERS.items() for value in values)
        scripted = _machine(release, mirrors, configured=False)
        run_config_wizard(
            ScriptedOperator.from_text(text), scripted.iface, scripted.floppy, release.keyring, scripted.log,
        )

        # typed answers in prompt order, then Enter for each floppy request
        typed = iter(["999.1.1.1", "10.0.0.5", "255.255.0.0", "10.0.0.1", "192.0.2.53", "correct horse", "", ""])
        console = _machine(release, mirrors, configured=False)
        run_config_wizard(
            InteractiveOperator(lambda prompt: next(typed), lambda message: None),
            console.iface, console.floppy, release.keyring, console.log,
        )

        assert next(typed, None) is None
        assert scripted.floppy.tree == console.floppy.tree
        assert scripted.floppy.read("/keyring") == render_keyring(release.keyring).encode()
        assert scripted.floppy.write_locked and console.floppy.write_locked

    def test_dns_must_resolve(self, release, mirrors):
        answers = dict(WIZARD_ANSWERS, DNS_SERVERS=["10.0.9.9", "192.0.2.53"])
        machine = _machine(release, mirrors, configured=False, answers=answers)
        boot_machine(machine)
        reprompts = [e.detail["field"] for e in machine.log.get_events("wizard.reprompt")]
        assert reprompts == ["IP_ADDRESS", "DNS_SERVERS"]


class TestRuntime:
    def test_watchdog_reboots_hung_daemon(self, release, mirrors):
        machine = _machine(release, mirrors)
        boot_machine(machine)
        report = ApplianceRuntime(machine, hang_at=machine.clock.now + 100).run(3600)
        assert report.watchdog_reboots == 1
        assert report.boots[0].final_phase is BootPhase.running
        assert report.heartbeats > 0
        assert machine.log.get_events("watchdog.expired")
        assert machine.log.get_events("mail.send")
        _assert_clean_trace(machine)

    def test_watchdog_waits_past_deadline(self, release, mirrors):
        machine = _machine(release, mirrors)
        boot_machine(machine)
        hang = machine.clock.now + 100
        ApplianceRuntime(machine, hang_at=hang).run(3600)
        expired = machine.log.get_events("watchdog.expired")[0]
        last = float(expired.detail["last_heartbeat"])
        assert expired.t - last > WATCHDOG_DEADLINE_S
        assert expired.t <= last + WATCHDOG_DEADLINE_S + HEARTBEAT_INTERVAL_S + 1e-6

    def test_heartbeating_daemon_is_never_rebooted(self, release, mirrors):
        machine = _machine(release, mirrors)
        boot_machine(machine)
        report = ApplianceRuntime(machine).run(3600)
        assert report.watchdog_reboots == 0
        assert not machine.log.get_events("watchdog.expired")

    def test_update_check_then_reboot_upgrades(self, release, mirrors):
        network = make_network(mirrors)
        bundle = patch_bundle(release, "1.1")
        for mirror in mirrors:
            network.endpoint(mirror).files.update(bundle)
        machine = make_machine(release, network, mirrors)
        boot_machine(machine)
        runtime = ApplianceRuntime(machine).run(2 * 86400)
        assert runtime.update_checks >= 1
        assert runtime.fetched_files == len(bundle)
        report = boot_machine(machine)
        assert report.installed["daemon"] == "1.1"
        _assert_clean_trace(machine)


class TestTraceChecker:
    def test_detects_violations(self):
        events = [
            BootEvent(0, 0.0, "probe", {"medium": "fd0", "result": "Writable"}),
            BootEvent(0, 1.0, "net.up", {"address": "10.0.0.2"}),
            BootEvent(0, 2.0, "net.send", {"proc": "boot", "privileged": "true", "peer": "m"}),
            BootEvent(0, 3.0, "exec", {"path": "/x", "resolved": "/content/cache/x",
                                       "backing": "persistent", "decision": "Allowed"}),
            BootEvent(0, 4.0, "phase", {"from": "Reset", "to": "Running"}),
            BootEvent(0, 5.0, "media.hash", {"medium": "wd0", "hash": "a"}),
            BootEvent(0, 6.0, "media.hash", {"medium": "wd0", "hash": "b"}),
        ]
        kinds = [v.kind for v in verify_trace(events)]
        assert kinds == [
            "network-with-writable-config",
            "privileged-network",
            "exec-provenance",
            "illegal-transition",
            "persistent-media-changed",
        ]

    def test_log_lines_parse_back(self):
        event = BootEvent(2, 1.5, "fetch", {"mirror": "m0", "files": "3"})
        assert BootEvent.parse(event.render()) == event


class TestPersistence:
    def test_history_records_boots(self, release, mirrors, tmp_path):
        machine = _machine(release, mirrors)
        machine.history = BootHistory(tmp_path / "history.db")
        boot_machine(machine)
        boot_machine(machine)
        records = machine.history.get_history(machine.machine_id)
        assert [r["epoch"] for r in records] == [1, 0]
        assert records[0]["phase"] == "Running"
        assert records[0]["installed"]["daemon"] == "1.0"
        assert machine.history.get_total_count() == 2
        machine.history.close()

    def test_machine_directory_round_trip(self, release, mirrors, tmp_path):
        machine = _machine(release, mirrors)
        first = boot_machine(machine)
        save_machine(machine, tmp_path / "m")
        loaded = load_machine(tmp_path / "m")
        assert loaded.state.epoch == machine.state.epoch
        report = boot_machine(loaded)
        assert report.final_phase is BootPhase.running
        assert report.epoch == first.epoch + 1
        assert report.store_hash == first.store_hash
        assert (tmp_path / "m" / "boot.log").read_text().startswith("epoch=0 ")
        loaded.history.close()
