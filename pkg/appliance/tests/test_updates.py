"""Tests for the update scheduler, mirror selection and the fetcher."""

import pytest

from appliance.boot.process import ROOT, drop_privileges
from appliance.errors import InvalidInterval, NoMirrors, PrivilegeViolation
from appliance.media.medium import MediumKind, VirtualMedium
from appliance.simnet import SimNetwork
from appliance.updates.fetcher import UpdateCache, check_and_fetch
from appliance.updates.mirrors import (
    MirrorSet,
    load_mirror_dir,
    pick_mirror,
    register_mirror_dir,
    save_mirror_dir,
)
from appliance.updates.scheduler import schedule_checks

DAY = 86400.0


class TestScheduler:
    def test_jitter_bounds(self):
        schedule = schedule_checks(DAY, 0.1, seed=3)
        for k in range(1, 200):
            assert abs(schedule.fire_time(k) - k * DAY) <= 0.1 * DAY

    def test_replays_exactly(self):
        a = schedule_checks(DAY, 0.1, seed=3, epoch=2)
        b = schedule_checks(DAY, 0.1, seed=3, epoch=2)
        assert a.firing_times(30 * DAY) == b.firing_times(30 * DAY)

    def test_new_epoch_new_jitter(self):
        a = schedule_checks(DAY, 0.1, seed=3, epoch=0)
        b = schedule_checks(DAY, 0.1, seed=3, epoch=1)
        assert a.firing_times(10 * DAY) != b.firing_times(10 * DAY)

    def test_firing_times_increase(self):
        times = schedule_checks(DAY, 0.49, seed=1, start=5.0).firing_times(100 * DAY)
        assert times == sorted(times)
        assert len(times) in (99, 100)

    def test_no_jitter(self):
        schedule = schedule_checks(60.0, 0.0, start=10.0)
        assert schedule.firing_times(250.0) == [70.0, 130.0, 190.0, 250.0]
        assert schedule.next_after(70.0) == 130.0

    def test_next_after_is_strictly_later(self):
        schedule = schedule_checks(DAY, 0.1, seed=9)
        t = 0.0
        for _ in range(20):
            nxt = schedule.next_after(t)
            assert nxt > t
            t = nxt

    def test_invalid(self):
        with pytest.raises(InvalidInterval):
            schedule_checks(0, 0.1)
        with pytest.raises(InvalidInterval):
            schedule_checks(DAY, 0.5)


class TestMirrors:
    def test_pick_is_deterministic_and_uniform(self):
        mirrors = MirrorSet(("a", "b", "c"), rng_seed=4)
        picks = [pick_mirror(mirrors, draw) for draw in range(3000)]
        assert picks == [pick_mirror(mirrors, draw) for draw in range(3000)]
        for server in mirrors.servers:
            assert 850 < picks.count(server) < 1150

    def test_empty(self):
        with pytest.raises(NoMirrors):
            pick_mirror(MirrorSet(()), 0)

    def test_directory_form(self, tmp_path):
        network = SimNetwork()
        endpoint = network.add_endpoint("m0", {"daemon-1.1.pkg": b"x"}, reachable=False)
        save_mirror_dir(endpoint, tmp_path / "m0")
        files, reachable, dns = load_mirror_dir(tmp_path / "m0")
        assert files == {"daemon-1.1.pkg": b"x"}
        assert reachable is False
        assert dns is None
        loaded = register_mirror_dir(SimNetwork(), tmp_path / "m0")
        assert loaded.endpoint_id == "m0"


class TestFetcher:
    def setup_method(self):
        self.network = SimNetwork()
        self.mirror = self.network.add_endpoint("m0", {
            "daemon-1.1.pkg": b"new",
            "daemon-1.1.dgst": b"manifest",
            "daemon-1.1.dgst.sig.release-a": b"sig",
            "daemon-x.pkg": b"bad version",
            "notes.txt": b"ignored",
        })
        self.network.add_endpoint("down", {"daemon-2.0.pkg": b"x"}, reachable=False)
        self.iface = self.network.attach("host", up=True)
        self.disk = VirtualMedium("wd0", MediumKind.hard_disk)
        self.cache = UpdateCache(self.disk)
        self.proc = drop_privileges(ROOT, "updater")

    def test_fetches_new_files(self):
        report = check_and_fetch("m0", self.cache, self.proc, self.iface)
        assert report.reachable
        assert sorted(report.fetched) == ["daemon-1.1.dgst", "daemon-1.1.dgst.sig.release-a", "daemon-1.1.pkg"]
        assert self.cache.read("daemon-1.1.pkg") == b"new"
        assert self.cache.versions_of("daemon") == ["1.1"]

    def test_second_check_fetches_nothing(self):
        check_and_fetch("m0", self.cache, self.proc, self.iface)
        again = check_and_fetch("m0", self.cache, self.proc, self.iface)
        assert again.files == 0
        assert "daemon-1.1.pkg" in again.unchanged

    def test_older_versions_not_fetched(self):
        self.cache.put("daemon-1.2.pkg", b"newer")
        report = check_and_fetch("m0", self.cache, self.proc, self.iface)
        assert "daemon-1.1.pkg" not in report.fetched

    def test_unreachable_mirror(self):
        report = check_and_fetch("down", self.cache, self.proc, self.iface)
        assert not report.reachable
        assert report.fetched == []
        assert self.cache.names() == []

    def test_interface_down(self):
        self.iface.lower_interface()
        report = check_and_fetch("m0", self.cache, self.proc, self.iface)
        assert not report.reachable

    def test_privileged_fetch_refused(self):
        with pytest.raises(PrivilegeViolation):
            check_and_fetch("m0", self.cache, ROOT, self.iface)

    def test_no_partial_files_visible(self):
        check_and_fetch("m0", self.cache, self.proc, self.iface)
        assert not any(".tmp-" in path for path in self.disk.tree)
