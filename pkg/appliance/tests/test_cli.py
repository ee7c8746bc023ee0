"""Tests for the command-line interface."""

import pytest

from appliance.cli import main, parse_duration
from appliance.errors import InvalidInterval
from appliance.packages.payload import pack_payload

WIZARD_ANSWERS = (
    "IP_ADDRESS=10.0.0.5\n"
    "NETMASK=255.255.0.0\n"
    "GATEWAY=10.0.0.1\n"
    "DNS_SERVERS=192.0.2.53\n"
    "PASSWORD=secret\n"
)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestDurations:
    def test_units(self):
        assert parse_duration("60d") == 60 * 86400
        assert parse_duration("36h") == 36 * 3600
        assert parse_duration("90m") == 5400
        assert parse_duration("320") == 320
        assert parse_duration("1.5s") == 1.5

    def test_invalid(self):
        with pytest.raises(InvalidInterval):
            parse_duration("soon")


class TestModelCommands:
    def test_availability(self, capsys):
        code, out, _ = run(capsys, "availability", "--interval", "60d", "--boot-seconds", "320")
        assert code == 0
        assert out == "0.00617%\n"

    def test_boot_time(self, capsys):
        code, out, _ = run(capsys, "boot-time", "--bytes", "96000000")
        assert code == 0
        assert out.splitlines()[-1] == "total_s=320.000"
        assert "package_install=180.000" in out

    def test_error_line(self, capsys):
        code, out, err = run(capsys, "availability", "--interval", "1d", "--boot-seconds", "2d")
        assert code == 1
        assert out == ""
        assert err.startswith("error code=InvalidInterval message=")
        assert len(err.splitlines()) == 1

    def test_firedrill(self, capsys, tmp_path):
        scenario = tmp_path / "drill.txt"
        scenario.write_text("N_APPLIANCES=20\nRESPONSE=constant\nRESPONSE_VALUE_H=0\nHORIZON_H=4\n")
        trace = tmp_path / "trace.txt"
        code, out, _ = run(capsys, "--seed", "1", "firedrill", str(scenario), "--trace", str(trace))
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "0 0.0000"
        assert lines[4] == "4 1.0000"
        assert lines[-1] == "# fraction@48h=1.0000 upgraded=20 reverted=0"
        assert "event=upgraded" in trace.read_text()

    @pytest.mark.parametrize("argv", [[], ["bogus"], ["availability", "--interval"], ["boot-time", "--bytes", "many"]])
    def test_usage_error_is_one_line(self, capsys, argv):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 2
        out, err = capsys.readouterr()
        assert out == ""
        assert err.startswith("error code=UsageError message=")
        assert len(err.splitlines()) == 1

    def test_bad_scenario(self, capsys, tmp_path):
        scenario = tmp_path / "drill.txt"
        scenario.write_text("NOT_A_KEY=1\n")
        code, _, err = run(capsys, "firedrill", str(scenario))
        assert code == 1
        assert err.startswith("error code=InvalidScenario")


class TestTrustCommands:
    def test_keygen_sign_verify(self, capsys, tmp_path):
        keys = tmp_path / "keys"
        code, out, _ = run(capsys, "keygen", "k1", "--out-dir", str(keys))
        assert code == 0 and out.startswith("key=k1 fingerprint=")
        payload = tmp_path / "lockss.dgst"
        payload.write_bytes(b"manifest\n")
        code, out, _ = run(capsys, "sign", str(payload), "--key", str(keys / "k1.secret"))
        assert out == f"signature={tmp_path / 'lockss.dgst.sig.k1'}\n"

        sig = str(tmp_path / "lockss.dgst.sig.k1")
        code, out, _ = run(capsys, "verify", str(payload), sig, "--keyring", str(keys / "k1.pub"))
        assert (code, out) == (0, "ValidBy(k1)\n")

        payload.write_bytes(b"manifest!\n")
        code, out, _ = run(capsys, "verify", str(payload), sig, "--keyring", str(keys / "k1.pub"))
        assert (code, out) == (1, "InvalidSignature\n")

    def test_missing_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "sign", str(tmp_path / "nope"), "--key", str(tmp_path / "k"))
        assert code == 1
        assert err.startswith("error code=NotFound")


class TestReleaseCommands:
    def test_build_extract_publish(self, capsys, tmp_path):
        for key in ("a", "b"):
            run(capsys, "keygen", key, "--out-dir", str(tmp_path))
        pkg = tmp_path / "daemon-1.0.pkg"
        pkg.write_bytes(pack_payload({"lockss/bin/daemon": b"d"}, {"lockss/bin/daemon"}))

        image = tmp_path / "image"
        code, out, _ = run(
            capsys, "build-image", str(image), "--app", str(pkg),
            "--key", str(tmp_path / "a.secret"), "--key", str(tmp_path / "b.secret"),
        )
        assert code == 0 and out.startswith("image=cd0 ")

        bundle = tmp_path / "bundle"
        code, out, _ = run(
            capsys, "extract-sign", str(image), "daemon", "--key", str(tmp_path / "a.secret"), "--out", str(bundle),
        )
        assert code == 0
        assert "file=daemon-1.0.pkg" in out.splitlines()
        assert "file=daemon-1.0.dgst.sig.a" in out.splitlines()
        assert out.splitlines()[-1].startswith("warning MultiSigRecommended")
        assert (bundle / "daemon-1.0.pkg").read_bytes() == pkg.read_bytes()

        up, down = tmp_path / "m0", tmp_path / "m1"
        up.mkdir()
        down.mkdir()
        (down / "DOWN").write_text("")
        code, out, _ = run(
            capsys, "publish", str(bundle), "--mirror", str(up), "--mirror", str(down), "--site", "site-a",
        )
        assert code == 0
        assert "published mirror=m0" in out
        assert "unreachable mirror=m1" in out
        assert "To: site-a" in out
        assert (up / "daemon-1.0.pkg").is_file()
        assert not (down / "daemon-1.0.pkg").exists()

    def test_extract_unknown_package(self, capsys, tmp_path):
        run(capsys, "keygen", "a", "--out-dir", str(tmp_path))
        run(capsys, "build-image", str(tmp_path / "image"), "--key", str(tmp_path / "a.secret"))
        code, _, err = run(
            capsys, "extract-sign", str(tmp_path / "image"), "emacs",
            "--key", str(tmp_path / "a.secret"), "--out", str(tmp_path / "b"),
        )
        assert code == 1
        assert err.startswith("error code=UnknownPackage")


class TestMachineCommands:
    def test_fixture_boots_to_running(self, capsys, tmp_path):
        machine = tmp_path / "m"
        assert run(capsys, "make-fixture", str(machine))[0] == 0
        code, out, _ = run(capsys, "boot", str(machine))
        assert code == 0
        assert "phase=Running" in out.splitlines()
        assert "installed daemon=1.0" in out.splitlines()
        assert "total_s=" in out

        code, out, _ = run(capsys, "inspect", str(machine), "--log", "3")
        assert out.splitlines()[0].startswith("epoch=0 phase=Running")
        assert "event=boot.done" in out

    def test_tampered_patch(self, capsys, tmp_path):
        machine = tmp_path / "m"
        run(capsys, "make-fixture", str(machine), "--patch", "1.1", "--tampered")
        code, out, _ = run(capsys, "boot", str(machine))
        assert code == 0
        assert "installed daemon=1.0" in out.splitlines()
        assert "reverted daemon 1.1 rejected, running 1.0" in out.splitlines()

    def test_all_keys_revoked(self, capsys, tmp_path):
        machine = tmp_path / "m"
        run(capsys, "make-fixture", str(machine), "--revoke", "release-a", "--revoke", "release-b")
        code, out, _ = run(capsys, "boot", str(machine))
        assert code == 0
        assert "phase=HunkerDown" in out.splitlines()

    def test_fetch_then_boot(self, capsys, tmp_path):
        machine = tmp_path / "m"
        run(capsys, "make-fixture", str(machine), "--patch", "1.1", "--on-mirrors")
        code, out, _ = run(capsys, "fetch-updates", str(machine))
        assert code == 0
        assert out.splitlines()[0].endswith("reachable=true fetched=4")
        code, out, _ = run(capsys, "boot", str(machine), "--epochs", "2")
        assert out.count("installed daemon=1.1") == 2
        assert "epoch=1" in out.splitlines()

    def test_configure(self, capsys, tmp_path):
        machine = tmp_path / "m"
        run(capsys, "make-fixture", str(machine), "--unconfigured")
        answers = tmp_path / "answers.txt"
        answers.write_text(WIZARD_ANSWERS)
        code, out, _ = run(capsys, "configure", str(machine), "--answers", str(answers))
        assert code == 0
        assert "IP_ADDRESS=10.0.0.5" in out.splitlines()
        assert (machine / "media" / "floppy0" / "config.txt").is_file()
        code, out, _ = run(capsys, "boot", str(machine))
        assert "phase=Running" in out.splitlines()

    def test_unconfigured_fetch_refused(self, capsys, tmp_path):
        machine = tmp_path / "m"
        run(capsys, "make-fixture", str(machine), "--unconfigured")
        code, _, err = run(capsys, "fetch-updates", str(machine))
        assert code == 1
        assert err.startswith("error code=ConfigError")

    def test_not_a_machine(self, capsys, tmp_path):
        code, _, err = run(capsys, "boot", str(tmp_path))
        assert code == 1
        assert err.startswith("error code=ConfigError")

    def test_same_seed_same_output(self, capsys, tmp_path):
        outputs = []
        for name in ("a", "b"):
            run(capsys, "--seed", "4", "make-fixture", str(tmp_path / name))
            outputs.append(run(capsys, "boot", str(tmp_path / name), "--run-hours", "30")[1])
        assert outputs[0] == outputs[1]
        assert "runtime heartbeats=" in outputs[0]
