"""Tests for keyrings, detached signatures and revocation."""

import pytest

from appliance.boot.process import ROOT, drop_privileges
from appliance.errors import (
    DuplicateKeyId,
    EmptyKeyId,
    FormatError,
    PermissionDenied,
    PrivilegeViolation,
    UnsupportedAlgorithm,
)
from appliance.simnet import SimNetwork
from appliance.trust.keys import (
    Keyring,
    TrustedKey,
    generate_keypair,
    parse_keyring,
    parse_secret,
    render_keyring,
    render_secret,
)
from appliance.trust.revocation import (
    REVOCATION_RESOURCE,
    RevocationList,
    check_revocation,
    parse_revocation_list,
)
from appliance.trust.signatures import (
    VerifyStatus,
    digest_bytes,
    parse_signature,
    render_signature,
    sign_payload,
    signature_filename,
    split_signature_filename,
    verify_signature,
)


class TestKeyring:
    def setup_method(self):
        self.keyring = Keyring()
        self.public, self.secret = generate_keypair("k1", 0, self.keyring)

    def test_generate_is_deterministic(self):
        again, secret = generate_keypair("k1", 0)
        assert again.public_material == self.public.public_material
        assert secret.secret_material == self.secret.secret_material
        other, _ = generate_keypair("k1", 1)
        assert other.public_material != self.public.public_material

    def test_duplicate_and_empty_ids_rejected(self):
        with pytest.raises(DuplicateKeyId):
            generate_keypair("k1", 5, self.keyring)
        with pytest.raises(EmptyKeyId):
            generate_keypair("", 0)
        with pytest.raises(DuplicateKeyId):
            self.keyring.add(TrustedKey("k1", b"\x00" * 32))
        assert len(self.keyring) == 1

    def test_find_by_fingerprint(self):
        assert self.keyring.find(self.public.fingerprint).key_id == "k1"
        assert self.keyring.find("nope") is None

    def test_revocation_is_sticky(self):
        assert self.keyring.revoke("k1") is True
        assert self.keyring.revoke("k1") is False
        assert self.keyring.revoked_ids() == {"k1"}
        assert self.keyring.revoke("missing") is False

    def test_remove(self):
        self.keyring.remove("k1")
        assert "k1" not in self.keyring
        with pytest.raises(KeyError):
            self.keyring.remove("k1")

    def test_loaded_keyring_refuses_removal(self):
        loaded = parse_keyring(render_keyring(self.keyring), origin_medium="floppy0")
        with pytest.raises(PermissionDenied):
            loaded.remove("k1")
        staging = loaded.staging_copy()
        staging.remove("k1")
        assert "k1" not in staging
        assert "k1" in loaded

    def test_keyring_file_format(self):
        self.keyring.revoke("k1")
        generate_keypair("k2", 0, self.keyring)
        text = render_keyring(self.keyring)
        assert text.splitlines()[0].startswith("KEY k1 ")
        assert text.splitlines()[0].endswith(" REVOKED")
        parsed = parse_keyring(text, origin_medium="floppy0")
        assert [k.key_id for k in parsed] == ["k1", "k2"]
        assert parsed.revoked_ids() == {"k1"}
        assert parsed.origin_medium == "floppy0"

    def test_bad_keyring_line(self):
        with pytest.raises(FormatError):
            parse_keyring("KEY k1 zz OK\n")
        with pytest.raises(FormatError):
            parse_keyring("KEY k1 00\n")

    def test_secret_file(self):
        assert parse_secret(render_secret(self.secret)) == self.secret
        with pytest.raises(FormatError):
            parse_secret("PUBLIC k1 00")


class TestSignatures:
    def setup_method(self):
        self.keyring = Keyring()
        _, self.secret = generate_keypair("signer", 3, self.keyring)
        self.payload = b"a7f3  daemon-1.1.pkg\n"

    def test_valid(self):
        sig = sign_payload(self.payload, self.secret)
        result = verify_signature(self.payload, sig, self.keyring)
        assert result.status is VerifyStatus.valid
        assert str(result) == "ValidBy(signer)"

    def test_any_byte_change_invalidates(self):
        sig = sign_payload(self.payload, self.secret)
        for i in range(len(self.payload)):
            tampered = bytearray(self.payload)
            tampered[i] ^= 0x01
            result = verify_signature(bytes(tampered), sig, self.keyring)
            assert result.status is VerifyStatus.invalid_signature

    def test_unknown_and_revoked_keys(self):
        sig = sign_payload(self.payload, self.secret)
        assert verify_signature(self.payload, sig, Keyring()).status is VerifyStatus.unknown_key
        self.keyring.revoke("signer")
        assert str(verify_signature(self.payload, sig, self.keyring)) == "RevokedKey"

    def test_md5_and_sha512(self):
        for algorithm in ("md5", "sha512"):
            sig = sign_payload(self.payload, self.secret, algorithm)
            assert sig.digest_algorithm == algorithm
            assert verify_signature(self.payload, sig, self.keyring).is_valid
        with pytest.raises(UnsupportedAlgorithm):
            digest_bytes(b"x", "crc32")

    def test_signature_file(self):
        sig = sign_payload(self.payload, self.secret)
        assert parse_signature(render_signature(sig)) == sig
        with pytest.raises(FormatError):
            parse_signature(b"SIGNER signer\n")

    def test_signature_filenames(self):
        name = signature_filename("lockss.dgst", "release-a")
        assert name == "lockss.dgst.sig.release-a"
        assert split_signature_filename(name) == ("lockss.dgst", "release-a")
        assert split_signature_filename("lockss.dgst") is None


class TestRevocation:
    def setup_method(self):
        self.network = SimNetwork()
        self.network.add_endpoint("keys-a", {REVOCATION_RESOURCE: b"REVOKE k1\n"})
        self.network.add_endpoint("keys-b", {REVOCATION_RESOURCE: b"# none\n"})
        self.network.add_endpoint("keys-down", {REVOCATION_RESOURCE: b"REVOKE k2\n"}, reachable=False)
        self.iface = self.network.attach("host", up=True)
        self.proc = drop_privileges(ROOT, "revocation-check")
        self.keyring = Keyring()
        generate_keypair("k1", 0, self.keyring)
        generate_keypair("k2", 0, self.keyring)

    def test_revokes_listed_keys(self):
        report = check_revocation(self.keyring, ["keys-a", "keys-b"], self.iface, self.proc)
        assert report.newly_revoked == ["k1"]
        assert report.reachable == ["keys-a", "keys-b"]
        assert not report.degraded
        assert self.keyring.revoked_ids() == {"k1"}

    def test_idempotent(self):
        check_revocation(self.keyring, ["keys-a"], self.iface, self.proc)
        again = check_revocation(self.keyring, ["keys-a"], self.iface, self.proc)
        assert again.newly_revoked == []
        assert self.keyring.revoked_ids() == {"k1"}

    def test_unreachable_sources_degrade(self):
        report = check_revocation(self.keyring, ["keys-down", "nowhere"], self.iface, self.proc)
        assert report.unreachable == ["keys-down", "nowhere"]
        assert report.degraded
        assert report.warnings
        assert self.keyring.revoked_ids() == set()

    def test_privileged_process_refused(self):
        with pytest.raises(PrivilegeViolation):
            check_revocation(self.keyring, ["keys-a"], self.iface, ROOT)

    def test_list_format_and_merge(self):
        merged = parse_revocation_list("REVOKE a\n", "x", 1.0).merge(
            parse_revocation_list("REVOKE b\n\n# c\n", "y", 2.0)
        )
        assert merged.revoked_key_ids == frozenset({"a", "b"})
        assert merged.fetched_at == 2.0
        assert merged.source == "x+y"
        assert RevocationList().merge(RevocationList()).revoked_key_ids == frozenset()
        with pytest.raises(FormatError):
            parse_revocation_list("DELETE a\n")
