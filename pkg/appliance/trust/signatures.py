"""Digests, detached signatures and signature verification."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum

from cryptography.exceptions import InvalidSignature

from ..errors import FormatError, UnsupportedAlgorithm
from ..settings import DEFAULT_DIGEST_ALGORITHM
from .keys import Keyring, SecretKey

# algorithm name -> hex digest width
SUPPORTED_ALGORITHMS = {"md5": 32, "sha256": 64, "sha512": 128}
DEPRECATED_ALGORITHMS = frozenset({"md5"})

SIGNATURE_INFIX = ".sig."


def digest_bytes(data: bytes, algorithm: str = DEFAULT_DIGEST_ALGORITHM) -> str:
    if algorithm not in SUPPORTED_ALGORITHMS:
        raise UnsupportedAlgorithm(f"unsupported digest algorithm: {algorithm}")
    return hashlib.new(algorithm, data).hexdigest()


def is_deprecated(algorithm: str) -> bool:
    return algorithm in DEPRECATED_ALGORITHMS


@dataclass(frozen=True)
class DetachedSignature:
    signer_key_id: str
    payload_digest: str
    signature_bytes: bytes
    digest_algorithm: str = DEFAULT_DIGEST_ALGORITHM


class VerifyStatus(str, Enum):
    valid = "ValidBy"
    invalid_signature = "InvalidSignature"
    unknown_key = "UnknownKey"
    revoked_key = "RevokedKey"


@dataclass(frozen=True)
class VerifyResult:
    status: VerifyStatus
    key_id: str | None = None

    @property
    def is_valid(self) -> bool:
        return self.status is VerifyStatus.valid

    def __str__(self) -> str:
        if self.is_valid:
            return f"ValidBy({self.key_id})"
        return self.status.value


def sign_payload(
    payload: bytes,
    secret: SecretKey,
    algorithm: str = DEFAULT_DIGEST_ALGORITHM,
) -> DetachedSignature:
    digest = digest_bytes(payload, algorithm)
    return DetachedSignature(
        signer_key_id=secret.key_id,
        payload_digest=digest,
        signature_bytes=secret.private_key().sign(payload),
        digest_algorithm=algorithm,
    )


def verify_signature(payload: bytes, sig: DetachedSignature, keyring: Keyring) -> VerifyResult:
    """Check ``sig`` over ``payload`` against ``keyring``. Never raises."""
    key = keyring.find(sig.signer_key_id)
    if key is None:
        return VerifyResult(VerifyStatus.unknown_key, sig.signer_key_id)

    try:
        digest_ok = digest_bytes(payload, sig.digest_algorithm) == sig.payload_digest
    except UnsupportedAlgorithm:
        digest_ok = False
    if not digest_ok:
        return VerifyResult(VerifyStatus.invalid_signature, key.key_id)
    try:
        key.public_key().verify(sig.signature_bytes, payload)
    except (InvalidSignature, ValueError):
        return VerifyResult(VerifyStatus.invalid_signature, key.key_id)

    if key.revoked:
        return VerifyResult(VerifyStatus.revoked_key, key.key_id)
    return VerifyResult(VerifyStatus.valid, key.key_id)


# ---------------------------------------------------------------------------
# Signature files: <signed-file-name>.sig.<key_id>
# ---------------------------------------------------------------------------
def signature_filename(signed_name: str, key_id: str) -> str:
    return f"{signed_name}{SIGNATURE_INFIX}{key_id}"


def split_signature_filename(filename: str) -> tuple[str, str] | None:
    """Return ``(signed_name, key_id)`` or None if ``filename`` is not a signature."""
    signed, sep, key_id = filename.rpartition(SIGNATURE_INFIX)
    if not sep or not signed or not key_id:
        return None
    return signed, key_id


def render_signature(sig: DetachedSignature) -> bytes:
    return (
        f"SIGNER {sig.signer_key_id}\n"
        f"ALGORITHM {sig.digest_algorithm}\n"
        f"DIGEST {sig.payload_digest}\n"
        f"SIGNATURE {sig.signature_bytes.hex()}\n"
    ).encode()


def parse_signature(data: bytes) -> DetachedSignature:
    fields: dict[str, str] = {}
    try:
        text = data.decode()
    except UnicodeDecodeError:
        raise FormatError("signature file is not text") from None
    for line in text.splitlines():
        name, _, value = line.strip().partition(" ")
        if name:
            fields[name] = value.strip()
    missing = {"SIGNER", "ALGORITHM", "DIGEST", "SIGNATURE"} - fields.keys()
    if missing:
        raise FormatError(f"signature file missing {sorted(missing)}")
    try:
        signature_bytes = bytes.fromhex(fields["SIGNATURE"])
    except ValueError:
        raise FormatError("signature is not hex") from None
    return DetachedSignature(
        signer_key_id=fields["SIGNER"],
        payload_digest=fields["DIGEST"],
        signature_bytes=signature_bytes,
        digest_algorithm=fields["ALGORITHM"],
    )
