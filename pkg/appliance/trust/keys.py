"""Trusted keys, secret keys and the operator-controlled keyring."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, replace
from enum import Enum

from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import (
    Encoding,
    NoEncryption,
    PrivateFormat,
    PublicFormat,
)

from ..errors import DuplicateKeyId, EmptyKeyId, FormatError, PermissionDenied

logger = logging.getLogger(__name__)


class KeySource(str, Enum):
    config_medium = "ConfigMedium"
    operator_added = "OperatorAdded"


@dataclass(frozen=True)
class TrustedKey:
    """A public key the appliance operator has chosen to trust."""
    key_id: str
    public_material: bytes
    revoked: bool = False
    source: KeySource = KeySource.config_medium

    @property
    def fingerprint(self) -> str:
        """Digest of the public material, accepted as an alias for ``key_id``."""
        return hashlib.sha256(self.public_material).hexdigest()

    def public_key(self) -> Ed25519PublicKey:
        return Ed25519PublicKey.from_public_bytes(self.public_material)


@dataclass(frozen=True)
class SecretKey:
    """Signing half of a keypair. Kept by the release team, never on an appliance."""
    key_id: str
    secret_material: bytes

    def private_key(self) -> Ed25519PrivateKey:
        return Ed25519PrivateKey.from_private_bytes(self.secret_material)

    @property
    def public_material(self) -> bytes:
        return self.private_key().public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)


class Keyring:
    """Ordered set of trusted keys loaded from one medium.

    Revocation is sticky: a key can be marked revoked but never un-revoked.
    """

    def __init__(self, keys: list[TrustedKey] | None = None, origin_medium: str = ""):
        self.origin_medium = origin_medium
        self._keys: dict[str, TrustedKey] = {}
        for key in keys or []:
            self.add(key)

    def __iter__(self):
        return iter(list(self._keys.values()))

    def __len__(self) -> int:
        return len(self._keys)

    def __contains__(self, key_id: str) -> bool:
        return self.find(key_id) is not None

    @property
    def keys(self) -> list[TrustedKey]:
        return list(self._keys.values())

    def add(self, key: TrustedKey) -> None:
        if not key.key_id:
            raise EmptyKeyId("key_id must be nonempty")
        if key.key_id in self._keys:
            raise DuplicateKeyId(f"key {key.key_id} already in keyring")
        self._keys[key.key_id] = key

    def remove(self, key_id: str) -> None:
        """Delete a key. Only a staging keyring (no origin medium) may lose keys."""
        if self.origin_medium:
            raise PermissionDenied(f"keyring loaded from {self.origin_medium} is read-only; edit a staging copy")
        key = self.find(key_id)
        if key is None:
            raise KeyError(key_id)
        del self._keys[key.key_id]

    def find(self, key_id: str) -> TrustedKey | None:
        """Look a key up by identifier or by public-material fingerprint."""
        key = self._keys.get(key_id)
        if key is not None:
            return key
        for candidate in self._keys.values():
            if candidate.fingerprint == key_id:
                return candidate
        return None

    def revoke(self, key_id: str) -> bool:
        """Mark a key revoked. Returns True if this call changed its status."""
        key = self.find(key_id)
        if key is None or key.revoked:
            return False
        self._keys[key.key_id] = replace(key, revoked=True)
        logger.info("Key %s revoked", key.key_id)
        return True

    def revoked_ids(self) -> set[str]:
        return {k.key_id for k in self._keys.values() if k.revoked}

    def copy(self) -> Keyring:
        return Keyring(self.keys, origin_medium=self.origin_medium)

    def staging_copy(self) -> Keyring:
        return Keyring(self.keys)


def generate_keypair(
    key_id: str,
    rng_seed: int,
    keyring: Keyring | None = None,
    source: KeySource = KeySource.config_medium,
) -> tuple[TrustedKey, SecretKey]:
    """Derive an Ed25519 keypair deterministically from ``(key_id, rng_seed)``.

    When ``keyring`` is given the public half is added to it, which rejects
    duplicate identifiers.
    """
    if not key_id:
        raise EmptyKeyId("key_id must be nonempty")
    if keyring is not None and key_id in keyring:
        raise DuplicateKeyId(f"key {key_id} already in keyring")

    seed = hashlib.sha256(f"keypair:{rng_seed}:{key_id}".encode()).digest()
    private = Ed25519PrivateKey.from_private_bytes(seed)
    secret = SecretKey(
        key_id=key_id,
        secret_material=private.private_bytes(Encoding.Raw, PrivateFormat.Raw, NoEncryption()),
    )
    public = TrustedKey(
        key_id=key_id,
        public_material=private.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw),
        source=source,
    )
    if keyring is not None:
        keyring.add(public)
    return public, secret


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------
def parse_keyring(text: str, origin_medium: str = "") -> Keyring:
    """Parse ``KEY <key_id> <hex public_material> <REVOKED|OK>`` records."""
    keyring = Keyring(origin_medium=origin_medium)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4 or parts[0] != "KEY" or parts[3] not in ("REVOKED", "OK"):
            raise FormatError(f"keyring line {lineno}: {raw!r}")
        try:
            material = bytes.fromhex(parts[2])
        except ValueError:
            raise FormatError(f"keyring line {lineno}: bad hex") from None
        keyring.add(TrustedKey(parts[1], material, revoked=parts[3] == "REVOKED"))
    return keyring


def render_keyring(keyring: Keyring) -> str:
    lines = [
        f"KEY {k.key_id} {k.public_material.hex()} {'REVOKED' if k.revoked else 'OK'}"
        for k in keyring
    ]
    return "".join(line + "\n" for line in lines)


def render_secret(secret: SecretKey) -> str:
    return f"SECRET {secret.key_id} {secret.secret_material.hex()}\n"


def parse_secret(text: str) -> SecretKey:
    parts = text.split()
    if len(parts) != 3 or parts[0] != "SECRET":
        raise FormatError("secret key file must hold one SECRET record")
    return SecretKey(parts[1], bytes.fromhex(parts[2]))
