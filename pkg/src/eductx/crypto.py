"""Keys, addresses, signatures and M-of-N redeem scripts.

Ed25519 everywhere: deterministic signatures, 32-byte public keys, 64-byte
signatures, so replays of the same inputs are bit-identical. Addresses are
base58 text: version byte + 20-byte truncated SHA-256 + 4-byte double-SHA
checksum. Single-key addresses use version 0x1E, script-hash addresses 0x05,
so the two classes are visually distinct.

All functions here are pure; nothing holds state.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .errors import (
    DuplicateKey,
    InvalidAddress,
    InvalidKey,
    InvalidPolicy,
    InvalidSeed,
)

SINGLE_KEY_VERSION = 0x1E
MULTISIG_VERSION = 0x05
MAX_SCRIPT_KEYS = 16

_B58_ALPHABET = b"123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz"
_B58_INDEX = {c: i for i, c in enumerate(_B58_ALPHABET)}


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def hash20(data: bytes) -> bytes:
    """20-byte address digest: SHA-256 truncated."""
    return sha256(data)[:20]


def _b58encode(raw: bytes) -> str:
    num = int.from_bytes(raw, "big")
    out = bytearray()
    while num:
        num, rem = divmod(num, 58)
        out.append(_B58_ALPHABET[rem])
    pad = 0
    for byte in raw:
        if byte == 0:
            pad += 1
        else:
            break
    out.extend(_B58_ALPHABET[0:1] * pad)
    return bytes(reversed(out)).decode("ascii")


def _b58decode(text: str) -> bytes:
    num = 0
    for ch in text.encode("ascii", errors="strict"):
        if ch not in _B58_INDEX:
            raise InvalidAddress(f"bad base58 character {ch!r}")
        num = num * 58 + _B58_INDEX[ch]
    raw = num.to_bytes((num.bit_length() + 7) // 8, "big")
    pad = 0
    for ch in text:
        if ch == "1":
            pad += 1
        else:
            break
    return b"\x00" * pad + raw


@dataclass(frozen=True)
class KeyPair:
    private_key: bytes
    public_key: bytes

    def __post_init__(self) -> None:
        if len(self.private_key) != 32 or len(self.public_key) != 32:
            raise InvalidKey("keys must be 32 bytes")

    @property
    def address(self) -> str:
        return derive_address(self.public_key)


def generate_keypair(seed: bytes) -> KeyPair:
    """Deterministic keypair from an arbitrary non-empty seed.

    The seed is hashed down to the 32-byte Ed25519 secret, so any length
    works and equal seeds always give equal keys.
    """
    if not seed:
        raise InvalidSeed("seed must be non-empty")
    secret = sha256(seed)
    private = Ed25519PrivateKey.from_private_bytes(secret)
    public = private.public_key().public_bytes_raw()
    return KeyPair(private_key=secret, public_key=public)


def _checked_payload(version: int, digest: bytes) -> str:
    payload = bytes([version]) + digest
    checksum = sha256(sha256(payload))[:4]
    return _b58encode(payload + checksum)


def derive_address(public_key: bytes) -> str:
    if not isinstance(public_key, (bytes, bytearray)) or len(public_key) != 32:
        raise InvalidKey("public key must be 32 bytes")
    return _checked_payload(SINGLE_KEY_VERSION, hash20(bytes(public_key)))


def decode_address(address: str) -> tuple[int, bytes]:
    """Return (version, 20-byte digest); checksum failures raise InvalidAddress."""
    raw = _b58decode(address)
    if len(raw) != 25:
        raise InvalidAddress("address payload must be 25 bytes")
    payload, checksum = raw[:21], raw[21:]
    if sha256(sha256(payload))[:4] != checksum:
        raise InvalidAddress("checksum mismatch")
    return payload[0], payload[1:]


def is_multisig_address(address: str) -> bool:
    version, _ = decode_address(address)
    return version == MULTISIG_VERSION


@dataclass(frozen=True)
class RedeemScript:
    """M-of-N spending policy; keys are kept sorted so the canonical byte
    form (and therefore the derived address) ignores supply order."""

    m: int
    public_keys: tuple[bytes, ...] = field(default_factory=tuple)

    def canonical_bytes(self) -> bytes:
        return bytes([self.m, len(self.public_keys)]) + b"".join(self.public_keys)

    def is_member(self, public_key: bytes) -> bool:
        return public_key in self.public_keys

    @classmethod
    def from_canonical(cls, raw: bytes) -> "RedeemScript":
        if len(raw) < 2:
            raise InvalidPolicy("script too short")
        m, n = raw[0], raw[1]
        if len(raw) != 2 + 32 * n:
            raise InvalidPolicy("script length does not match key count")
        keys = [raw[2 + 32 * i : 2 + 32 * (i + 1)] for i in range(n)]
        return build_redeem_script(keys, m)


def build_redeem_script(public_keys: list[bytes] | tuple[bytes, ...], m: int) -> RedeemScript:
    keys = [bytes(k) for k in public_keys]
    for key in keys:
        if len(key) != 32:
            raise InvalidKey("public key must be 32 bytes")
    if len(set(keys)) != len(keys):
        raise DuplicateKey("redeem script keys must be distinct")
    if not 1 <= m <= len(keys) <= MAX_SCRIPT_KEYS:
        raise InvalidPolicy(f"need 1 <= m <= N <= {MAX_SCRIPT_KEYS}, got m={m} N={len(keys)}")
    return RedeemScript(m=m, public_keys=tuple(sorted(keys)))


def derive_multisig_address(script: RedeemScript) -> str:
    return _checked_payload(MULTISIG_VERSION, hash20(script.canonical_bytes()))


def sign_message(private_key: bytes, message: bytes) -> bytes:
    if len(private_key) != 32:
        raise InvalidKey("private key must be 32 bytes")
    return Ed25519PrivateKey.from_private_bytes(private_key).sign(message)


def verify_signature(public_key: bytes, message: bytes, signature: bytes) -> bool:
    """True iff signature binds (public_key, message); malformed input is
    a plain False, never an exception."""
    try:
        Ed25519PublicKey.from_public_bytes(bytes(public_key)).verify(
            bytes(signature), bytes(message)
        )
        return True
    except (InvalidSignature, ValueError, TypeError):
        return False
