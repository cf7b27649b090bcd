"""Transaction model, canonical serialization and signing.

The canonical byte form is the single source of truth: it is the hashing
preimage, the signing preimage (with the signature list left empty) and the
wire/storage format. Fields are length-prefixed in declaration order with
big-endian integers, so two implementations that agree on the fields agree
on every hash.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from enum import Enum

from . import crypto
from .crypto import KeyPair, RedeemScript
from .errors import (
    DuplicateSigner,
    InvalidAmount,
    UnauthorizedSigner,
    ValidationError,
)


class TxKind(Enum):
    TRANSFER = 1
    DELEGATE_REGISTRATION = 2
    VOTE = 3
    MULTISIG_REGISTRATION = 4


@dataclass(frozen=True)
class TxMetadata:
    """On-chain annotations: the issuing institution's official name and the
    course identifier. Either may be empty; no other text ever goes on chain."""

    hei_name: str = ""
    course_id: str = ""

    @property
    def empty(self) -> bool:
        return not self.hei_name and not self.course_id


@dataclass(frozen=True)
class Transaction:
    kind: TxKind
    sender_address: str
    recipient_address: str  # empty for kinds without a counterparty
    amount: int  # subunits
    metadata: TxMetadata = TxMetadata()
    redeem_script: RedeemScript | None = None  # present when spending from multisig
    signatures: tuple[tuple[bytes, bytes], ...] = ()  # (public_key, signature)
    nonce: int = 0
    timestamp: int = 0  # logical tick

    @property
    def id(self) -> bytes:
        return crypto.sha256(self.canonical_bytes())

    def canonical_bytes(self) -> bytes:
        return self._serialize(include_signatures=True)

    def signing_bytes(self) -> bytes:
        return self._serialize(include_signatures=False)

    def _serialize(self, include_signatures: bool) -> bytes:
        out = bytearray()
        out.append(self.kind.value)
        _put_bytes(out, self.sender_address.encode())
        _put_bytes(out, self.recipient_address.encode())
        out += struct.pack(">Q", self.amount)
        _put_bytes(out, self.metadata.hei_name.encode())
        _put_bytes(out, self.metadata.course_id.encode())
        script = self.redeem_script.canonical_bytes() if self.redeem_script else b""
        _put_bytes(out, script)
        if include_signatures:
            out += struct.pack(">H", len(self.signatures))
            for public_key, signature in self.signatures:
                out += public_key
                out += signature
        else:
            out += struct.pack(">H", 0)
        out += struct.pack(">Q", self.nonce)
        out += struct.pack(">Q", self.timestamp)
        return bytes(out)

    def signer_keys(self) -> tuple[bytes, ...]:
        return tuple(pk for pk, _ in self.signatures)

    def to_json(self) -> dict:
        """Lossless human-readable projection (REST wire shape)."""
        from .amounts import format_amount

        return {
            "id": self.id.hex(),
            "kind": self.kind.name.lower(),
            "sender": self.sender_address,
            "recipient": self.recipient_address,
            "amount": format_amount(self.amount),
            "hei_name": self.metadata.hei_name,
            "course_id": self.metadata.course_id,
            "redeem_script": self.redeem_script.canonical_bytes().hex()
            if self.redeem_script
            else "",
            "signatures": [
                {"public_key": pk.hex(), "signature": sig.hex()}
                for pk, sig in self.signatures
            ],
            "nonce": self.nonce,
            "timestamp": self.timestamp,
        }


def _put_bytes(out: bytearray, data: bytes) -> None:
    out += struct.pack(">I", len(data))
    out += data


def deserialize_transaction(raw: bytes) -> Transaction:
    view = memoryview(raw)
    offset = 0

    def take(n: int) -> bytes:
        nonlocal offset
        if offset + n > len(view):
            raise ValidationError("truncated transaction bytes")
        chunk = bytes(view[offset : offset + n])
        offset += n
        return chunk

    def take_field() -> bytes:
        (length,) = struct.unpack(">I", take(4))
        return take(length)

    kind_value = take(1)[0]
    try:
        kind = TxKind(kind_value)
    except ValueError as exc:
        raise ValidationError(f"unknown transaction kind {kind_value}") from exc
    sender = take_field().decode()
    recipient = take_field().decode()
    (amount,) = struct.unpack(">Q", take(8))
    hei_name = take_field().decode()
    course_id = take_field().decode()
    script_raw = take_field()
    script = RedeemScript.from_canonical(script_raw) if script_raw else None
    (sig_count,) = struct.unpack(">H", take(2))
    signatures = tuple((take(32), take(64)) for _ in range(sig_count))
    (nonce,) = struct.unpack(">Q", take(8))
    (timestamp,) = struct.unpack(">Q", take(8))
    if offset != len(view):
        raise ValidationError("trailing bytes after transaction")
    return Transaction(
        kind=kind,
        sender_address=sender,
        recipient_address=recipient,
        amount=amount,
        metadata=TxMetadata(hei_name=hei_name, course_id=course_id),
        redeem_script=script,
        signatures=signatures,
        nonce=nonce,
        timestamp=timestamp,
    )


def build_transfer(
    sender: str,
    recipient: str,
    amount: int,
    metadata: TxMetadata = TxMetadata(),
    nonce: int = 0,
    timestamp: int = 0,
    redeem_script: RedeemScript | None = None,
) -> Transaction:
    if amount <= 0:
        raise InvalidAmount("transfer amount must be positive")
    return Transaction(
        kind=TxKind.TRANSFER,
        sender_address=sender,
        recipient_address=recipient,
        amount=amount,
        metadata=metadata,
        redeem_script=redeem_script,
        nonce=nonce,
        timestamp=timestamp,
    )


def build_delegate_registration(
    sender: str, name: str, nonce: int, timestamp: int = 0
) -> Transaction:
    return Transaction(
        kind=TxKind.DELEGATE_REGISTRATION,
        sender_address=sender,
        recipient_address="",
        amount=0,
        metadata=TxMetadata(hei_name=name),
        nonce=nonce,
        timestamp=timestamp,
    )


def build_vote(sender: str, delegate_address: str, nonce: int, timestamp: int = 0) -> Transaction:
    return Transaction(
        kind=TxKind.VOTE,
        sender_address=sender,
        recipient_address=delegate_address,
        amount=0,
        nonce=nonce,
        timestamp=timestamp,
    )


def build_multisig_registration(
    sender: str, script: RedeemScript, nonce: int, timestamp: int = 0
) -> Transaction:
    return Transaction(
        kind=TxKind.MULTISIG_REGISTRATION,
        sender_address=sender,
        recipient_address=crypto.derive_multisig_address(script),
        amount=0,
        redeem_script=script,
        nonce=nonce,
        timestamp=timestamp,
    )


def append_signature(tx: Transaction, keypair: KeyPair) -> Transaction:
    """Add one signer. The key must be entitled to spend from the sender:
    the sender's own key for a plain address, a script member for multisig."""
    if keypair.public_key in tx.signer_keys():
        raise DuplicateSigner("key already signed this transaction")
    version, _ = crypto.decode_address(tx.sender_address)
    if version == crypto.MULTISIG_VERSION:
        if tx.redeem_script is None:
            raise UnauthorizedSigner("multisig spend carries no redeem script")
        if not tx.redeem_script.is_member(keypair.public_key):
            raise UnauthorizedSigner("key is not a member of the redeem script")
        expected = crypto.derive_multisig_address(tx.redeem_script)
        if tx.sender_address != expected:
            raise UnauthorizedSigner("redeem script does not hash to sender address")
    elif crypto.derive_address(keypair.public_key) != tx.sender_address:
        raise UnauthorizedSigner("key does not control the sender address")
    signature = crypto.sign_message(keypair.private_key, tx.signing_bytes())
    return replace(tx, signatures=tx.signatures + ((keypair.public_key, signature),))
