"""Block structure and canonical serialization.

The block hash covers the fixed-width header plus the ordered transaction
ids; the generator's signature covers the same preimage. Forging pays
nothing: a block never credits its generator.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from . import crypto
from .crypto import KeyPair
from .errors import BlockError
from .tx import Transaction, deserialize_transaction

GENESIS_GENERATOR = b"\x00" * 32
GENESIS_SIGNATURE = b"\x00" * 64


@dataclass(frozen=True)
class Block:
    height: int
    previous_block_hash: bytes
    timestamp: int  # logical tick
    generator_public_key: bytes
    transactions: tuple[Transaction, ...]
    block_signature: bytes

    def header_bytes(self) -> bytes:
        return (
            struct.pack(">Q", self.height)
            + self.previous_block_hash
            + struct.pack(">Q", self.timestamp)
            + self.generator_public_key
        )

    def hash_preimage(self) -> bytes:
        return self.header_bytes() + b"".join(tx.id for tx in self.transactions)

    @property
    def block_hash(self) -> bytes:
        return crypto.sha256(self.hash_preimage())

    def canonical_bytes(self) -> bytes:
        out = bytearray(self.header_bytes())
        out += struct.pack(">I", len(self.transactions))
        for tx in self.transactions:
            raw = tx.canonical_bytes()
            out += struct.pack(">I", len(raw))
            out += raw
        out += self.block_signature
        return bytes(out)

    def to_json(self) -> dict:
        return {
            "height": self.height,
            "hash": self.block_hash.hex(),
            "previous_hash": self.previous_block_hash.hex(),
            "timestamp": self.timestamp,
            "generator_public_key": self.generator_public_key.hex(),
            "transactions": [tx.to_json() for tx in self.transactions],
            "signature": self.block_signature.hex(),
        }


def seal_block(
    height: int,
    previous_block_hash: bytes,
    timestamp: int,
    transactions: tuple[Transaction, ...],
    generator: KeyPair,
) -> Block:
    unsigned = Block(
        height=height,
        previous_block_hash=previous_block_hash,
        timestamp=timestamp,
        generator_public_key=generator.public_key,
        transactions=tuple(transactions),
        block_signature=b"",
    )
    signature = crypto.sign_message(generator.private_key, unsigned.hash_preimage())
    return Block(
        height=height,
        previous_block_hash=previous_block_hash,
        timestamp=timestamp,
        generator_public_key=generator.public_key,
        transactions=tuple(transactions),
        block_signature=signature,
    )


def deserialize_block(raw: bytes) -> Block:
    view = memoryview(raw)
    if len(view) < 80:
        raise BlockError("truncated block bytes")
    (height,) = struct.unpack(">Q", view[0:8])
    previous = bytes(view[8:40])
    (timestamp,) = struct.unpack(">Q", view[40:48])
    generator = bytes(view[48:80])
    (count,) = struct.unpack(">I", view[80:84])
    offset = 84
    txs = []
    for _ in range(count):
        if offset + 4 > len(view):
            raise BlockError("truncated block transaction list")
        (length,) = struct.unpack(">I", view[offset : offset + 4])
        offset += 4
        if offset + length > len(view):
            raise BlockError("truncated block transaction")
        txs.append(deserialize_transaction(bytes(view[offset : offset + length])))
        offset += length
    if offset + 64 != len(view):
        raise BlockError("bad block signature trailer")
    signature = bytes(view[offset : offset + 64])
    return Block(
        height=height,
        previous_block_hash=previous,
        timestamp=timestamp,
        generator_public_key=generator,
        transactions=tuple(txs),
        block_signature=signature,
    )
