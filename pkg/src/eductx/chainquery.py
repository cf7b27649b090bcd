"""Read-side index over a chain: transactions by id, incoming transfers,
per-address credit history. Rebuilds itself when the underlying chain
reorganizes (detected by hash fingerprint mismatch)."""

from __future__ import annotations

from dataclasses import dataclass

from .blocks import Block
from .tx import Transaction, TxKind


@dataclass(frozen=True)
class ConfirmedTx:
    tx: Transaction
    height: int


class ChainQuery:
    def __init__(self) -> None:
        self._hashes: list[bytes] = []
        self._by_id: dict[bytes, ConfirmedTx] = {}
        self._incoming: dict[str, list[ConfirmedTx]] = {}

    def update(self, chain: list[Block]) -> None:
        """Index new blocks; a prefix mismatch (re-org) rebuilds from scratch."""
        hashes = [b.block_hash for b in chain]
        common = len(self._hashes)
        if self._hashes != hashes[: len(self._hashes)]:
            self._hashes = []
            self._by_id = {}
            self._incoming = {}
            common = 0
        for block in chain[common:]:
            for tx in block.transactions:
                entry = ConfirmedTx(tx=tx, height=block.height)
                self._by_id[tx.id] = entry
                if tx.kind is TxKind.TRANSFER:
                    self._incoming.setdefault(tx.recipient_address, []).append(entry)
        self._hashes = hashes

    def transaction(self, tx_id: bytes) -> ConfirmedTx | None:
        return self._by_id.get(tx_id)

    def is_confirmed(self, tx_id: bytes) -> bool:
        return tx_id in self._by_id

    def incoming_transfers(self, address: str) -> list[ConfirmedTx]:
        return list(self._incoming.get(address, []))

    def credit_entries(self, address: str) -> list[dict]:
        """Course transfers into an address: the verifier-facing breakdown."""
        from .amounts import format_amount

        entries = []
        for confirmed in self._incoming.get(address, []):
            tx = confirmed.tx
            if tx.metadata.course_id:
                entries.append(
                    {
                        "hei_name": tx.metadata.hei_name,
                        "course_id": tx.metadata.course_id,
                        "amount": format_amount(tx.amount),
                        "tx_id": tx.id.hex(),
                        "height": confirmed.height,
                    }
                )
        return entries
