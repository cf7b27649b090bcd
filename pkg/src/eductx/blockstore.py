"""Append-only block persistence.

File layout: magic "EDUCTX01", then repeated [u32 length | canonical block
bytes]. Loading tolerates a torn final record (crash mid-append) by
truncating it; the only other mutation ever applied is an explicit rollback
to a lower height when fork choice abandons a branch.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

from .blocks import Block, deserialize_block
from .errors import CorruptStore

MAGIC = b"EDUCTX01"


def encode_records(blocks: list[Block]) -> bytes:
    out = bytearray(MAGIC)
    for block in blocks:
        raw = block.canonical_bytes()
        out += struct.pack(">I", len(raw))
        out += raw
    return bytes(out)


class BlockStore:
    """Blocks above genesis, in height order, one file per node."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._offsets: list[int] = []  # record start offsets, index = height - 1
        self._file = None
        self._open()

    def _open(self) -> None:
        if not self.path.exists():
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_bytes(MAGIC)
        self._file = open(self.path, "r+b")

    def close(self) -> None:
        if self._file:
            self._file.close()
            self._file = None

    def load(self) -> list[Block]:
        """Read every intact record; truncate a torn tail in place."""
        self._file.seek(0)
        header = self._file.read(len(MAGIC))
        if header != MAGIC:
            raise CorruptStore(f"bad magic in {self.path}")
        blocks: list[Block] = []
        self._offsets = []
        offset = len(MAGIC)
        size = os.fstat(self._file.fileno()).st_size
        while offset < size:
            if offset + 4 > size:
                break  # torn length prefix
            self._file.seek(offset)
            (length,) = struct.unpack(">I", self._file.read(4))
            if offset + 4 + length > size:
                break  # torn record body
            raw = self._file.read(length)
            try:
                block = deserialize_block(raw)
            except Exception as exc:
                raise CorruptStore(f"undecodable record at {offset}: {exc}") from exc
            expected_height = len(blocks) + 1
            if block.height != expected_height:
                raise CorruptStore(
                    f"record at {offset} has height {block.height}, expected {expected_height}"
                )
            blocks.append(block)
            self._offsets.append(offset)
            offset += 4 + length
        if offset < size:
            self._file.truncate(offset)
            self._file.flush()
        return blocks

    def append(self, block: Block) -> None:
        raw = block.canonical_bytes()
        self._file.seek(0, os.SEEK_END)
        self._offsets.append(self._file.tell())
        self._file.write(struct.pack(">I", len(raw)))
        self._file.write(raw)
        self._file.flush()

    def rollback(self, height: int) -> None:
        """Drop every record above `height` (fork switch)."""
        if height < 0:
            raise ValueError("cannot roll back below genesis")
        keep = height  # records hold heights 1..n
        if keep >= len(self._offsets):
            return
        cut = self._offsets[keep] if keep < len(self._offsets) else None
        self._offsets = self._offsets[:keep]
        self._file.truncate(cut if cut is not None else len(MAGIC))
        self._file.flush()

    @property
    def height(self) -> int:
        return len(self._offsets)
