"""Delegated forging: vote-weighted roster, deterministic round schedules,
pool ordering and fork choice.

Rounds are fixed-width windows of `active_count` logical ticks. The slot
order for a round is a seeded shuffle of the active roster, keyed by the
round number and the hash of the last block before the round began — any
two nodes sharing that chain prefix derive the same leader for every tick.
Forging carries zero reward, so consensus never mints.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from . import crypto
from .blocks import Block
from .errors import NoDelegates, ValidationError, WrongSlotGenerator
from .ledger import (
    LedgerState,
    apply_transaction,
    replay_blocks,
    validate_block,
    validate_transaction,
)
from .tx import Transaction


@dataclass(frozen=True)
class DelegateRoster:
    active: tuple[bytes, ...]  # ordered delegate public keys
    weights: dict[bytes, int]


@dataclass(frozen=True)
class RoundSchedule:
    round_number: int
    slot_assignments: tuple[bytes, ...]  # leader public key per slot in the round


def compute_roster(state: LedgerState, active_count: int) -> DelegateRoster:
    """Top delegates by vote weight; ties break toward the ascending public
    key so every node ranks identically. Fewer registered than requested
    simply clamps."""
    if not state.delegates:
        raise NoDelegates("no registered delegates")
    ranked = sorted(
        state.delegates.items(), key=lambda item: (-item[1].vote_weight, item[0])
    )
    active = tuple(pk for pk, _ in ranked[:active_count])
    return DelegateRoster(
        active=active,
        weights={pk: info.vote_weight for pk, info in state.delegates.items()},
    )


def _deterministic_shuffle(items: tuple[bytes, ...], seed: bytes) -> tuple[bytes, ...]:
    out = list(items)
    draw = 0
    for i in range(len(out) - 1, 0, -1):
        digest = crypto.sha256(seed + struct.pack(">I", draw))
        draw += 1
        j = int.from_bytes(digest[:8], "big") % (i + 1)
        out[i], out[j] = out[j], out[i]
    return tuple(out)


def make_schedule(
    roster: DelegateRoster, round_number: int, seed_block_hash: bytes, round_length: int
) -> RoundSchedule:
    seed = crypto.sha256(struct.pack(">Q", round_number) + seed_block_hash)
    order = _deterministic_shuffle(roster.active, seed)
    slots = tuple(order[i % len(order)] for i in range(round_length))
    return RoundSchedule(round_number=round_number, slot_assignments=slots)


def slot_leader(schedule: RoundSchedule, tick: int) -> bytes:
    round_length = len(schedule.slot_assignments)
    slot = tick - schedule.round_number * round_length
    if not 0 <= slot < round_length:
        raise ValueError(f"tick {tick} outside round {schedule.round_number}")
    return schedule.slot_assignments[slot]


class ScheduleContext:
    """Derives (and caches) round schedules for chains rooted at one genesis.

    The roster for round r is taken from the state as of the last block
    sealed before the round began, so schedule agreement only needs chain
    prefix agreement.
    """

    def __init__(
        self, genesis_block: Block, genesis_state: LedgerState, active_count: int
    ) -> None:
        self.genesis_block = genesis_block
        self.genesis_state = genesis_state
        self.active_count = active_count
        self._schedule_cache: dict[tuple[int, bytes], RoundSchedule] = {}
        self._state_cache: dict[bytes, LedgerState] = {
            genesis_block.block_hash: genesis_state
        }

    @property
    def round_length(self) -> int:
        return self.active_count

    def round_number(self, tick: int) -> int:
        return tick // self.round_length

    def _seed_block(self, chain: list[Block], round_number: int) -> tuple[int, Block]:
        start = round_number * self.round_length
        for index in range(len(chain) - 1, 0, -1):
            if chain[index].timestamp < start:
                return index, chain[index]
        return 0, chain[0]

    def state_after(self, chain: list[Block], index: int) -> LedgerState:
        block_hash = chain[index].block_hash
        cached = self._state_cache.get(block_hash)
        if cached is not None:
            return cached
        state = replay_blocks(
            self.genesis_block, self.genesis_state, chain[1 : index + 1], verify=False
        )
        self._state_cache[block_hash] = state
        return state

    def remember_state(self, block_hash: bytes, state: LedgerState) -> None:
        """Seed the replay cache with a state the caller just validated."""
        self._state_cache.setdefault(block_hash, state)

    def schedule_for(self, chain: list[Block], round_number: int) -> RoundSchedule:
        index, seed_block = self._seed_block(chain, round_number)
        key = (round_number, seed_block.block_hash)
        cached = self._schedule_cache.get(key)
        if cached is not None:
            return cached
        roster = compute_roster(self.state_after(chain, index), self.active_count)
        schedule = make_schedule(
            roster, round_number, seed_block.block_hash, self.round_length
        )
        self._schedule_cache[key] = schedule
        return schedule

    def leader_at(self, chain: list[Block], tick: int) -> bytes:
        return slot_leader(self.schedule_for(chain, self.round_number(tick)), tick)

    def validate_chain(self, blocks: list[Block]) -> LedgerState:
        """Full validation of a candidate chain (genesis at index 0): ledger
        rules plus slot leadership for every block."""
        if not blocks or blocks[0].block_hash != self.genesis_block.block_hash:
            raise WrongSlotGenerator("candidate chain has a different genesis")
        state = self.genesis_state
        for index in range(1, len(blocks)):
            block = blocks[index]
            prefix = blocks[:index]
            leader = self.leader_at(prefix, block.timestamp)
            if leader != block.generator_public_key:
                raise WrongSlotGenerator(
                    f"height {block.height}: generator is not the slot leader"
                )
            state = validate_block(block, blocks[index - 1], state)
            self._state_cache.setdefault(block.block_hash, state)
        return state

    def choose_chain(self, local: list[Block], candidate: list[Block]) -> list[Block]:
        """Deterministic fork choice: greater height wins, ties fall to the
        lexicographically smaller head hash. An invalid candidate never
        displaces the local chain."""
        try:
            self.validate_chain(candidate)
        except Exception:
            return local
        local_head = local[-1]
        cand_head = candidate[-1]
        if cand_head.height != local_head.height:
            return candidate if cand_head.height > local_head.height else local
        if cand_head.block_hash < local_head.block_hash:
            return candidate
        return local


def select_pool_transactions(
    state: LedgerState, pool: dict[bytes, Transaction]
) -> tuple[list[Transaction], LedgerState]:
    """Pick the block body from a transaction pool: nonce order first, then
    transaction id; anything invalid against the evolving state stays out."""
    chosen: list[Transaction] = []
    for tx in sorted(pool.values(), key=lambda t: (t.nonce, t.id)):
        try:
            validate_transaction(tx, state)
        except ValidationError:
            continue
        state = apply_transaction(state, tx)
        chosen.append(tx)
    return chosen, state
