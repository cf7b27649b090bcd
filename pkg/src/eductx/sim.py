"""Deterministic in-process network of consensus nodes.

Logical time only: one tick is one forging slot. Each tick the simulation
delivers due messages in a fixed total order, then lets slot leaders forge.
Everything random (latency, drops) comes from one seeded generator consumed
in that same order, so a (config, event script) pair replays to the same
bytes every run.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from . import crypto
from .amounts import parse_amount
from .blocks import Block, deserialize_block
from .blockstore import encode_records
from .consensus import ScheduleContext, select_pool_transactions
from .errors import ConfigError, EductxError, ValidationError
from .ledger import (
    GenesisConfig,
    LedgerState,
    build_block,
    make_genesis,
    standard_genesis,
    validate_block,
    validate_transaction,
)
from .tx import (
    Transaction,
    TxMetadata,
    append_signature,
    build_delegate_registration,
    build_multisig_registration,
    build_transfer,
    build_vote,
    deserialize_transaction,
)

SYNC_BATCH = 50  # blocks per chain_response


class MsgKind(Enum):
    TX_BROADCAST = "tx_broadcast"
    BLOCK_BROADCAST = "block_broadcast"
    CHAIN_REQUEST = "chain_request"
    CHAIN_RESPONSE = "chain_response"


@dataclass(frozen=True)
class NetMessage:
    kind: MsgKind
    payload: bytes
    from_node: int
    to_node: int
    deliver_at_tick: int
    seq: int

    @property
    def order_key(self):
        return (self.deliver_at_tick, self.from_node, self.to_node, self.seq)


@dataclass(frozen=True)
class PartitionWindow:
    start_tick: int
    end_tick: int  # exclusive
    group_a: frozenset[int]
    group_b: frozenset[int]


@dataclass(frozen=True)
class SimConfig:
    node_count: int
    active_count: int = 3
    latency_min: int = 1
    latency_max: int = 1
    drop_rate: float = 0.0
    partitions: tuple[PartitionWindow, ...] = ()
    rng_seed: int = 0


@dataclass
class DivergenceReport:
    heads: dict[int, str]  # node id -> head hash hex
    heights: dict[int, int]


@dataclass
class SimNode:
    node_id: int
    delegate_key: crypto.KeyPair | None
    chain: list[Block]
    state: LedgerState
    pool: dict[bytes, Transaction] = field(default_factory=dict)
    seen_txs: set[bytes] = field(default_factory=set)
    seen_blocks: set[bytes] = field(default_factory=set)
    # chain sync progress per peer: (target_height, {height: block})
    sync: dict[int, tuple[int, dict[int, Block]]] = field(default_factory=dict)
    # received blocks whose parent we do not hold yet, keyed by parent hash
    orphans: dict[bytes, dict[bytes, Block]] = field(default_factory=dict)

    @property
    def head(self) -> Block:
        return self.chain[-1]

    @property
    def height(self) -> int:
        return self.head.height


class Simulation:
    def __init__(
        self,
        config: SimConfig,
        genesis_config: GenesisConfig,
        delegate_keys: dict[int, crypto.KeyPair] | None = None,
    ):
        if config.node_count < 1:
            raise ConfigError("node_count must be at least 1")
        if not 0.0 <= config.drop_rate <= 1.0:
            raise ConfigError("drop_rate must be within [0, 1]")
        if config.latency_min < 1 or config.latency_max < config.latency_min:
            raise ConfigError("latency bounds must satisfy 1 <= min <= max")
        for window in config.partitions:
            members = window.group_a | window.group_b
            if window.group_a & window.group_b:
                raise ConfigError("partition groups must be disjoint")
            if any(n < 0 or n >= config.node_count for n in members):
                raise ConfigError("partition names an unknown node")
        self.config = config
        self.genesis_config = genesis_config
        self.genesis_block, self.genesis_state = make_genesis(genesis_config)
        self.context = ScheduleContext(
            self.genesis_block, self.genesis_state, config.active_count
        )
        delegate_keys = delegate_keys or {}
        self.nodes = [
            SimNode(
                node_id=i,
                delegate_key=delegate_keys.get(i),
                chain=[self.genesis_block],
                state=self.genesis_state,
            )
            for i in range(config.node_count)
        ]
        self.tick = 0
        self.rng = random.Random(config.rng_seed)
        self._seq = 0
        self._queue: dict[int, list[NetMessage]] = {}

    # -- messaging ---------------------------------------------------------

    def _partitioned(self, a: int, b: int, tick: int) -> bool:
        for window in self.config.partitions:
            if window.start_tick <= tick < window.end_tick:
                if (a in window.group_a and b in window.group_b) or (
                    a in window.group_b and b in window.group_a
                ):
                    return True
        return False

    def _send(self, kind: MsgKind, payload: bytes, from_node: int, to_node: int) -> None:
        latency = self.rng.randint(self.config.latency_min, self.config.latency_max)
        dropped = (
            self.config.drop_rate > 0.0 and self.rng.random() < self.config.drop_rate
        )
        if dropped or self._partitioned(from_node, to_node, self.tick):
            return
        self._seq += 1
        message = NetMessage(
            kind=kind,
            payload=payload,
            from_node=from_node,
            to_node=to_node,
            deliver_at_tick=self.tick + latency,
            seq=self._seq,
        )
        self._queue.setdefault(message.deliver_at_tick, []).append(message)

    def _broadcast(self, node: SimNode, kind: MsgKind, payload: bytes, skip: int | None = None) -> None:
        for peer in range(self.config.node_count):
            if peer != node.node_id and peer != skip:
                self._send(kind, payload, node.node_id, peer)

    # -- public surface ------------------------------------------------------

    def pool_state(self, node_id: int) -> LedgerState:
        """Ledger state with the node's pool provisionally applied; what a
        wallet should build its next nonce against."""
        node = self.nodes[node_id]
        _, state = select_pool_transactions(node.state, node.pool)
        return state

    def next_nonce(self, node_id: int, address: str) -> int:
        return self.pool_state(node_id).nonces.get(address, 0) + 1

    def submit_transaction(self, node_id: int, tx: Transaction) -> None:
        """Validate against the node's pool-projected state; accepted
        transactions gossip, rejects raise the ledger error."""
        node = self.nodes[node_id]
        validate_transaction(tx, self.pool_state(node_id))
        node.pool[tx.id] = tx
        node.seen_txs.add(tx.id)
        self._broadcast(node, MsgKind.TX_BROADCAST, tx.canonical_bytes())

    def advance(self, ticks: int) -> None:
        for _ in range(ticks):
            self.tick += 1
            self._deliver_due()
            self._forge_pass()

    def settle(self, ticks: int = 1) -> None:
        """Advance with forging suppressed (every leader misses its slot);
        lets in-flight messages land so head comparisons are quiescent."""
        for _ in range(ticks):
            self.tick += 1
            self._deliver_due()

    def assert_converged(self) -> bytes | DivergenceReport:
        heads = {n.node_id: n.head.block_hash for n in self.nodes}
        if len(set(heads.values())) == 1:
            return self.nodes[0].head.block_hash
        return DivergenceReport(
            heads={i: h.hex() for i, h in heads.items()},
            heights={n.node_id: n.height for n in self.nodes},
        )

    def store_bytes(self, node_id: int) -> bytes:
        return encode_records(self.nodes[node_id].chain[1:])

    def dump_store(self, node_id: int, path: str | Path) -> None:
        Path(path).write_bytes(self.store_bytes(node_id))

    # -- tick internals ------------------------------------------------------

    def _deliver_due(self) -> None:
        due = self._queue.pop(self.tick, [])
        for message in sorted(due, key=lambda m: m.order_key):
            handler = {
                MsgKind.TX_BROADCAST: self._on_tx,
                MsgKind.BLOCK_BROADCAST: self._on_block,
                MsgKind.CHAIN_REQUEST: self._on_chain_request,
                MsgKind.CHAIN_RESPONSE: self._on_chain_response,
            }[message.kind]
            handler(self.nodes[message.to_node], message)

    def _forge_pass(self) -> None:
        for node in self.nodes:
            if node.delegate_key is None:
                continue
            if node.head.timestamp >= self.tick:
                continue  # adopted a block for this slot already
            leader = self.context.leader_at(node.chain, self.tick)
            if leader != node.delegate_key.public_key:
                continue
            txs, new_state = select_pool_transactions(node.state, node.pool)
            block, _ = build_block(
                node.head, node.state, txs, node.delegate_key, timestamp=self.tick
            )
            node.chain.append(block)
            node.state = new_state
            node.seen_blocks.add(block.block_hash)
            self.context.remember_state(block.block_hash, new_state)
            for tx in txs:
                node.pool.pop(tx.id, None)
            self._refresh_pool(node)
            self._broadcast(node, MsgKind.BLOCK_BROADCAST, block.canonical_bytes())

    def _refresh_pool(self, node: SimNode) -> None:
        """Drop pool entries that can never apply on the current chain."""
        state = node.state
        keep: dict[bytes, Transaction] = {}
        for tx in sorted(node.pool.values(), key=lambda t: (t.nonce, t.id)):
            if tx.nonce <= state.nonces.get(tx.sender_address, 0):
                continue  # consumed or stale
            keep[tx.id] = tx
        node.pool = keep

    # -- message handlers ------------------------------------------------------

    def _on_tx(self, node: SimNode, message: NetMessage) -> None:
        try:
            tx = deserialize_transaction(message.payload)
        except EductxError:
            return
        if tx.id in node.seen_txs:
            return
        node.seen_txs.add(tx.id)
        try:
            validate_transaction(tx, self.pool_state(node.node_id))
        except ValidationError:
            return  # rejected locally, not relayed
        node.pool[tx.id] = tx
        self._broadcast(node, MsgKind.TX_BROADCAST, message.payload, skip=message.from_node)

    def _try_append(self, node: SimNode, block: Block, skip: int | None) -> bool:
        """Fast path: block extends the current head; validate and adopt."""
        try:
            leader = self.context.leader_at(node.chain, block.timestamp)
            if leader != block.generator_public_key:
                return False
            new_state = validate_block(block, node.head, node.state)
        except EductxError:
            return False
        node.chain.append(block)
        node.state = new_state
        self.context.remember_state(block.block_hash, new_state)
        for tx in block.transactions:
            node.seen_txs.add(tx.id)
            node.pool.pop(tx.id, None)
        self._refresh_pool(node)
        self._broadcast(node, MsgKind.BLOCK_BROADCAST, block.canonical_bytes(), skip=skip)
        return True

    def _drain_orphans(self, node: SimNode) -> None:
        """Append any buffered blocks that now chain onto the head."""
        while True:
            children = node.orphans.pop(node.head.block_hash, None)
            if not children:
                return
            appended = False
            for block in sorted(children.values(), key=lambda b: b.block_hash):
                if self._try_append(node, block, skip=None):
                    appended = True
                    break
            if not appended:
                return

    def _on_block(self, node: SimNode, message: NetMessage) -> None:
        try:
            block = deserialize_block(message.payload)
        except EductxError:
            return
        if block.block_hash in node.seen_blocks:
            return
        node.seen_blocks.add(block.block_hash)
        if block.previous_block_hash == node.head.block_hash:
            if self._try_append(node, block, skip=message.from_node):
                self._drain_orphans(node)
            return
        if 0 < block.height <= node.height:
            # same-height-or-lower fork whose parent we already hold
            parent_index = block.height - 1
            if node.chain[parent_index].block_hash == block.previous_block_hash:
                candidate = node.chain[: block.height] + [block]
                self._consider_candidate(node, candidate)
                return
        # unknown parent or we are behind: buffer and sync from the sender
        node.orphans.setdefault(block.previous_block_hash, {})[block.block_hash] = block
        self._start_sync(node, message.from_node, block.height)

    def _start_sync(self, node: SimNode, peer: int, target_height: int) -> None:
        current = node.sync.get(peer)
        if current and current[0] >= target_height:
            return  # already syncing at least this far
        node.sync[peer] = (target_height, {})
        upper = min(SYNC_BATCH, target_height)
        payload = json.dumps({"from": 1, "to": upper, "target": target_height}).encode()
        self._send(MsgKind.CHAIN_REQUEST, payload, node.node_id, peer)

    def _on_chain_request(self, node: SimNode, message: NetMessage) -> None:
        try:
            req = json.loads(message.payload.decode())
            lo, hi = int(req["from"]), int(req["to"])
        except (ValueError, KeyError):
            return
        lo = max(lo, 1)
        hi = min(hi, node.height, lo + SYNC_BATCH - 1)
        blocks = [node.chain[h].canonical_bytes().hex() for h in range(lo, hi + 1)]
        payload = json.dumps(
            {"from": lo, "blocks": blocks, "head_height": node.height}
        ).encode()
        self._send(MsgKind.CHAIN_RESPONSE, payload, node.node_id, message.from_node)

    def _on_chain_response(self, node: SimNode, message: NetMessage) -> None:
        entry = node.sync.get(message.from_node)
        if entry is None:
            return
        target, buffered = entry
        try:
            doc = json.loads(message.payload.decode())
            start = int(doc["from"])
            blocks = [deserialize_block(bytes.fromhex(b)) for b in doc["blocks"]]
        except (EductxError, ValueError, KeyError):
            node.sync.pop(message.from_node, None)
            return
        for i, block in enumerate(blocks):
            buffered[start + i] = block
        target = max(target, int(doc.get("head_height", target)))
        have = max(buffered) if buffered else 0
        if have < target and all(h in buffered for h in range(1, have + 1)):
            node.sync[message.from_node] = (target, buffered)
            upper = min(have + SYNC_BATCH, target)
            payload = json.dumps(
                {"from": have + 1, "to": upper, "target": target}
            ).encode()
            self._send(MsgKind.CHAIN_REQUEST, payload, node.node_id, message.from_node)
            return
        node.sync.pop(message.from_node, None)
        if not all(h in buffered for h in range(1, target + 1)):
            return  # incomplete; a later broadcast will retrigger sync
        candidate = [self.genesis_block] + [buffered[h] for h in range(1, target + 1)]
        self._consider_candidate(node, candidate)

    def _consider_candidate(self, node: SimNode, candidate: list[Block]) -> None:
        chosen = self.context.choose_chain(node.chain, candidate)
        if chosen is node.chain:
            return
        old_chain = node.chain
        node.chain = chosen
        node.state = self.context.state_after(chosen, len(chosen) - 1)
        # return orphaned transactions to the pool and re-flood them so the
        # winning side of a healed partition learns about them
        ancestor = 0
        limit = min(len(old_chain), len(chosen))
        while ancestor + 1 < limit and old_chain[ancestor + 1].block_hash == chosen[ancestor + 1].block_hash:
            ancestor += 1
        new_ids = {tx.id for block in chosen[ancestor + 1 :] for tx in block.transactions}
        for block in old_chain[ancestor + 1 :]:
            for tx in block.transactions:
                if tx.id in new_ids:
                    continue
                node.pool[tx.id] = tx
                self._broadcast(node, MsgKind.TX_BROADCAST, tx.canonical_bytes())
        for block in chosen[ancestor + 1 :]:
            node.seen_blocks.add(block.block_hash)
            for tx in block.transactions:
                node.seen_txs.add(tx.id)
                node.pool.pop(tx.id, None)
        self._refresh_pool(node)
        self._drain_orphans(node)


def spawn_network(
    config: SimConfig, genesis_config: GenesisConfig, delegate_keys: dict[int, crypto.KeyPair]
) -> Simulation:
    return Simulation(config, genesis_config, delegate_keys)


def standard_network(
    node_count: int = 3,
    active_count: int = 3,
    rng_seed: int = 0,
    drop_rate: float = 0.0,
    partitions: tuple[PartitionWindow, ...] = (),
    latency: tuple[int, int] = (1, 1),
    hei_seed_prefix: str = "hei",
) -> tuple[Simulation, dict[int, crypto.KeyPair]]:
    """Desk-scale network: node i runs delegate HEI "uni-i"; the first HEI
    holds the premined treasury."""
    if node_count < 1:
        raise ConfigError("node_count must be at least 1")
    keys = {i: crypto.generate_keypair(f"{hei_seed_prefix}-{i}".encode()) for i in range(node_count)}
    genesis = standard_genesis([(f"uni-{i}", keys[i]) for i in range(node_count)])
    config = SimConfig(
        node_count=node_count,
        active_count=active_count,
        latency_min=latency[0],
        latency_max=latency[1],
        drop_rate=drop_rate,
        partitions=partitions,
        rng_seed=rng_seed,
    )
    return Simulation(config, genesis, keys), keys


# -- event scripts -------------------------------------------------------------
#
# Newline-delimited JSON, one record per line:
#   {"tick": 3, "action": "transfer", "params": {...}}
# Records execute in (tick, file order); the simulation advances to each
# record's tick first. Wallets are named by seed so scripts are self-contained.


def _script_wallet(wallets: dict[str, crypto.KeyPair], seed: str) -> crypto.KeyPair:
    if seed not in wallets:
        wallets[seed] = crypto.generate_keypair(seed.encode())
    return wallets[seed]


def _resolve_recipient(params: dict, wallets: dict[str, crypto.KeyPair]) -> str:
    if "to" in params:
        return params["to"]
    if "to_seed" in params:
        return _script_wallet(wallets, params["to_seed"]).address
    if "to_multisig" in params:
        spec = params["to_multisig"]
        keys = [_script_wallet(wallets, s).public_key for s in spec["seeds"]]
        return crypto.derive_multisig_address(
            crypto.build_redeem_script(keys, int(spec["m"]))
        )
    raise ConfigError("transfer needs one of to / to_seed / to_multisig")


def execute_script(sim: Simulation, records: list[dict]) -> list[dict]:
    """Run an event script; returns one outcome record per action."""
    wallets: dict[str, crypto.KeyPair] = {}
    outcomes = []
    for record in sorted(records, key=lambda r: int(r.get("tick", 0))):
        target = int(record.get("tick", 0))
        if target > sim.tick:
            sim.advance(target - sim.tick)
        action = record["action"]
        params = record.get("params", {})
        node_id = int(params.get("node", 0))
        try:
            if action == "transfer":
                sender = _script_wallet(wallets, params["from_seed"])
                recipient = _resolve_recipient(params, wallets)
                tx = build_transfer(
                    sender.address,
                    recipient,
                    parse_amount(str(params["amount"])),
                    metadata=TxMetadata(
                        hei_name=params.get("hei_name", ""),
                        course_id=params.get("course_id", ""),
                    ),
                    nonce=sim.next_nonce(node_id, sender.address),
                )
                tx = append_signature(tx, sender)
                sim.submit_transaction(node_id, tx)
                outcomes.append({"action": action, "id": tx.id.hex(), "ok": True})
            elif action == "register_delegate":
                sender = _script_wallet(wallets, params["from_seed"])
                tx = append_signature(
                    build_delegate_registration(
                        sender.address,
                        params["name"],
                        nonce=sim.next_nonce(node_id, sender.address),
                    ),
                    sender,
                )
                sim.submit_transaction(node_id, tx)
                outcomes.append({"action": action, "id": tx.id.hex(), "ok": True})
            elif action == "vote":
                sender = _script_wallet(wallets, params["from_seed"])
                delegate = params.get("delegate") or _script_wallet(
                    wallets, params["delegate_seed"]
                ).address
                tx = append_signature(
                    build_vote(
                        sender.address,
                        delegate,
                        nonce=sim.next_nonce(node_id, sender.address),
                    ),
                    sender,
                )
                sim.submit_transaction(node_id, tx)
                outcomes.append({"action": action, "id": tx.id.hex(), "ok": True})
            elif action == "register_multisig":
                sender = _script_wallet(wallets, params["from_seed"])
                keys = [_script_wallet(wallets, s).public_key for s in params["seeds"]]
                script = crypto.build_redeem_script(keys, int(params["m"]))
                tx = append_signature(
                    build_multisig_registration(
                        sender.address,
                        script,
                        nonce=sim.next_nonce(node_id, sender.address),
                    ),
                    sender,
                )
                sim.submit_transaction(node_id, tx)
                outcomes.append({"action": action, "id": tx.id.hex(), "ok": True})
            elif action == "advance":
                sim.advance(int(params.get("ticks", 1)))
                outcomes.append({"action": action, "ok": True})
            else:
                raise ConfigError(f"unknown script action {action!r}")
        except EductxError as exc:
            outcomes.append({"action": action, "ok": False, "error": exc.code})
    return outcomes


def load_script(path: str | Path) -> list[dict]:
    records = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            records.append(json.loads(line))
    return records
