"""Long-running network node: block persistence, peer gossip over TCP,
wall-clock forging, and the protocol contexts the REST layer exposes.

The consensus core is exactly the one the simulator drives; this module is
the other host for it. One writer lock serializes every chain/state/pool
mutation; readers grab snapshots under the same lock and work on values.
Wire frames are [u32 length | kind byte | payload] with the same message
kinds the simulator uses; peers exchange a hello first and drop the link on
a genesis hash mismatch.
"""

from __future__ import annotations

import json
import os
import random
import socket
import socketserver
import struct
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import crypto
from .blocks import Block, deserialize_block
from .blockstore import BlockStore
from .chainquery import ChainQuery
from .consensus import ScheduleContext, select_pool_transactions
from .errors import (
    BindError,
    EductxError,
    GenesisMismatch,
    ValidationError,
)
from .ledger import (
    GenesisConfig,
    build_block,
    make_genesis,
    validate_block,
    validate_transaction,
)
from .protocols import HEIContext, PrivateChannel, VerifierOrg
from .tx import Transaction, deserialize_transaction

FRAME_HELLO = 0
FRAME_TX = 1
FRAME_BLOCK = 2
FRAME_CHAIN_REQUEST = 3
FRAME_CHAIN_RESPONSE = 4

SYNC_BATCH = 50


@dataclass
class NodeConfig:
    listen_host: str = "127.0.0.1"
    listen_port: int = 0  # 0 = ephemeral
    peers: list[str] = field(default_factory=list)  # "host:port"
    data_dir: str = "eductx-data"
    genesis_path: str = "genesis.json"
    slot_seconds: float = 8.0
    active_count: int = 3
    genesis_unix_time: float = 0.0
    secret_seed: str = ""  # dev convenience; prefer secret_file
    secret_file: str = ""
    hei_name: str = ""  # enables the institution role
    manual_ticks: bool = False  # tests drive ticks explicitly

    ENV_FIELDS = {
        "EDUCTX_LISTEN_HOST": ("listen_host", str),
        "EDUCTX_LISTEN_PORT": ("listen_port", int),
        "EDUCTX_PEERS": ("peers", lambda v: [p for p in v.split(",") if p]),
        "EDUCTX_DATA_DIR": ("data_dir", str),
        "EDUCTX_GENESIS_PATH": ("genesis_path", str),
        "EDUCTX_SLOT_SECONDS": ("slot_seconds", float),
        "EDUCTX_ACTIVE_COUNT": ("active_count", int),
        "EDUCTX_GENESIS_UNIX_TIME": ("genesis_unix_time", float),
        "EDUCTX_SECRET_SEED": ("secret_seed", str),
        "EDUCTX_SECRET_FILE": ("secret_file", str),
        "EDUCTX_HEI_NAME": ("hei_name", str),
    }

    @classmethod
    def load(cls, path: str | Path | None = None, env: dict | None = None) -> "NodeConfig":
        doc = {}
        if path is not None:
            doc = json.loads(Path(path).read_text())
        config = cls(**doc)
        env = os.environ if env is None else env
        for var, (attr, cast) in cls.ENV_FIELDS.items():
            if var in env:
                setattr(config, attr, cast(env[var]))
        return config

    def keypair(self) -> crypto.KeyPair | None:
        if self.secret_file:
            seed = Path(self.secret_file).read_bytes().strip()
            return crypto.generate_keypair(seed)
        if self.secret_seed:
            return crypto.generate_keypair(self.secret_seed.encode())
        return None


def _encode_frame(kind: int, payload: bytes) -> bytes:
    return struct.pack(">I", len(payload) + 1) + bytes([kind]) + payload


class Node:
    def __init__(self, config: NodeConfig):
        self.config = config
        genesis_doc = json.loads(Path(config.genesis_path).read_text())
        self.genesis_config = GenesisConfig.from_json(genesis_doc)
        self.genesis_block, self.genesis_state = make_genesis(self.genesis_config)
        self.context = ScheduleContext(
            self.genesis_block, self.genesis_state, config.active_count
        )
        self.keypair = config.keypair()

        self.lock = threading.RLock()
        data_dir = Path(config.data_dir)
        data_dir.mkdir(parents=True, exist_ok=True)
        if not config.manual_ticks and config.genesis_unix_time == 0.0:
            # pin slot zero on first start so restarts agree with themselves;
            # multi-node deployments must configure this explicitly
            clock_path = data_dir / "clock.json"
            if clock_path.exists():
                config.genesis_unix_time = json.loads(clock_path.read_text())[
                    "genesis_unix_time"
                ]
            else:
                config.genesis_unix_time = time.time()
                clock_path.write_text(
                    json.dumps({"genesis_unix_time": config.genesis_unix_time})
                )
        self.store = BlockStore(data_dir / "blocks.dat")
        stored = self.store.load()
        self.chain: list[Block] = [self.genesis_block]
        state = self.genesis_state
        for block in stored:
            state = validate_block(block, self.chain[-1], state)
            self.context.remember_state(block.block_hash, state)
            self.chain.append(block)
        self.state = state
        self.pool: dict[bytes, Transaction] = {}
        self.query = ChainQuery()
        self.query.update(self.chain)
        self.seen_blocks: set[bytes] = {b.block_hash for b in self.chain}
        self.seen_txs: set[bytes] = set()
        self.orphans: dict[bytes, dict[bytes, Block]] = {}
        self._tick = max(0, self.chain[-1].timestamp)
        self._sync_target: dict[object, tuple[int, dict[int, Block]]] = {}

        # protocol roles
        self.channel = PrivateChannel()
        self.hei: HEIContext | None = None
        if config.hei_name and self.keypair is not None:
            self.hei = HEIContext(
                name=config.hei_name,
                keypair=self.keypair,
                gateway=LocalGateway(self),
                channel=self.channel,
                rng=random.Random(),
            )
            registry = data_dir / "registry.json"
            if registry.exists():
                self.hei.load_registry(registry)
        self.verifier = VerifierOrg(
            gateway=LocalGateway(self),
            channel=self.channel,
            keypair=self.keypair or crypto.generate_keypair(b"verifier-host"),
            rng=random.Random(),
        )

        self._peers: dict[object, "PeerLink"] = {}
        self._server: socketserver.ThreadingTCPServer | None = None
        self._threads: list[threading.Thread] = []
        self._stop = threading.Event()

    # -- time ----------------------------------------------------------------

    def current_tick(self) -> int:
        if self.config.manual_ticks:
            return self._tick
        elapsed = time.time() - self.config.genesis_unix_time
        return max(0, int(elapsed / self.config.slot_seconds))

    # -- ledger operations ------------------------------------------------------

    def pool_state(self):
        with self.lock:
            _, state = select_pool_transactions(self.state, self.pool)
            return state

    def next_nonce(self, address: str) -> int:
        return self.pool_state().nonces.get(address, 0) + 1

    def balance(self, address: str) -> int:
        with self.lock:
            return self.state.balances.get(address, 0)

    def submit_transaction(self, tx: Transaction) -> bytes:
        """Validate, pool and gossip; idempotent for anything already known."""
        with self.lock:
            if self.query.is_confirmed(tx.id) or tx.id in self.pool:
                return tx.id
            validate_transaction(tx, self.pool_state())
            self.pool[tx.id] = tx
            self.seen_txs.add(tx.id)
        self._gossip(FRAME_TX, tx.canonical_bytes())
        return tx.id

    def _refresh_pool(self) -> None:
        keep = {}
        for tx in self.pool.values():
            if tx.nonce > self.state.nonces.get(tx.sender_address, 0):
                keep[tx.id] = tx
        self.pool = keep

    def _adopt_block(self, block: Block, new_state) -> None:
        """Append a validated head extension (caller holds the lock)."""
        self.chain.append(block)
        self.state = new_state
        self.context.remember_state(block.block_hash, self.state)
        self.store.append(block)
        self.seen_blocks.add(block.block_hash)
        for tx in block.transactions:
            self.seen_txs.add(tx.id)
            self.pool.pop(tx.id, None)
        self._refresh_pool()
        self.query.update(self.chain)

    def advance_tick(self, ticks: int = 1) -> None:
        """Manual clock for tests: forge when this node leads the slot."""
        for _ in range(ticks):
            self._tick += 1
            self.forge_if_leader(self._tick)
            self.poll_protocols()

    def forge_if_leader(self, tick: int) -> Block | None:
        if self.keypair is None:
            return None
        with self.lock:
            if self.chain[-1].timestamp >= tick:
                return None
            try:
                leader = self.context.leader_at(self.chain, tick)
            except EductxError:
                return None
            if leader != self.keypair.public_key:
                return None
            txs, _ = select_pool_transactions(self.state, self.pool)
            block, new_state = build_block(
                self.chain[-1], self.state, txs, self.keypair, tick
            )
            self._adopt_block(block, new_state)
        self._gossip(FRAME_BLOCK, block.canonical_bytes())
        return block

    def poll_protocols(self) -> None:
        if self.hei is not None:
            self.hei.poll()
            self.save_registry()
        self.verifier.poll()

    def save_registry(self) -> None:
        if self.hei is not None:
            self.hei.save_registry(Path(self.config.data_dir) / "registry.json")

    def state_hash(self) -> bytes:
        with self.lock:
            return self.state.state_hash()

    # -- block/gossip intake ---------------------------------------------------------

    def receive_transaction(self, raw: bytes, origin=None) -> None:
        try:
            tx = deserialize_transaction(raw)
        except EductxError:
            return
        with self.lock:
            if tx.id in self.seen_txs:
                return
            self.seen_txs.add(tx.id)
            try:
                validate_transaction(tx, self.pool_state())
            except ValidationError:
                return
            self.pool[tx.id] = tx
        self._gossip(FRAME_TX, raw, skip=origin)

    def receive_block(self, raw: bytes, origin=None) -> None:
        try:
            block = deserialize_block(raw)
        except EductxError:
            return
        with self.lock:
            if block.block_hash in self.seen_blocks:
                return
            self.seen_blocks.add(block.block_hash)
            if block.previous_block_hash == self.chain[-1].block_hash:
                if self._try_append(block):
                    self._drain_orphans()
                    relay = True
                else:
                    relay = False
            elif 0 < block.height <= self.chain[-1].height and self.chain[
                block.height - 1
            ].block_hash == block.previous_block_hash:
                self._consider_candidate(self.chain[: block.height] + [block])
                relay = False
            else:
                self.orphans.setdefault(block.previous_block_hash, {})[
                    block.block_hash
                ] = block
                relay = False
        if relay:
            self._gossip(FRAME_BLOCK, raw, skip=origin)
        elif origin is not None:
            self._request_chain(origin, 1, block.height)

    def _try_append(self, block: Block) -> bool:
        try:
            leader = self.context.leader_at(self.chain, block.timestamp)
            if leader != block.generator_public_key:
                return False
            new_state = validate_block(block, self.chain[-1], self.state)
        except EductxError:
            return False
        self._adopt_block(block, new_state)
        return True

    def _drain_orphans(self) -> None:
        while True:
            children = self.orphans.pop(self.chain[-1].block_hash, None)
            if not children:
                return
            if not any(
                self._try_append(block)
                for block in sorted(children.values(), key=lambda b: b.block_hash)
            ):
                return

    def _consider_candidate(self, candidate: list[Block]) -> None:
        chosen = self.context.choose_chain(self.chain, candidate)
        if chosen is self.chain:
            return
        old = self.chain
        ancestor = 0
        limit = min(len(old), len(chosen))
        while (
            ancestor + 1 < limit
            and old[ancestor + 1].block_hash == chosen[ancestor + 1].block_hash
        ):
            ancestor += 1
        self.chain = chosen
        self.state = self.context.state_after(chosen, len(chosen) - 1)
        self.store.rollback(ancestor)
        for block in chosen[ancestor + 1 :]:
            self.store.append(block)
            self.seen_blocks.add(block.block_hash)
        new_ids = {tx.id for b in chosen[ancestor + 1 :] for tx in b.transactions}
        orphaned = [
            tx
            for b in old[ancestor + 1 :]
            for tx in b.transactions
            if tx.id not in new_ids
        ]
        for tx in orphaned:
            self.pool[tx.id] = tx
        for block in chosen[ancestor + 1 :]:
            for tx in block.transactions:
                self.pool.pop(tx.id, None)
                self.seen_txs.add(tx.id)
        self._refresh_pool()
        self.query.update(self.chain)
        for tx in orphaned:
            if tx.id in self.pool:
                self._gossip(FRAME_TX, tx.canonical_bytes())
        self._drain_orphans()

    # -- peer networking -----------------------------------------------------------

    def _gossip(self, kind: int, payload: bytes, skip=None) -> None:
        frame = _encode_frame(kind, payload)
        for key, link in list(self._peers.items()):
            if key is skip:
                continue
            link.send_raw(frame)

    def _request_chain(self, origin, lo: int, hi: int) -> None:
        link = self._peers.get(origin)
        if link is None:
            return
        entry = self._sync_target.get(origin)
        if entry and entry[0] >= hi:
            return
        self._sync_target[origin] = (hi, {})
        payload = json.dumps({"from": lo, "to": min(lo + SYNC_BATCH - 1, hi)}).encode()
        link.send_raw(_encode_frame(FRAME_CHAIN_REQUEST, payload))

    def handle_frame(self, kind: int, payload: bytes, link: "PeerLink") -> None:
        if kind == FRAME_HELLO:
            doc = json.loads(payload.decode())
            if doc.get("genesis") != self.genesis_block.block_hash.hex():
                link.close(reason=GenesisMismatch.__name__)
                return
            link.ready = True
            self._peers[link.key] = link
            their_height = int(doc.get("height", 0))
            if their_height > self.chain[-1].height:
                self._request_chain(link.key, 1, their_height)
        elif kind == FRAME_TX:
            self.receive_transaction(payload, origin=link.key)
        elif kind == FRAME_BLOCK:
            self.receive_block(payload, origin=link.key)
        elif kind == FRAME_CHAIN_REQUEST:
            doc = json.loads(payload.decode())
            lo = max(1, int(doc["from"]))
            with self.lock:
                hi = min(int(doc["to"]), self.chain[-1].height, lo + SYNC_BATCH - 1)
                blocks = [
                    self.chain[h].canonical_bytes().hex() for h in range(lo, hi + 1)
                ]
                head = self.chain[-1].height
            response = json.dumps({"from": lo, "blocks": blocks, "head_height": head})
            link.send_raw(_encode_frame(FRAME_CHAIN_RESPONSE, response.encode()))
        elif kind == FRAME_CHAIN_RESPONSE:
            self._handle_chain_response(payload, link)

    def _handle_chain_response(self, payload: bytes, link: "PeerLink") -> None:
        entry = self._sync_target.get(link.key)
        if entry is None:
            return
        target, buffered = entry
        try:
            doc = json.loads(payload.decode())
            start = int(doc["from"])
            blocks = [deserialize_block(bytes.fromhex(b)) for b in doc["blocks"]]
        except (EductxError, ValueError, KeyError):
            self._sync_target.pop(link.key, None)
            return
        for i, block in enumerate(blocks):
            buffered[start + i] = block
        target = max(target, int(doc.get("head_height", target)))
        have = max(buffered) if buffered else 0
        contiguous = all(h in buffered for h in range(1, have + 1))
        if contiguous and have < target:
            self._sync_target[link.key] = (target, buffered)
            payload_next = json.dumps(
                {"from": have + 1, "to": min(have + SYNC_BATCH, target)}
            ).encode()
            link.send_raw(_encode_frame(FRAME_CHAIN_REQUEST, payload_next))
            return
        self._sync_target.pop(link.key, None)
        if not all(h in buffered for h in range(1, target + 1)):
            return
        candidate = [self.genesis_block] + [buffered[h] for h in range(1, target + 1)]
        with self.lock:
            self._consider_candidate(candidate)

    # -- lifecycle --------------------------------------------------------------------

    def start(self) -> None:
        """Bind the gossip listener, dial peers, and (unless manual) run the
        forging clock."""
        node = self

        class Handler(socketserver.BaseRequestHandler):
            def handle(self):
                link = PeerLink(node, self.request, key=self.request)
                link.serve()

        try:
            self._server = socketserver.ThreadingTCPServer(
                (self.config.listen_host, self.config.listen_port), Handler
            )
        except OSError as exc:
            raise BindError(str(exc)) from exc
        self._server.daemon_threads = True
        server_thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        server_thread.start()
        self._threads.append(server_thread)

        for endpoint in self.config.peers:
            thread = threading.Thread(target=self._dial_loop, args=(endpoint,), daemon=True)
            thread.start()
            self._threads.append(thread)

        if not self.config.manual_ticks:
            ticker = threading.Thread(target=self._tick_loop, daemon=True)
            ticker.start()
            self._threads.append(ticker)

    @property
    def listen_port(self) -> int:
        assert self._server is not None
        return self._server.server_address[1]

    def _dial_loop(self, endpoint: str) -> None:
        host, _, port = endpoint.rpartition(":")
        while not self._stop.is_set():
            try:
                sock = socket.create_connection((host, int(port)), timeout=5)
                link = PeerLink(self, sock, key=endpoint)
                link.send_hello()
                self._peers[endpoint] = link
                link.serve()
            except OSError:
                pass
            finally:
                self._peers.pop(endpoint, None)
            if self._stop.wait(0.5):
                return

    def _tick_loop(self) -> None:
        last = self.current_tick()
        while not self._stop.is_set():
            now = self.current_tick()
            while last < now:
                last += 1
                self.forge_if_leader(last)
            self.poll_protocols()
            self._stop.wait(min(self.config.slot_seconds / 4, 0.5))

    def stop(self) -> None:
        self._stop.set()
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
        for link in list(self._peers.values()):
            link.close()
        self.store.close()
        self.save_registry()


class PeerLink:
    """One TCP peer connection; reads frames on the calling thread."""

    def __init__(self, node: Node, sock: socket.socket, key):
        self.node = node
        self.sock = sock
        self.key = key
        self.ready = False
        self._write_lock = threading.Lock()
        self._closed = False

    def send_hello(self) -> None:
        with self.node.lock:
            payload = json.dumps(
                {
                    "genesis": self.node.genesis_block.block_hash.hex(),
                    "height": self.node.chain[-1].height,
                }
            ).encode()
        self.send_raw(_encode_frame(FRAME_HELLO, payload))

    def send_raw(self, frame: bytes) -> None:
        if self._closed:
            return
        try:
            with self._write_lock:
                self.sock.sendall(frame)
        except OSError:
            self.close()

    def _read_exact(self, n: int) -> bytes | None:
        buf = b""
        while len(buf) < n:
            chunk = self.sock.recv(n - len(buf))
            if not chunk:
                return None
            buf += chunk
        return buf

    def serve(self) -> None:
        # an inbound peer speaks hello first; we answer with ours
        try:
            self.sock.settimeout(30)
            first = True
            while not self._closed:
                header = self._read_exact(4)
                if header is None:
                    break
                (length,) = struct.unpack(">I", header)
                body = self._read_exact(length)
                if body is None or not body:
                    break
                kind, payload = body[0], body[1:]
                if first and kind == FRAME_HELLO:
                    self.send_hello()
                first = False
                self.node.handle_frame(kind, payload, self)
        except OSError:
            pass
        finally:
            self.close()

    def close(self, reason: str = "") -> None:
        if self._closed:
            return
        self._closed = True
        self.node._peers.pop(self.key, None)
        try:
            self.sock.close()
        except OSError:
            pass


class LocalGateway:
    """In-process gateway the node's own protocol contexts use."""

    def __init__(self, node: Node):
        self.node = node

    def tick(self) -> int:
        return self.node.current_tick()

    def submit(self, tx: Transaction) -> bytes:
        return self.node.submit_transaction(tx)

    def next_nonce(self, address: str) -> int:
        return self.node.next_nonce(address)

    def balance(self, address: str) -> int:
        return self.node.balance(address)

    def is_confirmed(self, tx_id: bytes) -> bool:
        with self.node.lock:
            return self.node.query.is_confirmed(tx_id)

    def lookup(self, tx_id: bytes) -> Transaction | None:
        with self.node.lock:
            confirmed = self.node.query.transaction(tx_id)
            return confirmed.tx if confirmed else None

    def credit_entries(self, address: str) -> list[dict]:
        with self.node.lock:
            return self.node.query.credit_entries(address)


def write_genesis_file(path: str | Path, config: GenesisConfig) -> None:
    Path(path).write_text(json.dumps(config.to_json(), indent=2, sort_keys=True))
