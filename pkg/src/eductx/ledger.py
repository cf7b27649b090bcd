"""Account ledger: state model, transaction validation and application,
block validation, genesis construction.

The state is a value: every transition returns a fresh state and never
mutates its input, so a node can hand out read snapshots while the writer
advances the chain. Total supply is conserved exactly — there are no fees
and forging pays zero — which makes Σ balances == genesis supply a hard
invariant of every reachable state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from . import crypto
from .amounts import format_amount, is_whole_tokens
from .blocks import Block, seal_block
from .crypto import RedeemScript
from .errors import (
    AlreadyRegistered,
    BadNonce,
    BadSignature,
    BrokenChainLink,
    BadGeneratorSignature,
    DuplicateDelegateName,
    InsufficientBalance,
    InsufficientSignatures,
    InvalidAmount,
    InvalidTransactionInBlock,
    NonIntegerCredit,
    NotConsortiumMember,
    UnknownDelegate,
    ValidationError,
)
from .tx import Transaction, TxKind


@dataclass
class DelegateInfo:
    name: str
    address: str
    vote_weight: int = 0


@dataclass
class LedgerState:
    total_supply: int
    balances: dict[str, int] = field(default_factory=dict)
    nonces: dict[str, int] = field(default_factory=dict)
    delegates: dict[bytes, DelegateInfo] = field(default_factory=dict)
    votes: dict[str, bytes] = field(default_factory=dict)
    multisig_policies: dict[str, RedeemScript] = field(default_factory=dict)
    hei_registry: dict[str, str] = field(default_factory=dict)

    def copy(self) -> "LedgerState":
        return LedgerState(
            total_supply=self.total_supply,
            balances=dict(self.balances),
            nonces=dict(self.nonces),
            delegates={pk: replace(info) for pk, info in self.delegates.items()},
            votes=dict(self.votes),
            multisig_policies=dict(self.multisig_policies),
            hei_registry=dict(self.hei_registry),
        )

    def delegate_by_address(self, address: str) -> bytes | None:
        for public_key, info in self.delegates.items():
            if info.address == address:
                return public_key
        return None

    def canonical_bytes(self) -> bytes:
        doc = {
            "total_supply": str(self.total_supply),
            "balances": {a: str(v) for a, v in self.balances.items() if v},
            "nonces": {a: v for a, v in self.nonces.items()},
            "delegates": {
                pk.hex(): {
                    "name": info.name,
                    "address": info.address,
                    "vote_weight": str(info.vote_weight),
                }
                for pk, info in self.delegates.items()
            },
            "votes": {a: pk.hex() for a, pk in self.votes.items()},
            "multisig_policies": {
                a: script.canonical_bytes().hex()
                for a, script in self.multisig_policies.items()
            },
            "hei_registry": dict(self.hei_registry),
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()

    def state_hash(self) -> bytes:
        return crypto.sha256(self.canonical_bytes())


def compute_balance(state: LedgerState, address: str) -> int:
    return state.balances.get(address, 0)


def total_balance(state: LedgerState) -> int:
    return sum(state.balances.values())


def _credit(state: LedgerState, address: str, amount: int) -> None:
    state.balances[address] = state.balances.get(address, 0) + amount
    voted = state.votes.get(address)
    if voted is not None:
        state.delegates[voted].vote_weight += amount


def _debit(state: LedgerState, address: str, amount: int) -> None:
    state.balances[address] = state.balances.get(address, 0) - amount
    voted = state.votes.get(address)
    if voted is not None:
        state.delegates[voted].vote_weight -= amount


def _spend_policy(tx: Transaction, state: LedgerState) -> RedeemScript | None:
    """Resolve the policy governing the sender, or None for single-key."""
    version, _ = crypto.decode_address(tx.sender_address)
    if version != crypto.MULTISIG_VERSION:
        return None
    policy = state.multisig_policies.get(tx.sender_address)
    if policy is None:
        raise BadSignature("no redeem script registered for multisig sender")
    if tx.redeem_script is not None and tx.redeem_script != policy:
        raise BadSignature("attached redeem script does not match registered policy")
    return policy


def _check_signatures(tx: Transaction, state: LedgerState) -> None:
    if not tx.signatures:
        raise InsufficientSignatures("transaction carries no signatures")
    seen: set[bytes] = set()
    for public_key, _ in tx.signatures:
        if public_key in seen:
            raise BadSignature("duplicate signer")
        seen.add(public_key)

    preimage = tx.signing_bytes()
    policy = _spend_policy(tx, state)
    if policy is None:
        if len(tx.signatures) != 1:
            raise BadSignature("single-key sender must carry exactly one signature")
        public_key, signature = tx.signatures[0]
        if crypto.derive_address(public_key) != tx.sender_address:
            raise BadSignature("signer does not control the sender address")
        if not crypto.verify_signature(public_key, preimage, signature):
            raise BadSignature("invalid signature")
        return

    valid = 0
    for public_key, signature in tx.signatures:
        if not policy.is_member(public_key):
            raise BadSignature("signer is not a member of the redeem script")
        if not crypto.verify_signature(public_key, preimage, signature):
            raise BadSignature("invalid member signature")
        valid += 1
    if valid < policy.m:
        raise InsufficientSignatures(
            f"need {policy.m} member signatures, got {valid}"
        )


def _is_admission_transfer(tx: Transaction, state: LedgerState) -> bool:
    """Consortium admission rides on an endowment transfer: a member HEI pays
    a plain (non-script) address and tags it with the new member's official
    name; course transfers always carry a course id and pay script addresses,
    so the two cannot collide."""
    if tx.kind is not TxKind.TRANSFER or not tx.metadata.hei_name or tx.metadata.course_id:
        return False
    if tx.sender_address not in state.hei_registry:
        return False
    if tx.recipient_address in state.hei_registry:
        return False
    version, _ = crypto.decode_address(tx.recipient_address)
    return version == crypto.SINGLE_KEY_VERSION


def validate_transaction(tx: Transaction, state: LedgerState) -> None:
    """Raise a ValidationError subclass if the transaction cannot be applied
    to this state; checks run in a fixed order so reason codes are stable."""
    if tx.amount < 0 or tx.amount > 2**64 - 1:
        raise InvalidAmount("amount out of range")
    if tx.kind is TxKind.TRANSFER:
        if not tx.recipient_address:
            raise ValidationError("transfer requires a recipient")
        if tx.amount == 0:
            raise InvalidAmount("transfer amount must be positive")
        crypto.decode_address(tx.recipient_address)
    else:
        if tx.amount != 0:
            raise InvalidAmount(f"{tx.kind.name.lower()} must carry zero amount")

    expected_nonce = state.nonces.get(tx.sender_address, 0) + 1
    if tx.nonce != expected_nonce:
        raise BadNonce(f"expected nonce {expected_nonce}, got {tx.nonce}")

    _check_signatures(tx, state)

    if tx.kind is TxKind.TRANSFER:
        if compute_balance(state, tx.sender_address) < tx.amount:
            raise InsufficientBalance(
                f"balance {compute_balance(state, tx.sender_address)} < {tx.amount}"
            )
        if tx.metadata.course_id:
            if not is_whole_tokens(tx.amount):
                raise NonIntegerCredit(
                    f"course credit {format_amount(tx.amount)} is not a whole token"
                )
            registered = state.hei_registry.get(tx.sender_address)
            if registered is None or registered != tx.metadata.hei_name:
                raise NotConsortiumMember(
                    "course credits may only be issued by a member HEI under its registered name"
                )
    elif tx.kind is TxKind.DELEGATE_REGISTRATION:
        name = tx.metadata.hei_name
        if not name:
            raise ValidationError("delegate registration requires a name")
        if tx.sender_address not in state.hei_registry:
            raise NotConsortiumMember("only member HEIs may register as delegates")
        public_key = tx.signatures[0][0]
        if public_key in state.delegates:
            raise AlreadyRegistered("sender is already a delegate")
        if any(info.name == name for info in state.delegates.values()):
            raise DuplicateDelegateName(f"delegate name {name!r} already taken")
    elif tx.kind is TxKind.VOTE:
        if state.delegate_by_address(tx.recipient_address) is None:
            raise UnknownDelegate(f"no delegate at {tx.recipient_address}")
    elif tx.kind is TxKind.MULTISIG_REGISTRATION:
        if tx.redeem_script is None:
            raise ValidationError("multisig registration requires a redeem script")
        derived = crypto.derive_multisig_address(tx.redeem_script)
        if tx.recipient_address != derived:
            raise ValidationError("registered address does not match script hash")
        existing = state.multisig_policies.get(derived)
        if existing is not None and existing != tx.redeem_script:
            raise AlreadyRegistered(f"{derived} already bound to a different script")


def apply_transaction(state: LedgerState, tx: Transaction) -> LedgerState:
    """Apply a transaction already vetted by validate_transaction."""
    new = state.copy()
    new.nonces[tx.sender_address] = new.nonces.get(tx.sender_address, 0) + 1

    if tx.kind is TxKind.TRANSFER:
        if _is_admission_transfer(tx, new):
            new.hei_registry[tx.recipient_address] = tx.metadata.hei_name
        _debit(new, tx.sender_address, tx.amount)
        _credit(new, tx.recipient_address, tx.amount)
    elif tx.kind is TxKind.DELEGATE_REGISTRATION:
        public_key = tx.signatures[0][0]
        new.delegates[public_key] = DelegateInfo(
            name=tx.metadata.hei_name, address=tx.sender_address, vote_weight=0
        )
        # voters may have picked this delegate before it registered: impossible
        # (vote validation requires registration), so weight starts at zero.
    elif tx.kind is TxKind.VOTE:
        target = new.delegate_by_address(tx.recipient_address)
        assert target is not None, "validated vote lost its delegate"
        balance = compute_balance(new, tx.sender_address)
        previous = new.votes.get(tx.sender_address)
        if previous is not None:
            new.delegates[previous].vote_weight -= balance
        new.votes[tx.sender_address] = target
        new.delegates[target].vote_weight += balance
    elif tx.kind is TxKind.MULTISIG_REGISTRATION:
        assert tx.redeem_script is not None
        new.multisig_policies[tx.recipient_address] = tx.redeem_script

    return new


# -- blocks -------------------------------------------------------------


def build_block(
    parent: Block,
    state_after_parent: LedgerState,
    transactions: list[Transaction],
    generator: crypto.KeyPair,
    timestamp: int,
) -> tuple[Block, LedgerState]:
    """Seal a block; every transaction must be valid against the state as it
    evolves inside the block."""
    state = state_after_parent
    for tx in transactions:
        try:
            validate_transaction(tx, state)
        except ValidationError as exc:
            raise InvalidTransactionInBlock(f"{tx.id.hex()[:16]}: {exc}") from exc
        state = apply_transaction(state, tx)
    block = seal_block(
        height=parent.height + 1,
        previous_block_hash=parent.block_hash,
        timestamp=timestamp,
        transactions=tuple(transactions),
        generator=generator,
    )
    return block, state


def validate_block(block: Block, parent: Block, state_after_parent: LedgerState) -> LedgerState:
    """Full block validation; returns the evolved state. Slot-leadership is
    the consensus layer's concern and checked there."""
    if block.height != parent.height + 1:
        raise BrokenChainLink(
            f"height {block.height} does not follow parent {parent.height}"
        )
    if block.previous_block_hash != parent.block_hash:
        raise BrokenChainLink("previous block hash mismatch")
    if block.timestamp <= parent.timestamp:
        raise BrokenChainLink("block timestamp must increase")
    if not crypto.verify_signature(
        block.generator_public_key, block.hash_preimage(), block.block_signature
    ):
        raise BadGeneratorSignature("generator signature does not verify")
    state = state_after_parent
    for tx in block.transactions:
        try:
            validate_transaction(tx, state)
        except ValidationError as exc:
            raise InvalidTransactionInBlock(f"{tx.id.hex()[:16]}: {exc}") from exc
        state = apply_transaction(state, tx)
    return state


def apply_block_unchecked(state: LedgerState, block: Block) -> LedgerState:
    """Replay path for blocks this node already validated once."""
    for tx in block.transactions:
        state = apply_transaction(state, tx)
    return state


# -- genesis -------------------------------------------------------------

DEFAULT_SUPPLY = 1_000_000 * 10**8


@dataclass(frozen=True)
class GenesisConfig:
    """Premine allocations plus the bootstrap consortium roster. The hash of
    the canonical JSON is the chain id: it seeds the genesis block so two
    nodes with diverging configs can never exchange blocks."""

    token_supply: int
    allocations: tuple[tuple[str, int], ...]
    hei_registry: tuple[tuple[str, str], ...]
    delegates: tuple[tuple[str, str, str], ...]  # (name, public_key hex, address)

    def canonical_bytes(self) -> bytes:
        doc = {
            "version": 1,
            "token_supply": str(self.token_supply),
            "allocations": [[a, str(v)] for a, v in self.allocations],
            "hei_registry": [[a, n] for a, n in self.hei_registry],
            "delegates": [list(entry) for entry in self.delegates],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()

    def genesis_hash(self) -> bytes:
        return crypto.sha256(self.canonical_bytes())

    def to_json(self) -> dict:
        return json.loads(self.canonical_bytes().decode())

    @classmethod
    def from_json(cls, doc: dict) -> "GenesisConfig":
        return cls(
            token_supply=int(doc["token_supply"]),
            allocations=tuple((a, int(v)) for a, v in doc["allocations"]),
            hei_registry=tuple((a, n) for a, n in doc["hei_registry"]),
            delegates=tuple(tuple(entry) for entry in doc["delegates"]),
        )


def make_genesis(config: GenesisConfig) -> tuple[Block, LedgerState]:
    allocated = sum(v for _, v in config.allocations)
    if allocated != config.token_supply:
        raise InvalidAmount(
            f"allocations {allocated} do not sum to supply {config.token_supply}"
        )
    state = LedgerState(total_supply=config.token_supply)
    for address, value in config.allocations:
        state.balances[address] = state.balances.get(address, 0) + value
    for address, name in config.hei_registry:
        state.hei_registry[address] = name
    for name, public_key_hex, address in config.delegates:
        state.delegates[bytes.fromhex(public_key_hex)] = DelegateInfo(
            name=name, address=address, vote_weight=0
        )
    block = Block(
        height=0,
        previous_block_hash=config.genesis_hash(),
        timestamp=0,
        generator_public_key=b"\x00" * 32,
        transactions=(),
        block_signature=b"\x00" * 64,
    )
    return block, state


def standard_genesis(
    heis: list[tuple[str, crypto.KeyPair]],
    supply: int = DEFAULT_SUPPLY,
    operating_float: int = 10_000 * 10**8,
) -> GenesisConfig:
    """Bootstrap config: the first HEI holds the premined treasury, every
    listed HEI is a consortium member and a registered delegate. Later HEIs
    get a small operating float so they can transact from the start."""
    if not heis:
        raise InvalidAmount("at least one bootstrap HEI required")
    float_total = operating_float * (len(heis) - 1)
    if supply <= float_total:
        raise InvalidAmount("supply does not cover operating floats")
    allocations = [(heis[0][1].address, supply - float_total)]
    allocations += [(kp.address, operating_float) for _, kp in heis[1:]]
    return GenesisConfig(
        token_supply=supply,
        allocations=tuple(allocations),
        hei_registry=tuple((kp.address, name) for name, kp in heis),
        delegates=tuple((name, kp.public_key.hex(), kp.address) for name, kp in heis),
    )


def replay_blocks(
    genesis_block: Block,
    genesis_state: LedgerState,
    blocks: list[Block],
    verify: bool = True,
) -> LedgerState:
    """Fold a block sequence over genesis. verify=False is the fast path for
    chains this node has already fully validated."""
    state = genesis_state
    parent = genesis_block
    for block in blocks:
        if verify:
            state = validate_block(block, parent, state)
        else:
            state = apply_block_unchecked(state, block)
        parent = block
    return state
