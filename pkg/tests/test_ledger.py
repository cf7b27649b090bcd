import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eductx import crypto
from eductx.amounts import from_tokens, parse_amount
from eductx.errors import (
    BrokenChainLink,
    DuplicateDelegateName,
    DuplicateSigner,
    InsufficientBalance,
    InsufficientSignatures,
    InvalidAmount,
    InvalidTransactionInBlock,
    NonIntegerCredit,
    NotConsortiumMember,
    UnauthorizedSigner,
    UnknownDelegate,
    ValidationError,
)
from eductx.ledger import (
    apply_transaction,
    build_block,
    compute_balance,
    make_genesis,
    standard_genesis,
    total_balance,
    validate_block,
    validate_transaction,
)
from eductx.tx import (
    TxMetadata,
    append_signature,
    build_delegate_registration,
    build_multisig_registration,
    build_transfer,
    build_vote,
    deserialize_transaction,
)

HEI = crypto.generate_keypair(b"genesis-hei")
STUDENT = crypto.generate_keypair(b"student-1")
STRANGER = crypto.generate_keypair(b"stranger")
SCRIPT_22 = crypto.build_redeem_script([HEI.public_key, STUDENT.public_key], 2)
MULTISIG = crypto.derive_multisig_address(SCRIPT_22)


def vote_weight_oracle(state, delegate_public_key):
    """Independent full-scan recomputation of a delegate's vote weight."""
    return sum(
        balance
        for address, balance in state.balances.items()
        if state.votes.get(address) == delegate_public_key
    )


def fresh_state():
    config = standard_genesis([("uni-maribor", HEI)])
    _, state = make_genesis(config)
    return state


def signed_transfer(state, sender_kp, recipient, amount, metadata=TxMetadata()):
    tx = build_transfer(
        sender=sender_kp.address,
        recipient=recipient,
        amount=amount,
        metadata=metadata,
        nonce=state.nonces.get(sender_kp.address, 0) + 1,
    )
    return append_signature(tx, sender_kp)


def setup_funded_multisig(state):
    """Register the 2-2 policy and move 1 ECTX into the shared address."""
    reg = build_multisig_registration(
        HEI.address, SCRIPT_22, nonce=state.nonces.get(HEI.address, 0) + 1
    )
    reg = append_signature(reg, HEI)
    validate_transaction(reg, state)
    state = apply_transaction(state, reg)
    fund = signed_transfer(state, HEI, MULTISIG, from_tokens(1))
    validate_transaction(fund, state)
    return apply_transaction(state, fund)


def test_trivial_transfer_shape():
    tx = build_transfer(
        HEI.address,
        MULTISIG,
        from_tokens(6),
        metadata=TxMetadata(hei_name="uni-maribor", course_id="CS101"),
        nonce=1,
    )
    assert tx.amount == 6 * 10**8
    assert tx.metadata.course_id == "CS101"


def test_self_transfer_buildable():
    tx = build_transfer(HEI.address, HEI.address, 1, nonce=1)
    assert tx.sender_address == tx.recipient_address


def test_zero_amount_rejected_at_build():
    with pytest.raises(InvalidAmount):
        build_transfer(HEI.address, MULTISIG, 0, nonce=1)


def test_canonical_bytes_roundtrip():
    state = fresh_state()
    tx = signed_transfer(state, HEI, STRANGER.address, from_tokens(2))
    again = deserialize_transaction(tx.canonical_bytes())
    assert again == tx
    assert again.id == tx.id


def test_append_signature_flow():
    state = setup_funded_multisig(fresh_state())
    spend = build_transfer(
        MULTISIG,
        HEI.address,
        parse_amount("0.1"),
        nonce=1,
        redeem_script=SCRIPT_22,
    )
    half = append_signature(spend, STUDENT)
    assert len(half.signatures) == 1
    with pytest.raises(InsufficientSignatures):
        validate_transaction(half, state)
    full = append_signature(half, HEI)
    assert len(full.signatures) == 2
    validate_transaction(full, state)


def test_unrelated_key_cannot_sign_multisig_spend():
    spend = build_transfer(MULTISIG, HEI.address, 1, nonce=1, redeem_script=SCRIPT_22)
    with pytest.raises(UnauthorizedSigner):
        append_signature(spend, STRANGER)


def test_duplicate_signer_rejected():
    spend = build_transfer(MULTISIG, HEI.address, 1, nonce=1, redeem_script=SCRIPT_22)
    half = append_signature(spend, STUDENT)
    with pytest.raises(DuplicateSigner):
        append_signature(half, STUDENT)


def test_course_transfer_whole_credit_rule():
    state = fresh_state()
    tx = signed_transfer(
        state,
        HEI,
        MULTISIG,
        parse_amount("4.5"),
        metadata=TxMetadata(hei_name="uni-maribor", course_id="CS101"),
    )
    with pytest.raises(NonIntegerCredit):
        validate_transaction(tx, state)


def test_course_transfer_requires_registered_name():
    state = fresh_state()
    tx = signed_transfer(
        state,
        HEI,
        MULTISIG,
        from_tokens(6),
        metadata=TxMetadata(hei_name="not-our-name", course_id="CS101"),
    )
    with pytest.raises(NotConsortiumMember):
        validate_transaction(tx, state)


def test_valid_funded_transfer_applies():
    state = fresh_state()
    tx = signed_transfer(state, HEI, STRANGER.address, from_tokens(3))
    validate_transaction(tx, state)
    after = apply_transaction(state, tx)
    assert compute_balance(after, STRANGER.address) == from_tokens(3)
    assert (
        compute_balance(after, HEI.address)
        == compute_balance(state, HEI.address) - from_tokens(3)
    )
    assert total_balance(after) == after.total_supply


def test_insufficient_balance():
    state = fresh_state()
    tx = signed_transfer(state, STRANGER, HEI.address, 1)
    with pytest.raises(InsufficientBalance):
        validate_transaction(tx, state)


def test_nonce_must_increment():
    state = fresh_state()
    tx = signed_transfer(state, HEI, STRANGER.address, 1)
    state = apply_transaction(state, tx)
    replayed = tx  # same nonce again
    with pytest.raises(ValidationError):
        validate_transaction(replayed, state)


def test_multisig_registration_retrievable():
    state = setup_funded_multisig(fresh_state())
    assert state.multisig_policies[MULTISIG] == SCRIPT_22


def test_vote_weight_tracks_balance():
    state = fresh_state()
    # fund a voter, register a second delegate, vote, then move money
    voter = crypto.generate_keypair(b"voter")
    state = apply_transaction(
        state, signed_transfer(state, HEI, voter.address, from_tokens(100))
    )
    hei_pub = HEI.public_key
    vote = append_signature(
        build_vote(voter.address, HEI.address, nonce=1), voter
    )
    validate_transaction(vote, state)
    state = apply_transaction(state, vote)
    assert state.delegates[hei_pub].vote_weight == from_tokens(100)
    assert state.delegates[hei_pub].vote_weight == vote_weight_oracle(state, hei_pub)
    # spending reduces the voter's weight contribution
    spend = append_signature(
        build_transfer(voter.address, STRANGER.address, from_tokens(40), nonce=2),
        voter,
    )
    state = apply_transaction(state, spend)
    assert state.delegates[hei_pub].vote_weight == from_tokens(60)
    assert state.delegates[hei_pub].vote_weight == vote_weight_oracle(state, hei_pub)


def test_revote_moves_weight():
    state = fresh_state()
    voter = crypto.generate_keypair(b"voter")
    second = crypto.generate_keypair(b"second-delegate")
    state = apply_transaction(
        state, signed_transfer(state, HEI, voter.address, from_tokens(10))
    )
    state = apply_transaction(
        state, signed_transfer(state, HEI, second.address, from_tokens(1))
    )
    # admit and register the second delegate
    admit = signed_transfer(
        state, HEI, second.address, 1, metadata=TxMetadata(hei_name="uni-two")
    )
    # second.address already funded above: admission needs the metadata tag
    state = apply_transaction(state, admit)
    reg = append_signature(
        build_delegate_registration(second.address, "uni-two", nonce=1), second
    )
    validate_transaction(reg, state)
    state = apply_transaction(state, reg)

    vote1 = append_signature(build_vote(voter.address, HEI.address, nonce=1), voter)
    state = apply_transaction(state, vote1)
    vote2 = append_signature(build_vote(voter.address, second.address, nonce=2), voter)
    validate_transaction(vote2, state)
    state = apply_transaction(state, vote2)
    assert state.delegates[HEI.public_key].vote_weight == vote_weight_oracle(
        state, HEI.public_key
    )
    assert state.delegates[second.public_key].vote_weight == vote_weight_oracle(
        state, second.public_key
    )
    total = sum(info.vote_weight for info in state.delegates.values())
    assert total == from_tokens(10)


def test_vote_for_unregistered_rejected():
    state = fresh_state()
    voter = crypto.generate_keypair(b"voter")
    state = apply_transaction(
        state, signed_transfer(state, HEI, voter.address, from_tokens(1))
    )
    vote = append_signature(
        build_vote(voter.address, STRANGER.address, nonce=1), voter
    )
    with pytest.raises(UnknownDelegate):
        validate_transaction(vote, state)


def test_delegate_registration_requires_membership():
    state = fresh_state()
    outsider = crypto.generate_keypair(b"outsider")
    state = apply_transaction(
        state, signed_transfer(state, HEI, outsider.address, from_tokens(1))
    )
    reg = append_signature(
        build_delegate_registration(outsider.address, "rogue", nonce=1), outsider
    )
    with pytest.raises(NotConsortiumMember):
        validate_transaction(reg, state)


def test_duplicate_delegate_name_rejected():
    state = fresh_state()
    second = crypto.generate_keypair(b"second-delegate")
    state = apply_transaction(
        state, signed_transfer(state, HEI, second.address, from_tokens(1))
    )
    state = apply_transaction(
        state,
        signed_transfer(
            state, HEI, second.address, 1, metadata=TxMetadata(hei_name="uni-two")
        ),
    )
    reg = append_signature(
        build_delegate_registration(second.address, "uni-maribor", nonce=1), second
    )
    with pytest.raises(DuplicateDelegateName):
        validate_transaction(reg, state)


def test_admission_registers_hei():
    state = fresh_state()
    newcomer = crypto.generate_keypair(b"newcomer")
    endow = signed_transfer(
        state,
        HEI,
        newcomer.address,
        from_tokens(1000),
        metadata=TxMetadata(hei_name="uni-new"),
    )
    validate_transaction(endow, state)
    state = apply_transaction(state, endow)
    assert state.hei_registry[newcomer.address] == "uni-new"


def test_plain_transfer_does_not_admit():
    state = fresh_state()
    newcomer = crypto.generate_keypair(b"newcomer")
    state = apply_transaction(
        state, signed_transfer(state, HEI, newcomer.address, from_tokens(1))
    )
    assert newcomer.address not in state.hei_registry


# -- blocks ---------------------------------------------------------------


def test_empty_child_block_valid(single_hei_chain):
    _, genesis_block, genesis_state = single_hei_chain
    block, state = build_block(genesis_block, genesis_state, [], HEI, timestamp=1)
    assert validate_block(block, genesis_block, genesis_state).state_hash() == state.state_hash()


def test_broken_chain_link(single_hei_chain):
    _, genesis_block, genesis_state = single_hei_chain
    block, _ = build_block(genesis_block, genesis_state, [], HEI, timestamp=1)
    orphan, _ = build_block(block, genesis_state, [], HEI, timestamp=2)
    with pytest.raises(BrokenChainLink):
        validate_block(orphan, genesis_block, genesis_state)


def test_block_with_underfunded_multisig_spend_rejected(single_hei_chain):
    _, genesis_block, genesis_state = single_hei_chain
    state = setup_funded_multisig(genesis_state)
    spend = build_transfer(MULTISIG, HEI.address, 1, nonce=1, redeem_script=SCRIPT_22)
    half = append_signature(spend, STUDENT)
    with pytest.raises(InvalidTransactionInBlock):
        build_block(genesis_block, state, [half], HEI, timestamp=1)


def test_forging_pays_nothing(single_hei_chain):
    _, genesis_block, genesis_state = single_hei_chain
    before = compute_balance(genesis_state, HEI.address)
    block, state = build_block(genesis_block, genesis_state, [], HEI, timestamp=1)
    assert compute_balance(state, HEI.address) == before
    assert total_balance(state) == state.total_supply


def test_unknown_address_balance_zero():
    state = fresh_state()
    assert compute_balance(state, "D00000000000000000000000000000000") == 0


def test_genesis_premine(single_hei_chain):
    _, _, genesis_state = single_hei_chain
    assert compute_balance(genesis_state, HEI.address) == genesis_state.total_supply


def test_registration_roundtrip_returns_to_zero():
    """Replay of the wallet-setup message sequence: fund 0.1, return 0.1."""
    state = fresh_state()
    reg = append_signature(
        build_multisig_registration(HEI.address, SCRIPT_22, nonce=1), HEI
    )
    state = apply_transaction(state, reg)
    fund = signed_transfer(state, HEI, MULTISIG, parse_amount("0.1"))
    state = apply_transaction(state, fund)
    assert compute_balance(state, MULTISIG) == parse_amount("0.1")
    back = build_transfer(
        MULTISIG, HEI.address, parse_amount("0.1"), nonce=1, redeem_script=SCRIPT_22
    )
    back = append_signature(append_signature(back, STUDENT), HEI)
    validate_transaction(back, state)
    state = apply_transaction(state, back)
    assert compute_balance(state, MULTISIG) == 0
    assert total_balance(state) == state.total_supply


def test_state_hash_is_deterministic():
    a = setup_funded_multisig(fresh_state())
    b = setup_funded_multisig(fresh_state())
    assert a.state_hash() == b.state_hash()
    assert a.canonical_bytes() == b.canonical_bytes()


# -- properties --------------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(
    amounts=st.lists(st.integers(min_value=1, max_value=10**10), min_size=1, max_size=12),
    data=st.data(),
)
def test_conservation_over_random_transfers(amounts, data):
    state = fresh_state()
    wallets = [HEI, STUDENT, STRANGER, crypto.generate_keypair(b"w4")]
    supply = state.total_supply
    for amount in amounts:
        sender = data.draw(st.sampled_from(wallets))
        recipient = data.draw(st.sampled_from(wallets))
        tx = signed_transfer(state, sender, recipient.address, amount)
        try:
            validate_transaction(tx, state)
        except ValidationError:
            continue
        state = apply_transaction(state, tx)
        assert total_balance(state) == supply


@settings(max_examples=30, deadline=None)
@given(data=st.data())
def test_multisig_never_spends_below_quorum(data):
    """Fuzz signature subsets on a 2-2 spend; anything under two valid member
    signatures must fail validation."""
    state = setup_funded_multisig(fresh_state())
    signers = data.draw(
        st.lists(
            st.sampled_from([STUDENT, HEI, STRANGER, crypto.generate_keypair(b"x")]),
            min_size=0,
            max_size=3,
            unique_by=lambda kp: kp.public_key,
        )
    )
    corrupt = data.draw(st.booleans())
    tx = build_transfer(MULTISIG, HEI.address, 1, nonce=1, redeem_script=SCRIPT_22)
    signatures = []
    for kp in signers:
        sig = crypto.sign_message(kp.private_key, tx.signing_bytes())
        if corrupt and data.draw(st.booleans()):
            sig = bytes([sig[0] ^ 1]) + sig[1:]
        signatures.append((kp.public_key, sig))
    candidate = tx.__class__(**{**tx.__dict__, "signatures": tuple(signatures)})
    valid_members = sum(
        1
        for pk, sig in signatures
        if SCRIPT_22.is_member(pk) and crypto.verify_signature(pk, tx.signing_bytes(), sig)
    )
    try:
        validate_transaction(candidate, state)
        accepted = True
    except ValidationError:
        accepted = False
    if valid_members < 2 or len(signatures) != valid_members:
        assert not accepted
    else:
        assert accepted
