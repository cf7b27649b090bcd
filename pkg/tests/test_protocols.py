import random

import pytest

from eductx import crypto
from eductx.amounts import format_amount, from_tokens, parse_amount
from eductx.errors import (
    DuplicateStudent,
    InsufficientTreasury,
    NonIntegerCredit,
    UnknownSession,
    UnknownStudent,
)
from eductx.ledger import compute_balance
from eductx.protocols import (
    ApplicantHEI,
    HEIContext,
    PrivateChannel,
    SimGateway,
    StudentWallet,
    VerifierOrg,
    run_until,
)
from eductx.sim import standard_network


@pytest.fixture
def world():
    sim, keys = standard_network(3)
    channel = PrivateChannel()
    hei = HEIContext(
        name="uni-0",
        keypair=keys[0],
        gateway=SimGateway(sim, 0),
        channel=channel,
        rng=random.Random(11),
    )
    return sim, keys, channel, hei


def finish_registration(sim, channel, hei, student_id="S-001"):
    session, packet = hei.register_student(student_id)
    student_inbox = crypto.KeyPair(
        private_key=bytes.fromhex(packet["student_keys"]["private_key"]),
        public_key=bytes.fromhex(packet["student_keys"]["public_key"]),
    )
    student = StudentWallet(SimGateway(sim, 1), channel, student_inbox)
    run_until(sim, [hei, student], lambda: session.phase == "info_sent")
    assert student.keypair is not None
    student.confirm_wallet()
    ok = run_until(sim, [hei, student], lambda: session.phase == "confirmed")
    assert ok, f"registration stuck in {session.phase}"
    return session, student


def test_join_happy_path_with_paper_challenge(world):
    sim, keys, channel, hei = world
    applicant_kp = crypto.generate_keypair(b"new-hei")
    applicant = ApplicantHEI("uni-new", applicant_kp, SimGateway(sim, 1), channel)
    session = applicant.apply_to(hei, challenge_x=235781)
    assert session.phase == "endowed_probe"
    ok = run_until(sim, [hei, applicant], lambda: session.phase == "member")
    assert ok, f"join stuck in {session.phase} ({session.error})"
    assert session.challenge_x == 235781
    assert format_amount(session.challenge_x) == "0.00235781"
    assert applicant.member
    # endowment landed, and the newcomer is on-chain consortium
    node_state = sim.nodes[0].state
    assert compute_balance(node_state, applicant_kp.address) >= from_tokens(1000)
    assert node_state.hei_registry[applicant_kp.address] == "uni-new"
    assert hei.heis[applicant_kp.address].status == "member"


def test_join_wrong_amount_terminates(world):
    sim, keys, channel, hei = world
    applicant_kp = crypto.generate_keypair(b"cheater")
    applicant = ApplicantHEI("uni-cheat", applicant_kp, SimGateway(sim, 1), channel)
    session = applicant.apply_to(hei, challenge_x=235781)
    run_until(sim, [hei], lambda: session.phase == "challenged")
    # repay one subunit short: 0.00235780
    tx_id = applicant.repay(session.session_id, 235780, hei.address)
    applicant.notify_repayment(session.session_id, tx_id)
    run_until(sim, [hei], lambda: session.phase == "terminated")
    assert session.phase == "terminated"
    assert session.error == "RepaymentMismatch"


def test_join_wrong_address_terminates(world):
    sim, keys, channel, hei = world
    applicant_kp = crypto.generate_keypair(b"mule-hei")
    applicant = ApplicantHEI("uni-mule", applicant_kp, SimGateway(sim, 1), channel)
    session = applicant.apply_to(hei, challenge_x=235781)
    run_until(sim, [hei], lambda: session.phase == "challenged")
    # exact amount, but paid from an address that never held the probe
    mule = crypto.generate_keypair(b"other-wallet")
    fund = applicant.repay(session.session_id, from_tokens(1), mule.address)
    run_until(sim, [hei], lambda: sim.tick > 8)
    tx_id = applicant.repay(session.session_id, 235781, hei.address, keypair=mule)
    applicant.notify_repayment(session.session_id, tx_id)
    run_until(sim, [hei], lambda: session.phase == "terminated")
    assert session.error == "RepaymentMismatch"


def test_join_timeout(world):
    sim, keys, channel, hei = world
    hei.join_timeout = 10
    applicant_kp = crypto.generate_keypair(b"slow-hei")
    applicant = ApplicantHEI("uni-slow", applicant_kp, SimGateway(sim, 1), channel)
    session = applicant.apply_to(hei)
    run_until(sim, [hei], lambda: session.phase == "challenged")
    run_until(sim, [hei], lambda: session.phase == "terminated", max_ticks=20)
    assert session.error == "RepaymentTimeout"


def test_join_info_rejected(world):
    sim, keys, channel, hei = world
    hei._allow_list = {"uni-good"}
    applicant_kp = crypto.generate_keypair(b"bad-hei")
    applicant = ApplicantHEI("uni-bad", applicant_kp, SimGateway(sim, 1), channel)
    session = applicant.apply_to(hei)
    assert session.phase == "terminated"
    assert session.error == "InfoRejected"


def test_registration_full_roundtrip(world):
    sim, keys, channel, hei = world
    session, student = finish_registration(sim, channel, hei)
    record = hei.students["S-001"]
    assert record.registration_confirmed
    # 0.1 went out and came back: the shared address nets to zero
    assert compute_balance(sim.nodes[0].state, record.multisig_address) == 0
    assert record.multisig_address == student.multisig_address


def test_registration_packet_has_four_items(world):
    sim, keys, channel, hei = world
    _, packet = hei.register_student("S-002")
    assert set(packet) == {
        "session_id",
        "instructions",
        "student_keys",
        "hei_public_key",
        "redeem_script",
    }
    items = [k for k in packet if k != "session_id"]
    assert len(items) == 4


def test_duplicate_student_rejected(world):
    sim, keys, channel, hei = world
    hei.register_student("S-003")
    with pytest.raises(DuplicateStudent):
        hei.register_student("S-003")


def test_funding_lands_before_roundtrip(world):
    sim, keys, channel, hei = world
    session, _ = hei.register_student("S-004")
    record = hei.students["S-004"]
    run_until(sim, [hei], lambda: session.phase in ("funded", "info_sent"))
    assert compute_balance(sim.nodes[0].state, record.multisig_address) == parse_amount("0.1")


def test_student_only_signature_rejected_by_ledger(world):
    sim, keys, channel, hei = world
    session, packet = hei.register_student("S-005")
    student_kp = crypto.KeyPair(
        private_key=bytes.fromhex(packet["student_keys"]["private_key"]),
        public_key=bytes.fromhex(packet["student_keys"]["public_key"]),
    )
    run_until(sim, [hei], lambda: session.phase == "info_sent")
    from eductx.errors import InsufficientSignatures
    from eductx.tx import append_signature, build_transfer

    record = hei.students["S-005"]
    script = crypto.RedeemScript.from_canonical(bytes.fromhex(record.redeem_script))
    tx = build_transfer(
        record.multisig_address,
        hei.address,
        parse_amount("0.1"),
        nonce=sim.next_nonce(0, record.multisig_address),
        redeem_script=script,
    )
    half = append_signature(tx, student_kp)
    with pytest.raises(InsufficientSignatures):
        sim.submit_transaction(0, half)


def test_cosign_unknown_session(world):
    sim, keys, channel, hei = world
    with pytest.raises(UnknownSession):
        hei.cosign_roundtrip("join-999999", b"\x00")


def test_course_completion_accumulates(world):
    sim, keys, channel, hei = world
    session, student = finish_registration(sim, channel, hei)
    record = hei.students["S-001"]
    hei.complete_course("S-001", "CS101", 6)
    run_until(sim, [hei], lambda: all(e.confirmed for e in record.course_log))
    assert compute_balance(sim.nodes[0].state, record.multisig_address) == from_tokens(6)
    assert [(e.course_id, e.credits) for e in record.course_log] == [("CS101", 6)]


def test_full_year_of_courses(world):
    sim, keys, channel, hei = world
    _, student = finish_registration(sim, channel, hei)
    record = hei.students["S-001"]
    for course, credits in [("CS101", 6), ("MA201", 9), ("PH101", 15), ("SE301", 30)]:
        hei.complete_course("S-001", course, credits)
        run_until(sim, [hei], lambda: all(e.confirmed for e in record.course_log))
    assert compute_balance(sim.nodes[0].state, record.multisig_address) == from_tokens(60)
    assert sum(e.credits for e in record.course_log) == 60


def test_fractional_credits_rejected(world):
    sim, keys, channel, hei = world
    finish_registration(sim, channel, hei)
    with pytest.raises(NonIntegerCredit):
        hei.complete_course("S-001", "CS101", 4.5)


def test_unknown_student_rejected(world):
    sim, keys, channel, hei = world
    with pytest.raises(UnknownStudent):
        hei.complete_course("S-404", "CS101", 6)


def test_insufficient_treasury(world):
    sim, keys, channel, hei = world
    session, student = finish_registration(sim, channel, hei)
    with pytest.raises(InsufficientTreasury):
        hei.complete_course("S-001", "CS101", 10**10)


def test_verification_happy_path(world):
    sim, keys, channel, hei = world
    _, student = finish_registration(sim, channel, hei)
    record = hei.students["S-001"]
    hei.complete_course("S-001", "CS101", 60)
    run_until(sim, [hei], lambda: all(e.confirmed for e in record.course_log))

    org = VerifierOrg(
        SimGateway(sim, 2),
        channel,
        crypto.generate_keypair(b"acme-corp"),
        rng=random.Random(5),
    )
    session = org.start_verification(student.proof_package())
    assert session.phase == "challenged"
    assert session.credits == 60
    assert session.balance == "60.00000000"
    ok = run_until(sim, [org, student], lambda: session.phase in ("verified", "rejected"))
    assert ok and session.phase == "verified"
    assert session.credit_breakdown[0]["hei_name"] == "uni-0"


def test_verification_wrong_key_signer(world):
    sim, keys, channel, hei = world
    _, student = finish_registration(sim, channel, hei)
    org = VerifierOrg(
        SimGateway(sim, 2),
        channel,
        crypto.generate_keypair(b"acme-corp"),
        rng=random.Random(5),
    )
    session = org.start_verification(student.proof_package())
    # adversary answers with their own key over the right message
    adversary = crypto.generate_keypair(b"imposter")
    forged = crypto.sign_message(adversary.private_key, session.challenge_message.encode())
    result = org.receive_response(session.session_id, forged)
    assert result.phase == "rejected"
    assert result.error == "ChallengeSignatureInvalid"


def test_verification_tampered_script(world):
    sim, keys, channel, hei = world
    _, student = finish_registration(sim, channel, hei)
    proof = student.proof_package()
    other = crypto.build_redeem_script(
        [crypto.generate_keypair(b"a").public_key, crypto.generate_keypair(b"b").public_key], 2
    )
    proof["redeem_script"] = other.canonical_bytes().hex()
    org = VerifierOrg(SimGateway(sim, 2), channel, crypto.generate_keypair(b"acme-corp"))
    session = org.start_verification(proof)
    assert session.phase == "rejected"
    assert session.error == "ScriptMismatch"


def test_verification_timeout(world):
    sim, keys, channel, hei = world
    _, student = finish_registration(sim, channel, hei)
    org = VerifierOrg(
        SimGateway(sim, 2),
        channel,
        crypto.generate_keypair(b"acme-corp"),
        challenge_timeout=5,
    )
    session = org.start_verification(student.proof_package())
    run_until(sim, [org], lambda: session.phase == "rejected", max_ticks=15)
    assert session.error == "ChallengeTimeout"


def test_registry_roundtrip(world, tmp_path):
    sim, keys, channel, hei = world
    _, student = finish_registration(sim, channel, hei)
    hei.complete_course("S-001", "CS101", 6)
    record = hei.students["S-001"]
    run_until(sim, [hei], lambda: all(e.confirmed for e in record.course_log))
    path = tmp_path / "registry.json"
    hei.save_registry(path)

    other = HEIContext(
        name="uni-0", keypair=keys[0], gateway=SimGateway(sim, 0), channel=channel
    )
    other.load_registry(path)
    restored = other.students["S-001"]
    assert restored.multisig_address == record.multisig_address
    assert restored.registration_confirmed
    assert [e.course_id for e in restored.course_log] == ["CS101"]


def test_reissue_after_lost_key(world):
    sim, keys, channel, hei = world
    _, student = finish_registration(sim, channel, hei)
    old_record = hei.students["S-001"]
    hei.complete_course("S-001", "CS101", 6)
    run_until(sim, [hei], lambda: all(e.confirmed for e in old_record.course_log))
    old_address = old_record.multisig_address

    session, packet = hei.reissue_student("S-001")
    new_record = hei.students["S-001"]
    assert new_record.multisig_address != old_address
    assert hei.revoked_students[0].multisig_address == old_address
    run_until(
        sim,
        [hei],
        lambda: all(e.confirmed for e in new_record.course_log)
        and new_record.course_log != [],
    )
    assert compute_balance(sim.nodes[0].state, new_record.multisig_address) >= from_tokens(6)


def test_chain_bytes_never_contain_student_ids(world):
    sim, keys, channel, hei = world
    _, student = finish_registration(sim, channel, hei)
    record = hei.students["S-001"]
    hei.complete_course("S-001", "CS101", 6)
    run_until(sim, [hei], lambda: all(e.confirmed for e in record.course_log))
    for node in sim.nodes:
        blob = b"".join(block.canonical_bytes() for block in node.chain)
        assert b"S-001" not in blob


def test_credit_immobility(world):
    """The only outgoing transfer a student multisig ever makes is the 0.1
    registration round-trip, co-signed by the institution."""
    sim, keys, channel, hei = world
    _, student = finish_registration(sim, channel, hei)
    record = hei.students["S-001"]
    hei.complete_course("S-001", "CS101", 30)
    hei.complete_course("S-001", "SE300", 30)
    run_until(sim, [hei], lambda: all(e.confirmed for e in record.course_log))
    from eductx.tx import TxKind

    outgoing = [
        tx
        for block in sim.nodes[0].chain
        for tx in block.transactions
        if tx.kind is TxKind.TRANSFER and tx.sender_address == record.multisig_address
    ]
    assert len(outgoing) == 1
    assert outgoing[0].amount == parse_amount("0.1")
    assert outgoing[0].recipient_address == hei.address
    assert len(outgoing[0].signatures) == 2


def test_registry_matches_chain_balance(world):
    """Sum of logged course credits equals the on-chain balance once the
    round-trip is done."""
    sim, keys, channel, hei = world
    _, student = finish_registration(sim, channel, hei)
    record = hei.students["S-001"]
    for course, credits in [("CS101", 6), ("MA201", 9)]:
        hei.complete_course("S-001", course, credits)
        run_until(sim, [hei], lambda: all(e.confirmed for e in record.course_log))
    logged = sum(e.credits for e in record.course_log) * 10**8
    assert compute_balance(sim.nodes[0].state, record.multisig_address) == logged
