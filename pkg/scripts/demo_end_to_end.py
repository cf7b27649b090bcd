#!/usr/bin/env python3
"""Run all four platform scenarios on an in-process 3-node network and print
the trace: consortium join, student registration with the 0.1 round-trip, a
60-credit year, and a third-party verification."""

import random
import sys

from eductx import crypto
from eductx.amounts import format_amount
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


def main() -> int:
    sim, keys = standard_network(3, rng_seed=2026)
    channel = PrivateChannel()
    hei = HEIContext(
        name="uni-0", keypair=keys[0], gateway=SimGateway(sim, 0),
        channel=channel, rng=random.Random(1),
    )

    print("== scenario 1: new institution joins ==")
    applicant_kp = crypto.generate_keypair(b"demo-new-hei")
    applicant = ApplicantHEI("uni-demo", applicant_kp, SimGateway(sim, 1), channel)
    join = applicant.apply_to(hei, challenge_x=235781)
    run_until(sim, [hei, applicant], lambda: join.phase in ("member", "terminated"))
    print(f"   challenge 0.00235781 repaid, session phase: {join.phase}")
    print(f"   newcomer balance: {format_amount(compute_balance(sim.nodes[0].state, applicant_kp.address))} ECTX")

    print("== scenario 2: student registration ==")
    session, packet = hei.register_student("S-DEMO-1")
    student_kp = crypto.KeyPair(
        private_key=bytes.fromhex(packet["student_keys"]["private_key"]),
        public_key=bytes.fromhex(packet["student_keys"]["public_key"]),
    )
    student = StudentWallet(SimGateway(sim, 1), channel, student_kp)
    run_until(sim, [hei, student], lambda: session.phase == "info_sent")
    student.confirm_wallet()
    run_until(sim, [hei, student], lambda: session.phase == "confirmed")
    record = hei.students["S-DEMO-1"]
    print(f"   round-trip done; shared address {record.multisig_address}")
    print(f"   balance after round-trip: {format_amount(compute_balance(sim.nodes[0].state, record.multisig_address))} ECTX")

    print("== scenario 3: course completions ==")
    for course_id, credits in [("CS101", 6), ("MA105", 9), ("PH110", 12), ("SE201", 33)]:
        hei.complete_course("S-DEMO-1", course_id, credits)
        run_until(sim, [hei], lambda: all(e.confirmed for e in record.course_log))
        print(f"   {course_id}: +{credits} credits")
    balance = compute_balance(sim.nodes[0].state, record.multisig_address)
    print(f"   total: {format_amount(balance)} ECTX")

    print("== scenario 4: employer verification ==")
    run_until(
        sim, [hei],
        lambda: compute_balance(sim.nodes[2].state, record.multisig_address) == balance,
    )
    org = VerifierOrg(
        SimGateway(sim, 2), channel, crypto.generate_keypair(b"demo-employer"),
        rng=random.Random(2),
    )
    verification = org.start_verification(student.proof_package())
    run_until(sim, [org, student], lambda: verification.phase in ("verified", "rejected"))
    print(f"   result: {verification.phase}, {verification.credits} credits")
    for entry in verification.credit_breakdown:
        print(f"     {entry['hei_name']} / {entry['course_id']}: {entry['amount']}")

    head = sim.assert_converged()
    sim.settle()
    head = sim.assert_converged()
    print(f"network head: {head.hex() if isinstance(head, bytes) else head.heads}")
    return 0 if verification.phase == "verified" else 1


if __name__ == "__main__":
    sys.exit(main())
