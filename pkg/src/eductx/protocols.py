"""The four multi-party scenarios: consortium join, student registration,
course completion, third-party credit verification.

Each session is an explicit state machine driven by poll(): parties observe
the chain through a gateway and exchange authenticated private messages
through a channel, so the same code runs against the simulator and against
a live node. Nothing personal ever reaches the chain — transactions carry
addresses, official HEI names and course ids only.
"""

from __future__ import annotations

import itertools
import json
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Protocol

from . import crypto
from .amounts import format_amount, from_tokens, parse_amount
from .chainquery import ChainQuery
from .errors import (
    ChallengeSignatureInvalid,
    ChallengeTimeout,
    DuplicateStudent,
    InfoRejected,
    InsufficientTreasury,
    NonIntegerCredit,
    RepaymentMismatch,
    RepaymentTimeout,
    ScriptMismatch,
    UnknownSession,
    UnknownStudent,
    ValidationError,
)
from .tx import (
    Transaction,
    TxMetadata,
    append_signature,
    build_multisig_registration,
    build_transfer,
    deserialize_transaction,
)

REGISTRATION_STAKE = parse_amount("0.1")
PROBE_AMOUNT = from_tokens(1)
DEFAULT_ENDOWMENT = from_tokens(1000)
JOIN_REPAYMENT_TIMEOUT = 100  # ticks
VERIFY_CHALLENGE_TIMEOUT = 50  # ticks
CHALLENGE_SPACE = 99_999_999  # repayment X is uniform over [1, 10^8 - 1]

WALLET_INSTRUCTIONS = (
    "Install the wallet client, import the enclosed key pair, then recreate "
    "the shared 2-of-2 address from your public key and your institution's "
    "public key using the enclosed redeem script."
)


class ChainGateway(Protocol):
    """What a protocol party needs from its node."""

    def tick(self) -> int: ...
    def submit(self, tx: Transaction) -> bytes: ...
    def next_nonce(self, address: str) -> int: ...
    def balance(self, address: str) -> int: ...
    def is_confirmed(self, tx_id: bytes) -> bool: ...
    def lookup(self, tx_id: bytes) -> Transaction | None: ...


@dataclass
class PrivateMessage:
    kind: str
    sender_public_key: bytes  # authenticated by the transport
    body: dict


class PrivateChannel:
    """Authenticated direct messaging, never written to chain. Mailboxes are
    keyed by the recipient's public key."""

    def __init__(self) -> None:
        self._boxes: dict[bytes, list[PrivateMessage]] = {}

    def post(self, to_public_key: bytes, message: PrivateMessage) -> None:
        self._boxes.setdefault(bytes(to_public_key), []).append(message)

    def fetch(self, public_key: bytes) -> list[PrivateMessage]:
        return self._boxes.pop(bytes(public_key), [])


class SimGateway:
    """Gateway over one simulator node."""

    def __init__(self, sim, node_id: int):
        self.sim = sim
        self.node_id = node_id
        self._query = ChainQuery()

    def _node(self):
        return self.sim.nodes[self.node_id]

    def _refresh(self) -> ChainQuery:
        self._query.update(self._node().chain)
        return self._query

    def tick(self) -> int:
        return self.sim.tick

    def submit(self, tx: Transaction) -> bytes:
        self.sim.submit_transaction(self.node_id, tx)
        return tx.id

    def next_nonce(self, address: str) -> int:
        return self.sim.next_nonce(self.node_id, address)

    def balance(self, address: str) -> int:
        return self._node().state.balances.get(address, 0)

    def is_confirmed(self, tx_id: bytes) -> bool:
        return self._refresh().is_confirmed(tx_id)

    def lookup(self, tx_id: bytes) -> Transaction | None:
        confirmed = self._refresh().transaction(tx_id)
        return confirmed.tx if confirmed else None

    def credit_entries(self, address: str) -> list[dict]:
        return self._refresh().credit_entries(address)


# -- registry records ----------------------------------------------------------


@dataclass
class HEIRecord:
    name: str
    address: str
    endpoint: str = ""
    status: str = "applicant"  # applicant | member
    public_key: str = ""  # hex; the institution's private-channel identity


@dataclass
class CourseEntry:
    course_id: str
    credits: int
    tx_id: str
    confirmed: bool = False


@dataclass
class StudentRecord:
    student_id: str
    student_public_key: str  # hex
    multisig_address: str
    redeem_script: str  # canonical hex
    registration_confirmed: bool = False
    course_log: list[CourseEntry] = field(default_factory=list)
    revoked: bool = False


# -- sessions -------------------------------------------------------------------

_session_counter = itertools.count(1)


def _new_session_id(prefix: str) -> str:
    return f"{prefix}-{next(_session_counter):06d}"


@dataclass
class JoinSession:
    session_id: str
    applicant: HEIRecord
    phase: str = "requested"  # requested/endowed_probe/challenged/repaid/member/terminated
    challenge_x: int | None = None
    probe_tx_id: str = ""
    repayment_tx_id: str = ""
    endowment_tx_id: str = ""
    challenged_at: int | None = None
    pending_notice: str = ""  # claimed repayment tx id awaiting confirmation
    error: str = ""

    _ORDER = ["requested", "endowed_probe", "challenged", "repaid", "member"]

    def move_to(self, phase: str) -> None:
        if self.phase == "terminated":
            raise ValueError("session already terminated")
        if phase != "terminated":
            if self._ORDER.index(phase) <= self._ORDER.index(self.phase):
                raise ValueError(f"cannot move {self.phase} -> {phase}")
        self.phase = phase


@dataclass
class RegistrationSession:
    session_id: str
    student_id: str
    phase: str = "issued"  # issued/funded/info_sent/roundtrip_signed/confirmed
    multisig_address: str = ""
    registration_tx_id: str = ""
    fund_tx_id: str = ""
    roundtrip_tx_id: str = ""


@dataclass
class VerificationSession:
    session_id: str
    student_public_key: str
    multisig_address: str
    redeem_script: str
    phase: str = "proof_received"  # proof_received/balance_checked/challenged/verified/rejected
    balance: str = "0.00000000"
    credits: int = 0
    credit_breakdown: list[dict] = field(default_factory=list)
    challenge_message: str = ""
    challenged_at: int | None = None
    error: str = ""


# -- HEI context -----------------------------------------------------------------


class HEIContext:
    """One member institution: wallet, registry ("central database") and the
    server side of the join / registration / course scenarios."""

    def __init__(
        self,
        name: str,
        keypair: crypto.KeyPair,
        gateway: ChainGateway,
        channel: PrivateChannel,
        rng: random.Random | None = None,
        endowment: int = DEFAULT_ENDOWMENT,
        join_timeout: int = JOIN_REPAYMENT_TIMEOUT,
        verify_info: Callable[[str, str], bool] | None = None,
        allow_list: set[str] | None = None,
    ):
        self.name = name
        self.keypair = keypair
        self.gateway = gateway
        self.channel = channel
        self.rng = rng or random.Random()
        self.endowment = endowment
        self.join_timeout = join_timeout
        self._verify_info = verify_info
        self._allow_list = allow_list
        self.heis: dict[str, HEIRecord] = {}
        self.students: dict[str, StudentRecord] = {}
        self.revoked_students: list[StudentRecord] = []
        self.join_sessions: dict[str, JoinSession] = {}
        self.registration_sessions: dict[str, RegistrationSession] = {}
        self._student_keys: dict[str, crypto.KeyPair] = {}
        self._reissue_counts: dict[str, int] = {}

    @property
    def address(self) -> str:
        return self.keypair.address

    def treasury(self) -> int:
        return self.gateway.balance(self.address)

    def info_acceptable(self, name: str, address: str) -> bool:
        """Out-of-band identity vetting; default accepts names on the
        allow-list, or everything when no policy is configured."""
        if self._verify_info is not None:
            return self._verify_info(name, address)
        if self._allow_list is not None:
            return name in self._allow_list
        return True

    def _signed_transfer(
        self, recipient: str, amount: int, metadata: TxMetadata = TxMetadata()
    ) -> Transaction:
        tx = build_transfer(
            self.address,
            recipient,
            amount,
            metadata=metadata,
            nonce=self.gateway.next_nonce(self.address),
            timestamp=self.gateway.tick(),
        )
        return append_signature(tx, self.keypair)

    # -- scenario 1: consortium join (member side) -----------------------------

    def receive_join_request(
        self,
        name: str,
        address: str,
        endpoint: str = "",
        public_key_hex: str = "",
        challenge_x: int | None = None,
    ) -> JoinSession:
        record = HEIRecord(
            name=name, address=address, endpoint=endpoint, public_key=public_key_hex
        )
        session = JoinSession(
            session_id=_new_session_id("join"), applicant=record, challenge_x=challenge_x
        )
        self.join_sessions[session.session_id] = session
        if not self.info_acceptable(name, address):
            session.error = InfoRejected.__name__
            session.move_to("terminated")
            return session
        self.heis[address] = record
        probe = self._signed_transfer(address, PROBE_AMOUNT)
        session.probe_tx_id = self.gateway.submit(probe).hex()
        session.move_to("endowed_probe")
        return session

    def _terminate_join(self, session: JoinSession, error: str) -> None:
        session.error = error
        session.move_to("terminated")

    def handle_repayment_notice(self, session_id: str, tx_id_hex: str) -> None:
        session = self.join_sessions.get(session_id)
        if session is None:
            raise UnknownSession(session_id)
        if session.phase != "challenged":
            return
        tx = self.gateway.lookup(bytes.fromhex(tx_id_hex))
        if tx is None:
            session.pending_notice = tx_id_hex  # recheck once it confirms
            return
        session.pending_notice = ""
        expected = session.challenge_x
        if (
            tx.recipient_address != self.address
            or tx.sender_address != session.applicant.address
            or tx.amount != expected
        ):
            self._terminate_join(session, RepaymentMismatch.__name__)
            return
        session.repayment_tx_id = tx_id_hex
        session.move_to("repaid")

    def poll(self) -> None:
        self._poll_join_sessions()
        self._poll_registration_sessions()
        self._poll_course_log()
        self._poll_inbox()

    def _poll_inbox(self) -> None:
        for message in self.channel.fetch(self.keypair.public_key):
            if message.kind == "join_repayment_notice":
                try:
                    self.handle_repayment_notice(
                        message.body["session_id"], message.body["tx_id"]
                    )
                except UnknownSession:
                    pass
            elif message.kind == "cosign_request":
                try:
                    self.cosign_roundtrip(
                        message.body["session_id"],
                        bytes.fromhex(message.body["tx"]),
                    )
                except (UnknownSession, ValidationError):
                    pass
            elif message.kind == "member_record":
                body = message.body
                self.heis[body["address"]] = HEIRecord(
                    name=body["name"],
                    address=body["address"],
                    endpoint=body.get("endpoint", ""),
                    status="member",
                    public_key=body.get("public_key", ""),
                )

    def _poll_join_sessions(self) -> None:
        now = self.gateway.tick()
        for session in self.join_sessions.values():
            if session.phase == "endowed_probe":
                if self.gateway.is_confirmed(bytes.fromhex(session.probe_tx_id)):
                    if session.challenge_x is None:
                        session.challenge_x = self.rng.randint(1, CHALLENGE_SPACE)
                    session.challenged_at = now
                    session.move_to("challenged")
                    applicant_key = self._applicant_public_key(session)
                    if applicant_key is not None:
                        self.channel.post(
                            applicant_key,
                            PrivateMessage(
                                kind="join_challenge",
                                sender_public_key=self.keypair.public_key,
                                body={
                                    "session_id": session.session_id,
                                    "amount": format_amount(session.challenge_x),
                                    "pay_to": self.address,
                                },
                            ),
                        )
            elif session.phase == "challenged":
                if session.pending_notice:
                    self.handle_repayment_notice(session.session_id, session.pending_notice)
                if session.phase == "challenged" and (
                    session.challenged_at is not None
                    and now - session.challenged_at > self.join_timeout
                ):
                    self._terminate_join(session, RepaymentTimeout.__name__)
            elif session.phase == "repaid":
                if not session.endowment_tx_id:
                    endow = self._signed_transfer(
                        session.applicant.address,
                        self.endowment,
                        metadata=TxMetadata(hei_name=session.applicant.name),
                    )
                    session.endowment_tx_id = self.gateway.submit(endow).hex()
                elif self.gateway.is_confirmed(bytes.fromhex(session.endowment_tx_id)):
                    session.applicant.status = "member"
                    self.heis[session.applicant.address] = session.applicant
                    self._announce_member(session)
                    session.move_to("member")

    def _applicant_public_key(self, session: JoinSession) -> bytes | None:
        if session.applicant.public_key:
            return bytes.fromhex(session.applicant.public_key)
        return None

    def _announce_member(self, session: JoinSession) -> None:
        applicant_key = self._applicant_public_key(session)
        body = {
            "name": session.applicant.name,
            "address": session.applicant.address,
            "endpoint": session.applicant.endpoint,
            "public_key": session.applicant.public_key,
        }
        for record in self.heis.values():
            if record.status == "member" and record.address != session.applicant.address:
                if record.public_key:
                    self.channel.post(
                        bytes.fromhex(record.public_key),
                        PrivateMessage(
                            kind="member_record",
                            sender_public_key=self.keypair.public_key,
                            body=body,
                        ),
                    )
        if applicant_key is not None:
            self.channel.post(
                applicant_key,
                PrivateMessage(
                    kind="node_setup_instructions",
                    sender_public_key=self.keypair.public_key,
                    body={
                        "session_id": session.session_id,
                        "instructions": "Provision a node, point it at the member "
                        "peer list and replay the chain from genesis.",
                    },
                ),
            )

    # -- scenario 2: student registration (HEI side) ------------------------------

    def register_student(self, student_id: str) -> tuple[RegistrationSession, dict]:
        existing = self.students.get(student_id)
        if existing is not None and not existing.revoked:
            raise DuplicateStudent(student_id)
        generation = self._reissue_counts.get(student_id, 0)
        seed = self.keypair.private_key + student_id.encode() + bytes([generation])
        student_kp = crypto.generate_keypair(seed)
        script = crypto.build_redeem_script(
            [self.keypair.public_key, student_kp.public_key], 2
        )
        multisig = crypto.derive_multisig_address(script)

        registration = build_multisig_registration(
            self.address,
            script,
            nonce=self.gateway.next_nonce(self.address),
            timestamp=self.gateway.tick(),
        )
        registration = append_signature(registration, self.keypair)
        reg_id = self.gateway.submit(registration)
        stake = self._signed_transfer(multisig, REGISTRATION_STAKE)
        fund_id = self.gateway.submit(stake)

        record = StudentRecord(
            student_id=student_id,
            student_public_key=student_kp.public_key.hex(),
            multisig_address=multisig,
            redeem_script=script.canonical_bytes().hex(),
        )
        self.students[student_id] = record
        self._student_keys[student_id] = student_kp
        session = RegistrationSession(
            session_id=_new_session_id("reg"),
            student_id=student_id,
            multisig_address=multisig,
            registration_tx_id=reg_id.hex(),
            fund_tx_id=fund_id.hex(),
        )
        self.registration_sessions[session.session_id] = session
        packet = self._info_packet(session, student_kp, script)
        return session, packet

    def _info_packet(
        self, session: RegistrationSession, student_kp: crypto.KeyPair, script: crypto.RedeemScript
    ) -> dict:
        """The four items handed to the student over the private channel."""
        return {
            "session_id": session.session_id,
            "instructions": WALLET_INSTRUCTIONS,
            "student_keys": {
                "private_key": student_kp.private_key.hex(),
                "public_key": student_kp.public_key.hex(),
                "address": student_kp.address,
            },
            "hei_public_key": self.keypair.public_key.hex(),
            "redeem_script": script.canonical_bytes().hex(),
        }

    def _poll_registration_sessions(self) -> None:
        for session in self.registration_sessions.values():
            if session.phase == "issued":
                if self.gateway.is_confirmed(bytes.fromhex(session.fund_tx_id)):
                    session.phase = "funded"
            if session.phase == "funded":
                student_kp = self._student_keys.get(session.student_id)
                record = self.students.get(session.student_id)
                if student_kp is not None and record is not None:
                    script = crypto.RedeemScript.from_canonical(
                        bytes.fromhex(record.redeem_script)
                    )
                    self.channel.post(
                        student_kp.public_key,
                        PrivateMessage(
                            kind="registration_packet",
                            sender_public_key=self.keypair.public_key,
                            body=self._info_packet(session, student_kp, script),
                        ),
                    )
                session.phase = "info_sent"
            if session.phase == "roundtrip_signed":
                if self.gateway.is_confirmed(bytes.fromhex(session.roundtrip_tx_id)):
                    session.phase = "confirmed"
                    record = self.students.get(session.student_id)
                    if record is not None:
                        record.registration_confirmed = True

    def cosign_roundtrip(self, session_id: str, half_signed: bytes) -> str:
        """Second signature on the student's 0.1 return transfer."""
        session = self.registration_sessions.get(session_id)
        if session is None:
            raise UnknownSession(session_id)
        tx = deserialize_transaction(half_signed)
        record = self.students.get(session.student_id)
        if record is None:
            raise UnknownSession(session_id)
        if (
            tx.sender_address != record.multisig_address
            or tx.recipient_address != self.address
            or tx.amount != REGISTRATION_STAKE
        ):
            raise ValidationError("round-trip transfer does not match the session")
        full = append_signature(tx, self.keypair)
        tx_id = self.gateway.submit(full)
        session.roundtrip_tx_id = tx_id.hex()
        session.phase = "roundtrip_signed"
        return tx_id.hex()

    # -- scenario 3: course completion ---------------------------------------------

    def complete_course(self, student_id: str, course_id: str, credits) -> str:
        record = self.students.get(student_id)
        if record is None or record.revoked:
            raise UnknownStudent(student_id)
        if not isinstance(credits, int) or isinstance(credits, bool) or credits < 1:
            raise NonIntegerCredit(f"credits must be a whole number >= 1, got {credits!r}")
        if not record.registration_confirmed:
            raise UnknownStudent(f"{student_id} has not confirmed the shared wallet")
        amount = from_tokens(credits)
        if self.treasury() < amount:
            raise InsufficientTreasury(
                f"treasury {format_amount(self.treasury())} cannot cover {credits} credits"
            )
        tx = self._signed_transfer(
            record.multisig_address,
            amount,
            metadata=TxMetadata(hei_name=self.name, course_id=course_id),
        )
        tx_id = self.gateway.submit(tx).hex()
        # the dual write: the registry entry lands together with the transfer
        record.course_log.append(
            CourseEntry(course_id=course_id, credits=credits, tx_id=tx_id)
        )
        return tx_id

    def _poll_course_log(self) -> None:
        for record in self.students.values():
            for entry in record.course_log:
                if not entry.confirmed and self.gateway.is_confirmed(
                    bytes.fromhex(entry.tx_id)
                ):
                    entry.confirmed = True

    # -- lost-key reissue -----------------------------------------------------------

    def reissue_student(self, student_id: str) -> tuple[RegistrationSession, dict]:
        """Fresh address for a student who lost their key: the old record is
        revoked in the registry only (the chain keeps its history) and logged
        credits are transferred again to the new shared address."""
        record = self.students.get(student_id)
        if record is None:
            raise UnknownStudent(student_id)
        confirmed_courses = [e for e in record.course_log if e.confirmed]
        record.revoked = True
        self.revoked_students.append(record)
        del self.students[student_id]
        self._reissue_counts[student_id] = self._reissue_counts.get(student_id, 0) + 1
        session, packet = self.register_student(student_id)
        new_record = self.students[student_id]
        for entry in confirmed_courses:
            tx = self._signed_transfer(
                new_record.multisig_address,
                from_tokens(entry.credits),
                metadata=TxMetadata(hei_name=self.name, course_id=entry.course_id),
            )
            new_record.course_log.append(
                CourseEntry(
                    course_id=entry.course_id,
                    credits=entry.credits,
                    tx_id=self.gateway.submit(tx).hex(),
                )
            )
        return session, packet

    # -- registry persistence ---------------------------------------------------------

    def save_registry(self, path: str | Path) -> None:
        doc = {
            "version": 1,
            "hei_name": self.name,
            "heis": [asdict(r) for r in self.heis.values()],
            "students": [asdict(r) for r in self.students.values()],
            "revoked_students": [asdict(r) for r in self.revoked_students],
        }
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))

    def load_registry(self, path: str | Path) -> None:
        doc = json.loads(Path(path).read_text())
        if doc.get("version") != 1:
            raise ValueError(f"unsupported registry version {doc.get('version')}")

        def student(raw: dict) -> StudentRecord:
            courses = [CourseEntry(**e) for e in raw.pop("course_log", [])]
            return StudentRecord(**raw, course_log=courses)

        self.heis = {r["address"]: HEIRecord(**r) for r in doc.get("heis", [])}
        self.students = {
            r["student_id"]: student(dict(r)) for r in doc.get("students", [])
        }
        self.revoked_students = [student(dict(r)) for r in doc.get("revoked_students", [])]


# -- applicant (new HEI) -------------------------------------------------------------


class ApplicantHEI:
    """Join-protocol client side: pays the reimbursement challenge from the
    endowed address and reports back."""

    def __init__(
        self, name: str, keypair: crypto.KeyPair, gateway: ChainGateway, channel: PrivateChannel
    ):
        self.name = name
        self.keypair = keypair
        self.gateway = gateway
        self.channel = channel
        self.member = False
        self.instructions: str = ""
        self._member_key: bytes | None = None

    @property
    def address(self) -> str:
        return self.keypair.address

    def apply_to(self, member: HEIContext, challenge_x: int | None = None) -> JoinSession:
        session = member.receive_join_request(
            self.name,
            self.address,
            public_key_hex=self.keypair.public_key.hex(),
            challenge_x=challenge_x,
        )
        self._member_key = member.keypair.public_key
        return session

    def repay(self, session_id: str, amount: int, pay_to: str, keypair=None) -> bytes:
        kp = keypair or self.keypair
        tx = build_transfer(
            kp.address,
            pay_to,
            amount,
            nonce=self.gateway.next_nonce(kp.address),
            timestamp=self.gateway.tick(),
        )
        tx_id = self.gateway.submit(append_signature(tx, kp))
        return tx_id

    def notify_repayment(self, session_id: str, tx_id: bytes) -> None:
        assert self._member_key is not None
        self.channel.post(
            self._member_key,
            PrivateMessage(
                kind="join_repayment_notice",
                sender_public_key=self.keypair.public_key,
                body={"session_id": session_id, "tx_id": tx_id.hex()},
            ),
        )

    def poll(self) -> None:
        for message in self.channel.fetch(self.keypair.public_key):
            if message.kind == "join_challenge":
                amount = parse_amount(message.body["amount"])
                tx_id = self.repay(
                    message.body["session_id"], amount, message.body["pay_to"]
                )
                self.notify_repayment(message.body["session_id"], tx_id)
            elif message.kind == "node_setup_instructions":
                self.instructions = message.body["instructions"]
                self.member = True


# -- student wallet ---------------------------------------------------------------


class StudentWallet:
    def __init__(self, gateway: ChainGateway, channel: PrivateChannel, inbox_key: crypto.KeyPair):
        self.gateway = gateway
        self.channel = channel
        self._inbox_key = inbox_key  # key the HEI addresses packets to
        self.keypair: crypto.KeyPair | None = None
        self.redeem_script: crypto.RedeemScript | None = None
        self.multisig_address: str = ""
        self.hei_public_key: bytes | None = None
        self.session_id: str = ""
        self.instructions: str = ""

    def poll(self) -> None:
        for message in self.channel.fetch(self._inbox_key.public_key):
            if message.kind == "registration_packet":
                self._import_packet(message.body)
            elif message.kind == "verify_challenge":
                self.answer_challenge(message)

    def _import_packet(self, packet: dict) -> None:
        keys = packet["student_keys"]
        self.keypair = crypto.KeyPair(
            private_key=bytes.fromhex(keys["private_key"]),
            public_key=bytes.fromhex(keys["public_key"]),
        )
        self.redeem_script = crypto.RedeemScript.from_canonical(
            bytes.fromhex(packet["redeem_script"])
        )
        self.multisig_address = crypto.derive_multisig_address(self.redeem_script)
        self.hei_public_key = bytes.fromhex(packet["hei_public_key"])
        self.session_id = packet["session_id"]
        self.instructions = packet["instructions"]

    def confirm_wallet(self) -> None:
        """Build and half-sign the 0.1 return transfer, hand it to the HEI."""
        assert self.keypair is not None and self.redeem_script is not None
        assert self.hei_public_key is not None
        hei_address = crypto.derive_address(self.hei_public_key)
        tx = build_transfer(
            self.multisig_address,
            hei_address,
            REGISTRATION_STAKE,
            nonce=self.gateway.next_nonce(self.multisig_address),
            timestamp=self.gateway.tick(),
            redeem_script=self.redeem_script,
        )
        half = append_signature(tx, self.keypair)
        self.channel.post(
            self.hei_public_key,
            PrivateMessage(
                kind="cosign_request",
                sender_public_key=self.keypair.public_key,
                body={"session_id": self.session_id, "tx": half.canonical_bytes().hex()},
            ),
        )

    def proof_package(self) -> dict:
        assert self.keypair is not None and self.redeem_script is not None
        return {
            "student_public_key": self.keypair.public_key.hex(),
            "student_address": self.keypair.address,
            "multisig_address": self.multisig_address,
            "redeem_script": self.redeem_script.canonical_bytes().hex(),
        }

    def sign_text(self, message: str) -> bytes:
        assert self.keypair is not None
        return crypto.sign_message(self.keypair.private_key, message.encode())

    def answer_challenge(self, message: PrivateMessage) -> None:
        signature = self.sign_text(message.body["message"])
        assert self.keypair is not None
        self.channel.post(
            bytes.fromhex(message.body["reply_to"]),
            PrivateMessage(
                kind="challenge_response",
                sender_public_key=self.keypair.public_key,
                body={
                    "session_id": message.body["session_id"],
                    "signature": signature.hex(),
                },
            ),
        )


# -- verifier organization -----------------------------------------------------------


class VerifierOrg:
    """Checks a student's proof package: script binding, balance, and a
    signed random challenge over the private channel."""

    def __init__(
        self,
        gateway: ChainGateway,
        channel: PrivateChannel,
        keypair: crypto.KeyPair,
        rng: random.Random | None = None,
        challenge_timeout: int = VERIFY_CHALLENGE_TIMEOUT,
    ):
        self.gateway = gateway
        self.channel = channel
        self.keypair = keypair
        self.rng = rng or random.Random()
        self.challenge_timeout = challenge_timeout
        self.sessions: dict[str, VerificationSession] = {}

    def start_verification(self, proof: dict) -> VerificationSession:
        session = VerificationSession(
            session_id=_new_session_id("verify"),
            student_public_key=proof["student_public_key"],
            multisig_address=proof["multisig_address"],
            redeem_script=proof["redeem_script"],
        )
        self.sessions[session.session_id] = session
        try:
            script = crypto.RedeemScript.from_canonical(
                bytes.fromhex(proof["redeem_script"])
            )
            student_key = bytes.fromhex(proof["student_public_key"])
        except Exception:
            session.phase = "rejected"
            session.error = ScriptMismatch.__name__
            return session
        if crypto.derive_multisig_address(script) != proof["multisig_address"]:
            session.phase = "rejected"
            session.error = ScriptMismatch.__name__
            return session
        if not script.is_member(student_key):
            session.phase = "rejected"
            session.error = ScriptMismatch.__name__
            return session
        balance = self.gateway.balance(proof["multisig_address"])
        session.balance = format_amount(balance)
        session.credits = balance // from_tokens(1)
        if hasattr(self.gateway, "credit_entries"):
            session.credit_breakdown = self.gateway.credit_entries(
                proof["multisig_address"]
            )
        session.phase = "balance_checked"
        self._issue_challenge(session, student_key)
        return session

    def _issue_challenge(self, session: VerificationSession, student_key: bytes) -> None:
        session.challenge_message = "verify-%016x" % self.rng.getrandbits(64)
        session.challenged_at = self.gateway.tick()
        session.phase = "challenged"
        self.channel.post(
            student_key,
            PrivateMessage(
                kind="verify_challenge",
                sender_public_key=self.keypair.public_key,
                body={
                    "session_id": session.session_id,
                    "message": session.challenge_message,
                    "reply_to": self.keypair.public_key.hex(),
                },
            ),
        )

    def receive_response(self, session_id: str, signature: bytes) -> VerificationSession:
        session = self.sessions.get(session_id)
        if session is None:
            raise UnknownSession(session_id)
        if session.phase != "challenged":
            return session
        ok = crypto.verify_signature(
            bytes.fromhex(session.student_public_key),
            session.challenge_message.encode(),
            signature,
        )
        if ok:
            session.phase = "verified"
        else:
            session.phase = "rejected"
            session.error = ChallengeSignatureInvalid.__name__
        return session

    def poll(self) -> None:
        for message in self.channel.fetch(self.keypair.public_key):
            if message.kind == "challenge_response":
                try:
                    self.receive_response(
                        message.body["session_id"],
                        bytes.fromhex(message.body["signature"]),
                    )
                except UnknownSession:
                    pass
        now = self.gateway.tick()
        for session in self.sessions.values():
            if (
                session.phase == "challenged"
                and session.challenged_at is not None
                and now - session.challenged_at > self.challenge_timeout
            ):
                session.phase = "rejected"
                session.error = ChallengeTimeout.__name__


def run_until(sim, parties: list, predicate: Callable[[], bool], max_ticks: int = 300) -> bool:
    """Advance the simulation, polling every party each tick, until the
    predicate holds or the budget runs out."""
    for _ in range(max_ticks):
        if predicate():
            return True
        sim.advance(1)
        for party in parties:
            party.poll()
    return predicate()
