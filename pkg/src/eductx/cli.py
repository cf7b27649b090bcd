"""Command-line client for every platform role: key handling and offline
transaction crafting, node-backed wallet operations, the four protocol
flows, an event-script runner for the simulator, and the node launcher.

Contract: machine-readable JSON on stdout, human notes on stderr. Exit 0 on
success, 1 when the ledger/protocol rejects, 2 when the node is unreachable.
"""

from __future__ import annotations

import json
import os
import sys
import time
from pathlib import Path

import click
import requests

from . import crypto
from .amounts import parse_amount
from .errors import EductxError
from .sim import execute_script, load_script, standard_network
from .tx import (
    TxMetadata,
    append_signature,
    build_transfer,
    deserialize_transaction,
)

DEFAULT_NODE = os.environ.get("EDUCTX_NODE_URL", "http://127.0.0.1:8108")

# every write endpoint the service exposes, and the command that drives it;
# tests assert this stays in lockstep with the route table
WRITE_ROUTE_COMMANDS = {
    "/transactions": "tx submit",
    "/sessions/join": "hei join",
    "/sessions/register": "student register",
    "/sessions/verify": "verify run",
    "/channel": "student confirm",
}

EXIT_VALIDATION = 1
EXIT_TRANSPORT = 2


def emit(doc: dict) -> None:
    click.echo(json.dumps(doc, indent=2, sort_keys=True))


def note(text: str) -> None:
    click.echo(text, err=True)


def fail(code: str, detail: str = "", exit_code: int = EXIT_VALIDATION) -> None:
    emit({"error": code, **({"detail": detail} if detail else {})})
    sys.exit(exit_code)


def load_keypair(key_file: str | None, seed: str | None = None) -> crypto.KeyPair:
    if seed is not None:
        return crypto.generate_keypair(seed.encode())
    if key_file is None:
        fail("MissingKey", "provide --key-file or a seed")
    doc = json.loads(Path(key_file).read_text())
    if "private_key" in doc:
        kp = crypto.KeyPair(
            private_key=bytes.fromhex(doc["private_key"]),
            public_key=bytes.fromhex(doc["public_key"]),
        )
        return kp
    if "seed" in doc:
        return crypto.generate_keypair(doc["seed"].encode())
    fail("MissingKey", f"{key_file} holds neither a key nor a seed")
    raise AssertionError("unreachable")


def keypair_doc(kp: crypto.KeyPair) -> dict:
    return {
        "private_key": kp.private_key.hex(),
        "public_key": kp.public_key.hex(),
        "address": kp.address,
    }


class NodeClient:
    """Thin REST wrapper translating HTTP failures into exit codes."""

    def __init__(self, base_url: str):
        self.base = base_url.rstrip("/")

    def _request(self, method: str, path: str, **kwargs):
        try:
            response = requests.request(method, self.base + path, timeout=30, **kwargs)
        except requests.RequestException as exc:
            fail("Transport", str(exc), exit_code=EXIT_TRANSPORT)
        if response.status_code >= 500:
            fail("Transport", response.text, exit_code=EXIT_TRANSPORT)
        if response.status_code >= 400:
            doc = response.json() if response.content else {}
            fail(doc.get("error", "Rejected"), doc.get("detail", ""))
        return response.json()

    def get(self, path: str, **kwargs):
        return self._request("GET", path, **kwargs)

    def post(self, path: str, doc: dict):
        return self._request("POST", path, json=doc)

    def post_signed(self, path: str, doc: dict, kp: crypto.KeyPair):
        body = json.dumps(doc).encode()
        headers = {
            "content-type": "application/json",
            "x-public-key": kp.public_key.hex(),
            "x-signature": crypto.sign_message(kp.private_key, body).hex(),
        }
        return self._request("POST", path, data=body, headers=headers)

    def fetch_channel(self, kp: crypto.KeyPair) -> list[dict]:
        preimage = f"channel:{kp.public_key.hex()}".encode()
        headers = {
            "x-public-key": kp.public_key.hex(),
            "x-signature": crypto.sign_message(kp.private_key, preimage).hex(),
        }
        doc = self.get(
            "/channel", params={"for_key": kp.public_key.hex()}, headers=headers
        )
        return doc["messages"]

    def wait_session(self, session_id: str, phases: set[str], timeout_s: float = 30.0) -> dict:
        deadline = time.time() + timeout_s
        while True:
            doc = self.get(f"/sessions/{session_id}")
            if doc["phase"] in phases:
                return doc
            if time.time() > deadline:
                fail("Timeout", f"session stuck in {doc['phase']}")
            time.sleep(0.1)


node_url_option = click.option(
    "--node", "node_url", default=DEFAULT_NODE, show_default=True,
    help="node REST endpoint (or EDUCTX_NODE_URL)",
)


@click.group()
def main():
    """EduCTX wallet and node tooling."""


# -- keys and offline crypto ------------------------------------------------------


@main.command()
@click.option("--seed", default=None, help="deterministic seed (dev use)")
@click.option("--seed-file", default=None, type=click.Path(exists=True))
@click.option("--out", default=None, type=click.Path(), help="write the key file here")
def keygen(seed, seed_file, out):
    """Generate a keypair and address."""
    if seed is None and seed_file is None:
        seed = click.prompt("seed", hide_input=True, err=True)
    if seed_file is not None:
        seed = Path(seed_file).read_text().strip()
    kp = crypto.generate_keypair(seed.encode())
    doc = keypair_doc(kp)
    if out:
        Path(out).write_text(json.dumps(doc, indent=2))
        note(f"key written to {out}")
    emit(doc)


@main.command()
@click.option("--public-key", default=None, help="hex public key")
@click.option("--key-file", default=None, type=click.Path(exists=True))
def address(public_key, key_file):
    """Derive the wallet address for a public key."""
    try:
        if public_key is not None:
            value = crypto.derive_address(bytes.fromhex(public_key))
        else:
            value = load_keypair(key_file).address
        emit({"address": value})
    except EductxError as exc:
        fail(exc.code, str(exc))


@main.group()
def multisig():
    """Shared-address (M-of-N) helpers."""


@multisig.command("create")
@click.option("--keys", required=True, help="comma-separated hex public keys")
@click.option("--m", "required", required=True, type=int, help="required signer count")
def multisig_create(keys, required):
    try:
        public_keys = [bytes.fromhex(k) for k in keys.split(",") if k]
        script = crypto.build_redeem_script(public_keys, required)
        emit(
            {
                "address": crypto.derive_multisig_address(script),
                "redeem_script": script.canonical_bytes().hex(),
                "m": script.m,
                "n": len(script.public_keys),
            }
        )
    except (EductxError, ValueError) as exc:
        fail(getattr(exc, "code", "BadRequest"), str(exc))


@main.command("sign-message")
@click.option("--key-file", required=True, type=click.Path(exists=True))
@click.option("--message", required=True)
def sign_message(key_file, message):
    kp = load_keypair(key_file)
    signature = crypto.sign_message(kp.private_key, message.encode())
    emit({"message": message, "signature": signature.hex(), "public_key": kp.public_key.hex()})


@main.command("verify-message")
@click.option("--public-key", required=True)
@click.option("--message", required=True)
@click.option("--signature", required=True)
def verify_message(public_key, message, signature):
    try:
        ok = crypto.verify_signature(
            bytes.fromhex(public_key), message.encode(), bytes.fromhex(signature)
        )
    except ValueError:
        ok = False
    emit({"valid": ok})
    if not ok:
        sys.exit(EXIT_VALIDATION)


# -- transactions --------------------------------------------------------------------


def _read_tx_arg(tx_arg: str) -> bytes:
    if tx_arg.startswith("@"):
        tx_arg = Path(tx_arg[1:]).read_text().strip()
        tx_arg = json.loads(tx_arg).get("raw", tx_arg) if tx_arg.startswith("{") else tx_arg
    return bytes.fromhex(tx_arg)


@main.group()
def tx():
    """Build, sign and submit transactions."""


@tx.command("transfer")
@click.option("--key-file", default=None, type=click.Path(exists=True),
              help="sender key; omit to emit an unsigned body")
@click.option("--from-address", default=None, help="sender (defaults to the key's address)")
@click.option("--to", "recipient", required=True)
@click.option("--amount", required=True, help="decimal token amount")
@click.option("--hei-name", default="")
@click.option("--course-id", default="")
@click.option("--redeem-script", default=None, help="hex script when spending from multisig")
@click.option("--nonce", default=None, type=int, help="explicit nonce (else fetched)")
@node_url_option
def tx_transfer(key_file, from_address, recipient, amount, hei_name, course_id,
                redeem_script, nonce, node_url):
    try:
        kp = load_keypair(key_file) if key_file else None
        script = (
            crypto.RedeemScript.from_canonical(bytes.fromhex(redeem_script))
            if redeem_script
            else None
        )
        sender = from_address or (
            crypto.derive_multisig_address(script) if script else kp.address
        )
        if nonce is None:
            client = NodeClient(node_url)
            nonce = client.get(f"/accounts/{sender}")["nonce"] + 1
        transfer = build_transfer(
            sender,
            recipient,
            parse_amount(amount),
            metadata=TxMetadata(hei_name=hei_name, course_id=course_id),
            nonce=nonce,
            redeem_script=script,
        )
        if kp is not None:
            transfer = append_signature(transfer, kp)
        emit({"raw": transfer.canonical_bytes().hex(), "id": transfer.id.hex()})
    except EductxError as exc:
        fail(exc.code, str(exc))


@tx.command("sign")
@click.option("--tx", "tx_arg", required=True, help="hex bytes or @file")
@click.option("--key-file", required=True, type=click.Path(exists=True))
def tx_sign(tx_arg, key_file):
    try:
        transaction = deserialize_transaction(_read_tx_arg(tx_arg))
        signed = append_signature(transaction, load_keypair(key_file))
        emit({"raw": signed.canonical_bytes().hex(), "id": signed.id.hex(),
              "signatures": len(signed.signatures)})
    except EductxError as exc:
        fail(exc.code, str(exc))


@tx.command("submit")
@click.option("--tx", "tx_arg", required=True, help="hex bytes or @file")
@node_url_option
def tx_submit(tx_arg, node_url):
    client = NodeClient(node_url)
    doc = client.post("/transactions", {"raw": _read_tx_arg(tx_arg).hex()})
    note("transaction accepted")
    emit(doc)


@main.command()
@click.argument("address")
@node_url_option
def balance(address, node_url):
    """Balance and credit history of an address."""
    client = NodeClient(node_url)
    doc = client.get(f"/accounts/{address}")
    note(f"{address}: {doc['balance']} ECTX")
    emit(doc)


# -- protocol flows --------------------------------------------------------------------


@main.group()
def hei():
    """Institution-side flows."""


@hei.command("join")
@click.option("--name", required=True, help="official institution name")
@click.option("--key-file", required=True, type=click.Path(exists=True))
@click.option("--endpoint", default="")
@click.option("--challenge-x", default=None, type=int, hidden=True)
@click.option("--timeout", default=60.0, show_default=True)
@node_url_option
def hei_join(name, key_file, endpoint, challenge_x, timeout, node_url):
    """Apply to the consortium through a member node and answer its
    reimbursement challenge."""
    kp = load_keypair(key_file)
    client = NodeClient(node_url)
    doc = {
        "name": name,
        "address": kp.address,
        "endpoint": endpoint,
        "public_key": kp.public_key.hex(),
    }
    if challenge_x is not None:
        doc["challenge_x"] = challenge_x
    session = client.post("/sessions/join", doc)
    note(f"join session {session['session_id']}: {session['phase']}")
    deadline = time.time() + timeout
    notified = False
    while time.time() < deadline:
        for message in client.fetch_channel(kp):
            if message["kind"] == "join_challenge" and not notified:
                amount = message["body"]["amount"]
                note(f"reimbursement challenge: {amount} ECTX")
                nonce = client.get(f"/accounts/{kp.address}")["nonce"] + 1
                repay = append_signature(
                    build_transfer(
                        kp.address,
                        message["body"]["pay_to"],
                        parse_amount(amount),
                        nonce=nonce,
                    ),
                    kp,
                )
                submitted = client.post(
                    "/transactions", {"raw": repay.canonical_bytes().hex()}
                )
                client.post_signed(
                    "/channel",
                    {
                        "kind": "join_repayment_notice",
                        "body": {
                            "session_id": session["session_id"],
                            "tx_id": submitted["id"],
                        },
                    },
                    kp,
                )
                notified = True
        state = client.get(f"/sessions/{session['session_id']}")
        if state["phase"] in ("member", "terminated"):
            emit(state)
            sys.exit(0 if state["phase"] == "member" else EXIT_VALIDATION)
        time.sleep(0.1)
    fail("Timeout", "join did not finish in time")


@main.group()
def student():
    """Student-side flows."""


@student.command("register")
@click.option("--student-id", required=True)
@click.option("--admin-key-file", required=True, type=click.Path(exists=True))
@click.option("--packet-out", default=None, type=click.Path(),
              help="write the wallet-setup packet here")
@node_url_option
def student_register(student_id, admin_key_file, packet_out, node_url):
    """Registrar issues a student a shared 2-of-2 wallet."""
    admin = load_keypair(admin_key_file)
    client = NodeClient(node_url)
    doc = client.post_signed("/sessions/register", {"student_id": student_id}, admin)
    if packet_out:
        Path(packet_out).write_text(json.dumps(doc["packet"], indent=2))
        note(f"wallet packet written to {packet_out}")
    emit(doc)


@student.command("confirm")
@click.option("--packet", "packet_file", required=True, type=click.Path(exists=True))
@click.option("--timeout", default=60.0, show_default=True)
@node_url_option
def student_confirm(packet_file, timeout, node_url):
    """Student returns the 0.1 stake to prove control of the shared wallet."""
    packet = json.loads(Path(packet_file).read_text())
    kp = crypto.KeyPair(
        private_key=bytes.fromhex(packet["student_keys"]["private_key"]),
        public_key=bytes.fromhex(packet["student_keys"]["public_key"]),
    )
    script = crypto.RedeemScript.from_canonical(bytes.fromhex(packet["redeem_script"]))
    multisig_address = crypto.derive_multisig_address(script)
    hei_address = crypto.derive_address(bytes.fromhex(packet["hei_public_key"]))
    client = NodeClient(node_url)
    deadline = time.time() + timeout
    while client.get(f"/accounts/{multisig_address}")["balance"] == "0.00000000":
        if time.time() > deadline:
            fail("Timeout", "stake never arrived on the shared address")
        time.sleep(0.1)
    nonce = client.get(f"/accounts/{multisig_address}")["nonce"] + 1
    roundtrip = build_transfer(
        multisig_address,
        hei_address,
        parse_amount("0.1"),
        nonce=nonce,
        redeem_script=script,
    )
    half = append_signature(roundtrip, kp)
    doc = client.post_signed(
        "/channel",
        {
            "kind": "cosign_request",
            "body": {"session_id": packet["session_id"], "tx": half.canonical_bytes().hex()},
        },
        kp,
    )
    session = client.wait_session(
        packet["session_id"], {"confirmed"}, timeout_s=timeout
    )
    note("wallet confirmed")
    emit(session)


@main.group()
def course():
    """Course-completion flows."""


@course.command("complete")
@click.option("--student-id", required=True)
@click.option("--course-id", required=True)
@click.option("--credits", "credit_text", required=True,
              help="whole-number credit value")
@click.option("--admin-key-file", required=True, type=click.Path(exists=True))
@node_url_option
def course_complete(student_id, course_id, credit_text, admin_key_file, node_url):
    """Registrar transfers course credits to the student's shared address."""
    admin = load_keypair(admin_key_file)
    client = NodeClient(node_url)
    credits: object = credit_text
    if credit_text.isdigit():
        credits = int(credit_text)
    doc = client.post_signed(
        "/channel",
        {
            "kind": "course_complete",
            "body": {"student_id": student_id, "course_id": course_id, "credits": credits},
        },
        admin,
    )
    note(f"credits assigned: tx {doc.get('tx_id', '')}")
    emit(doc)


@main.group()
def verify():
    """Verifier-organization flows."""


@verify.command("run")
@click.option("--sim", "use_sim", is_flag=True,
              help="run the whole happy path on an in-process 3-node network")
@click.option("--proof", "proof_file", default=None, type=click.Path(exists=True))
@click.option("--student-key-file", default=None, type=click.Path(exists=True),
              help="answer the challenge locally (demo mode)")
@node_url_option
def verify_run(use_sim, proof_file, student_key_file, node_url):
    """Check a student's proof package: script binding, balance, challenge."""
    if use_sim:
        emit(run_sim_verification())
        return
    if proof_file is None:
        fail("BadRequest", "--proof required unless --sim")
    proof = json.loads(Path(proof_file).read_text())
    client = NodeClient(node_url)
    session = client.post(
        "/sessions/verify",
        {
            "student_public_key": proof["student_public_key"],
            "multisig_address": proof["multisig_address"],
            "redeem_script": proof["redeem_script"],
        },
    )
    if session["phase"] == "rejected":
        emit(session)
        sys.exit(EXIT_VALIDATION)
    note(f"balance {session['balance']} ECTX; challenge issued")
    if student_key_file is not None:
        kp = load_keypair(student_key_file)
        signature = crypto.sign_message(
            kp.private_key, session["challenge_message"].encode()
        )
        client.post_signed(
            "/channel",
            {
                "kind": "challenge_response",
                "body": {"session_id": session["session_id"], "signature": signature.hex()},
            },
            kp,
        )
        session = client.wait_session(session["session_id"], {"verified", "rejected"})
    emit(session)
    if session["phase"] == "rejected":
        sys.exit(EXIT_VALIDATION)


def run_sim_verification() -> dict:
    """End-to-end happy path on a fresh 3-node simulation: register, confirm,
    60 credits, verify."""
    import random

    from eductx.protocols import (
        HEIContext,
        PrivateChannel,
        SimGateway,
        StudentWallet,
        VerifierOrg,
        run_until,
    )

    sim, keys = standard_network(3)
    channel = PrivateChannel()
    hei_ctx = HEIContext(
        name="uni-0", keypair=keys[0], gateway=SimGateway(sim, 0),
        channel=channel, rng=random.Random(1),
    )
    session, packet = hei_ctx.register_student("S-DEMO")
    student_kp = crypto.KeyPair(
        private_key=bytes.fromhex(packet["student_keys"]["private_key"]),
        public_key=bytes.fromhex(packet["student_keys"]["public_key"]),
    )
    wallet = StudentWallet(SimGateway(sim, 1), channel, student_kp)
    run_until(sim, [hei_ctx, wallet], lambda: session.phase == "info_sent")
    wallet.confirm_wallet()
    run_until(sim, [hei_ctx, wallet], lambda: session.phase == "confirmed")
    record = hei_ctx.students["S-DEMO"]
    hei_ctx.complete_course("S-DEMO", "CS101", 30)
    hei_ctx.complete_course("S-DEMO", "SE202", 30)
    run_until(sim, [hei_ctx], lambda: all(e.confirmed for e in record.course_log))
    org = VerifierOrg(
        SimGateway(sim, 2), channel, crypto.generate_keypair(b"verifier-org"),
        rng=random.Random(2),
    )
    verification = org.start_verification(wallet.proof_package())
    run_until(sim, [org, wallet], lambda: verification.phase in ("verified", "rejected"))
    return {
        "result": verification.phase,
        "credits": verification.credits,
        "balance": verification.balance,
        "breakdown": verification.credit_breakdown,
    }


# -- simulator and node -----------------------------------------------------------------


@main.group()
def sim():
    """Deterministic network simulation."""


@sim.command("run")
@click.argument("script", type=click.Path(exists=True))
@click.option("--nodes", default=3, show_default=True)
@click.option("--active", default=3, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--drain", default=6, show_default=True,
              help="extra ticks after the last scripted event")
@click.option("--out", default=None, type=click.Path(),
              help="directory for per-node block-store dumps")
def sim_run(script, nodes, active, seed, drain, out):
    """Execute a newline-delimited JSON event script."""
    simulation, _ = standard_network(nodes, active_count=active, rng_seed=seed)
    outcomes = execute_script(simulation, load_script(script))
    simulation.advance(drain)
    simulation.settle()
    head = simulation.assert_converged()
    result = {
        "outcomes": outcomes,
        "tick": simulation.tick,
        "converged": isinstance(head, bytes),
        "head": head.hex() if isinstance(head, bytes) else head.heads,
        "heights": {n.node_id: n.height for n in simulation.nodes},
    }
    if out:
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        for node in simulation.nodes:
            simulation.dump_store(node.node_id, out_dir / f"node-{node.node_id}.blocks")
        result["stores"] = str(out_dir)
    emit(result)


@main.group()
def node():
    """Node operation."""


@node.command("serve")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--api-host", default="127.0.0.1", show_default=True)
@click.option("--api-port", default=8108, show_default=True)
def node_serve(config_path, api_host, api_port):
    """Run a full node: block store, peer gossip, forging, REST API."""
    import uvicorn

    from .node import Node, NodeConfig
    from .service import create_app

    config = NodeConfig.load(config_path)
    running = Node(config)
    running.start()
    note(f"gossip on {config.listen_host}:{running.listen_port}; API on {api_host}:{api_port}")
    try:
        uvicorn.run(create_app(running), host=api_host, port=api_port, log_level="warning")
    finally:
        running.stop()


if __name__ == "__main__":
    main()
