"""REST face of a node: chain reads for wallets and the explorer, write
endpoints for transactions, protocol sessions and the private channel.

Every write rejection carries a machine-readable reason equal to the error
class name, and every token amount is a string with eight decimals — the
client contract the wallet UI builds on. Private-channel and admin calls
authenticate with an Ed25519 signature of the raw request body in headers.
"""

from __future__ import annotations

import json
from dataclasses import asdict

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import crypto
from .amounts import format_amount, from_tokens
from .consensus import compute_roster
from .errors import EductxError, UnknownSession
from .node import Node
from .protocols import PrivateMessage
from .tx import deserialize_transaction

AUTH_KEY_HEADER = "x-public-key"
AUTH_SIG_HEADER = "x-signature"


def _error(status: int, code: str, detail: str = "") -> JSONResponse:
    body = {"error": code}
    if detail:
        body["detail"] = detail
    return JSONResponse(body, status_code=status)


def _authenticate(request: Request, body: bytes) -> bytes | None:
    """Returns the caller's public key when the body signature checks out."""
    try:
        public_key = bytes.fromhex(request.headers.get(AUTH_KEY_HEADER, ""))
        signature = bytes.fromhex(request.headers.get(AUTH_SIG_HEADER, ""))
    except ValueError:
        return None
    if len(public_key) != 32:
        return None
    if not crypto.verify_signature(public_key, body, signature):
        return None
    return public_key


def create_app(node: Node) -> FastAPI:
    app = FastAPI(title="eductx-node", docs_url=None, redoc_url=None)

    @app.exception_handler(EductxError)
    async def _eductx_error(request: Request, exc: EductxError):
        return _error(400, exc.code, str(exc))

    # -- reads -------------------------------------------------------------

    @app.get("/status")
    def status():
        with node.lock:
            head = node.chain[-1]
            return {
                "height": head.height,
                "head": head.block_hash.hex(),
                "genesis": node.genesis_block.block_hash.hex(),
                "tick": node.current_tick(),
                "pool_size": len(node.pool),
                "hei_name": node.config.hei_name,
                "public_key": node.keypair.public_key.hex() if node.keypair else "",
            }

    @app.get("/blocks")
    def blocks(from_height: int = 0, to_height: int | None = None, limit: int = 50):
        with node.lock:
            head = node.chain[-1].height
            hi = head if to_height is None else min(to_height, head)
            lo = max(0, from_height)
            hi = min(hi, lo + min(limit, 100) - 1)
            view = [node.chain[h].to_json() for h in range(lo, hi + 1)]
            return {"head_height": head, "blocks": view}

    @app.get("/blocks/{block_hash}")
    def block_by_hash(block_hash: str):
        with node.lock:
            for block in node.chain:
                if block.block_hash.hex() == block_hash:
                    return block.to_json()
        return _error(404, "NotFound", f"no block {block_hash}")

    @app.get("/transactions/{tx_id}")
    def transaction(tx_id: str):
        try:
            raw_id = bytes.fromhex(tx_id)
        except ValueError:
            return _error(404, "NotFound", "malformed id")
        with node.lock:
            confirmed = node.query.transaction(raw_id)
            if confirmed is not None:
                doc = confirmed.tx.to_json()
                doc["height"] = confirmed.height
                doc["confirmed"] = True
                return doc
            pooled = node.pool.get(raw_id)
            if pooled is not None:
                doc = pooled.to_json()
                doc["confirmed"] = False
                return doc
        return _error(404, "NotFound", f"no transaction {tx_id}")

    @app.get("/accounts/{address}")
    def account(address: str):
        with node.lock:
            exists = (
                address in node.state.balances
                or address in node.state.multisig_policies
                or address in node.state.hei_registry
            )
            balance = node.state.balances.get(address, 0)
            credits = node.query.credit_entries(address)
            policy = node.state.multisig_policies.get(address)
            return {
                "address": address,
                "exists": exists,
                "balance": format_amount(balance),
                "credits": balance // from_tokens(1),
                "credit_breakdown": credits,
                "hei_name": node.state.hei_registry.get(address, ""),
                "redeem_script": policy.canonical_bytes().hex() if policy else "",
                "nonce": node.state.nonces.get(address, 0),
            }

    @app.get("/delegates")
    def delegates():
        with node.lock:
            roster = compute_roster(node.state, node.config.active_count)
            entries = []
            for public_key, info in node.state.delegates.items():
                entries.append(
                    {
                        "name": info.name,
                        "public_key": public_key.hex(),
                        "address": info.address,
                        "vote_weight": format_amount(max(info.vote_weight, 0)),
                        "active": public_key in roster.active,
                    }
                )
            entries.sort(key=lambda e: (-float(e["vote_weight"]), e["public_key"]))
            return {"delegates": entries}

    @app.get("/rounds/current")
    def current_round():
        with node.lock:
            tick = node.current_tick()
            round_number = node.context.round_number(tick)
            schedule = node.context.schedule_for(node.chain, round_number)
            return {
                "round": round_number,
                "tick": tick,
                "slot_length": node.context.round_length,
                "slots": [pk.hex() for pk in schedule.slot_assignments],
            }

    @app.get("/sessions/{session_id}")
    def session_view(session_id: str):
        view = _find_session(node, session_id)
        if view is None:
            return _error(404, UnknownSession.__name__, session_id)
        return view

    @app.get("/channel")
    def fetch_channel(request: Request, for_key: str):
        try:
            public_key = bytes.fromhex(for_key)
        except ValueError:
            return _error(400, "BadRequest", "malformed key")
        signature_over = f"channel:{for_key}".encode()
        caller = _authenticate_query(request, signature_over)
        if caller != public_key:
            return _error(401, "Unauthorized", "signature does not match mailbox key")
        messages = node.channel.fetch(public_key)
        return {
            "messages": [
                {
                    "kind": m.kind,
                    "sender_public_key": m.sender_public_key.hex(),
                    "body": m.body,
                }
                for m in messages
            ]
        }

    def _authenticate_query(request: Request, preimage: bytes) -> bytes | None:
        try:
            public_key = bytes.fromhex(request.headers.get(AUTH_KEY_HEADER, ""))
            signature = bytes.fromhex(request.headers.get(AUTH_SIG_HEADER, ""))
        except ValueError:
            return None
        if crypto.verify_signature(public_key, preimage, signature):
            return public_key
        return None

    # -- writes ---------------------------------------------------------------

    @app.post("/transactions", status_code=202)
    async def submit_transaction(request: Request):
        body = await request.body()
        try:
            doc = json.loads(body.decode())
            raw = bytes.fromhex(doc["raw"])
        except (ValueError, KeyError):
            return _error(400, "BadRequest", "expected {\"raw\": \"<hex>\"}")
        tx = deserialize_transaction(raw)
        tx_id = node.submit_transaction(tx)
        return {"id": tx_id.hex()}

    @app.post("/sessions/join", status_code=202)
    async def start_join(request: Request):
        if node.hei is None:
            return _error(400, "NotConsortiumMember", "this node hosts no institution")
        doc = await request.json()
        challenge = doc.get("challenge_x")
        session = node.hei.receive_join_request(
            name=doc["name"],
            address=doc["address"],
            endpoint=doc.get("endpoint", ""),
            public_key_hex=doc.get("public_key", ""),
            challenge_x=int(challenge) if challenge else None,
        )
        return _join_view(session)

    @app.post("/sessions/register", status_code=202)
    async def register_student(request: Request):
        if node.hei is None:
            return _error(400, "NotConsortiumMember", "this node hosts no institution")
        body = await request.body()
        caller = _authenticate(request, body)
        if caller != node.hei.keypair.public_key:
            return _error(401, "Unauthorized", "registrar signature required")
        doc = json.loads(body.decode())
        session, packet = node.hei.register_student(doc["student_id"])
        return {"session": _registration_view(session), "packet": packet}

    @app.post("/sessions/verify", status_code=202)
    async def start_verification(request: Request):
        doc = await request.json()
        session = node.verifier.start_verification(
            {
                "student_public_key": doc["student_public_key"],
                "multisig_address": doc["multisig_address"],
                "redeem_script": doc["redeem_script"],
            }
        )
        return _verification_view(session)

    @app.post("/channel", status_code=202)
    async def post_channel(request: Request):
        body = await request.body()
        caller = _authenticate(request, body)
        if caller is None:
            return _error(401, "Unauthorized", "body signature required")
        doc = json.loads(body.decode())
        kind = doc.get("kind", "")
        payload = doc.get("body", {})
        if kind == "join_repayment_notice":
            if node.hei is None:
                return _error(400, "NotConsortiumMember")
            node.hei.handle_repayment_notice(payload["session_id"], payload["tx_id"])
            return {"status": "accepted"}
        if kind == "cosign_request":
            if node.hei is None:
                return _error(400, "NotConsortiumMember")
            tx_id = node.hei.cosign_roundtrip(
                payload["session_id"], bytes.fromhex(payload["tx"])
            )
            return {"status": "accepted", "tx_id": tx_id}
        if kind == "challenge_response":
            session = node.verifier.receive_response(
                payload["session_id"], bytes.fromhex(payload["signature"])
            )
            return {"status": "accepted", "phase": session.phase}
        if kind == "course_complete":
            if node.hei is None:
                return _error(400, "NotConsortiumMember")
            if caller != node.hei.keypair.public_key:
                return _error(401, "Unauthorized", "registrar signature required")
            credits = payload["credits"]
            if isinstance(credits, str):
                credits = int(credits) if credits.isdigit() else credits
            if isinstance(credits, float):
                credits = int(credits) if credits.is_integer() else credits
            tx_id = node.hei.complete_course(
                payload["student_id"], payload["course_id"], credits
            )
            node.save_registry()
            return {"status": "accepted", "tx_id": tx_id}
        if kind == "student_lookup":
            # registrar-side read used by the wallet UI to resolve a student
            if node.hei is None:
                return _error(400, "NotConsortiumMember")
            if caller != node.hei.keypair.public_key:
                return _error(401, "Unauthorized", "registrar signature required")
            record = node.hei.students.get(payload["student_id"])
            if record is None:
                return _error(400, "UnknownStudent", payload["student_id"])
            return {"status": "accepted", "student": asdict(record)}
        # generic private delivery to another party's mailbox
        if "to" in doc:
            node.channel.post(
                bytes.fromhex(doc["to"]),
                PrivateMessage(kind=kind, sender_public_key=caller, body=payload),
            )
            return {"status": "accepted"}
        return _error(400, "BadRequest", f"unhandled channel kind {kind!r}")

    return app


def _find_session(node: Node, session_id: str):
    if node.hei is not None:
        join = node.hei.join_sessions.get(session_id)
        if join is not None:
            return _join_view(join)
        reg = node.hei.registration_sessions.get(session_id)
        if reg is not None:
            return _registration_view(reg)
    verify = node.verifier.sessions.get(session_id)
    if verify is not None:
        return _verification_view(verify)
    return None


def _join_view(session) -> dict:
    return {
        "session_id": session.session_id,
        "type": "join",
        "phase": session.phase,
        "applicant": asdict(session.applicant),
        "probe_tx_id": session.probe_tx_id,
        "endowment_tx_id": session.endowment_tx_id,
        "error": session.error,
    }


def _registration_view(session) -> dict:
    return {
        "session_id": session.session_id,
        "type": "register",
        "phase": session.phase,
        "student_id": session.student_id,
        "multisig_address": session.multisig_address,
        "registration_tx_id": session.registration_tx_id,
        "fund_tx_id": session.fund_tx_id,
        "roundtrip_tx_id": session.roundtrip_tx_id,
    }


def _verification_view(session) -> dict:
    return {
        "session_id": session.session_id,
        "type": "verify",
        "phase": session.phase,
        "student_public_key": session.student_public_key,
        "multisig_address": session.multisig_address,
        "balance": session.balance,
        "credits": session.credits,
        "credit_breakdown": session.credit_breakdown,
        "challenge_message": session.challenge_message,
        "error": session.error,
    }
