// Student workflow: import the wallet packet the institution issued, read
// balance and per-course history, and answer verification challenges by
// signing text locally.

import type { NodeApi } from "../api.js";
import {
  ApiError,
  type AccountView,
  type ProofPackage,
  type SessionView,
  type WalletPacket,
} from "../types.js";
import { sign, utf8Bytes } from "../signing.js";
import { deriveAddress } from "../address.js";
import { appendSignature, buildTransfer, canonicalBytes } from "../tx.js";
import { bytesToHex } from "../signing.js";

export class StudentFlow {
  private packet: WalletPacket | null = null;

  constructor(private readonly api: NodeApi) {}

  importPacket(packetJson: string | WalletPacket): WalletPacket {
    const packet =
      typeof packetJson === "string"
        ? (JSON.parse(packetJson) as WalletPacket)
        : packetJson;
    if (!packet.student_keys?.private_key || !packet.redeem_script) {
      throw new ApiError("BadPacket", 0, "not a wallet packet");
    }
    this.packet = packet;
    return packet;
  }

  private get currentPacket(): WalletPacket {
    if (!this.packet) throw new ApiError("NoWallet", 0, "import a packet first");
    return this.packet;
  }

  private cachedAddress: string | null = null;

  /** The shared 2-of-2 address comes from the registration session view; the
   * client displays what the node derived rather than re-hashing locally. */
  async resolveSharedAddress(): Promise<string> {
    if (this.cachedAddress) return this.cachedAddress;
    const session = await this.api.session(this.currentPacket.session_id);
    if (!session.multisig_address) {
      throw new ApiError("NoWallet", 0, "shared address not resolvable from the node");
    }
    this.cachedAddress = session.multisig_address;
    return this.cachedAddress;
  }

  /** Balance + course history of the shared address. */
  async accountView(sharedAddress?: string): Promise<AccountView> {
    const address = sharedAddress ?? (await this.resolveSharedAddress());
    return this.api.account(address);
  }

  proofPackage(sharedAddress: string): ProofPackage {
    const packet = this.currentPacket;
    return {
      student_public_key: packet.student_keys.public_key,
      multisig_address: sharedAddress,
      redeem_script: packet.redeem_script,
    };
  }

  /** Complete the wallet setup: half-sign the 0.1 return transfer locally
   * and hand it to the institution for the second signature. */
  async confirmWallet(timeoutMs = 15000): Promise<SessionView> {
    const packet = this.currentPacket;
    const shared = await this.resolveSharedAddress();
    const heiAddress = await deriveAddress(packet.hei_public_key);
    const account = await this.api.account(shared);
    const transfer = buildTransfer({
      sender: shared,
      recipient: heiAddress,
      amount: "0.1",
      redeemScriptHex: packet.redeem_script,
      nonce: account.nonce + 1,
    });
    const key = {
      private_key: packet.student_keys.private_key,
      public_key: packet.student_keys.public_key,
    };
    const half = await appendSignature(transfer, key);
    await this.api.postChannel(
      "cosign_request",
      { session_id: packet.session_id, tx: bytesToHex(canonicalBytes(half)) },
      key,
    );
    return this.api.waitFor(
      () => this.api.session(packet.session_id),
      (session) => session.phase === "confirmed",
      timeoutMs,
    );
  }

  /** Sign arbitrary challenge text with the local student key. */
  async signChallenge(message: string): Promise<string> {
    const packet = this.currentPacket;
    return sign(packet.student_keys.private_key, utf8Bytes(message));
  }

  /** Drain the student mailbox and answer any pending verification
   * challenges; returns the session ids answered. */
  async answerInboxChallenges(): Promise<string[]> {
    const packet = this.currentPacket;
    const key = {
      private_key: packet.student_keys.private_key,
      public_key: packet.student_keys.public_key,
    };
    const answered: string[] = [];
    for (const message of await this.api.fetchChannel(key)) {
      if (message.kind !== "verify_challenge") continue;
      const body = message.body as { session_id: string; message: string };
      const signature = await this.signChallenge(body.message);
      await this.api.postChannel(
        "challenge_response",
        { session_id: body.session_id, signature },
        key,
      );
      answered.push(body.session_id);
    }
    return answered;
  }
}
