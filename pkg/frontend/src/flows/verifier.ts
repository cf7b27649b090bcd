// Verifier workflow: submit a pasted proof package, surface the node's
// script/balance checks, relay the challenge, and report the node's verdict
// verbatim. The organization's session key only authenticates channel posts.

import type { NodeApi } from "../api.js";
import type { KeyMaterial, ProofPackage, SessionView } from "../types.js";
import { generateKeypair } from "../signing.js";

export class VerifierFlow {
  private orgKey: KeyMaterial | null = null;

  constructor(private readonly api: NodeApi) {}

  private async key(): Promise<KeyMaterial> {
    if (!this.orgKey) this.orgKey = await generateKeypair();
    return this.orgKey;
  }

  /** Step 1+2: script check and balance display happen on the node; a
   * rejected session comes back immediately with its reason. */
  start(proof: ProofPackage): Promise<SessionView> {
    return this.api.startVerification(proof);
  }

  /** Step 3b: hand a signature received out of band to the node. */
  async submitSignedResponse(sessionId: string, signatureHex: string): Promise<SessionView> {
    await this.api.postChannel(
      "challenge_response",
      { session_id: sessionId, signature: signatureHex },
      await this.key(),
    );
    return this.api.session(sessionId);
  }

  /** The verdict is whatever the node's session says, nothing re-derived. */
  awaitVerdict(sessionId: string, timeoutMs = 15000): Promise<SessionView> {
    return this.api.waitFor(
      () => this.api.session(sessionId),
      (session) => session.phase === "verified" || session.phase === "rejected",
      timeoutMs,
    );
  }
}
