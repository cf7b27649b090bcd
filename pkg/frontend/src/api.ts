// Typed REST client for a node. Pure fetch, no state beyond the base URL;
// every write failure surfaces the node's machine-readable reason code.

import {
  ApiError,
  type AccountView,
  type BlockListView,
  type BlockView,
  type ChannelMessage,
  type DelegateView,
  type KeyMaterial,
  type ProofPackage,
  type RoundView,
  type SessionView,
  type StatusView,
  type TxView,
} from "./types.js";
import { channelFetchHeaders, signedHeaders, utf8Bytes } from "./signing.js";

type FetchLike = typeof fetch;

async function parseOrThrow<T>(response: Response): Promise<T> {
  const text = await response.text();
  const doc = text ? JSON.parse(text) : {};
  if (!response.ok) {
    throw new ApiError(doc.error ?? "HttpError", response.status, doc.detail ?? "");
  }
  return doc as T;
}

export class NodeApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = fetch,
  ) {}

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path);
    return parseOrThrow<T>(response);
  }

  private async post<T>(path: string, doc: unknown): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(doc),
    });
    return parseOrThrow<T>(response);
  }

  private async postSigned<T>(path: string, doc: unknown, key: KeyMaterial): Promise<T> {
    const body = JSON.stringify(doc);
    const headers = await signedHeaders(key, utf8Bytes(body));
    const response = await this.fetchFn(this.baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json", ...headers },
      body,
    });
    return parseOrThrow<T>(response);
  }

  // reads
  status(): Promise<StatusView> {
    return this.get("/status");
  }

  blocks(fromHeight: number, limit = 20): Promise<BlockListView> {
    return this.get(`/blocks?from_height=${fromHeight}&limit=${limit}`);
  }

  block(hash: string): Promise<BlockView> {
    return this.get(`/blocks/${hash}`);
  }

  transaction(id: string): Promise<TxView> {
    return this.get(`/transactions/${id}`);
  }

  account(address: string): Promise<AccountView> {
    return this.get(`/accounts/${address}`);
  }

  delegates(): Promise<{ delegates: DelegateView[] }> {
    return this.get("/delegates");
  }

  currentRound(): Promise<RoundView> {
    return this.get("/rounds/current");
  }

  session(id: string): Promise<SessionView> {
    return this.get(`/sessions/${id}`);
  }

  // writes
  submitTransaction(rawHex: string): Promise<{ id: string }> {
    return this.post("/transactions", { raw: rawHex });
  }

  startJoin(doc: {
    name: string;
    address: string;
    public_key: string;
    endpoint?: string;
  }): Promise<SessionView> {
    return this.post("/sessions/join", doc);
  }

  registerStudent(
    studentId: string,
    adminKey: KeyMaterial,
  ): Promise<{ session: SessionView; packet: unknown }> {
    return this.postSigned("/sessions/register", { student_id: studentId }, adminKey);
  }

  startVerification(proof: ProofPackage): Promise<SessionView> {
    return this.post("/sessions/verify", proof);
  }

  postChannel<T = { status: string }>(
    kind: string,
    body: Record<string, unknown>,
    key: KeyMaterial,
  ): Promise<T> {
    return this.postSigned("/channel", { kind, body }, key);
  }

  async fetchChannel(key: KeyMaterial): Promise<ChannelMessage[]> {
    const headers = await channelFetchHeaders(key);
    const response = await this.fetchFn(
      `${this.baseUrl}/channel?for_key=${key.public_key}`,
      { headers },
    );
    const doc = await parseOrThrow<{ messages: ChannelMessage[] }>(response);
    return doc.messages;
  }

  // convenience: poll until a predicate holds or time runs out
  async waitFor<T>(
    load: () => Promise<T>,
    done: (value: T) => boolean,
    timeoutMs = 15000,
    intervalMs = 150,
  ): Promise<T> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const value = await load();
      if (done(value)) return value;
      if (Date.now() > deadline) throw new ApiError("Timeout", 0, "condition not met");
      await new Promise((resolve) => setTimeout(resolve, intervalMs));
    }
  }
}
