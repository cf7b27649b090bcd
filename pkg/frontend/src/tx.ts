// Canonical transaction bytes, byte-compatible with the node: length-
// prefixed fields in declaration order, big-endian integers. The signing
// preimage is the same serialization with an empty signature list; the
// transaction id is the SHA-256 of the full bytes.

import { bytesToHex, hexToBytes, sign, utf8Bytes } from "./signing.js";
import type { KeyMaterial } from "./types.js";

export const TX_KINDS = {
  transfer: 1,
  delegate_registration: 2,
  vote: 3,
  multisig_registration: 4,
} as const;

export interface UnsignedTransfer {
  kind: keyof typeof TX_KINDS;
  sender: string;
  recipient: string;
  amountSubunits: bigint;
  heiName: string;
  courseId: string;
  redeemScriptHex: string; // canonical script bytes, "" when absent
  nonce: bigint;
  timestamp: bigint;
}

export interface SignedTransaction extends UnsignedTransfer {
  signatures: { publicKey: string; signature: string }[];
}

const SUBUNITS = 100_000_000n;

export function parseAmount(text: string): bigint {
  const match = /^(\d+)(?:\.(\d{1,8}))?$/.exec(text.trim());
  if (!match) throw new Error(`not a token amount: ${text}`);
  const frac = (match[2] ?? "").padEnd(8, "0");
  return BigInt(match[1]) * SUBUNITS + BigInt(frac || "0");
}

function u64(value: bigint): Uint8Array {
  const out = new Uint8Array(8);
  new DataView(out.buffer).setBigUint64(0, value, false);
  return out;
}

function u32(value: number): Uint8Array {
  const out = new Uint8Array(4);
  new DataView(out.buffer).setUint32(0, value, false);
  return out;
}

function u16(value: number): Uint8Array {
  const out = new Uint8Array(2);
  new DataView(out.buffer).setUint16(0, value, false);
  return out;
}

function lenPrefixed(data: Uint8Array): Uint8Array[] {
  return [u32(data.length), data];
}

function serialize(tx: SignedTransaction, includeSignatures: boolean): Uint8Array {
  const parts: Uint8Array[] = [Uint8Array.of(TX_KINDS[tx.kind])];
  parts.push(...lenPrefixed(utf8Bytes(tx.sender)));
  parts.push(...lenPrefixed(utf8Bytes(tx.recipient)));
  parts.push(u64(tx.amountSubunits));
  parts.push(...lenPrefixed(utf8Bytes(tx.heiName)));
  parts.push(...lenPrefixed(utf8Bytes(tx.courseId)));
  parts.push(...lenPrefixed(tx.redeemScriptHex ? hexToBytes(tx.redeemScriptHex) : new Uint8Array()));
  if (includeSignatures) {
    parts.push(u16(tx.signatures.length));
    for (const entry of tx.signatures) {
      parts.push(hexToBytes(entry.publicKey), hexToBytes(entry.signature));
    }
  } else {
    parts.push(u16(0));
  }
  parts.push(u64(tx.nonce), u64(tx.timestamp));
  const total = parts.reduce((n, p) => n + p.length, 0);
  const out = new Uint8Array(total);
  let offset = 0;
  for (const part of parts) {
    out.set(part, offset);
    offset += part.length;
  }
  return out;
}

export function signingBytes(tx: UnsignedTransfer): Uint8Array {
  return serialize({ ...tx, signatures: [] }, false);
}

export function canonicalBytes(tx: SignedTransaction): Uint8Array {
  return serialize(tx, true);
}

export async function transactionId(tx: SignedTransaction): Promise<string> {
  const digest = await globalThis.crypto.subtle.digest("SHA-256", canonicalBytes(tx));
  return bytesToHex(new Uint8Array(digest));
}

export function buildTransfer(doc: {
  sender: string;
  recipient: string;
  amount: string;
  heiName?: string;
  courseId?: string;
  redeemScriptHex?: string;
  nonce: number | bigint;
  timestamp?: number | bigint;
}): SignedTransaction {
  return {
    kind: "transfer",
    sender: doc.sender,
    recipient: doc.recipient,
    amountSubunits: parseAmount(doc.amount),
    heiName: doc.heiName ?? "",
    courseId: doc.courseId ?? "",
    redeemScriptHex: doc.redeemScriptHex ?? "",
    nonce: BigInt(doc.nonce),
    timestamp: BigInt(doc.timestamp ?? 0),
    signatures: [],
  };
}

export async function appendSignature(
  tx: SignedTransaction,
  key: KeyMaterial,
): Promise<SignedTransaction> {
  const signature = await sign(key.private_key, signingBytes(tx));
  return {
    ...tx,
    signatures: [...tx.signatures, { publicKey: key.public_key, signature }],
  };
}
