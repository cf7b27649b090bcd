// Browser-local Ed25519 signing over WebCrypto. Private keys are imported
// from packet/key files and never leave this module's call frames; request
// bodies carry signatures only.

import type { KeyMaterial } from "./types.js";

const ED25519 = { name: "Ed25519" };
// PKCS#8 prefix that wraps a raw 32-byte Ed25519 seed
const PKCS8_PREFIX = hexToBytes("302e020100300506032b657004220420");

function cryptoApi(): SubtleCrypto {
  const subtle = globalThis.crypto?.subtle;
  if (!subtle) throw new Error("WebCrypto with Ed25519 support is required");
  return subtle;
}

export function hexToBytes(hex: string): Uint8Array {
  if (hex.length % 2 !== 0) throw new Error("odd-length hex");
  const out = new Uint8Array(hex.length / 2);
  for (let i = 0; i < out.length; i++) {
    const byte = Number.parseInt(hex.slice(i * 2, i * 2 + 2), 16);
    if (Number.isNaN(byte)) throw new Error("bad hex");
    out[i] = byte;
  }
  return out;
}

export function bytesToHex(bytes: Uint8Array): string {
  return Array.from(bytes, (b) => b.toString(16).padStart(2, "0")).join("");
}

export function utf8Bytes(text: string): Uint8Array {
  return new TextEncoder().encode(text);
}

export async function sign(privateKeyHex: string, data: Uint8Array): Promise<string> {
  const seed = hexToBytes(privateKeyHex);
  if (seed.length !== 32) throw new Error("private key must be 32 bytes");
  const pkcs8 = new Uint8Array(PKCS8_PREFIX.length + 32);
  pkcs8.set(PKCS8_PREFIX);
  pkcs8.set(seed, PKCS8_PREFIX.length);
  const key = await cryptoApi().importKey("pkcs8", pkcs8, ED25519, false, ["sign"]);
  const signature = await cryptoApi().sign(ED25519, key, data);
  return bytesToHex(new Uint8Array(signature));
}

export async function verify(
  publicKeyHex: string,
  data: Uint8Array,
  signatureHex: string,
): Promise<boolean> {
  try {
    const key = await cryptoApi().importKey(
      "raw",
      hexToBytes(publicKeyHex),
      ED25519,
      false,
      ["verify"],
    );
    return await cryptoApi().verify(ED25519, key, hexToBytes(signatureHex), data);
  } catch {
    return false;
  }
}

export async function generateKeypair(): Promise<KeyMaterial> {
  const pair = (await cryptoApi().generateKey(ED25519, true, [
    "sign",
    "verify",
  ])) as CryptoKeyPair;
  const pkcs8 = new Uint8Array(await cryptoApi().exportKey("pkcs8", pair.privateKey));
  const raw = new Uint8Array(await cryptoApi().exportKey("raw", pair.publicKey));
  return {
    private_key: bytesToHex(pkcs8.slice(PKCS8_PREFIX.length)),
    public_key: bytesToHex(raw),
  };
}

// Authentication headers the node expects: the body signed by the caller.
export async function signedHeaders(
  key: KeyMaterial,
  body: Uint8Array,
): Promise<Record<string, string>> {
  return {
    "x-public-key": key.public_key,
    "x-signature": await sign(key.private_key, body),
  };
}

export async function channelFetchHeaders(key: KeyMaterial): Promise<Record<string, string>> {
  const preimage = utf8Bytes(`channel:${key.public_key}`);
  return {
    "x-public-key": key.public_key,
    "x-signature": await sign(key.private_key, preimage),
  };
}
