// Address text encoding, matching the node: version byte + 20-byte truncated
// SHA-256 + 4-byte double-SHA checksum, base58. Version 0x1E for single keys,
// 0x05 for script-hash addresses.

import { bytesToHex, hexToBytes } from "./signing.js";

const ALPHABET = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz";
const SINGLE_KEY_VERSION = 0x1e;
const MULTISIG_VERSION = 0x05;

async function sha256(data: Uint8Array): Promise<Uint8Array> {
  return new Uint8Array(await globalThis.crypto.subtle.digest("SHA-256", data));
}

function base58(raw: Uint8Array): string {
  let num = BigInt("0x" + (bytesToHex(raw) || "0"));
  let out = "";
  while (num > 0n) {
    out = ALPHABET[Number(num % 58n)] + out;
    num /= 58n;
  }
  for (const byte of raw) {
    if (byte !== 0) break;
    out = "1" + out;
  }
  return out;
}

async function encode(version: number, material: Uint8Array): Promise<string> {
  const digest = (await sha256(material)).slice(0, 20);
  const payload = new Uint8Array(21);
  payload[0] = version;
  payload.set(digest, 1);
  const checksum = (await sha256(await sha256(payload))).slice(0, 4);
  const full = new Uint8Array(25);
  full.set(payload);
  full.set(checksum, 21);
  return base58(full);
}

export function deriveAddress(publicKeyHex: string): Promise<string> {
  const key = hexToBytes(publicKeyHex);
  if (key.length !== 32) throw new Error("public key must be 32 bytes");
  return encode(SINGLE_KEY_VERSION, key);
}

export function deriveMultisigAddress(redeemScriptHex: string): Promise<string> {
  return encode(MULTISIG_VERSION, hexToBytes(redeemScriptHex));
}
