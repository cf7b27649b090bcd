import { describe, expect, it } from "vitest";

import { bytesToHex } from "../src/signing.js";
import {
  appendSignature,
  buildTransfer,
  canonicalBytes,
  parseAmount,
  signingBytes,
  transactionId,
} from "../src/tx.js";

// Golden vectors frozen from the node's canonical serialization.
const HEI_KEY = {
  private_key: "d89c6f03549805c8b7bed5ecae59ec00c564c4143d62a24fbba116c77d57ddf1",
  public_key: "dd82697e7c47052d1b06ba58d5c4707d410c85a7aab2407f2faddd6b5e7dd17b",
};
const STUDENT_KEY = {
  private_key: "600bf3b15689580492a2acec7fa3d42975aa5d4433be0c697247ae298ef8b975",
  public_key: "523fb2c81c13e20ff51d6694aaa7981561e4315d65a5faec4ab41aae011e4c9a",
};
const SENDER = "D9LSqPVMb7aAzjedn6AhkhuxG2hgxxoSRm";
const RECIPIENT = "D6oVdJpgZsH67wxZdugkpEJGyyGQ2rA9J1";

const COURSE_TX_SIGNING =
  "010000002244394c537150564d623761417a6a65646e3641686b6875784732686778786f53526d0000002244366f56644a70675a7348363777785a6475676b70454a4779794751327241394a31000000000ee6b2800000000b756e692d6d617269626f7200000005435331303100000000000000000000000000070000000000000003";
const COURSE_TX_RAW =
  "010000002244394c537150564d623761417a6a65646e3641686b6875784732686778786f53526d0000002244366f56644a70675a7348363777785a6475676b70454a4779794751327241394a31000000000ee6b2800000000b756e692d6d617269626f72000000054353313031000000000001dd82697e7c47052d1b06ba58d5c4707d410c85a7aab2407f2faddd6b5e7dd17b6361dcc923bcbd0bb7bc0e8a6b2a17ebeb4afbea008eea29ecc037084dc981cea3ee0b33c8cd8303adc0ff0017bc7c46320cf409ba2c1387e68e49ebf12c930a00000000000000070000000000000003";
const COURSE_TX_ID = "c59a855c66346e62d118e2f8b7563d44e0ab74a696d63b584100056d3b4ca5e2";

const SCRIPT_22 =
  "0202523fb2c81c13e20ff51d6694aaa7981561e4315d65a5faec4ab41aae011e4c9add82697e7c47052d1b06ba58d5c4707d410c85a7aab2407f2faddd6b5e7dd17b";
const MULTISIG_ADDRESS = "3BYDbeDQDVCX7a6yLjPVnEmXCnKvU7mEDo";
const HALF_SIGNED_RAW =
  "0100000022334259446265445144564358376136794c6a50566e456d58436e4b7655376d45446f0000002244394c537150564d623761417a6a65646e3641686b6875784732686778786f53526d00000000009896800000000000000000000000420202523fb2c81c13e20ff51d6694aaa7981561e4315d65a5faec4ab41aae011e4c9add82697e7c47052d1b06ba58d5c4707d410c85a7aab2407f2faddd6b5e7dd17b0001523fb2c81c13e20ff51d6694aaa7981561e4315d65a5faec4ab41aae011e4c9ab7e5e9be9d34d0ce076f0fc0c29315aa3b04a5f4dda95d6203d0b1c13bd779cc83025071a9d7befb99cf39bfe137460781369ddb419db1a4da1a880f2ac9140400000000000000010000000000000000";
const HALF_SIGNED_ID = "f3cc7f2791bafcd4f5630237bb2da77e46d8bcd1c41ee27c86e18ba5e9870b0e";

describe("amount parsing", () => {
  it("handles whole, fractional and minimal amounts", () => {
    expect(parseAmount("2.5")).toBe(250_000_000n);
    expect(parseAmount("0.00235781")).toBe(235_781n);
    expect(parseAmount("60")).toBe(6_000_000_000n);
    expect(parseAmount("0.00000001")).toBe(1n);
  });

  it("rejects garbage and over-precision", () => {
    expect(() => parseAmount("0.000000001")).toThrow();
    expect(() => parseAmount("-1")).toThrow();
    expect(() => parseAmount("1e8")).toThrow();
  });
});

describe("canonical transaction bytes", () => {
  it("reproduces the node's course-transfer serialization", async () => {
    const tx = buildTransfer({
      sender: SENDER,
      recipient: RECIPIENT,
      amount: "2.5",
      heiName: "uni-maribor",
      courseId: "CS101",
      nonce: 7,
      timestamp: 3,
    });
    expect(bytesToHex(signingBytes(tx))).toBe(COURSE_TX_SIGNING);
    const signed = await appendSignature(tx, HEI_KEY);
    expect(bytesToHex(canonicalBytes(signed))).toBe(COURSE_TX_RAW);
    expect(await transactionId(signed)).toBe(COURSE_TX_ID);
  });

  it("reproduces the node's half-signed multisig round-trip", async () => {
    const tx = buildTransfer({
      sender: MULTISIG_ADDRESS,
      recipient: SENDER,
      amount: "0.1",
      redeemScriptHex: SCRIPT_22,
      nonce: 1,
      timestamp: 0,
    });
    const half = await appendSignature(tx, STUDENT_KEY);
    expect(bytesToHex(canonicalBytes(half))).toBe(HALF_SIGNED_RAW);
    expect(await transactionId(half)).toBe(HALF_SIGNED_ID);
  });
});
