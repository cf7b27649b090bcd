// View models mirroring the node's REST JSON. Token amounts stay strings
// exactly as the API renders them; the UI never does float math on them.

export interface StatusView {
  height: number;
  head: string;
  genesis: string;
  tick: number;
  pool_size: number;
  hei_name: string;
  public_key: string;
}

export interface CreditEntry {
  hei_name: string;
  course_id: string;
  amount: string;
  tx_id: string;
  height: number;
}

export interface AccountView {
  address: string;
  exists: boolean;
  balance: string;
  credits: number;
  credit_breakdown: CreditEntry[];
  hei_name: string;
  redeem_script: string;
  nonce: number;
}

export interface SignatureView {
  public_key: string;
  signature: string;
}

export interface TxView {
  id: string;
  kind: string;
  sender: string;
  recipient: string;
  amount: string;
  hei_name: string;
  course_id: string;
  redeem_script: string;
  signatures: SignatureView[];
  nonce: number;
  timestamp: number;
  height?: number;
  confirmed?: boolean;
}

export interface BlockView {
  height: number;
  hash: string;
  previous_hash: string;
  timestamp: number;
  generator_public_key: string;
  transactions: TxView[];
  signature: string;
}

export interface BlockListView {
  head_height: number;
  blocks: BlockView[];
}

export interface DelegateView {
  name: string;
  public_key: string;
  address: string;
  vote_weight: string;
  active: boolean;
}

export interface RoundView {
  round: number;
  tick: number;
  slot_length: number;
  slots: string[];
}

export type SessionPhase = string;

export interface SessionView {
  session_id: string;
  type: "join" | "register" | "verify";
  phase: SessionPhase;
  error?: string;
  // verify sessions
  balance?: string;
  credits?: number;
  credit_breakdown?: CreditEntry[];
  challenge_message?: string;
  student_public_key?: string;
  multisig_address?: string;
  // register sessions
  student_id?: string;
  fund_tx_id?: string;
  roundtrip_tx_id?: string;
}

export interface ChannelMessage {
  kind: string;
  sender_public_key: string;
  body: Record<string, unknown>;
}

export interface KeyMaterial {
  private_key: string; // hex, 32 bytes
  public_key: string; // hex, 32 bytes
  address?: string;
}

export interface WalletPacket {
  session_id: string;
  instructions: string;
  student_keys: { private_key: string; public_key: string; address: string };
  hei_public_key: string;
  redeem_script: string;
}

export interface ProofPackage {
  student_public_key: string;
  multisig_address: string;
  redeem_script: string;
}

export class ApiError extends Error {
  constructor(
    public readonly code: string,
    public readonly status: number,
    detail = "",
  ) {
    super(detail ? `${code}: ${detail}` : code);
  }
}
