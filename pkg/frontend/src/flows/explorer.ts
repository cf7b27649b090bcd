// Explorer workflow: paginated block browsing, transaction detail, delegate
// roster, and a status poll at slot cadence (plain polling, no sockets).

import type { NodeApi } from "../api.js";
import type {
  BlockListView,
  BlockView,
  DelegateView,
  StatusView,
  TxView,
} from "../types.js";

export class ExplorerFlow {
  constructor(private readonly api: NodeApi) {}

  status(): Promise<StatusView> {
    return this.api.status();
  }

  /** Newest `limit` blocks, newest first. */
  async latestBlocks(limit = 10): Promise<BlockListView> {
    const head = (await this.api.status()).height;
    const from = Math.max(0, head - limit + 1);
    const page = await this.api.blocks(from, limit);
    page.blocks.reverse();
    return page;
  }

  blockDetail(hash: string): Promise<BlockView> {
    return this.api.block(hash);
  }

  transactionDetail(id: string): Promise<TxView> {
    return this.api.transaction(id);
  }

  async delegates(): Promise<DelegateView[]> {
    return (await this.api.delegates()).delegates;
  }

  /** Poll /status at roughly the forging cadence; returns a stop handle. */
  pollStatus(onUpdate: (status: StatusView) => void, intervalMs = 2000): () => void {
    let stopped = false;
    const loop = async () => {
      while (!stopped) {
        try {
          onUpdate(await this.api.status());
        } catch {
          // node unreachable; keep polling, the UI shows the stale state
        }
        await new Promise((resolve) => setTimeout(resolve, intervalMs));
      }
    };
    void loop();
    return () => {
      stopped = true;
    };
  }
}
