#!/usr/bin/env python3
"""Bootstrap a single-delegate development node: writes a genesis file and a
node config into ./devnet/ (if missing) and serves the REST API.

The dev institution key derives from seed "uni-admin"; the matching key file
for CLI admin commands lands in devnet/admin-key.json.
"""

import json
import sys
import time
from pathlib import Path

import uvicorn

from eductx import crypto
from eductx.ledger import standard_genesis
from eductx.node import Node, NodeConfig, write_genesis_file
from eductx.service import create_app

DEV_DIR = Path("devnet")
API_PORT = 8108


def main() -> int:
    DEV_DIR.mkdir(exist_ok=True)
    admin = crypto.generate_keypair(b"uni-admin")
    genesis_path = DEV_DIR / "genesis.json"
    if not genesis_path.exists():
        write_genesis_file(genesis_path, standard_genesis([("uni-admin", admin)]))
    key_path = DEV_DIR / "admin-key.json"
    key_path.write_text(
        json.dumps(
            {
                "private_key": admin.private_key.hex(),
                "public_key": admin.public_key.hex(),
                "address": admin.address,
            },
            indent=2,
        )
    )
    config = NodeConfig(
        data_dir=str(DEV_DIR / "data"),
        genesis_path=str(genesis_path),
        active_count=1,
        secret_seed="uni-admin",
        hei_name="uni-admin",
        slot_seconds=2.0,
        genesis_unix_time=time.time(),
    )
    node = Node(config)
    node.start()
    print(f"admin address: {admin.address}", file=sys.stderr)
    print(f"admin key file: {key_path}", file=sys.stderr)
    print(f"API: http://127.0.0.1:{API_PORT}", file=sys.stderr)
    try:
        uvicorn.run(create_app(node), host="127.0.0.1", port=API_PORT, log_level="info")
    finally:
        node.stop()
    return 0


if __name__ == "__main__":
    sys.exit(main())
