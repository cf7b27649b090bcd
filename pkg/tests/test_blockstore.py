import pytest

from eductx import crypto
from eductx.blockstore import MAGIC, BlockStore, encode_records
from eductx.errors import CorruptStore
from eductx.ledger import build_block, make_genesis, replay_blocks, standard_genesis

HEI = crypto.generate_keypair(b"genesis-hei")


def build_chain(n):
    config = standard_genesis([("uni-maribor", HEI)])
    genesis_block, genesis_state = make_genesis(config)
    blocks = []
    parent, state = genesis_block, genesis_state
    for tick in range(1, n + 1):
        block, state = build_block(parent, state, [], HEI, timestamp=tick)
        blocks.append(block)
        parent = block
    return genesis_block, genesis_state, blocks


def test_append_and_reload(tmp_path):
    genesis_block, genesis_state, blocks = build_chain(5)
    store = BlockStore(tmp_path / "chain.dat")
    for block in blocks:
        store.append(block)
    store.close()

    reopened = BlockStore(tmp_path / "chain.dat")
    loaded = reopened.load()
    assert [b.block_hash for b in loaded] == [b.block_hash for b in blocks]
    state = replay_blocks(genesis_block, genesis_state, loaded)
    assert state.state_hash() == replay_blocks(genesis_block, genesis_state, blocks).state_hash()


def test_encode_matches_store_file(tmp_path):
    _, _, blocks = build_chain(3)
    store = BlockStore(tmp_path / "chain.dat")
    for block in blocks:
        store.append(block)
    store.close()
    assert (tmp_path / "chain.dat").read_bytes() == encode_records(blocks)


def test_torn_tail_recovers(tmp_path):
    _, _, blocks = build_chain(4)
    path = tmp_path / "chain.dat"
    store = BlockStore(path)
    for block in blocks:
        store.append(block)
    store.close()
    raw = path.read_bytes()
    path.write_bytes(raw[:-7])  # crash mid-record

    reopened = BlockStore(path)
    loaded = reopened.load()
    assert len(loaded) == 3
    assert loaded[-1].block_hash == blocks[2].block_hash
    # the torn bytes are gone; appending resumes cleanly
    reopened.append(blocks[3])
    assert reopened.load()[-1].block_hash == blocks[3].block_hash


def test_every_truncation_point_loads(tmp_path):
    _, _, blocks = build_chain(3)
    path = tmp_path / "chain.dat"
    BlockStore(path).close()
    full = encode_records(blocks)
    for cut in range(len(MAGIC), len(full)):
        path.write_bytes(full[:cut])
        loaded = BlockStore(path).load()
        assert 0 <= len(loaded) <= 3
        for i, block in enumerate(loaded):
            assert block.block_hash == blocks[i].block_hash


def test_bad_magic(tmp_path):
    path = tmp_path / "chain.dat"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 10)
    with pytest.raises(CorruptStore):
        BlockStore(path).load()


def test_rollback(tmp_path):
    _, _, blocks = build_chain(5)
    store = BlockStore(tmp_path / "chain.dat")
    for block in blocks:
        store.append(block)
    store.load()
    store.rollback(2)
    assert store.height == 2
    loaded = store.load()
    assert len(loaded) == 2
    store.append(blocks[2])
    assert store.load()[-1].block_hash == blocks[2].block_hash
