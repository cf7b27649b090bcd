import pytest

from eductx import crypto
from eductx.ledger import make_genesis, standard_genesis

ACCEPTANCE_MODULE = "test_acceptance"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One line per acceptance criterion at the end of the run."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(report, "nodeid", "")
            if ACCEPTANCE_MODULE in nodeid and getattr(report, "when", "call") == "call":
                lines.append((nodeid.split("::")[-1], outcome.upper()))
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, outcome in sorted(lines):
            terminalreporter.write_line(f"[{outcome:>6}] {name}")


@pytest.fixture
def hei_keypair():
    return crypto.generate_keypair(b"genesis-hei")


@pytest.fixture
def single_hei_chain(hei_keypair):
    """Genesis with one member HEI holding the whole premine."""
    config = standard_genesis([("uni-maribor", hei_keypair)])
    genesis_block, genesis_state = make_genesis(config)
    return config, genesis_block, genesis_state
