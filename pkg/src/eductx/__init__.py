"""EduCTX: a consortium blockchain for academic credit transfer.

Token ledger with 2-of-2 student addresses, zero-reward delegated forging,
a deterministic network simulator, the four multi-party credential
protocols, a REST node service and a CLI wallet.
"""

__version__ = "0.1.0"
