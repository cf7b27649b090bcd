"""Error taxonomy shared across the platform.

Every error carries a stable machine-readable code (the class name); the
REST layer and the CLI surface codes verbatim, so renaming a class is a
breaking API change.
"""


class EductxError(Exception):
    """Base class; ``code`` is the wire-format reason string."""

    @property
    def code(self) -> str:
        return type(self).__name__


# -- crypto ------------------------------------------------------------

class InvalidSeed(EductxError):
    pass


class InvalidKey(EductxError):
    pass


class InvalidPolicy(EductxError):
    pass


class DuplicateKey(EductxError):
    pass


class InvalidAddress(EductxError):
    pass


# -- amounts -----------------------------------------------------------

class PrecisionError(EductxError):
    pass


class InvalidAmount(EductxError):
    pass


# -- transaction construction / signing ---------------------------------

class UnauthorizedSigner(EductxError):
    pass


class DuplicateSigner(EductxError):
    pass


# -- stateless/stateful transaction validation ---------------------------

class ValidationError(EductxError):
    pass


class BadTransactionId(ValidationError):
    pass


class BadNonce(ValidationError):
    pass


class BadSignature(ValidationError):
    pass


class InsufficientSignatures(ValidationError):
    pass


class InsufficientBalance(ValidationError):
    pass


class NonIntegerCredit(ValidationError):
    pass


class UnknownDelegate(ValidationError):
    pass


class DuplicateDelegateName(ValidationError):
    pass


class AlreadyRegistered(ValidationError):
    pass


class NotConsortiumMember(ValidationError):
    pass


# -- blocks and chains ----------------------------------------------------

class BlockError(EductxError):
    pass


class BrokenChainLink(BlockError):
    pass


class BadGeneratorSignature(BlockError):
    pass


class InvalidTransactionInBlock(BlockError):
    pass


class WrongSlotGenerator(BlockError):
    pass


class NoDelegates(EductxError):
    pass


# -- simulation / configuration -------------------------------------------

class ConfigError(EductxError):
    pass


# -- multi-party protocol sessions -----------------------------------------

class ProtocolError(EductxError):
    pass


class InfoRejected(ProtocolError):
    pass


class RepaymentMismatch(ProtocolError):
    pass


class RepaymentTimeout(ProtocolError):
    pass


class DuplicateStudent(ProtocolError):
    pass


class UnknownStudent(ProtocolError):
    pass


class UnknownSession(ProtocolError):
    pass


class InsufficientTreasury(ProtocolError):
    pass


class ScriptMismatch(ProtocolError):
    pass


class ChallengeSignatureInvalid(ProtocolError):
    pass


class ChallengeTimeout(ProtocolError):
    pass


# -- node service / persistence ---------------------------------------------

class CorruptStore(EductxError):
    pass


class GenesisMismatch(EductxError):
    pass


class BindError(EductxError):
    pass
