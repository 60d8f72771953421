"""Exception hierarchy shared across the package."""


class VerifBFLError(Exception):
    pass


class DivisionByZero(VerifBFLError, ZeroDivisionError):
    pass


class KeyTooShort(VerifBFLError):
    pass


class ShapeError(VerifBFLError):
    pass


class NotSatisfied(VerifBFLError):
    pass


class ParamMismatch(VerifBFLError):
    pass


class DecodeError(VerifBFLError):
    pass


class QuantizeOverflow(VerifBFLError):
    pass


class RangeViolation(VerifBFLError):
    """A range-checked wire fell outside its declared bit width."""


class UnsupportedArch(VerifBFLError):
    pass


class EmptyEvalSet(VerifBFLError):
    pass


class EmptyDataset(VerifBFLError):
    pass


class InvalidBudget(VerifBFLError):
    pass


class NotFound(VerifBFLError, KeyError):
    pass


class ConfigError(VerifBFLError):
    pass


class LedgerError(VerifBFLError):
    """Transaction rejected by the ledger; ``code`` is the stable reason."""

    code = "LedgerError"

    def __init__(self, message=""):
        super().__init__(message or self.code)


def _ledger_error(name):
    return type(name, (LedgerError,), {"code": name})


TaskExists = _ledger_error("TaskExists")
RewardTooLow = _ledger_error("RewardTooLow")
InsufficientFunds = _ledger_error("InsufficientFunds")
AlreadySubscribed = _ledger_error("AlreadySubscribed")
StakeTooLow = _ledger_error("StakeTooLow")
Forbidden = _ledger_error("Forbidden")
NoSuchTask = _ledger_error("NoSuchTask")
NotSubscribed = _ledger_error("NotSubscribed")
StaleRound = _ledger_error("StaleRound")
AlreadySubmitted = _ledger_error("AlreadySubmitted")
ReplayRejected = _ledger_error("ReplayRejected")
NoSuchRequest = _ledger_error("NoSuchRequest")
NotYourTurn = _ledger_error("NotYourTurn")
TaskStillRunning = _ledger_error("TaskStillRunning")
AlreadyDistributed = _ledger_error("AlreadyDistributed")
BadTransaction = _ledger_error("BadTransaction")
