"""
PSA Toolkit - Errors
Exception hierarchy shared by every module.

Each error carries a short machine-parsable `code`; the CLI prints
`error: <code>: <message>` and exits nonzero.
"""


class PSAError(Exception):
    """Base class for all toolkit errors"""
    code = 'psa-error'

    def __init__(self, message, **context):
        super().__init__(message)
        self.message = message
        self.context = context

    def __str__(self):
        return self.message


class ParameterError(PSAError):
    """Invalid or infeasible parameter combination"""
    code = 'invalid-parameters'


class PrimeSearchError(ParameterError):
    """Safe-prime or generator search ran out of attempts"""
    code = 'prime-search-exhausted'

    def __init__(self, message, attempts):
        super().__init__(message, attempts=attempts)
        self.attempts = attempts


class PlaintextRangeError(PSAError):
    """Plaintext outside {-m, ..., m} (or embedding input outside {-mn, ..., mn})"""
    code = 'plaintext-out-of-range'


class AggregateOverflowError(PSAError):
    """Decoded aggregate is not in {-mn, ..., mn} or is not in the embedding image"""
    code = 'aggregate-overflow'


class MissingCiphertextError(PSAError):
    """At least one user index has no ciphertext for the time-step"""
    code = 'missing-user-index'

    def __init__(self, missing):
        missing = sorted(missing)
        super().__init__(f"missing user index {', '.join(str(i) for i in missing)}",
                         missing=missing)
        self.missing = missing


class DuplicateCiphertextError(PSAError):
    """Two ciphertexts claim the same user index"""
    code = 'duplicate-user-index'

    def __init__(self, duplicates):
        duplicates = sorted(duplicates)
        super().__init__(f"duplicate user index {', '.join(str(i) for i in duplicates)}",
                         duplicates=duplicates)
        self.duplicates = duplicates


class TimestepMismatchError(PSAError):
    """Ciphertexts from different time-steps were mixed"""
    code = 'timestep-mismatch'


class DiscreteLogNotFoundError(PSAError):
    """No exponent in [-bound, bound] maps to the target element"""
    code = 'dlog-not-found'


class ParseError(PSAError):
    """Malformed serialized input"""
    code = 'malformed-input'

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})", offset=offset)
        self.offset = offset


class VersionMismatchError(ParseError):
    """Serialized header carries an unsupported format version"""
    code = 'version-mismatch'


class CalibrationError(PSAError):
    """Privacy parameters cannot be calibrated for the requested mechanism"""
    code = 'calibration-failed'
