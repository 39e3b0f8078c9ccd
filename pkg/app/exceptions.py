"""
Exceptions - Các lỗi của giao thức CSUM

Protocol rejections are NOT exceptions: the CubeSat returns a failed
UpdateReport. Everything here is a setup, storage, usage or plumbing error.
"""


class CsumError(Exception):
    """Lỗi gốc cho toàn bộ ứng dụng"""


class SetupError(CsumError):
    """Randomness source unavailable or chain setup impossible"""


class InvalidLengthError(CsumError):
    """Chain length n < 2, or a value with the wrong byte length"""


class ChainExhaustedError(CsumError):
    """No unissued chain elements remain; the satellite must be re-anchored"""

    def __init__(self, chain_id_hex: str = ""):
        self.chain_id_hex = chain_id_hex
        message = "Chain exhausted"
        if chain_id_hex:
            message += f": {chain_id_hex}"
        super().__init__(message + " (re-anchor required)")


class InvalidTokenPairError(CsumError):
    """h(AT_curr) != AT_prev"""

    def __init__(self):
        super().__init__("Invalid AT_curr and AT_prev combination")


class IntegrityError(CsumError):
    """Chain or state file failed magic, length, link or checksum validation"""


class DecodeError(CsumError):
    """Bundle bytes could not be parsed"""


class BundleSizeError(CsumError):
    """Payload does not fit the 32-bit length field"""


class UnknownChainError(CsumError):
    """chain_id not present in the administrator registry"""


class ConfigurationError(CsumError):
    """Scenario / benchmark config malformed"""


class StateLockedError(CsumError):
    """Another process holds the exclusive lock on a chain or state file"""


class PendingBundleError(CsumError):
    """A bundle for this chain is still unacknowledged"""

    def __init__(self, chain_id_hex: str, ordinal: int):
        self.chain_id_hex = chain_id_hex
        self.ordinal = ordinal
        super().__init__(
            f"Update #{ordinal} on {chain_id_hex} is not acknowledged yet "
            f"(acknowledge or retransmit it first)")
