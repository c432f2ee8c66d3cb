"""Exception hierarchy shared by every qrbackup module."""


class QRBackupError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(QRBackupError, ValueError):
    """An argument violates a documented precondition."""


class EntropyError(QRBackupError):
    """The randomness source failed to deliver the requested bytes."""


# -- secret sharing

class ShareError(QRBackupError, ValueError):
    pass


class InsufficientSharesError(ShareError):
    pass


class DuplicateIndexError(ShareError):
    pass


class PayloadLengthMismatchError(ShareError):
    pass


# -- crypto

class AuthenticationError(QRBackupError):
    """AEAD or sealed-box authentication failed (wrong key or tampered data)."""


class MalformedSignatureError(QRBackupError, ValueError):
    pass


class KeyFileError(QRBackupError, ValueError):
    pass


# -- bundle and armor

class BundleFormatError(QRBackupError, ValueError):
    pass


class MagicMismatchError(BundleFormatError):
    pass


class UnsupportedVersionError(BundleFormatError):
    pass


class TruncatedError(BundleFormatError):
    pass


class StructuralError(BundleFormatError):
    pass


class ArmorError(QRBackupError, ValueError):
    pass


class ChecksumMismatchError(ArmorError):
    pass


class BadHeaderError(ArmorError):
    pass


# -- protocol

class DuplicateTrusteeKeyError(ParameterError):
    pass


class SessionStateError(QRBackupError):
    pass


class SessionFinishedError(SessionStateError):
    pass


class NotReadyError(SessionStateError):
    pass


class DirectoryUnavailableError(QRBackupError):
    pass


# -- transport

class FrameError(QRBackupError, ValueError):
    pass


class FrameTruncatedError(FrameError):
    pass


class UnknownKindError(FrameError):
    pass


class OversizeFrameError(FrameError):
    pass


class UnknownPartyError(QRBackupError, KeyError):
    pass
