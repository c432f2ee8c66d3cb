"""The owner-held backup artifact and its binary and printable encodings.

Binary layout (all integers big-endian)::

    "QRB1" | version u8 | mode u8 | k u16 | n u16
           | secret_len u32 | secret bytes (nonce || ciphertext, absent when 0)
           | count u16 | count x (blob_len u32 | blob bytes)

The armored form wraps the binary in Base64 lines of at most 64 characters,
followed by a ``=xxxxxxxx`` CRC-32 line, between ``-----BEGIN QR BACKUP-----``
and ``-----END QR BACKUP-----``.
"""

from __future__ import annotations

import base64
import binascii
import enum
import re
import struct
import zlib
from dataclasses import dataclass, field
from typing import Optional

from .crypto import SIGNATURE_SIZE, AEADCiphertext, SealedBlob
from .errors import (
    BadHeaderError,
    ChecksumMismatchError,
    MagicMismatchError,
    ParameterError,
    StructuralError,
    TruncatedError,
    UnsupportedVersionError,
)
from .gf256 import Share

MAGIC = b"QRB1"
FORMAT_VERSION = 1

ARMOR_HEADER = "-----BEGIN QR BACKUP-----"
ARMOR_FOOTER = "-----END QR BACKUP-----"
ARMOR_WIDTH = 64


class Mode(enum.IntEnum):
    INDIRECT_PERMISSION = 0
    INDIRECT_ESCROW = 1

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, value: "Mode | str | int") -> "Mode":
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            try:
                return cls[value.strip().upper().replace("-", "_")]
            except KeyError:
                raise ParameterError(f"unknown mode {value!r}") from None
        return cls(value)


class VerificationPolicy(str, enum.Enum):
    IN_PERSON = "in_person"
    LIVE_VIDEO = "live_video"
    VOICE_CALL = "voice_call"
    ANY = "any"


def _lp(data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + data


class _Reader:
    def __init__(self, data: bytes, what: str = "bundle"):
        self.data = memoryview(data)
        self.pos = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedError(f"{self.what} truncated at offset {self.pos} (wanted {n} more bytes)")
        out = bytes(self.data[self.pos:self.pos + n])
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def lp(self) -> bytes:
        return self.take(self.u32())

    def done(self) -> bool:
        return self.pos == len(self.data)


@dataclass(frozen=True)
class RecoveryInstruction:
    """What every trustee learns when they open their packet."""

    owner_display_name: str
    owner_key_fingerprint: str
    directory_locator: str
    verification_policy: VerificationPolicy = VerificationPolicy.ANY
    legal_agent: Optional[str] = None
    freeform_note: str = ""

    def __post_init__(self):
        object.__setattr__(self, "verification_policy", VerificationPolicy(self.verification_policy))
        if not re.fullmatch(r"[0-9a-f]{16}", self.owner_key_fingerprint):
            raise ParameterError("owner_key_fingerprint must be 16 lowercase hex characters")
        if self.legal_agent == "":
            object.__setattr__(self, "legal_agent", None)

    def canonical_bytes(self) -> bytes:
        fields = (
            self.owner_display_name,
            self.owner_key_fingerprint,
            self.directory_locator,
            self.verification_policy.value,
            self.legal_agent or "",
            self.freeform_note,
        )
        return b"".join(_lp(f.encode("utf-8")) for f in fields)

    @classmethod
    def from_canonical_bytes(cls, data: bytes) -> "RecoveryInstruction":
        r = _Reader(data, "instruction")
        try:
            values = [r.lp().decode("utf-8") for _ in range(6)]
        except UnicodeDecodeError as exc:
            raise StructuralError("instruction field is not UTF-8") from exc
        if not r.done():
            raise StructuralError("trailing bytes after instruction")
        try:
            return cls(*values)
        except ValueError as exc:
            raise StructuralError(str(exc)) from exc


@dataclass(frozen=True)
class SharePacketPlain:
    """Plaintext of one sealed packet: share, instruction and owner signature."""

    share: Share
    instruction: RecoveryInstruction
    signature: bytes

    def to_bytes(self) -> bytes:
        return _lp(self.share.to_bytes()) + _lp(self.instruction.canonical_bytes()) + _lp(self.signature)

    @classmethod
    def from_bytes(cls, data: bytes) -> "SharePacketPlain":
        r = _Reader(data, "packet")
        share_raw = r.lp()
        instr_raw = r.lp()
        sig = r.lp()
        if not r.done():
            raise StructuralError("trailing bytes after packet")
        if len(sig) != SIGNATURE_SIZE:
            raise StructuralError("packet signature has wrong length")
        try:
            share = Share.from_bytes(share_raw)
        except ValueError as exc:
            raise StructuralError(str(exc)) from exc
        return cls(share, RecoveryInstruction.from_canonical_bytes(instr_raw), sig)


@dataclass(frozen=True)
class BackupBundle:
    mode: Mode
    threshold_k: int
    trustee_count_n: int
    encrypted_secret: Optional[AEADCiphertext]
    sealed_packets: tuple[SealedBlob, ...] = field(default_factory=tuple)
    version: int = FORMAT_VERSION

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode.parse(self.mode))
        object.__setattr__(self, "sealed_packets", tuple(self.sealed_packets))
        if not 1 <= self.threshold_k <= self.trustee_count_n:
            raise StructuralError(f"need 1 <= k <= n, got k={self.threshold_k}, n={self.trustee_count_n}")
        if len(self.sealed_packets) != self.trustee_count_n:
            raise StructuralError(f"n={self.trustee_count_n} but {len(self.sealed_packets)} packets")
        if (self.mode is Mode.INDIRECT_PERMISSION) != (self.encrypted_secret is not None):
            raise StructuralError(f"mode {self.mode.label} inconsistent with encrypted secret presence")


def encode_bundle(b: BackupBundle) -> bytes:
    out = bytearray(MAGIC)
    out += struct.pack(">BBHH", b.version, int(b.mode), b.threshold_k, b.trustee_count_n)
    out += _lp(b.encrypted_secret.to_bytes() if b.encrypted_secret is not None else b"")
    out += struct.pack(">H", len(b.sealed_packets))
    for blob in b.sealed_packets:
        out += _lp(blob.to_bytes())
    return bytes(out)


def decode_bundle(data: bytes) -> BackupBundle:
    r = _Reader(data)
    if r.take(len(MAGIC)) != MAGIC:
        raise MagicMismatchError("not a QR backup bundle")
    version = r.u8()
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"bundle version {version} is not supported")
    mode_raw = r.u8()
    try:
        mode = Mode(mode_raw)
    except ValueError:
        raise StructuralError(f"unknown mode byte {mode_raw}") from None
    k, n = r.u16(), r.u16()
    secret_raw = r.lp()
    try:
        encrypted = AEADCiphertext.from_bytes(secret_raw) if secret_raw else None
    except ValueError as exc:
        raise StructuralError(str(exc)) from exc
    count = r.u16()
    blobs = []
    for _ in range(count):
        try:
            blobs.append(SealedBlob.from_bytes(r.lp()))
        except ParameterError as exc:
            raise StructuralError(str(exc)) from exc
    if not r.done():
        raise StructuralError("trailing bytes after bundle")
    return BackupBundle(mode, k, n, encrypted, tuple(blobs), version)


def load_bundle(data: bytes) -> BackupBundle:
    """Decode either the binary or the armored form."""
    stripped = data.lstrip()
    if stripped.startswith(ARMOR_HEADER.encode("ascii")):
        return decode_bundle(dearmor(stripped.decode("ascii", errors="replace")))
    return decode_bundle(data)


def armor(data: bytes) -> str:
    body = base64.b64encode(data).decode("ascii")
    lines = [body[i:i + ARMOR_WIDTH] for i in range(0, len(body), ARMOR_WIDTH)]
    crc = f"={zlib.crc32(data) & 0xFFFFFFFF:08x}"
    return "\n".join([ARMOR_HEADER, *lines, crc, ARMOR_FOOTER]) + "\n"


_CRC_LINE = re.compile(r"=[0-9a-f]{8}")


def dearmor(text: str) -> bytes:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines or lines[0] != ARMOR_HEADER:
        raise BadHeaderError("missing BEGIN QR BACKUP line")
    if lines[-1] != ARMOR_FOOTER:
        raise BadHeaderError("missing END QR BACKUP line")
    inner = lines[1:-1]
    if not inner or not _CRC_LINE.fullmatch(inner[-1]):
        raise ChecksumMismatchError("missing or malformed checksum line")
    expected = int(inner[-1][1:], 16)
    body = "".join("".join(inner[:-1]).split())
    try:
        data = base64.b64decode(body, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise ChecksumMismatchError("armor body is not valid base64") from exc
    # non-canonical padding bits would otherwise slip past the CRC
    if base64.b64encode(data).decode("ascii") != body:
        raise ChecksumMismatchError("armor body is not canonical base64")
    if zlib.crc32(data) & 0xFFFFFFFF != expected:
        raise ChecksumMismatchError("armor checksum mismatch")
    return data
