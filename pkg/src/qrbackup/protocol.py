"""Backup and recovery ceremonies.

Backup (owner only, trustees are never contacted):

1. draw a random key RK and encrypt the secret under it,
2. split RK into n shares,
3. sign each (share, instruction) pair with the owner's key,
4. seal each packet to one trustee's public key and shuffle the packets.

Recovery: the owner sends the whole packet set to each trustee they remember.
A trustee trial-unseals every packet, checks the owner's signature against the
key published in the directory, decides (as a human) whether the requester is
really the owner, and if so returns the share.  With k shares the owner
rebuilds RK and decrypts the secret.
"""

from __future__ import annotations

import enum
import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Protocol, Sequence, Union

from . import crypto
from .bundle import BackupBundle, Mode, RecoveryInstruction, SharePacketPlain, decode_bundle
from .crypto import KeyPair, PublicKey, SealedBlob, SymmetricKey
from .entropy import Randomness, shuffle, system_randomness
from .errors import (
    AuthenticationError,
    BundleFormatError,
    DirectoryUnavailableError,
    DuplicateTrusteeKeyError,
    NotReadyError,
    ParameterError,
    SessionFinishedError,
)
from .gf256 import MAX_SHARES, Share, combine, split

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrusteeDescriptor:
    """A trustee as the owner remembers them.

    ``identity_label`` is the owner's private mnemonic and never leaves the
    owner's machine.  ``directory_locator`` defaults to the label.
    """

    identity_label: str
    public_key: PublicKey
    directory_locator: Optional[str] = None

    @property
    def locator(self) -> str:
        return self.directory_locator or self.identity_label


class IdentityDirectory(Protocol):
    def lookup(self, locator: str) -> PublicKey: ...


class InMemoryDirectory:
    def __init__(self, entries: Optional[Mapping[str, PublicKey]] = None, available: bool = True):
        self.entries: dict[str, PublicKey] = dict(entries or {})
        self.available = available

    def publish(self, locator: str, key: PublicKey) -> None:
        self.entries[locator] = key

    def lookup(self, locator: str) -> PublicKey:
        if not self.available:
            raise DirectoryUnavailableError("directory offline")
        try:
            return self.entries[locator]
        except KeyError:
            raise DirectoryUnavailableError(f"no key published for {locator!r}") from None


class Verdict(str, enum.Enum):
    """Outcome of the trustee's human judgment of the requester."""

    CONFIRMED_OWNER = "confirmed_owner"
    REJECTED = "rejected"
    IGNORED = "ignored"


class RefusalReason(enum.IntEnum):
    NOT_MY_PACKET = 1
    BAD_SIGNATURE = 2
    FINGERPRINT_MISMATCH = 3
    OWNERSHIP_REJECTED = 4
    DIRECTORY_UNAVAILABLE = 5


@dataclass(frozen=True)
class ShareResponse:
    share: Share


@dataclass(frozen=True)
class Refusal:
    reason: RefusalReason


VerdictSource = Union[Verdict, str, Callable[[RecoveryInstruction], Verdict]]


class SessionState(str, enum.Enum):
    COLLECTING = "collecting"
    READY = "ready"
    FINISHED = "finished"
    ABORTED = "aborted"


@dataclass
class RecoverySession:
    bundle: BackupBundle
    collected: dict[int, Share] = field(default_factory=dict)
    state: SessionState = SessionState.COLLECTING

    @property
    def needed(self) -> int:
        return max(0, self.bundle.threshold_k - len(self.collected))


def _check_trustees(trustees: Sequence[TrusteeDescriptor], k: int) -> None:
    n = len(trustees)
    if not 1 <= k <= n <= MAX_SHARES:
        raise ParameterError(f"need 1 <= k <= n <= {MAX_SHARES}, got k={k}, n={n}")
    seen = set()
    for t in trustees:
        raw = t.public_key.to_bytes()
        if raw in seen:
            raise DuplicateTrusteeKeyError(f"trustee {t.identity_label!r} reuses another trustee's key")
        seen.add(raw)


def create_backup(owner: KeyPair, secret: bytes, trustees: Sequence[TrusteeDescriptor], k: int,
                  instruction: RecoveryInstruction, mode: Mode | str = Mode.INDIRECT_PERMISSION,
                  randomness: Randomness = system_randomness) -> BackupBundle:
    mode = Mode.parse(mode)
    if not secret:
        raise ParameterError("secret must be nonempty")
    _check_trustees(trustees, k)
    if instruction.owner_key_fingerprint != owner.public_key.fingerprint():
        raise ParameterError("instruction fingerprint does not match the owner key")

    if mode is Mode.INDIRECT_PERMISSION:
        rk = bytearray(crypto.generate_symmetric_key(randomness).key_material)
        encrypted = crypto.symmetric_encrypt(SymmetricKey(bytes(rk)), secret, randomness)
        shared_value = rk
    else:
        # shares of the secret itself; weaker, kept for comparison
        encrypted = None
        shared_value = bytearray(secret)

    shares = split(bytes(shared_value), k, len(trustees), randomness)
    blobs = []
    for trustee, share in zip(trustees, shares):
        sig = crypto.sign(owner, crypto.canonical_digest(share, instruction))
        packet = SharePacketPlain(share, instruction, sig).to_bytes()
        blobs.append(crypto.seal(trustee.public_key, packet, randomness))
    shuffle(blobs, randomness)

    # best effort; immutable bytes copies cannot be wiped
    for i in range(len(shared_value)):
        shared_value[i] = 0
    del shares

    return BackupBundle(mode, k, len(trustees), encrypted, tuple(blobs))


def renew_backup(owner: KeyPair, secret: bytes, new_trustees: Sequence[TrusteeDescriptor], k: int,
                 instruction: RecoveryInstruction, mode: Mode | str = Mode.INDIRECT_PERMISSION,
                 randomness: Randomness = system_randomness) -> BackupBundle:
    """Issue a replacement bundle with a fresh random key and fresh shares.

    The previous bundle should be destroyed once this one is stored.
    """
    return create_backup(owner, secret, new_trustees, k, instruction, mode, randomness)


def open_recovery_session(bundle: BackupBundle | bytes) -> RecoverySession:
    if isinstance(bundle, (bytes, bytearray)):
        bundle = decode_bundle(bytes(bundle))
    if not isinstance(bundle, BackupBundle):
        raise BundleFormatError("expected a BackupBundle or its encoding")
    return RecoverySession(bundle)


def _resolve_verdict(verdict: VerdictSource, instruction: RecoveryInstruction) -> Verdict:
    if callable(verdict) and not isinstance(verdict, (Verdict, str)):
        verdict = verdict(instruction)
    return Verdict(verdict)


def trustee_handle_request(trustee: KeyPair, sealed_packets: Iterable[SealedBlob],
                           directory: IdentityDirectory, verdict: VerdictSource) -> ShareResponse | Refusal:
    """Run the trustee side of one recovery request.  Never raises."""
    plain = None
    for blob in sealed_packets:
        try:
            plain = crypto.unseal(trustee, blob)
            break
        except AuthenticationError:
            continue
    if plain is None:
        return Refusal(RefusalReason.NOT_MY_PACKET)

    try:
        packet = SharePacketPlain.from_bytes(plain)
    except BundleFormatError:
        # sealed to us, but not by a well-behaved owner
        return Refusal(RefusalReason.BAD_SIGNATURE)

    try:
        owner_pk = directory.lookup(packet.instruction.directory_locator)
    except Exception as exc:  # noqa: BLE001 - any directory failure is reported the same way
        log.info("directory lookup failed: %s", exc)
        return Refusal(RefusalReason.DIRECTORY_UNAVAILABLE)

    if owner_pk.fingerprint() != packet.instruction.owner_key_fingerprint:
        return Refusal(RefusalReason.FINGERPRINT_MISMATCH)
    digest = crypto.canonical_digest(packet.share, packet.instruction)
    if not crypto.verify(owner_pk, digest, packet.signature):
        return Refusal(RefusalReason.BAD_SIGNATURE)

    try:
        decided = _resolve_verdict(verdict, packet.instruction)
    except (ValueError, TypeError):
        decided = Verdict.REJECTED
    if decided is not Verdict.CONFIRMED_OWNER:
        return Refusal(RefusalReason.OWNERSHIP_REJECTED)
    return ShareResponse(packet.share)


def absorb_response(session: RecoverySession, response: ShareResponse) -> RecoverySession:
    if session.state in (SessionState.FINISHED, SessionState.ABORTED):
        raise SessionFinishedError(f"session is {session.state.value}")
    share = response.share
    session.collected.setdefault(share.index, share)
    if len(session.collected) >= session.bundle.threshold_k:
        session.state = SessionState.READY
    return session


def finish_recovery(session: RecoverySession) -> bytes:
    """Rebuild the protected secret from the collected shares.

    In indirect-permission mode, if more than k shares were collected every
    k-subset is tried until one decrypts, so a single bad share is tolerated.
    """
    if session.state in (SessionState.FINISHED, SessionState.ABORTED):
        raise SessionFinishedError(f"session is {session.state.value}")
    if session.state is not SessionState.READY:
        raise NotReadyError(f"need {session.needed} more share(s)")

    bundle = session.bundle
    k = bundle.threshold_k
    shares = [session.collected[i] for i in sorted(session.collected)]

    if bundle.mode is Mode.INDIRECT_ESCROW:
        secret = combine(shares, k)
        session.state = SessionState.FINISHED
        return secret

    for subset in itertools.combinations(shares, k):
        try:
            rk = combine(subset, k)
            if len(rk) != crypto.KEY_SIZE:
                continue
            secret = crypto.symmetric_decrypt(SymmetricKey(rk), bundle.encrypted_secret)
        except (AuthenticationError, ValueError):
            continue
        session.state = SessionState.FINISHED
        return secret
    session.state = SessionState.ABORTED
    raise AuthenticationError("collected shares do not decrypt the backup")


@dataclass
class KeyChangeReport:
    changed: list[TrusteeDescriptor] = field(default_factory=list)
    unavailable: list[TrusteeDescriptor] = field(default_factory=list)

    def __bool__(self) -> bool:
        return bool(self.changed or self.unavailable)


def renewal_check(directory: IdentityDirectory, trustees: Iterable[TrusteeDescriptor]) -> KeyChangeReport:
    """Compare each trustee's recorded key with what the directory serves now."""
    report = KeyChangeReport()
    for t in trustees:
        try:
            current = directory.lookup(t.locator)
        except Exception as exc:  # noqa: BLE001
            log.info("lookup for %s failed: %s", t.locator, exc)
            report.unavailable.append(t)
            continue
        if current.to_bytes() != t.public_key.to_bytes():
            report.changed.append(t)
    return report
