"""Message framing, an in-memory network for tests, and a TCP carrier.

Frame: ``length u32 BE | kind u8 | body`` where ``length`` counts the kind byte
and the body.  Frames larger than 16 MiB are rejected.

No encryption is added here.  Requests carry packets that are already sealed;
responses carry a share the trustee chose to release.  A real deployment must
run the socket carrier inside an authenticated, encrypted channel.
"""

from __future__ import annotations

import enum
import random
import socket
import socketserver
import struct
import threading
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Sequence

from .crypto import KeyPair, PublicKey, SealedBlob
from .errors import (
    DirectoryUnavailableError,
    FrameTruncatedError,
    OversizeFrameError,
    ParameterError,
    UnknownKindError,
    UnknownPartyError,
)
from .gf256 import Share
from .protocol import (
    IdentityDirectory,
    Refusal,
    RefusalReason,
    ShareResponse,
    VerdictSource,
    trustee_handle_request,
)

MAX_FRAME = 16 * 1024 * 1024
_HEADER = struct.Struct(">I")


class Kind(enum.IntEnum):
    RECOVERY_REQUEST = 1
    SHARE_RESPONSE = 2
    REFUSAL = 3
    DIRECTORY_LOOKUP = 4
    DIRECTORY_REPLY = 5


@dataclass(frozen=True)
class Message:
    kind: Kind
    body: bytes = b""

    # constructors

    @classmethod
    def recovery_request(cls, blobs: Sequence[SealedBlob]) -> "Message":
        parts = [struct.pack(">H", len(blobs))]
        for b in blobs:
            raw = b.to_bytes()
            parts.append(struct.pack(">I", len(raw)) + raw)
        return cls(Kind.RECOVERY_REQUEST, b"".join(parts))

    @classmethod
    def share_response(cls, share: Share) -> "Message":
        return cls(Kind.SHARE_RESPONSE, share.to_bytes())

    @classmethod
    def refusal(cls, reason: RefusalReason) -> "Message":
        return cls(Kind.REFUSAL, bytes([int(reason)]))

    @classmethod
    def directory_lookup(cls, locator: str) -> "Message":
        return cls(Kind.DIRECTORY_LOOKUP, locator.encode("utf-8"))

    @classmethod
    def directory_reply(cls, key: Optional[PublicKey]) -> "Message":
        return cls(Kind.DIRECTORY_REPLY, key.to_bytes() if key is not None else b"")

    @classmethod
    def from_result(cls, result: ShareResponse | Refusal) -> "Message":
        if isinstance(result, ShareResponse):
            return cls.share_response(result.share)
        return cls.refusal(result.reason)

    # accessors

    def sealed_packets(self) -> list[SealedBlob]:
        self._expect(Kind.RECOVERY_REQUEST)
        body = self.body
        if len(body) < 2:
            raise FrameTruncatedError("recovery request body truncated")
        (count,) = struct.unpack(">H", body[:2])
        pos, blobs = 2, []
        for _ in range(count):
            if pos + 4 > len(body):
                raise FrameTruncatedError("recovery request body truncated")
            (ln,) = _HEADER.unpack(body[pos:pos + 4])
            pos += 4
            if pos + ln > len(body):
                raise FrameTruncatedError("recovery request body truncated")
            blobs.append(SealedBlob.from_bytes(body[pos:pos + ln]))
            pos += ln
        if pos != len(body):
            raise ParameterError("trailing bytes in recovery request")
        return blobs

    def result(self) -> ShareResponse | Refusal:
        if self.kind is Kind.SHARE_RESPONSE:
            return ShareResponse(Share.from_bytes(self.body))
        self._expect(Kind.REFUSAL)
        if len(self.body) != 1:
            raise ParameterError("refusal body must be one byte")
        return Refusal(RefusalReason(self.body[0]))

    def locator(self) -> str:
        self._expect(Kind.DIRECTORY_LOOKUP)
        return self.body.decode("utf-8")

    def public_key(self) -> Optional[PublicKey]:
        self._expect(Kind.DIRECTORY_REPLY)
        return PublicKey.from_bytes(self.body) if self.body else None

    def _expect(self, kind: Kind) -> None:
        if self.kind is not kind:
            raise ParameterError(f"expected {kind.name} message, got {self.kind.name}")


def encode_frame(m: Message) -> bytes:
    length = 1 + len(m.body)
    if length > MAX_FRAME:
        raise OversizeFrameError(f"frame of {length} bytes exceeds {MAX_FRAME}")
    return _HEADER.pack(length) + bytes([int(m.kind)]) + m.body


def _parse_one(data: bytes | memoryview, pos: int) -> tuple[Message, int]:
    if len(data) - pos < 4:
        raise FrameTruncatedError("frame header truncated")
    (length,) = _HEADER.unpack(bytes(data[pos:pos + 4]))
    if length > MAX_FRAME:
        raise OversizeFrameError(f"declared frame length {length} exceeds {MAX_FRAME}")
    if length < 1:
        raise FrameTruncatedError("frame has no kind byte")
    end = pos + 4 + length
    if end > len(data):
        raise FrameTruncatedError(f"frame declares {length} bytes, {len(data) - pos - 4} present")
    try:
        kind = Kind(data[pos + 4])
    except ValueError:
        raise UnknownKindError(f"unknown message kind {data[pos + 4]}") from None
    return Message(kind, bytes(data[pos + 5:end])), end


def decode_frame(data: bytes) -> Message:
    """Decode exactly one frame."""
    msg, end = _parse_one(data, 0)
    if end != len(data):
        raise ParameterError("trailing bytes after frame")
    return msg


def iter_frames(data: bytes) -> Iterator[Message]:
    """Decode a concatenation of frames."""
    pos = 0
    while pos < len(data):
        msg, pos = _parse_one(data, pos)
        yield msg


class FrameBuffer:
    """Incremental decoder for a byte stream."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, chunk: bytes) -> list[Message]:
        self._buf += chunk
        out = []
        while True:
            try:
                msg, end = _parse_one(self._buf, 0)
            except FrameTruncatedError:
                break
            del self._buf[:end]
            out.append(msg)
        return out

    @property
    def pending(self) -> int:
        return len(self._buf)


# -- simulated network

class DeliveryResult(str, enum.Enum):
    DELIVERED = "delivered"
    DROPPED = "dropped"


Handler = Callable[[str, Message], Optional[Message]]


class SimulatedNetwork:
    """Reliable in-order in-memory network.

    A party registered with a ``handler`` acts as a service: each message it
    receives is passed to the handler and any returned message is delivered
    back to the sender.  Other parties read their inbox with :meth:`receive`.

    ``drop_rate`` and ``delay`` default to a perfect channel.  Delayed messages
    become visible after :meth:`tick` advances the clock far enough.
    """

    def __init__(self, drop_rate: float = 0.0, delay: int = 0, seed: int = 0):
        if not 0.0 <= drop_rate <= 1.0:
            raise ParameterError("drop_rate must be in [0, 1]")
        if delay < 0:
            raise ParameterError("delay must be non-negative")
        self.drop_rate = drop_rate
        self.delay = delay
        self._rng = random.Random(seed)
        self._clock = 0
        self._inboxes: dict[str, deque[tuple[int, str, bytes]]] = {}
        self._handlers: dict[str, Handler] = {}
        self._lock = threading.RLock()

    def register(self, party: str, handler: Optional[Handler] = None) -> None:
        with self._lock:
            self._inboxes.setdefault(party, deque())
            if handler is not None:
                self._handlers[party] = handler

    def _check(self, party: str) -> None:
        if party not in self._inboxes:
            raise UnknownPartyError(party)

    def deliver(self, sender: str, recipient: str, m: Message) -> DeliveryResult:
        with self._lock:
            self._check(sender)
            self._check(recipient)
            if self.drop_rate and self._rng.random() < self.drop_rate:
                return DeliveryResult.DROPPED
            self._inboxes[recipient].append((self._clock + self.delay, sender, encode_frame(m)))
        self._dispatch()
        return DeliveryResult.DELIVERED

    def _pop_released(self, party: str) -> Optional[tuple[str, Message]]:
        with self._lock:
            box = self._inboxes[party]
            if box and box[0][0] <= self._clock:
                _, sender, frame = box.popleft()
                return sender, decode_frame(frame)
        return None

    def _dispatch(self) -> None:
        progressed = True
        while progressed:
            progressed = False
            for party, handler in list(self._handlers.items()):
                item = self._pop_released(party)
                if item is None:
                    continue
                progressed = True
                sender, msg = item
                reply = handler(sender, msg)
                if reply is not None:
                    self.deliver(party, sender, reply)

    def receive(self, party: str) -> Optional[tuple[str, Message]]:
        """Next released ``(sender, message)`` in ``party``'s inbox, or None."""
        self._check(party)
        return self._pop_released(party)

    def inbox_size(self, party: str) -> int:
        self._check(party)
        with self._lock:
            return len(self._inboxes[party])

    def tick(self, steps: int = 1) -> None:
        with self._lock:
            self._clock += steps
        self._dispatch()


def directory_handler(lookup: Callable[[str], Optional[PublicKey]]) -> Handler:
    """Service handler answering DIRECTORY_LOOKUP messages."""

    def handle(sender: str, msg: Message) -> Optional[Message]:
        if msg.kind is not Kind.DIRECTORY_LOOKUP:
            return None
        try:
            key = lookup(msg.locator())
        except Exception:  # noqa: BLE001 - unknown locator answers with an empty reply
            key = None
        return Message.directory_reply(key)

    return handle


def trustee_handler(trustee: KeyPair, directory: IdentityDirectory, verdict: VerdictSource) -> Handler:
    """Service handler answering RECOVERY_REQUEST messages as ``trustee``."""

    def handle(sender: str, msg: Message) -> Optional[Message]:
        if msg.kind is not Kind.RECOVERY_REQUEST:
            return None
        try:
            blobs = msg.sealed_packets()
        except ValueError:
            return Message.refusal(RefusalReason.NOT_MY_PACKET)
        return Message.from_result(trustee_handle_request(trustee, blobs, directory, verdict))

    return handle


class NetworkDirectory:
    """IdentityDirectory client that asks a directory party on a SimulatedNetwork."""

    def __init__(self, network: SimulatedNetwork, client_id: str, directory_id: str):
        self.network = network
        self.client_id = client_id
        self.directory_id = directory_id
        network.register(client_id)

    def lookup(self, locator: str) -> PublicKey:
        if self.network.deliver(self.client_id, self.directory_id, Message.directory_lookup(locator)) \
                is DeliveryResult.DROPPED:
            raise DirectoryUnavailableError("lookup dropped")
        item = self.network.receive(self.client_id)
        if item is None:
            raise DirectoryUnavailableError("no reply from directory")
        key = item[1].public_key()
        if key is None:
            raise DirectoryUnavailableError(f"no key published for {locator!r}")
        return key


# -- socket carrier

def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise FrameTruncatedError("connection closed mid-frame")
        buf += chunk
    return bytes(buf)


def read_frame(sock: socket.socket) -> Message:
    header = _recv_exact(sock, 4)
    (length,) = _HEADER.unpack(header)
    if length > MAX_FRAME:
        raise OversizeFrameError(f"declared frame length {length} exceeds {MAX_FRAME}")
    return decode_frame(header + _recv_exact(sock, length))


def send_request(host: str, port: int, m: Message, timeout: float = 10.0) -> Message:
    """One request/response exchange over a fresh TCP connection."""
    with socket.create_connection((host, port), timeout=timeout) as sock:
        sock.sendall(encode_frame(m))
        return read_frame(sock)


def make_server(handler: Handler, host: str = "127.0.0.1", port: int = 0,
                threaded: bool = True) -> socketserver.TCPServer:
    """TCP server answering one framed request per connection.

    Call ``serve_forever()`` on the result; ``server_address`` gives the bound port.
    With ``threaded=False`` each ``handle_request()`` call finishes the exchange
    before returning.
    """

    class _Handler(socketserver.BaseRequestHandler):
        def handle(self):
            try:
                msg = read_frame(self.request)
            except (ValueError, OSError):
                return
            reply = handler(f"{self.client_address[0]}:{self.client_address[1]}", msg)
            if reply is not None:
                self.request.sendall(encode_frame(reply))

    base = socketserver.ThreadingTCPServer if threaded else socketserver.TCPServer

    class _Server(base):
        allow_reuse_address = True
        daemon_threads = True

    return _Server((host, port), _Handler)


class RemoteDirectory:
    """IdentityDirectory client speaking the frame protocol over TCP."""

    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self.host, self.port, self.timeout = host, port, timeout

    def lookup(self, locator: str) -> PublicKey:
        try:
            reply = send_request(self.host, self.port, Message.directory_lookup(locator), self.timeout)
        except OSError as exc:
            raise DirectoryUnavailableError(f"cannot reach directory at {self.host}:{self.port}: {exc}") from exc
        key = reply.public_key()
        if key is None:
            raise DirectoryUnavailableError(f"no key published for {locator!r}")
        return key
