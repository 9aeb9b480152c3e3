"""Binary wire protocol between bots, the CNC, and the dashboard API.

Framing (all integers big-endian):

    offset 0   u8   version (currently 1)
    offset 1   u8   variant tag
    offset 2   u32  payload length
    offset 6   ...  payload, fields in fixed order

Strings are a u16 byte length followed by UTF-8 bytes. Device ids are u64.
The encoding is canonical: a well-formed message has exactly one byte form,
and ``decode`` rejects anything that is not the canonical form of some
message, naming the first offending byte offset. This makes the codec safe
to fuzz: any successful decode re-encodes to the input bytes.

Snapshots additionally carry a JSON text form (fixed key order) for the
dashboard; the binary form stays authoritative for bot/CNC traffic.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import Iterator, Optional, Tuple, Union

from .domain import Credentials, DeviceId, MAX_CREDENTIAL_BYTES

VERSION = 1

# Default keep-alive cadence; loss is declared after the multiplier's worth
# of silent periods. Parameters, not constants: config may override.
KEEPALIVE_PERIOD = 5.0
KEEPALIVE_LOSS_MULTIPLIER = 3

U8_MAX = 0xFF
U16_MAX = 0xFFFF
U32_MAX = 0xFFFFFFFF
U64_MAX = 0xFFFFFFFFFFFFFFFF


class Tag(enum.IntEnum):
    VULN_REPORT = 1
    KEEP_ALIVE = 2
    REBOOT_NOTICE = 3
    LOAD_COMMAND = 4
    CONTROL_COMMAND = 5
    SUBMISSION = 6
    STATS_SNAPSHOT = 7


class ControlAction(enum.IntEnum):
    SHUTDOWN_ALL = 0
    RELEASE_DEVICE = 1


class DecodeErrorKind(enum.IntEnum):
    TRUNCATED = 0
    UNKNOWN_VARIANT = 1
    FIELD_OUT_OF_RANGE = 2


class DecodeError(Exception):
    def __init__(self, kind: DecodeErrorKind, offset: int, detail: str = ""):
        self.kind = kind
        self.offset = offset
        self.detail = detail
        super().__init__(f"{kind.name} at offset {offset}" + (f": {detail}" if detail else ""))


@dataclass(frozen=True)
class VulnReport:
    """Scanner -> Reporter: a weak device was found. ``reporter`` is None when
    the CNC-side seed scanner found it rather than an infected host."""

    reporter: Optional[DeviceId]
    target: DeviceId
    credentials: Credentials


@dataclass(frozen=True)
class KeepAlive:
    bot_device: DeviceId
    seq: int


@dataclass(frozen=True)
class RebootNotice:
    bot_device: DeviceId


@dataclass(frozen=True)
class LoadCommand:
    target: DeviceId
    payload_version: int


@dataclass(frozen=True)
class ControlCommand:
    action: ControlAction
    device: Optional[DeviceId] = None

    def __post_init__(self):
        if (self.action is ControlAction.RELEASE_DEVICE) != (self.device is not None):
            raise ValueError("device is present iff action is RELEASE_DEVICE")


@dataclass(frozen=True)
class SubmissionMsg:
    credentials_batch: Tuple[Credentials, ...]
    submitter: str


@dataclass(frozen=True)
class StatsSnapshot:
    """Per-state device counts at one sampling instant. Time is integer
    microseconds so the binary round-trip is exact."""

    sim_time_us: int
    vulnerable: int
    infected_black: int
    infected_white: int
    secured_temp: int
    secured_perm: int
    live_bots: int

    def to_json_obj(self) -> dict:
        # Fixed key order: this is the dashboard contract.
        return {
            "sim_time": self.sim_time_us / 1e6,
            "vulnerable": self.vulnerable,
            "infected_black": self.infected_black,
            "infected_white": self.infected_white,
            "secured_temp": self.secured_temp,
            "secured_perm": self.secured_perm,
            "live_bots": self.live_bots,
        }

    def total_devices(self) -> int:
        return (
            self.vulnerable
            + self.infected_black
            + self.infected_white
            + self.secured_temp
            + self.secured_perm
        )


ProtocolMessage = Union[
    VulnReport,
    KeepAlive,
    RebootNotice,
    LoadCommand,
    ControlCommand,
    SubmissionMsg,
    StatsSnapshot,
]

SHUTDOWN_ALL = ControlCommand(ControlAction.SHUTDOWN_ALL)


def release_device(device: DeviceId) -> ControlCommand:
    return ControlCommand(ControlAction.RELEASE_DEVICE, device)


class _Writer:
    def __init__(self):
        self.parts = []

    def u8(self, v: int):
        self.parts.append(struct.pack(">B", v))

    def u16(self, v: int):
        self.parts.append(struct.pack(">H", v))

    def u32(self, v: int):
        self.parts.append(struct.pack(">I", v))

    def u64(self, v: int):
        self.parts.append(struct.pack(">Q", v))

    def string(self, s: str):
        raw = s.encode("utf-8")
        if len(raw) > U16_MAX:
            raise ValueError("string too long for wire format")
        self.u16(len(raw))
        self.parts.append(raw)

    def credentials(self, c: Credentials):
        self.string(c.username)
        self.string(c.password)

    def bytes(self) -> bytes:
        return b"".join(self.parts)


class _Reader:
    """Cursor over one frame's payload; every read names its offset on error."""

    def __init__(self, buf: bytes, base_offset: int):
        self.buf = buf
        self.pos = 0
        self.base = base_offset

    @property
    def offset(self) -> int:
        return self.base + self.pos

    def _take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise DecodeError(DecodeErrorKind.TRUNCATED, self.offset, f"need {n} bytes")
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return self._take(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self._take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self._take(8))[0]

    def string(self, max_bytes: int = U16_MAX, min_bytes: int = 0) -> str:
        start = self.offset
        n = self.u16()
        if n > max_bytes or n < min_bytes:
            raise DecodeError(
                DecodeErrorKind.FIELD_OUT_OF_RANGE, start, f"string length {n}"
            )
        raw = self._take(n)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError(
                DecodeErrorKind.FIELD_OUT_OF_RANGE, start + 2 + exc.start, "invalid UTF-8"
            ) from None

    def credentials(self) -> Credentials:
        username = self.string(max_bytes=MAX_CREDENTIAL_BYTES, min_bytes=1)
        password = self.string(max_bytes=MAX_CREDENTIAL_BYTES, min_bytes=1)
        return Credentials(username, password)

    def done(self):
        if self.pos != len(self.buf):
            raise DecodeError(
                DecodeErrorKind.FIELD_OUT_OF_RANGE, self.offset, "trailing payload bytes"
            )


def _encode_payload(msg: ProtocolMessage) -> Tuple[Tag, bytes]:
    w = _Writer()
    if isinstance(msg, VulnReport):
        if msg.reporter is None:
            w.u8(0)
        else:
            w.u8(1)
            w.u64(msg.reporter)
        w.u64(msg.target)
        w.credentials(msg.credentials)
        return Tag.VULN_REPORT, w.bytes()
    if isinstance(msg, KeepAlive):
        w.u64(msg.bot_device)
        w.u64(msg.seq)
        return Tag.KEEP_ALIVE, w.bytes()
    if isinstance(msg, RebootNotice):
        w.u64(msg.bot_device)
        return Tag.REBOOT_NOTICE, w.bytes()
    if isinstance(msg, LoadCommand):
        w.u64(msg.target)
        w.u32(msg.payload_version)
        return Tag.LOAD_COMMAND, w.bytes()
    if isinstance(msg, ControlCommand):
        w.u8(int(msg.action))
        if msg.action is ControlAction.RELEASE_DEVICE:
            w.u64(msg.device)
        return Tag.CONTROL_COMMAND, w.bytes()
    if isinstance(msg, SubmissionMsg):
        w.string(msg.submitter)
        if len(msg.credentials_batch) > U16_MAX:
            raise ValueError("submission batch too large")
        w.u16(len(msg.credentials_batch))
        for cred in msg.credentials_batch:
            w.credentials(cred)
        return Tag.SUBMISSION, w.bytes()
    if isinstance(msg, StatsSnapshot):
        w.u64(msg.sim_time_us)
        for count in (
            msg.vulnerable,
            msg.infected_black,
            msg.infected_white,
            msg.secured_temp,
            msg.secured_perm,
            msg.live_bots,
        ):
            w.u32(count)
        return Tag.STATS_SNAPSHOT, w.bytes()
    raise TypeError(f"not a protocol message: {msg!r}")


def encode(msg: ProtocolMessage) -> bytes:
    """Canonical byte form of a message. Same message, same bytes."""
    tag, payload = _encode_payload(msg)
    return struct.pack(">BBI", VERSION, int(tag), len(payload)) + payload


def _decode_payload(tag: int, r: _Reader) -> ProtocolMessage:
    if tag == Tag.VULN_REPORT:
        flag_off = r.offset
        flag = r.u8()
        if flag > 1:
            raise DecodeError(DecodeErrorKind.FIELD_OUT_OF_RANGE, flag_off, "reporter flag")
        reporter = r.u64() if flag else None
        target = r.u64()
        creds = r.credentials()
        return VulnReport(reporter, target, creds)
    if tag == Tag.KEEP_ALIVE:
        return KeepAlive(r.u64(), r.u64())
    if tag == Tag.REBOOT_NOTICE:
        return RebootNotice(r.u64())
    if tag == Tag.LOAD_COMMAND:
        return LoadCommand(r.u64(), r.u32())
    if tag == Tag.CONTROL_COMMAND:
        action_off = r.offset
        action = r.u8()
        if action > 1:
            raise DecodeError(DecodeErrorKind.FIELD_OUT_OF_RANGE, action_off, "control action")
        if action == ControlAction.RELEASE_DEVICE:
            return ControlCommand(ControlAction.RELEASE_DEVICE, r.u64())
        return ControlCommand(ControlAction.SHUTDOWN_ALL)
    if tag == Tag.SUBMISSION:
        submitter = r.string()
        count = r.u16()
        batch = tuple(r.credentials() for _ in range(count))
        return SubmissionMsg(batch, submitter)
    if tag == Tag.STATS_SNAPSHOT:
        return StatsSnapshot(
            r.u64(), r.u32(), r.u32(), r.u32(), r.u32(), r.u32(), r.u32()
        )
    raise AssertionError(f"unreachable tag {tag}")


def decode(buf: bytes) -> ProtocolMessage:
    """Inverse of :func:`encode` on its image; rejects everything else."""
    msg, consumed = decode_prefix(buf)
    if consumed != len(buf):
        raise DecodeError(
            DecodeErrorKind.FIELD_OUT_OF_RANGE, consumed, "trailing bytes after frame"
        )
    return msg


def decode_prefix(buf: bytes, base: int = 0) -> Tuple[ProtocolMessage, int]:
    """Decode one frame at the start of ``buf``; returns (message, bytes consumed).
    Used for streams of concatenated frames."""
    if len(buf) < 6:
        raise DecodeError(DecodeErrorKind.TRUNCATED, base + len(buf), "incomplete header")
    version, tag, length = struct.unpack(">BBI", buf[:6])
    if version != VERSION:
        raise DecodeError(DecodeErrorKind.UNKNOWN_VARIANT, base, f"version {version}")
    if tag not in Tag._value2member_map_:
        raise DecodeError(DecodeErrorKind.UNKNOWN_VARIANT, base + 1, f"variant tag {tag}")
    if len(buf) < 6 + length:
        raise DecodeError(DecodeErrorKind.TRUNCATED, base + len(buf), "incomplete payload")
    r = _Reader(buf[6 : 6 + length], base + 6)
    msg = _decode_payload(tag, r)
    r.done()
    return msg, 6 + length


def iter_frames(buf: bytes) -> Iterator[ProtocolMessage]:
    """Decode a concatenation of frames, e.g. a golden corpus file."""
    pos = 0
    while pos < len(buf):
        msg, consumed = decode_prefix(buf[pos:], base=pos)
        yield msg
        pos += consumed


def frame_raw(tag: int, payload: bytes) -> bytes:
    """Wrap an arbitrary payload in the standard frame header. Used by the
    event-log and storage files so everything on disk shares one framing."""
    return struct.pack(">BBI", VERSION, tag, len(payload)) + payload


def iter_raw_frames(buf: bytes) -> Iterator[Tuple[int, bytes]]:
    """Yield (tag, payload) for each frame without interpreting payloads."""
    pos = 0
    while pos < len(buf):
        if len(buf) - pos < 6:
            raise DecodeError(DecodeErrorKind.TRUNCATED, len(buf), "incomplete header")
        version, tag, length = struct.unpack_from(">BBI", buf, pos)
        if version != VERSION:
            raise DecodeError(DecodeErrorKind.UNKNOWN_VARIANT, pos, f"version {version}")
        if len(buf) - pos < 6 + length:
            raise DecodeError(DecodeErrorKind.TRUNCATED, len(buf), "incomplete payload")
        yield tag, buf[pos + 6 : pos + 6 + length]
        pos += 6 + length
