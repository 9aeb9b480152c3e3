"""Command-and-control server state: reporter, spotter, loader, submissions,
stats history, and the append-only storage record log.

The CNC is a single logical actor. Every handler mutates state in place,
appends one record to storage, and returns the outbound actions (load
commands, terminate orders) for the transport layer to carry. Replaying a
storage record log through :meth:`CncState.replay` reproduces the final
state exactly, which is what the crash-consistency tests lean on.
"""

from __future__ import annotations

import enum
import json
import logging
import struct
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set, Tuple, Union

from .bot import TerminationReason
from .domain import Credentials, DeviceId
from .protocol import (
    ControlAction,
    ControlCommand,
    KeepAlive,
    LoadCommand,
    ProtocolMessage,
    RebootNotice,
    StatsSnapshot,
    SubmissionMsg,
    VulnReport,
    decode,
    encode,
)

logger = logging.getLogger(__name__)

PERMANENT_TERMINATIONS = frozenset(
    {
        TerminationReason.OWNER_FIXED,
        TerminationReason.CRED_CHANGED,
        TerminationReason.FW_UPDATED,
    }
)

_REASON_CODES = {r: i for i, r in enumerate(TerminationReason)}
_REASON_BY_CODE = {i: r for r, i in _REASON_CODES.items()}


class UnknownDeviceError(Exception):
    pass


class SubmissionError(Exception):
    """Unknown submission id or an attempt to review one twice."""

    def __init__(self, message: str, already_reviewed: bool = False):
        super().__init__(message)
        self.already_reviewed = already_reviewed


class Verdict(enum.IntEnum):
    ACCEPT = 0
    REJECT = 1


@dataclass(frozen=True)
class SendLoad:
    command: LoadCommand


@dataclass(frozen=True)
class OrderTerminate:
    device: DeviceId
    reason: TerminationReason


Outbound = Union[SendLoad, OrderTerminate]


@dataclass(frozen=True)
class CncParams:
    keepalive_period: float = 5.0
    keepalive_loss_multiplier: int = 3
    loader_poll_interval: float = 10.0
    watchlist_eviction_failures: int = 20
    payload_version: int = 1
    snapshot_every: int = 256

    @property
    def loss_threshold(self) -> float:
        return self.keepalive_period * self.keepalive_loss_multiplier


BOT_NONE = "none"
BOT_LIVE = "live"
BOT_LOST = "lost"


@dataclass
class DeviceRecord:
    last_report: Optional[VulnReport] = None
    bot_status: str = BOT_NONE
    last_keepalive: float = 0.0
    last_seq: int = 0
    lost_since: float = 0.0
    known_secured: bool = False
    load_failures: int = 0


class RecordKind(enum.IntEnum):
    MESSAGE = 1
    SPOTTER_TICK = 2
    LOADER_POLL = 3
    LOAD_RESULT = 4
    TERMINATION = 5
    REVIEW = 6
    SNAPSHOT = 7


class Storage:
    """Append-only record log. One record per state mutation, with a JSON
    state snapshot interleaved every ``snapshot_every`` data records."""

    def __init__(self, snapshot_every: int = 256, enabled: bool = True):
        self.snapshot_every = snapshot_every
        self.enabled = enabled
        self.records: List[Tuple[int, float, bytes]] = []
        self._data_count = 0

    def append(self, kind: RecordKind, now: float, body: bytes, state: "CncState"):
        if not self.enabled:
            return
        self.records.append((int(kind), now, body))
        self._data_count += 1
        if self._data_count % self.snapshot_every == 0:
            blob = json.dumps(state.to_comparable(), sort_keys=True).encode("utf-8")
            self.records.append((int(RecordKind.SNAPSHOT), now, blob))

    def to_bytes(self) -> bytes:
        out = []
        for kind, now, body in self.records:
            out.append(struct.pack(">BdI", kind, now, len(body)))
            out.append(body)
        return b"".join(out)

    @staticmethod
    def parse(buf: bytes) -> List[Tuple[int, float, bytes]]:
        records = []
        pos = 0
        while pos < len(buf):
            kind, now, length = struct.unpack_from(">BdI", buf, pos)
            pos += 13
            records.append((kind, now, buf[pos : pos + length]))
            pos += length
        return records


class CncState:
    """Registry of known devices, live bots, the reinfection watchlist, user
    submissions, the live credential dictionary, and collected statistics."""

    def __init__(
        self,
        dictionary: List[Credentials],
        params: CncParams = CncParams(),
        valid_ids: Optional[Set[DeviceId]] = None,
        storage_enabled: bool = True,
    ):
        self.params = params
        self.valid_ids = valid_ids
        self.known_devices: Dict[DeviceId, DeviceRecord] = {}
        self.watchlist: Dict[DeviceId, None] = {}
        self.last_attempt: Dict[DeviceId, float] = {}
        self.pending_load: Dict[DeviceId, float] = {}
        self.submissions: List[dict] = []
        self.credential_dictionary: List[Credentials] = list(dictionary)
        self.dict_set = set(self.credential_dictionary)
        self.released: Set[DeviceId] = set()
        self.shutdown = False
        self.stats_history: List[StatsSnapshot] = []
        self.storage = Storage(params.snapshot_every, enabled=storage_enabled)

    # -- storage helpers ---------------------------------------------------

    def _record_msg(self, msg: ProtocolMessage, now: float):
        self.storage.append(RecordKind.MESSAGE, now, encode(msg), self)

    def _ensure(self, device: DeviceId) -> DeviceRecord:
        rec = self.known_devices.get(device)
        if rec is None:
            rec = DeviceRecord()
            self.known_devices[device] = rec
        return rec

    def _watch(self, device: DeviceId) -> bool:
        """Put a device on the reinfection watchlist if it qualifies."""
        rec = self._ensure(device)
        if (
            self.shutdown
            or device in self.released
            or rec.known_secured
            or device in self.watchlist
        ):
            return False
        self.watchlist[device] = None
        rec.load_failures = 0
        self.last_attempt.pop(device, None)
        return True

    # -- message handlers --------------------------------------------------

    def reporter_ingest(self, report: VulnReport, now: float) -> List[Outbound]:
        """Record a vulnerability report; task the loader when the target has
        no live bot and nothing is already in flight."""
        self._record_msg(report, now)
        if self.valid_ids is not None and report.target not in self.valid_ids:
            logger.debug("dropping stale report for unknown device %d", report.target)
            return []
        if report.target in self.released:
            return []
        rec = self._ensure(report.target)
        rec.last_report = report
        if self.shutdown or rec.known_secured or rec.bot_status == BOT_LIVE:
            return []
        if report.target in self.watchlist or report.target in self.pending_load:
            return []
        self.pending_load[report.target] = now
        return [SendLoad(LoadCommand(report.target, self.params.payload_version))]

    def on_keepalive(self, msg: KeepAlive, now: float) -> Tuple[List[Outbound], bool]:
        """Returns (outbound, recovered): recovered is True when a lost bot
        announced itself again."""
        self._record_msg(msg, now)
        if self.valid_ids is not None and msg.bot_device not in self.valid_ids:
            return [], False
        if self.shutdown:
            return [OrderTerminate(msg.bot_device, TerminationReason.SHUTDOWN)], False
        if msg.bot_device in self.released:
            return [OrderTerminate(msg.bot_device, TerminationReason.RELEASED)], False
        rec = self._ensure(msg.bot_device)
        recovered = rec.bot_status == BOT_LOST
        rec.bot_status = BOT_LIVE
        rec.last_keepalive = now
        rec.last_seq = msg.seq
        if recovered:
            self.watchlist.pop(msg.bot_device, None)
            self.last_attempt.pop(msg.bot_device, None)
        return [], recovered

    def on_reboot_notice(self, msg: RebootNotice, now: float) -> bool:
        """A bot saw its host going down: mark it lost immediately, without
        waiting for the keep-alive timeout. Returns True if watchlisted."""
        self._record_msg(msg, now)
        if self.valid_ids is not None and msg.bot_device not in self.valid_ids:
            return False
        rec = self._ensure(msg.bot_device)
        if rec.bot_status != BOT_NONE:
            rec.bot_status = BOT_LOST
            rec.lost_since = now
        return self._watch(msg.bot_device)

    def spotter_tick(self, now: float) -> Tuple[List[DeviceId], List[DeviceId]]:
        """Declare lost any live bot silent for the loss threshold.
        Returns (lost, watchlisted)."""
        self.storage.append(RecordKind.SPOTTER_TICK, now, b"", self)
        lost, watched = [], []
        for device, rec in self.known_devices.items():
            if rec.bot_status != BOT_LIVE:
                continue
            if now - rec.last_keepalive >= self.params.loss_threshold:
                rec.bot_status = BOT_LOST
                rec.lost_since = now
                lost.append(device)
                if self._watch(device):
                    watched.append(device)
        return lost, watched

    def loader_poll(self, now: float) -> List[LoadCommand]:
        """Emit a load command for each watchlisted device whose poll
        interval has elapsed. Empty after shutdown."""
        self.storage.append(RecordKind.LOADER_POLL, now, b"", self)
        if self.shutdown:
            return []
        commands = []
        for device in self.watchlist:
            last = self.last_attempt.get(device)
            if last is not None and now - last < self.params.loader_poll_interval:
                continue
            self.last_attempt[device] = now
            commands.append(LoadCommand(device, self.params.payload_version))
        return commands

    def load_result(self, device: DeviceId, success: bool, now: float) -> bool:
        """Feedback from a load attempt. Returns True when a failing device
        was evicted from the watchlist."""
        self.storage.append(
            RecordKind.LOAD_RESULT, now, struct.pack(">QB", device, int(success)), self
        )
        rec = self._ensure(device)
        self.pending_load.pop(device, None)
        if success:
            rec.bot_status = BOT_LIVE
            rec.last_keepalive = now
            rec.last_seq = 0
            rec.load_failures = 0
            self.watchlist.pop(device, None)
            self.last_attempt.pop(device, None)
            return False
        rec.load_failures += 1
        if (
            device in self.watchlist
            and rec.load_failures >= self.params.watchlist_eviction_failures
        ):
            self.watchlist.pop(device, None)
            self.last_attempt.pop(device, None)
            return True
        return False

    def termination_notice(
        self, device: DeviceId, reason: TerminationReason, now: float
    ) -> None:
        """A bot reported its own exit. Permanent-fix reasons mark the device
        as secured so it is never watchlisted or reloaded."""
        self.storage.append(
            RecordKind.TERMINATION,
            now,
            struct.pack(">QB", device, _REASON_CODES[reason]),
            self,
        )
        rec = self._ensure(device)
        rec.bot_status = BOT_NONE
        if reason in PERMANENT_TERMINATIONS:
            rec.known_secured = True
        self.watchlist.pop(device, None)
        self.last_attempt.pop(device, None)
        self.pending_load.pop(device, None)

    def admin_command(self, cmd: ControlCommand, now: float) -> List[Outbound]:
        """The whole admin vocabulary: shut everything down, or release one
        device and never touch it again."""
        if cmd.action is ControlAction.RELEASE_DEVICE:
            if self.valid_ids is not None and cmd.device not in self.valid_ids:
                raise UnknownDeviceError(f"no such device: {cmd.device}")
            self._record_msg(cmd, now)
            self.released.add(cmd.device)
            self.watchlist.pop(cmd.device, None)
            self.last_attempt.pop(cmd.device, None)
            self.pending_load.pop(cmd.device, None)
            rec = self._ensure(cmd.device)
            if rec.bot_status == BOT_LIVE:
                rec.bot_status = BOT_NONE
                return [OrderTerminate(cmd.device, TerminationReason.RELEASED)]
            rec.bot_status = BOT_NONE
            return []

        # ShutdownAll: latched, idempotent.
        self._record_msg(cmd, now)
        if self.shutdown:
            return []
        self.shutdown = True
        self.watchlist.clear()
        self.last_attempt.clear()
        self.pending_load.clear()
        orders = []
        for device, rec in self.known_devices.items():
            if rec.bot_status == BOT_LIVE:
                rec.bot_status = BOT_NONE
                orders.append(OrderTerminate(device, TerminationReason.SHUTDOWN))
        return orders

    def submit(self, msg: SubmissionMsg, now: float) -> int:
        self._record_msg(msg, now)
        sub_id = len(self.submissions)
        self.submissions.append({"id": sub_id, "msg": msg, "status": "pending"})
        return sub_id

    def review_submission(self, sub_id: int, verdict: Verdict, now: float) -> int:
        """Accept merges the batch into the live dictionary (deduplicated);
        reject leaves it untouched. Returns how many credentials were added."""
        if sub_id < 0 or sub_id >= len(self.submissions):
            raise SubmissionError(f"no such submission: {sub_id}")
        sub = self.submissions[sub_id]
        if sub["status"] != "pending":
            raise SubmissionError(
                f"submission {sub_id} already {sub['status']}", already_reviewed=True
            )
        self.storage.append(
            RecordKind.REVIEW, now, struct.pack(">IB", sub_id, int(verdict)), self
        )
        if verdict is Verdict.REJECT:
            sub["status"] = "rejected"
            return 0
        sub["status"] = "accepted"
        added = 0
        for cred in sub["msg"].credentials_batch:
            if cred not in self.dict_set:
                self.dict_set.add(cred)
                self.credential_dictionary.append(cred)
                added += 1
        return added

    def stats_record(self, snapshot: StatsSnapshot) -> None:
        self._record_msg(snapshot, snapshot.sim_time_us / 1e6)
        self.stats_history.append(snapshot)

    # -- replay & comparison -----------------------------------------------

    def to_comparable(self) -> dict:
        return {
            "known_devices": {
                str(dev): {
                    "last_report": (
                        encode(rec.last_report).hex() if rec.last_report else None
                    ),
                    "bot_status": rec.bot_status,
                    "last_keepalive": rec.last_keepalive,
                    "last_seq": rec.last_seq,
                    "lost_since": rec.lost_since,
                    "known_secured": rec.known_secured,
                    "load_failures": rec.load_failures,
                }
                for dev, rec in self.known_devices.items()
            },
            "watchlist": list(self.watchlist),
            "last_attempt": {str(k): v for k, v in self.last_attempt.items()},
            "pending_load": {str(k): v for k, v in self.pending_load.items()},
            "submissions": [
                {
                    "id": s["id"],
                    "status": s["status"],
                    "msg": encode(s["msg"]).hex(),
                }
                for s in self.submissions
            ],
            "credential_dictionary": [
                (c.username, c.password) for c in self.credential_dictionary
            ],
            "released": sorted(self.released),
            "shutdown": self.shutdown,
            "stats_history": [encode(s).hex() for s in self.stats_history],
        }

    @classmethod
    def replay(
        cls,
        records: List[Tuple[int, float, bytes]],
        dictionary: List[Credentials],
        params: CncParams = CncParams(),
        valid_ids: Optional[Set[DeviceId]] = None,
    ) -> "CncState":
        """Rebuild state from a record log; snapshots are skipped, every
        data record flows through the normal handler."""
        state = cls(dictionary, params, valid_ids, storage_enabled=False)
        for kind, now, body in records:
            kind = RecordKind(kind)
            if kind is RecordKind.SNAPSHOT:
                continue
            if kind is RecordKind.MESSAGE:
                msg = decode(body)
                if isinstance(msg, VulnReport):
                    state.reporter_ingest(msg, now)
                elif isinstance(msg, KeepAlive):
                    state.on_keepalive(msg, now)
                elif isinstance(msg, RebootNotice):
                    state.on_reboot_notice(msg, now)
                elif isinstance(msg, ControlCommand):
                    state.admin_command(msg, now)
                elif isinstance(msg, SubmissionMsg):
                    state.submit(msg, now)
                elif isinstance(msg, StatsSnapshot):
                    state.stats_record(msg)
            elif kind is RecordKind.SPOTTER_TICK:
                state.spotter_tick(now)
            elif kind is RecordKind.LOADER_POLL:
                state.loader_poll(now)
            elif kind is RecordKind.LOAD_RESULT:
                device, ok = struct.unpack(">QB", body)
                state.load_result(device, bool(ok), now)
            elif kind is RecordKind.TERMINATION:
                device, code = struct.unpack(">QB", body)
                state.termination_notice(device, _REASON_BY_CODE[code], now)
            elif kind is RecordKind.REVIEW:
                sub_id, verdict = struct.unpack(">IB", body)
                state.review_submission(sub_id, Verdict(verdict), now)
        return state
