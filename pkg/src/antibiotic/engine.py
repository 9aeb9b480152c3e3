"""Deterministic discrete-event simulator.

Owns the device population, message transport with fixed latency, reboot
schedule, owner reactions, the white-bot lifecycle, and the competing black
worm. One seeded RNG drives every draw, events are processed in
(time, kind rank, device, insertion order), so identical (config, seed)
pairs replay to byte-identical event logs.

The engine is the only mutator: bots and the CNC compute effects, the engine
applies them and writes the state-change log. Entries with ``old == new``
are lifecycle annotations (reboots, watchlisting, bot exits) rather than
security-state transitions.
"""

from __future__ import annotations

import enum
import heapq
import logging
import random
import struct
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Set, Tuple

from .bot import (
    BotInstance,
    BotParams,
    BotPhase,
    ChangeCredentials,
    CompleteFirmwareUpdate,
    InstallPersistence,
    NotifyOwner,
    SanitizeHost,
    StartFirmwareUpdate,
    Terminate,
    TerminationReason,
    bot_step,
    sanitize,
    scan_step,
    sentinel_tick,
)
from .cnc import CncParams, CncState, OrderTerminate, SendLoad
from .domain import (
    Credentials,
    DeviceCapabilities,
    DeviceId,
    OwnerProfile,
    PermanentCause,
    SecurityState,
    SimDevice,
    StateTag,
    classify,
)
from .protocol import (
    ControlAction,
    ControlCommand,
    KeepAlive,
    LoadCommand,
    ProtocolMessage,
    RebootNotice,
    StatsSnapshot,
    VulnReport,
    frame_raw,
    iter_raw_frames,
)

logger = logging.getLogger(__name__)

LOG_RECORD_TAG = 0x10
_NO_CAUSE = 0xFF


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class SimConfig:
    """Everything that parameterizes one simulation run."""

    n_devices: int
    seed: int
    horizon: float
    weak_credential_dictionary: Tuple[Credentials, ...]

    # Population shape
    capability_mix: Tuple[float, float, float] = (0.5, 0.5, 0.5)
    ensure_permanent_fix: bool = False
    owner_responsiveness: float = 0.0
    owner_response_delay: float = 3600.0

    # Environment dynamics
    reboot_rate: Optional[float] = None  # mean up-time between reboots
    downtime: float = 30.0
    network_latency: float = 0.5
    scripted_reboots: Tuple[Tuple[DeviceId, float], ...] = ()

    # Worms
    white_worm_enabled: bool = True
    black_worm_enabled: bool = False
    white_scan_rate: float = 0.2  # scans per simulated second per scanner
    black_scan_rate: float = 0.2

    # Bot pacing
    bot_step_interval: float = 1.0
    owner_window: float = 86_400.0
    renotify_interval: float = 86_400.0
    fw_update_duration: float = 60.0
    reboot_notice_visibility: float = 0.5

    # CNC parameters
    keepalive_period: float = 5.0
    keepalive_loss_multiplier: int = 3
    loader_poll_interval: float = 10.0
    watchlist_eviction_failures: int = 20
    payload_version: int = 1

    metrics_interval: float = 1.0

    def validate(self) -> None:
        if self.n_devices < 1:
            raise ConfigError("n_devices must be >= 1")
        if self.horizon <= 0:
            raise ConfigError("horizon must be > 0")
        if not self.weak_credential_dictionary:
            raise ConfigError("weak credential dictionary must be non-empty")
        if self.white_worm_enabled and self.white_scan_rate <= 0:
            raise ConfigError("white_scan_rate must be > 0")
        if self.black_worm_enabled and self.black_scan_rate <= 0:
            raise ConfigError("black_scan_rate must be > 0")
        if self.reboot_rate is not None and self.reboot_rate <= 0:
            raise ConfigError("reboot_rate must be > 0 when set")
        if self.network_latency < 0:
            raise ConfigError("network_latency must be >= 0")
        if not 0.0 <= self.owner_responsiveness <= 1.0:
            raise ConfigError("owner_responsiveness must be in [0, 1]")
        if not 0.0 <= self.reboot_notice_visibility <= 1.0:
            raise ConfigError("reboot_notice_visibility must be in [0, 1]")
        for name, value in (
            ("downtime", self.downtime),
            ("bot_step_interval", self.bot_step_interval),
            ("owner_window", self.owner_window),
            ("renotify_interval", self.renotify_interval),
            ("fw_update_duration", self.fw_update_duration),
            ("keepalive_period", self.keepalive_period),
            ("loader_poll_interval", self.loader_poll_interval),
            ("metrics_interval", self.metrics_interval),
        ):
            if value <= 0:
                raise ConfigError(f"{name} must be > 0")
        for dev, at in self.scripted_reboots:
            if not 0 <= dev < self.n_devices:
                raise ConfigError(f"scripted reboot for unknown device {dev}")
            if at < 0:
                raise ConfigError("scripted reboot time must be >= 0")

    def cnc_params(self) -> CncParams:
        return CncParams(
            keepalive_period=self.keepalive_period,
            keepalive_loss_multiplier=self.keepalive_loss_multiplier,
            loader_poll_interval=self.loader_poll_interval,
            watchlist_eviction_failures=self.watchlist_eviction_failures,
            payload_version=self.payload_version,
        )

    def bot_params(self) -> BotParams:
        return BotParams(
            step_interval=self.bot_step_interval,
            owner_window=self.owner_window,
            renotify_interval=self.renotify_interval,
            fw_update_duration=self.fw_update_duration,
        )


@dataclass(frozen=True)
class LogEntry:
    at: float
    device: DeviceId
    old: SecurityState
    new: SecurityState
    reason: str

    @property
    def is_change(self) -> bool:
        return self.old != self.new

    def encode(self) -> bytes:
        reason = self.reason.encode("utf-8")
        payload = struct.pack(
            ">dQBBBBH",
            self.at,
            self.device,
            int(self.old.tag),
            _NO_CAUSE if self.old.cause is None else int(self.old.cause),
            int(self.new.tag),
            _NO_CAUSE if self.new.cause is None else int(self.new.cause),
            len(reason),
        ) + reason
        return frame_raw(LOG_RECORD_TAG, payload)

    @staticmethod
    def decode_payload(payload: bytes) -> "LogEntry":
        header = struct.calcsize(">dQBBBBH")
        at, device, ot, oc, nt, nc, rlen = struct.unpack_from(">dQBBBBH", payload)
        reason = payload[header : header + rlen].decode("utf-8")
        old = SecurityState(StateTag(ot), None if oc == _NO_CAUSE else PermanentCause(oc))
        new = SecurityState(StateTag(nt), None if nc == _NO_CAUSE else PermanentCause(nc))
        return LogEntry(at, device, old, new, reason)


class EventLog:
    """Append-only trace of every security-state change (exactly once each)
    plus lifecycle annotations (old == new)."""

    def __init__(self):
        self.entries: List[LogEntry] = []

    def append(self, entry: LogEntry) -> None:
        if self.entries and entry.at < self.entries[-1].at - 1e-9:
            raise AssertionError("event log timestamps must be nondecreasing")
        self.entries.append(entry)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def state_changes(self, device: Optional[DeviceId] = None) -> List[LogEntry]:
        return [
            e
            for e in self.entries
            if e.is_change and (device is None or e.device == device)
        ]

    def state_sequence(self, device: DeviceId) -> List[SecurityState]:
        changes = self.state_changes(device)
        if not changes:
            return []
        return [changes[0].old] + [e.new for e in changes]

    def to_bytes(self) -> bytes:
        return b"".join(e.encode() for e in self.entries)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "EventLog":
        log = cls()
        for tag, payload in iter_raw_frames(buf):
            if tag != LOG_RECORD_TAG:
                raise ValueError(f"unexpected record tag {tag} in event log")
            log.entries.append(LogEntry.decode_payload(payload))
        return log


METRICS_HEADER = (
    "sim_time,vulnerable,infected_black,infected_white,"
    "secured_temp,secured_perm,live_bots"
)


class MetricsSeries:
    """Per-sampling-instant state counts, exported as CSV."""

    def __init__(self):
        self.rows: List[Tuple[float, StatsSnapshot]] = []

    def add(self, at: float, snapshot: StatsSnapshot) -> None:
        self.rows.append((at, snapshot))

    def to_csv(self) -> str:
        lines = [METRICS_HEADER]
        for at, s in self.rows:
            lines.append(
                f"{at:.3f},{s.vulnerable},{s.infected_black},{s.infected_white},"
                f"{s.secured_temp},{s.secured_perm},{s.live_bots}"
            )
        return "\n".join(lines) + "\n"


class EventKind(enum.IntEnum):
    # Enum value doubles as the tie-break rank for simultaneous events.
    DEVICE_UP = 0
    DEVICE_REBOOT = 1
    MESSAGE_DELIVERY = 2
    TERMINATE_DELIVERY = 3
    TERMINATION_NOTICE = 4
    OWNER_REACTS = 5
    SCAN_TICK = 6
    SENTINEL_TICK = 7
    BOT_STEP = 8
    SPOTTER_TIMEOUT = 9
    LOADER_POLL = 10
    ADMIN_COMMAND = 11
    METRICS_SAMPLE = 12


# Events whose presence means the simulation can still change state; the
# quiescence cut only fires once none are pending.
_CRITICAL_KINDS = frozenset(
    {
        EventKind.DEVICE_UP,
        EventKind.MESSAGE_DELIVERY,
        EventKind.TERMINATE_DELIVERY,
        EventKind.TERMINATION_NOTICE,
        EventKind.OWNER_REACTS,
        EventKind.ADMIN_COMMAND,
    }
)

WHITE = "white"
BLACK = "black"


def black_worm_can_infect(target: SimDevice, now: float, dictionary) -> bool:
    """Black-worm eligibility: up (and not in the same instant it booted),
    weak-credentialed, not permanently secured, and not held by either worm.
    A resident white bot's perimeter guard blocks reinfection outright."""
    return (
        target.up
        and now > target.last_up_at
        and target.permanent_cause is None
        and not target.white_resident
        and not target.black_resident
        and target.credentials in dictionary
    )


class Engine:
    def __init__(self, config: SimConfig, cnc: Optional[CncState] = None):
        config.validate()
        self.config = config
        self.rng = random.Random(config.seed)
        self.now = 0.0
        self._bot_params = config.bot_params()

        dictionary = list(config.weak_credential_dictionary)
        self.black_dict_set = frozenset(dictionary)
        if cnc is None:
            cnc = CncState(
                dictionary,
                config.cnc_params(),
                valid_ids=set(range(config.n_devices)),
            )
        elif cnc.valid_ids is None:
            cnc.valid_ids = set(range(config.n_devices))
        self.cnc = cnc

        self.devices: List[SimDevice] = [
            self._make_device(i) for i in range(config.n_devices)
        ]
        self.bots: Dict[DeviceId, BotInstance] = {}
        self.ever_white: Set[DeviceId] = set()
        self.outcomes: Dict[DeviceId, str] = {}

        self.log = EventLog()
        self.metrics = MetricsSeries()
        self.on_sample: Optional[Callable[[StatsSnapshot], None]] = None

        self._heap: list = []
        self._seq = 0
        self._pending_critical = 0
        self._counts: Dict[StateTag, int] = {tag: 0 for tag in StateTag}
        self._counts[StateTag.VULNERABLE] = config.n_devices
        self._next_incarnation = 0
        self._black_gen: Dict[DeviceId, int] = {}
        self._watch_gen: Dict[DeviceId, int] = {}
        self._last_sampled: Optional[float] = None
        self._finalized = False

        self._push(0.0, EventKind.METRICS_SAMPLE, -1, ())
        if config.white_worm_enabled:
            self._push(1.0 / config.white_scan_rate, EventKind.SCAN_TICK, -1, (None, WHITE, 0))
        if config.black_worm_enabled:
            self._push(1.0 / config.black_scan_rate, EventKind.SCAN_TICK, -1, (None, BLACK, 0))
        if config.reboot_rate is not None:
            for device in self.devices:
                self._push(
                    self.rng.expovariate(1.0 / config.reboot_rate),
                    EventKind.DEVICE_REBOOT,
                    device.id,
                    (device.id, False),
                )
        for dev, at in config.scripted_reboots:
            self.schedule_reboot(dev, at)

    # -- construction helpers ------------------------------------------------

    def _make_device(self, device_id: int) -> SimDevice:
        cfg = self.config
        dictionary = cfg.weak_credential_dictionary
        creds = dictionary[self.rng.randrange(len(dictionary))]
        p_persist, p_cred, p_fw = cfg.capability_mix
        caps = DeviceCapabilities(
            self.rng.random() < p_persist,
            self.rng.random() < p_cred,
            self.rng.random() < p_fw,
        )
        while cfg.ensure_permanent_fix and not caps.any_permanent_fix():
            caps = DeviceCapabilities(
                self.rng.random() < p_persist,
                self.rng.random() < p_cred,
                self.rng.random() < p_fw,
            )
        return SimDevice(
            id=device_id,
            credentials=creds,
            capabilities=caps,
            owner=OwnerProfile(cfg.owner_responsiveness, cfg.owner_response_delay),
        )

    # -- scheduling primitives -------------------------------------------------

    def _push(self, at: float, kind: EventKind, device: int, payload: tuple) -> None:
        self._seq += 1
        if kind in _CRITICAL_KINDS or (
            kind is EventKind.DEVICE_REBOOT and payload[1]
        ):
            self._pending_critical += 1
        heapq.heappush(self._heap, (at, int(kind), device, self._seq, payload))

    def _send(self, msg: ProtocolMessage, dest: Optional[DeviceId], now: float) -> None:
        device = -1 if dest is None else dest
        self._push(
            now + self.config.network_latency,
            EventKind.MESSAGE_DELIVERY,
            device,
            (msg, dest, now),
        )

    def schedule_reboot(self, device: DeviceId, at: float) -> None:
        """Enqueue an exogenous reboot. Unknown device is an error; rebooting
        an already-down device is a no-op at processing time."""
        if not 0 <= device < self.config.n_devices:
            raise ConfigError(f"unknown device {device}")
        self._push(at, EventKind.DEVICE_REBOOT, device, (device, True))

    def schedule_admin(self, cmd: ControlCommand, at: float) -> None:
        self._push(at, EventKind.ADMIN_COMMAND, -1, (cmd,))

    # -- logging -----------------------------------------------------------------

    def _annotate(self, device: SimDevice, reason: str, now: float) -> None:
        self.log.append(LogEntry(now, device.id, device.state, device.state, reason))

    def _update_state(self, device: SimDevice, reason: str, now: float) -> None:
        new = classify(device)
        if new == device.state:
            return
        self._counts[device.state.tag] -= 1
        self._counts[new.tag] += 1
        self.log.append(LogEntry(now, device.id, device.state, new, reason))
        device.state = new

    # -- run loop ---------------------------------------------------------------

    def quiescent(self) -> bool:
        """True when nothing can ever change a security state again: every
        device permanently secured, no bots, no consequential events in
        flight. Recurring scan/sample ticks alone cannot wake the system."""
        return (
            self._counts[StateTag.SECURED_PERMANENT] == self.config.n_devices
            and not self.bots
            and self._pending_critical == 0
        )

    def peek_next_at(self) -> Optional[float]:
        return self._heap[0][0] if self._heap else None

    def process_one(self) -> None:
        at, kind, device, seq, payload = heapq.heappop(self._heap)
        kind = EventKind(kind)
        if kind in _CRITICAL_KINDS or (
            kind is EventKind.DEVICE_REBOOT and payload[1]
        ):
            self._pending_critical -= 1
        self.now = at
        self._dispatch(kind, at, payload)

    def run(self) -> Tuple[EventLog, MetricsSeries]:
        horizon = self.config.horizon
        while self._heap:
            if self._heap[0][0] > horizon + 1e-9:
                break
            if self.quiescent():
                break
            self.process_one()
        self._finalize()
        return self.log, self.metrics

    def _finalize(self) -> None:
        if self._finalized:
            return
        self._finalized = True
        # Fill the remaining sampling instants with the frozen final counts
        # so the series always spans [0, horizon].
        interval = self.config.metrics_interval
        t = 0.0 if self._last_sampled is None else self._last_sampled + interval
        while t <= self.config.horizon + 1e-9:
            self._sample(t)
            t += interval
        for dev, bot in self.bots.items():
            self.outcomes[dev] = (
                "guarding" if bot.phase is BotPhase.GUARDING else "active"
            )

    def _dispatch(self, kind: EventKind, now: float, payload: tuple) -> None:
        if kind is EventKind.METRICS_SAMPLE:
            self._on_metrics_sample(now)
        elif kind is EventKind.MESSAGE_DELIVERY:
            self._on_message_delivery(now, *payload)
        elif kind is EventKind.BOT_STEP:
            self._on_bot_step(now, *payload)
        elif kind is EventKind.SENTINEL_TICK:
            self._on_sentinel_tick(now, *payload)
        elif kind is EventKind.SCAN_TICK:
            self._on_scan_tick(now, *payload)
        elif kind is EventKind.DEVICE_REBOOT:
            self._on_device_reboot(now, payload[0])
        elif kind is EventKind.DEVICE_UP:
            self._on_device_up(now, payload[0])
        elif kind is EventKind.OWNER_REACTS:
            self._on_owner_reacts(now, payload[0])
        elif kind is EventKind.SPOTTER_TIMEOUT:
            self._on_spotter_timeout(now)
        elif kind is EventKind.LOADER_POLL:
            self._on_loader_poll(now, *payload)
        elif kind is EventKind.TERMINATE_DELIVERY:
            self._on_terminate_delivery(now, *payload)
        elif kind is EventKind.TERMINATION_NOTICE:
            self._on_termination_notice(now, *payload)
        elif kind is EventKind.ADMIN_COMMAND:
            self._on_admin_command(now, payload[0])
        else:
            raise AssertionError(f"unhandled event kind {kind}")

    # -- sampling ---------------------------------------------------------------

    def snapshot(self, now: float) -> StatsSnapshot:
        return StatsSnapshot(
            sim_time_us=round(now * 1e6),
            vulnerable=self._counts[StateTag.VULNERABLE],
            infected_black=self._counts[StateTag.INFECTED_BLACK],
            infected_white=self._counts[StateTag.INFECTED_WHITE],
            secured_temp=self._counts[StateTag.SECURED_TEMPORARY],
            secured_perm=self._counts[StateTag.SECURED_PERMANENT],
            live_bots=len(self.bots),
        )

    def _sample(self, now: float) -> None:
        snap = self.snapshot(now)
        self.cnc.stats_record(snap)
        self.metrics.add(now, snap)
        self._last_sampled = now
        if self.on_sample is not None:
            self.on_sample(snap)

    def _on_metrics_sample(self, now: float) -> None:
        self._sample(now)
        nxt = now + self.config.metrics_interval
        if nxt <= self.config.horizon + 1e-9:
            self._push(nxt, EventKind.METRICS_SAMPLE, -1, ())

    # -- transport & CNC ----------------------------------------------------------

    def _on_message_delivery(
        self, now: float, msg: ProtocolMessage, dest: Optional[DeviceId], sent_at: float
    ) -> None:
        assert abs((now - sent_at) - self.config.network_latency) < 1e-9, (
            "delivery must trail its send by exactly the network latency"
        )
        if dest is None:
            self._cnc_receive(msg, now)
        elif isinstance(msg, LoadCommand):
            self._apply_load(msg, now)

    def _cnc_receive(self, msg: ProtocolMessage, now: float) -> None:
        if isinstance(msg, VulnReport):
            for out in self.cnc.reporter_ingest(msg, now):
                self._dispatch_outbound(out, now)
        elif isinstance(msg, KeepAlive):
            outs, recovered = self.cnc.on_keepalive(msg, now)
            if recovered:
                self._annotate(self.devices[msg.bot_device], "bot_resumed", now)
            self._push(
                now + self.cnc.params.loss_threshold, EventKind.SPOTTER_TIMEOUT, -1, ()
            )
            for out in outs:
                self._dispatch_outbound(out, now)
        elif isinstance(msg, RebootNotice):
            if self.cnc.on_reboot_notice(msg, now):
                self._annotate(self.devices[msg.bot_device], "watchlisted", now)
                self._schedule_poll(msg.bot_device, now)
        else:
            logger.debug("CNC ignoring inbound %r", msg)

    def _dispatch_outbound(self, out, now: float) -> None:
        if isinstance(out, SendLoad):
            self._send(out.command, out.command.target, now)
        elif isinstance(out, OrderTerminate):
            self._push(
                now + self.config.network_latency,
                EventKind.TERMINATE_DELIVERY,
                out.device,
                (out.device, out.reason),
            )
        else:
            raise AssertionError(f"unknown outbound action {out!r}")

    def _schedule_poll(self, device: DeviceId, at: float) -> None:
        gen = self._watch_gen.get(device, 0) + 1
        self._watch_gen[device] = gen
        self._push(at, EventKind.LOADER_POLL, device, (device, gen))

    def _on_spotter_timeout(self, now: float) -> None:
        lost, watched = self.cnc.spotter_tick(now)
        for dev in lost:
            self._annotate(self.devices[dev], "bot_lost", now)
        for dev in watched:
            self._annotate(self.devices[dev], "watchlisted", now)
            self._schedule_poll(dev, now)

    def _on_loader_poll(self, now: float, device: DeviceId, gen: int) -> None:
        if self._watch_gen.get(device) != gen or device not in self.cnc.watchlist:
            return
        for cmd in self.cnc.loader_poll(now):
            self._send(cmd, cmd.target, now)
        self._push(
            now + self.config.loader_poll_interval,
            EventKind.LOADER_POLL,
            device,
            (device, gen),
        )

    def _apply_load(self, cmd: LoadCommand, now: float) -> None:
        device = self.devices[cmd.target]
        bot = self.bots.get(cmd.target)
        if bot is not None and device.up:
            # Already under control; treat as a successful no-op contact.
            self.cnc.load_result(cmd.target, True, now)
            return
        exploitable = (
            device.up
            and device.permanent_cause is None
            and device.credentials in self.cnc.dict_set
            and cmd.target not in self.cnc.released
            and not self.cnc.shutdown
            and bot is None
        )
        if exploitable:
            self._install_bot(device, now)
            self.cnc.load_result(cmd.target, True, now)
        else:
            if self.cnc.load_result(cmd.target, False, now):
                self._annotate(device, "watchlist_evicted", now)

    def _install_bot(self, device: SimDevice, now: float) -> None:
        device.white_resident = True
        device.black_resident = False  # break-in displaces the competitor
        self._next_incarnation += 1
        bot = BotInstance(host=device.id, incarnation=self._next_incarnation)
        self.bots[device.id] = bot
        self.ever_white.add(device.id)
        self.outcomes[device.id] = "active"
        self._update_state(device, "white_load", now)
        cfg = self.config
        self._push(
            now + cfg.bot_step_interval,
            EventKind.BOT_STEP,
            device.id,
            (device.id, bot.incarnation, bot.timer_gen),
        )
        self._push(
            now + cfg.keepalive_period,
            EventKind.SENTINEL_TICK,
            device.id,
            (device.id, bot.incarnation, bot.timer_gen),
        )
        self._push(
            now + 1.0 / cfg.white_scan_rate,
            EventKind.SCAN_TICK,
            device.id,
            (device.id, WHITE, bot.timer_gen),
        )
        # The loader's success feedback counts as contact: cover the window
        # before the first keep-alive.
        self._push(
            now + self.cnc.params.loss_threshold, EventKind.SPOTTER_TIMEOUT, -1, ()
        )

    # -- bot lifecycle -------------------------------------------------------------

    def _on_bot_step(self, now: float, device_id: DeviceId, incarnation: int, gen: int) -> None:
        bot = self.bots.get(device_id)
        if bot is None or bot.incarnation != incarnation or bot.timer_gen != gen:
            return
        device = self.devices[device_id]
        effects, next_at = bot_step(bot, device, now, self._bot_params)
        for eff in effects:
            if isinstance(eff, SanitizeHost):
                sanitize(device)
                self._update_state(device, "sanitized", now)
            elif isinstance(eff, NotifyOwner):
                self._annotate(device, "owner_notified", now)
                if self.rng.random() < device.owner.responsiveness:
                    self._push(
                        now + device.owner.response_delay,
                        EventKind.OWNER_REACTS,
                        device.id,
                        (device.id,),
                    )
            elif isinstance(eff, InstallPersistence):
                device.white_persistent = True
                self._annotate(device, "persist_installed", now)
            elif isinstance(eff, ChangeCredentials):
                device.credentials = self._strong_credentials()
                device.permanent_cause = PermanentCause.CREDENTIAL_CHANGE
                self._update_state(device, "cred_changed", now)
            elif isinstance(eff, StartFirmwareUpdate):
                self._annotate(device, "fw_update_started", now)
            elif isinstance(eff, CompleteFirmwareUpdate):
                device.permanent_cause = PermanentCause.FIRMWARE_UPDATE
                self._update_state(device, "fw_updated", now)
            elif isinstance(eff, Terminate):
                self._finish_bot(device, eff.reason, now)
            else:
                raise AssertionError(f"unknown effect {eff!r}")
        if next_at is not None:
            self._push(
                next_at,
                EventKind.BOT_STEP,
                device.id,
                (device.id, bot.incarnation, bot.timer_gen),
            )

    def _strong_credentials(self) -> Credentials:
        return Credentials(
            f"svc-{self.rng.getrandbits(48):012x}",
            f"{self.rng.getrandbits(64):016x}",
        )

    def _finish_bot(self, device: SimDevice, reason: TerminationReason, now: float) -> None:
        bot = self.bots.pop(device.id, None)
        if bot is None:
            return
        bot.phase = BotPhase.TERMINATED
        bot.terminated_reason = reason
        self.outcomes[device.id] = reason.value
        self._annotate(device, f"bot_terminated:{reason.value}", now)
        device.white_resident = False
        device.white_persistent = False
        device.sanitized = False
        self._update_state(device, "white_exit", now)
        self._push(
            now + self.config.network_latency,
            EventKind.TERMINATION_NOTICE,
            device.id,
            (device.id, reason, now),
        )

    def _on_terminate_delivery(self, now: float, device_id: DeviceId, reason: TerminationReason) -> None:
        device = self.devices[device_id]
        if not device.up:
            # Undeliverable while the host is down; a keep-alive after resume
            # will re-trigger the order.
            return
        self._finish_bot(device, reason, now)

    def _on_termination_notice(
        self, now: float, device_id: DeviceId, reason: TerminationReason, sent_at: float
    ) -> None:
        assert abs((now - sent_at) - self.config.network_latency) < 1e-9
        self.cnc.termination_notice(device_id, reason, now)

    def _on_sentinel_tick(self, now: float, device_id: DeviceId, incarnation: int, gen: int) -> None:
        bot = self.bots.get(device_id)
        if bot is None or bot.incarnation != incarnation or bot.timer_gen != gen:
            return
        if not self.devices[device_id].up:
            return  # chain restarts on resume
        self._send(sentinel_tick(bot, now), None, now)
        self._push(
            now + self.config.keepalive_period,
            EventKind.SENTINEL_TICK,
            device_id,
            (device_id, incarnation, gen),
        )

    # -- scanning & infection ---------------------------------------------------------

    def _on_scan_tick(self, now: float, scanner: Optional[DeviceId], worm: str, gen: int) -> None:
        cfg = self.config
        if worm == WHITE:
            period = 1.0 / cfg.white_scan_rate
            if scanner is None:
                if not cfg.white_worm_enabled or self.cnc.shutdown:
                    return
                report = scan_step(
                    None, self.devices, self.rng, self.cnc.dict_set, self.cnc.released
                )
                if report is not None:
                    self._send(report, None, now)
                self._push(now + period, EventKind.SCAN_TICK, -1, (None, WHITE, 0))
                return
            bot = self.bots.get(scanner)
            if bot is None or bot.timer_gen != gen:
                return
            if self.devices[scanner].up:
                report = scan_step(
                    scanner, self.devices, self.rng, self.cnc.dict_set, self.cnc.released
                )
                if report is not None:
                    self._send(report, None, now)
                self._push(now + period, EventKind.SCAN_TICK, scanner, (scanner, WHITE, gen))
            return

        period = 1.0 / cfg.black_scan_rate
        if scanner is None:
            if not cfg.black_worm_enabled:
                return
            self._black_scan(now)
            self._push(now + period, EventKind.SCAN_TICK, -1, (None, BLACK, 0))
            return
        device = self.devices[scanner]
        if not device.black_resident or self._black_gen.get(scanner) != gen:
            return
        self._black_scan(now)
        self._push(now + period, EventKind.SCAN_TICK, scanner, (scanner, BLACK, gen))

    def _black_scan(self, now: float) -> None:
        """One black-worm infection attempt against a uniform random target.
        Infection is direct (no loader round-trip) and never persistent."""
        target = self.devices[self.rng.randrange(len(self.devices))]
        if black_worm_can_infect(target, now, self.black_dict_set):
            target.black_resident = True
            self._update_state(target, "black_infect", now)
            gen = self._black_gen.get(target.id, 0) + 1
            self._black_gen[target.id] = gen
            self._push(
                now + 1.0 / self.config.black_scan_rate,
                EventKind.SCAN_TICK,
                target.id,
                (target.id, BLACK, gen),
            )

    # -- device lifecycle ------------------------------------------------------------

    def _on_device_reboot(self, now: float, device_id: DeviceId) -> None:
        device = self.devices[device_id]
        if not device.up:
            return  # already rebooting: no-op
        bot = self.bots.get(device_id)
        if bot is not None and self.rng.random() < self.config.reboot_notice_visibility:
            self._send(sentinel_tick(bot, now, imminent_reboot=True), None, now)
        device.up = False
        device.ready_at = now + self.config.downtime
        device.black_resident = False
        persistent_survivor = False
        if bot is not None:
            if bot.persistent:
                bot.timer_gen += 1  # pause all timers until resume
                persistent_survivor = True
            else:
                self.bots.pop(device_id)
                self.outcomes[device_id] = "wiped"
                device.white_resident = False
                device.white_persistent = False
                device.sanitized = False
        old = device.state
        new = classify(device)
        if new != old:
            self._update_state(device, "reboot_wipe", now)
        else:
            self._annotate(device, "reboot_persist" if persistent_survivor else "reboot", now)
        self._push(device.ready_at, EventKind.DEVICE_UP, device_id, (device_id,))

    def _on_device_up(self, now: float, device_id: DeviceId) -> None:
        device = self.devices[device_id]
        device.up = True
        device.ready_at = None
        device.last_up_at = now
        self._annotate(device, "up", now)
        bot = self.bots.get(device_id)
        if bot is not None:
            # Persistent survivor: picks its tasks up where it left off.
            bot.timer_gen += 1
            self._annotate(device, "white_resume", now)
            self._send(sentinel_tick(bot, now), None, now)
            cfg = self.config
            self._push(
                now + cfg.bot_step_interval,
                EventKind.BOT_STEP,
                device_id,
                (device_id, bot.incarnation, bot.timer_gen),
            )
            self._push(
                now + cfg.keepalive_period,
                EventKind.SENTINEL_TICK,
                device_id,
                (device_id, bot.incarnation, bot.timer_gen),
            )
            self._push(
                now + 1.0 / cfg.white_scan_rate,
                EventKind.SCAN_TICK,
                device_id,
                (device_id, WHITE, bot.timer_gen),
            )
        if self.config.reboot_rate is not None:
            self._push(
                now + self.rng.expovariate(1.0 / self.config.reboot_rate),
                EventKind.DEVICE_REBOOT,
                device_id,
                (device_id, False),
            )

    def _on_owner_reacts(self, now: float, device_id: DeviceId) -> None:
        device = self.devices[device_id]
        if device.permanent_cause is not None:
            return
        device.permanent_cause = PermanentCause.OWNER_ACTION
        device.black_resident = False  # the owner's fix resets the device
        self._update_state(device, "owner_fixed", now)
        bot = self.bots.get(device_id)
        if bot is not None and device.up:
            # Wake the bot so it verifies the fix and frees the device.
            self._push(
                now,
                EventKind.BOT_STEP,
                device_id,
                (device_id, bot.incarnation, bot.timer_gen),
            )

    # -- admin ------------------------------------------------------------------

    def _on_admin_command(self, now: float, cmd: ControlCommand) -> None:
        outs = self.cnc.admin_command(cmd, now)
        if cmd.action is ControlAction.RELEASE_DEVICE:
            self._annotate(self.devices[cmd.device], "released", now)
        for out in outs:
            self._dispatch_outbound(out, now)

    # -- reporting ---------------------------------------------------------------

    def state_counts(self) -> Dict[str, int]:
        return {tag.name.lower(): self._counts[tag] for tag in StateTag}

    def outcome_histogram(self) -> Dict[str, int]:
        hist: Dict[str, int] = {}
        for dev in self.ever_white:
            key = self.outcomes[dev]
            hist[key] = hist.get(key, 0) + 1
        return hist


def run(config: SimConfig, cnc: Optional[CncState] = None) -> Tuple[EventLog, MetricsSeries]:
    """Run one simulation to completion. Deterministic given (config, cnc)."""
    return Engine(config, cnc).run()
