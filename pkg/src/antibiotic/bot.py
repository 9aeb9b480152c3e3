"""White-bot finite state machine.

One bot instance lives on one infected device and walks a fixed decision
tree: sanitize, notify the owner, give the owner a window to act, then try
the permanent fixes in order (persistent install first so reboots cannot
interrupt, then credential change, then firmware update). If nothing
permanent is possible the bot stays resident as a guard, holding the device
secured in memory and re-notifying the owner on an interval.

``bot_step`` performs one phase transition and returns effects; it never
mutates the device. The engine owns all device mutation and event
scheduling, which keeps the FSM trivially testable.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

from .domain import DeviceId, SimDevice
from .protocol import KeepAlive, RebootNotice, VulnReport


class BotPhase(enum.Enum):
    SANITIZING = "sanitizing"
    NOTIFYING = "notifying"
    AWAITING_OWNER = "awaiting_owner"
    CHECK_PERSIST = "check_persist"
    PERSISTED = "persisted"
    CHECK_CRED_CHANGE = "check_cred_change"
    CHECK_FW_UPDATE = "check_fw_update"
    GUARDING = "guarding"
    TERMINATED = "terminated"


class TerminationReason(enum.Enum):
    OWNER_FIXED = "owner_fixed"
    CRED_CHANGED = "cred_changed"
    FW_UPDATED = "fw_updated"
    RELEASED = "released"
    SHUTDOWN = "shutdown"


@dataclass(frozen=True)
class BotParams:
    step_interval: float = 1.0
    owner_window: float = 86_400.0
    renotify_interval: float = 86_400.0
    fw_update_duration: float = 60.0


# Effects the engine applies on the bot's behalf. The bot computes, the
# engine mutates.
@dataclass(frozen=True)
class SanitizeHost:
    pass


@dataclass(frozen=True)
class NotifyOwner:
    pass


@dataclass(frozen=True)
class InstallPersistence:
    pass


@dataclass(frozen=True)
class ChangeCredentials:
    pass


@dataclass(frozen=True)
class StartFirmwareUpdate:
    complete_at: float


@dataclass(frozen=True)
class CompleteFirmwareUpdate:
    pass


@dataclass(frozen=True)
class Terminate:
    reason: TerminationReason


BotEffect = Union[
    SanitizeHost,
    NotifyOwner,
    InstallPersistence,
    ChangeCredentials,
    StartFirmwareUpdate,
    CompleteFirmwareUpdate,
    Terminate,
]


@dataclass
class BotInstance:
    host: DeviceId
    incarnation: int
    phase: BotPhase = BotPhase.SANITIZING
    persistent: bool = False
    keepalive_seq: int = 0
    owner_deadline: Optional[float] = None
    fw_done_at: Optional[float] = None
    terminated_reason: Optional[TerminationReason] = None
    # Bumped whenever scheduled timers must be invalidated (reboot, resume).
    timer_gen: int = 0

    def active(self) -> bool:
        return self.phase is not BotPhase.TERMINATED


def bot_step(
    bot: BotInstance, device: SimDevice, now: float, params: BotParams
) -> Tuple[List[BotEffect], Optional[float]]:
    """Advance the FSM one transition.

    Returns (effects, next_step_at). ``next_step_at`` is None once the bot
    has terminated or when resumption is event-driven (device down).
    """
    if bot.phase is BotPhase.TERMINATED:
        return [], None
    if not device.up:
        # Paused; the engine reschedules on device-up if the bot survives.
        return [], None

    step = params.step_interval

    # A permanent fix we did not apply ourselves means the owner (or another
    # actor) secured the device: verify and free it.
    if device.permanent_cause is not None:
        bot.phase = BotPhase.TERMINATED
        bot.terminated_reason = TerminationReason.OWNER_FIXED
        return [Terminate(TerminationReason.OWNER_FIXED)], None

    if bot.phase is BotPhase.SANITIZING:
        bot.phase = BotPhase.NOTIFYING
        return [SanitizeHost()], now + step

    if bot.phase is BotPhase.NOTIFYING:
        bot.owner_deadline = now + params.owner_window
        bot.phase = BotPhase.AWAITING_OWNER
        return [NotifyOwner()], bot.owner_deadline

    if bot.phase is BotPhase.AWAITING_OWNER:
        if now < bot.owner_deadline:
            return [], bot.owner_deadline
        bot.phase = BotPhase.CHECK_PERSIST
        return [], now + step

    if bot.phase is BotPhase.CHECK_PERSIST:
        if device.capabilities.persist_possible:
            bot.persistent = True
            bot.phase = BotPhase.PERSISTED
            return [InstallPersistence()], now + step
        bot.phase = BotPhase.CHECK_CRED_CHANGE
        return [], now + step

    if bot.phase is BotPhase.PERSISTED:
        bot.phase = BotPhase.CHECK_CRED_CHANGE
        return [], now + step

    if bot.phase is BotPhase.CHECK_CRED_CHANGE:
        if device.capabilities.cred_change_possible:
            bot.phase = BotPhase.TERMINATED
            bot.terminated_reason = TerminationReason.CRED_CHANGED
            return [ChangeCredentials(), Terminate(TerminationReason.CRED_CHANGED)], None
        bot.phase = BotPhase.CHECK_FW_UPDATE
        return [], now + step

    if bot.phase is BotPhase.CHECK_FW_UPDATE:
        if device.capabilities.fw_update_possible:
            if bot.fw_done_at is None:
                bot.fw_done_at = now + params.fw_update_duration
                return [StartFirmwareUpdate(bot.fw_done_at)], bot.fw_done_at
            if now >= bot.fw_done_at:
                bot.phase = BotPhase.TERMINATED
                bot.terminated_reason = TerminationReason.FW_UPDATED
                return [
                    CompleteFirmwareUpdate(),
                    Terminate(TerminationReason.FW_UPDATED),
                ], None
            return [], bot.fw_done_at
        # Nothing permanent is possible: hold the perimeter and keep nagging.
        bot.phase = BotPhase.GUARDING
        return [], now + params.renotify_interval

    if bot.phase is BotPhase.GUARDING:
        return [NotifyOwner()], now + params.renotify_interval

    raise AssertionError(f"unhandled phase {bot.phase}")


def sanitize(device: SimDevice) -> None:
    """Eradicate any other malware on the device and arm the perimeter guard
    so nothing reinfects it while the white bot is resident. Idempotent.

    Mutates process flags only; the engine re-derives and logs the resulting
    security state."""
    device.black_resident = False
    device.sanitized = True


def scan_step(
    scanner: Optional[DeviceId],
    devices: list,
    rng,
    white_dictionary: frozenset,
    released: frozenset,
) -> Optional[VulnReport]:
    """One scan: probe a uniformly random device, report it if it is weak.

    Never infects anything itself; infection is the loader's job. ``scanner``
    is None for the CNC-side seed scanner.
    """
    target = devices[rng.randrange(len(devices))]
    if target.id in released:
        return None
    if not target.up or target.white_resident:
        return None
    if target.permanent_cause is not None:
        return None
    if target.credentials not in white_dictionary:
        return None
    return VulnReport(reporter=scanner, target=target.id, credentials=target.credentials)


def sentinel_tick(
    bot: BotInstance, now: float, imminent_reboot: bool = False
) -> Union[KeepAlive, RebootNotice]:
    """Emit the next keep-alive, or a best-effort reboot notice when the host
    is about to go down."""
    if imminent_reboot:
        return RebootNotice(bot.host)
    msg = KeepAlive(bot.host, bot.keepalive_seq)
    bot.keepalive_seq += 1
    return msg
