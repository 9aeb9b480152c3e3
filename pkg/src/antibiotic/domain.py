"""Core vocabulary shared by the simulator, the bots, and the control server.

A simulated device is a bundle of credentials, immutable capability flags,
owner-behavior parameters, and volatile process state. Its security posture is
always derivable from those fields; :func:`classify` is the single source of
truth for the five-state lattice:

    Vulnerable -> InfectedBlack / InfectedWhite -> SecuredTemporary
               -> SecuredPermanent (absorbing)

Temporary measures live in device memory and die with a reboot; permanent ones
(owner fix, credential change, firmware update) survive anything.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

# Opaque 64-bit identifier, unique per device and stable across reboots.
DeviceId = int

MAX_CREDENTIAL_BYTES = 64


class MalformedDeviceError(Exception):
    """Device fields contradict each other. This signals a simulator bug,
    never a runtime condition."""


@dataclass(frozen=True, order=True)
class Credentials:
    username: str
    password: str

    def __post_init__(self):
        for part in (self.username, self.password):
            if not part:
                raise ValueError("credential fields must be non-empty")
            if len(part.encode("utf-8")) > MAX_CREDENTIAL_BYTES:
                raise ValueError(
                    f"credential fields are limited to {MAX_CREDENTIAL_BYTES} bytes"
                )


@dataclass(frozen=True)
class DeviceCapabilities:
    """What is physically possible on a device. Immutable for its lifetime."""

    persist_possible: bool
    cred_change_possible: bool
    fw_update_possible: bool

    def any_permanent_fix(self) -> bool:
        return self.cred_change_possible or self.fw_update_possible


class StateTag(enum.IntEnum):
    VULNERABLE = 0
    INFECTED_BLACK = 1
    INFECTED_WHITE = 2
    SECURED_TEMPORARY = 3
    SECURED_PERMANENT = 4


class PermanentCause(enum.IntEnum):
    OWNER_ACTION = 0
    CREDENTIAL_CHANGE = 1
    FIRMWARE_UPDATE = 2


@dataclass(frozen=True)
class SecurityState:
    tag: StateTag
    cause: Optional[PermanentCause] = None

    def __post_init__(self):
        if (self.tag is StateTag.SECURED_PERMANENT) != (self.cause is not None):
            raise ValueError("cause is present iff tag is SECURED_PERMANENT")

    def is_permanent(self) -> bool:
        return self.tag is StateTag.SECURED_PERMANENT

    def short(self) -> str:
        if self.cause is not None:
            return f"{self.tag.name.lower()}:{self.cause.name.lower()}"
        return self.tag.name.lower()


VULNERABLE = SecurityState(StateTag.VULNERABLE)
INFECTED_BLACK = SecurityState(StateTag.INFECTED_BLACK)
INFECTED_WHITE = SecurityState(StateTag.INFECTED_WHITE)
SECURED_TEMPORARY = SecurityState(StateTag.SECURED_TEMPORARY)


def secured_permanent(cause: PermanentCause) -> SecurityState:
    return SecurityState(StateTag.SECURED_PERMANENT, cause)


@dataclass(frozen=True)
class OwnerProfile:
    """Stochastic owner behavior: probability of reacting to one notification,
    and how long the reaction takes in simulated time."""

    responsiveness: float
    response_delay: float

    def __post_init__(self):
        if not 0.0 <= self.responsiveness <= 1.0:
            raise ValueError("responsiveness must be in [0, 1]")
        if self.response_delay < 0:
            raise ValueError("response_delay must be >= 0")


@dataclass(frozen=True)
class WhiteBotProcess:
    persistent: bool


@dataclass(frozen=True)
class BlackBotProcess:
    pass


@dataclass
class SimDevice:
    """One simulated IoT device.

    Mutable process/posture fields are only ever touched by the simulation
    engine; everything else is fixed at creation. ``state`` is a cache that
    the engine keeps equal to ``classify(self)`` after every mutation.
    """

    id: DeviceId
    credentials: Credentials
    capabilities: DeviceCapabilities
    owner: OwnerProfile

    white_resident: bool = False
    white_persistent: bool = False
    # In-memory perimeter guard armed by the sanitizer. Survives a reboot
    # only when a persistent white bot re-arms it at startup.
    sanitized: bool = False
    black_resident: bool = False
    permanent_cause: Optional[PermanentCause] = None

    up: bool = True
    ready_at: Optional[float] = None  # set while rebooting
    last_up_at: float = float("-inf")

    state: SecurityState = field(default=VULNERABLE)

    @property
    def resident_processes(self) -> frozenset:
        procs = set()
        if self.white_resident:
            procs.add(WhiteBotProcess(persistent=self.white_persistent))
        if self.black_resident:
            procs.add(BlackBotProcess())
        return frozenset(procs)

    def refresh_state(self) -> SecurityState:
        self.state = classify(self)
        return self.state


def classify(device: SimDevice) -> SecurityState:
    """Derive the security-state tag from raw device fields.

    Pure and deterministic. Raises :class:`MalformedDeviceError` on field
    combinations no reachable simulation can produce.
    """
    if device.sanitized and not device.white_resident:
        raise MalformedDeviceError(
            f"device {device.id}: sanitized guard without a white bot resident"
        )
    if device.white_persistent and not device.white_resident:
        raise MalformedDeviceError(
            f"device {device.id}: persistence flag without a white bot resident"
        )
    if device.white_persistent and not device.capabilities.persist_possible:
        raise MalformedDeviceError(
            f"device {device.id}: persistent install on a device that cannot persist"
        )
    if device.permanent_cause is not None and device.black_resident:
        raise MalformedDeviceError(
            f"device {device.id}: black bot resident on a permanently secured device"
        )

    if device.permanent_cause is not None:
        return secured_permanent(device.permanent_cause)
    if device.black_resident:
        return INFECTED_BLACK
    if device.white_resident:
        return SECURED_TEMPORARY if device.sanitized else INFECTED_WHITE
    return VULNERABLE
