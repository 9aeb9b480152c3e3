"""Named simulation presets.

The three lifecycle presets pin every stochastic knob (fixed-period
scanning, scripted reboots, degenerate probabilities), so their event logs
are reproducible byte-for-byte and serve as golden traces:

  scenario1  owner reads the notification and fixes the device themselves
  scenario2  impassive owner; persistent install survives a mid-task reboot,
             then the credential change lands
  scenario3  no persistence possible; a reboot wipes the bot, the watchlist
             brings it back, and a firmware update finishes the job

``competition`` runs both worms on a 200-device population where every
device has at least one permanent fix available; ``baseline-black-only``
is the black worm alone, used to cross-check infection dynamics against an
independent model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .domain import Credentials
from .engine import ConfigError, SimConfig

DEFAULT_DICTIONARY = (
    Credentials("admin", "admin"),
    Credentials("admin", "1234"),
    Credentials("root", "root"),
    Credentials("root", "default"),
    Credentials("user", "user"),
    Credentials("support", "support"),
    Credentials("admin", "password"),
    Credentials("guest", "guest"),
)

SCENARIO_NAMES = (
    "scenario1",
    "scenario2",
    "scenario3",
    "competition",
    "baseline-black-only",
)


@dataclass
class RunManifest:
    config: SimConfig
    scenario: Optional[str] = None
    output_dir: str = "out"


def _lifecycle_base(seed: int, **overrides) -> SimConfig:
    params = dict(
        n_devices=1,
        seed=seed,
        horizon=10_800.0,
        weak_credential_dictionary=DEFAULT_DICTIONARY,
        owner_responsiveness=0.0,
        owner_response_delay=60.0,
        reboot_rate=None,
        downtime=30.0,
        network_latency=0.5,
        white_worm_enabled=True,
        black_worm_enabled=False,
        white_scan_rate=0.1,
        bot_step_interval=1.0,
        owner_window=3600.0,
        renotify_interval=86_400.0,
        fw_update_duration=60.0,
        reboot_notice_visibility=1.0,
        keepalive_period=5.0,
        loader_poll_interval=10.0,
        metrics_interval=60.0,
    )
    params.update(overrides)
    return SimConfig(**params)


def scenario1(seed: int = 1) -> SimConfig:
    """Responsive owner: notification alone permanently secures the device."""
    return _lifecycle_base(
        seed,
        capability_mix=(1.0, 1.0, 1.0),
        owner_responsiveness=1.0,
    )


def scenario2(seed: int = 1) -> SimConfig:
    """Persistent install, reboot mid-task, then credential change.

    The reboot is scripted between the persistence install and the
    credential change so the trace shows the bot surviving the wipe and
    resuming where it left off."""
    return _lifecycle_base(
        seed,
        capability_mix=(1.0, 1.0, 1.0),
        scripted_reboots=((0, 3615.5),),
    )


def scenario3(seed: int = 1) -> SimConfig:
    """No persistence, no credential change: reboot wipes the bot, the
    watchlist reinfects the device, and a firmware update secures it."""
    return _lifecycle_base(
        seed,
        capability_mix=(0.0, 0.0, 1.0),
        scripted_reboots=((0, 3614.5),),
    )


def competition(seed: int = 0, n_devices: int = 200, horizon: float = 100_000.0) -> SimConfig:
    """Both worms loose on one population; every device can be fixed
    permanently, so the white worm should eventually hold the whole field."""
    return SimConfig(
        n_devices=n_devices,
        seed=seed,
        horizon=horizon,
        weak_credential_dictionary=DEFAULT_DICTIONARY,
        capability_mix=(0.5, 0.7, 0.7),
        ensure_permanent_fix=True,
        owner_responsiveness=0.0,
        owner_response_delay=3600.0,
        reboot_rate=2000.0,
        downtime=30.0,
        network_latency=0.5,
        white_worm_enabled=True,
        black_worm_enabled=True,
        white_scan_rate=0.2,
        black_scan_rate=0.2,
        bot_step_interval=1.0,
        owner_window=50.0,
        renotify_interval=86_400.0,
        fw_update_duration=60.0,
        reboot_notice_visibility=0.5,
        metrics_interval=10_000.0,
    )


def baseline_black_only(seed: int = 0, n_devices: int = 10, horizon: float = 3000.0) -> SimConfig:
    """The black worm alone: reference dynamics for the infection-model
    cross-check."""
    return SimConfig(
        n_devices=n_devices,
        seed=seed,
        horizon=horizon,
        weak_credential_dictionary=DEFAULT_DICTIONARY,
        capability_mix=(0.5, 0.5, 0.5),
        owner_responsiveness=0.0,
        reboot_rate=120.0,
        downtime=30.0,
        network_latency=0.5,
        white_worm_enabled=False,
        black_worm_enabled=True,
        black_scan_rate=0.1,
        white_scan_rate=0.1,
        metrics_interval=100.0,
    )


def build(name: str, seed: Optional[int] = None, **overrides) -> SimConfig:
    """Look up a preset by CLI name. ``overrides`` are applied on top, so
    flags can still adjust device counts or horizons for ad-hoc runs."""
    factories = {
        "scenario1": scenario1,
        "scenario2": scenario2,
        "scenario3": scenario3,
        "competition": competition,
        "baseline-black-only": baseline_black_only,
    }
    if name not in factories:
        raise ConfigError(
            f"unknown scenario {name!r}; expected one of {', '.join(SCENARIO_NAMES)}"
        )
    config = factories[name]() if seed is None else factories[name](seed=seed)
    if overrides:
        from dataclasses import replace

        config = replace(config, **overrides)
        config.validate()
    return config
