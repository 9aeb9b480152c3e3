"""White-worm IoT defense simulator.

A command-and-control server, a device-securing bot FSM, and the binary
protocol between them, exercised against a deterministic discrete-event
simulation of a weakly-credentialed device population with a competing
conventional worm.
"""

from .domain import (
    Credentials,
    DeviceCapabilities,
    OwnerProfile,
    PermanentCause,
    SecurityState,
    SimDevice,
    StateTag,
    classify,
)
from .engine import Engine, EventLog, LogEntry, MetricsSeries, SimConfig, run
from .scenarios import RunManifest, build as build_scenario

__version__ = "0.1.0"
