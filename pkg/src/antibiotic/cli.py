"""Scenario runner and operations tool.

``run`` executes a simulation and writes three artifacts into the output
directory: ``events.log`` (binary state-change trace), ``metrics.csv``
(per-sample state counts), and ``summary.txt`` (final counts plus the
per-device outcome histogram). ``serve`` runs the simulation paced against
the wall clock while exposing the CNC HTTP API and dashboard assets.

Exit codes: 0 ok, 2 invalid configuration, 3 I/O failure, 4 port in use.
"""

from __future__ import annotations

import argparse
import logging
import os
import socket
import sys
from dataclasses import fields, replace
from typing import List, Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .domain import Credentials
from .engine import ConfigError, Engine, SimConfig
from .scenarios import DEFAULT_DICTIONARY, RunManifest, SCENARIO_NAMES, build

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_BAD_CONFIG = 2
EXIT_IO = 3
EXIT_PORT_IN_USE = 4

ADMIN_TOKEN_ENV = "ANTIBIOTIC_ADMIN_TOKEN"

_CONFIG_FIELDS = {f.name for f in fields(SimConfig)}


def load_toml_config(path: str) -> dict:
    """A TOML mirror of SimConfig. Credentials are [user, pass] pairs and
    scripted reboots are {device, at} tables."""
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    unknown = set(raw) - _CONFIG_FIELDS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if "weak_credential_dictionary" in raw:
        raw["weak_credential_dictionary"] = tuple(
            Credentials(u, p) for u, p in raw["weak_credential_dictionary"]
        )
    if "scripted_reboots" in raw:
        raw["scripted_reboots"] = tuple(
            (int(e["device"]), float(e["at"])) for e in raw["scripted_reboots"]
        )
    if "capability_mix" in raw:
        raw["capability_mix"] = tuple(raw["capability_mix"])
    return raw


def build_manifest(args) -> RunManifest:
    overrides = {}
    if args.config:
        overrides.update(load_toml_config(args.config))
    if args.devices is not None:
        overrides["n_devices"] = args.devices
    if args.horizon is not None:
        overrides["horizon"] = args.horizon
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "metrics_interval", None) is not None:
        overrides["metrics_interval"] = args.metrics_interval

    if args.scenario:
        config = build(args.scenario, seed=args.seed)
        stale = dict(overrides)
        stale.pop("seed", None)
        if stale:
            config = replace(config, **stale)
    else:
        params = dict(
            n_devices=10,
            seed=0,
            horizon=600.0,
            weak_credential_dictionary=DEFAULT_DICTIONARY,
        )
        params.update(overrides)
        config = SimConfig(**params)
    config.validate()
    return RunManifest(config=config, scenario=args.scenario, output_dir=args.out)


def write_artifacts(manifest: RunManifest, engine: Engine, log, metrics) -> None:
    out = manifest.output_dir
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "events.log"), "wb") as fh:
        fh.write(log.to_bytes())
    with open(os.path.join(out, "metrics.csv"), "w") as fh:
        fh.write(metrics.to_csv())
    with open(os.path.join(out, "summary.txt"), "w") as fh:
        fh.write(render_summary(manifest, engine))


def render_summary(manifest: RunManifest, engine: Engine) -> str:
    counts = engine.state_counts()
    lines = [
        f"scenario: {manifest.scenario or 'custom'}",
        f"seed: {engine.config.seed}",
        f"devices: {engine.config.n_devices}",
        f"horizon: {engine.config.horizon:.3f}",
        f"end_time: {engine.now:.3f}",
        f"vulnerable: {counts['vulnerable']}",
        f"infected_black: {counts['infected_black']}",
        f"infected_white: {counts['infected_white']}",
        f"secured_temp: {counts['secured_temporary']}",
        f"secured_perm: {counts['secured_permanent']}",
        f"live_bots: {len(engine.bots)}",
        f"devices_ever_white: {len(engine.ever_white)}",
        "terminal_reasons:",
    ]
    hist = engine.outcome_histogram()
    for key in sorted(hist):
        lines.append(f"  {key}: {hist[key]}")
    return "\n".join(lines) + "\n"


def cmd_run(args) -> int:
    try:
        manifest = build_manifest(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    engine = Engine(manifest.config)
    log, metrics = engine.run()
    try:
        write_artifacts(manifest, engine, log, metrics)
    except OSError as exc:
        print(f"cannot write artifacts: {exc}", file=sys.stderr)
        return EXIT_IO
    print(render_summary(manifest, engine), end="")
    return EXIT_OK


def cmd_serve(args) -> int:
    try:
        manifest = build_manifest(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG

    host, _, port_str = args.bind.rpartition(":")
    host = host or "127.0.0.1"
    try:
        port = int(port_str)
    except ValueError:
        print(f"invalid bind address: {args.bind}", file=sys.stderr)
        return EXIT_BAD_CONFIG

    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        probe.bind((host, port))
    except OSError:
        print(f"port in use: {args.bind}", file=sys.stderr)
        return EXIT_PORT_IN_USE
    finally:
        probe.close()

    token = os.environ.get(ADMIN_TOKEN_ENV) or args.admin_token
    if token is None:
        print("warning: no admin token configured; admin endpoints disabled", file=sys.stderr)

    assets = args.assets if args.assets and os.path.isdir(args.assets) else None

    import uvicorn

    from .api import SimulationService, create_app

    engine = Engine(manifest.config)
    service = SimulationService(engine, time_dilation=args.time_dilation)
    app = create_app(service, token, assets_dir=assets)
    service.start()
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    finally:
        service.stop()
        try:
            os.makedirs(manifest.output_dir, exist_ok=True)
            with open(os.path.join(manifest.output_dir, "storage.bin"), "wb") as fh:
                fh.write(engine.cnc.storage.to_bytes())
        except OSError as exc:
            print(f"cannot flush storage: {exc}", file=sys.stderr)
            return EXIT_IO
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="antibiotic",
        description="white-worm IoT defense simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", choices=SCENARIO_NAMES, help="named preset")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--devices", type=int, default=None)
        p.add_argument("--horizon", type=float, default=None)
        p.add_argument("--config", help="TOML config file (flags override)")
        p.add_argument("--out", default="out", help="artifact directory")

    run_p = sub.add_parser("run", help="run a simulation and write artifacts")
    common(run_p)
    run_p.add_argument("--metrics-interval", type=float, default=None)
    run_p.set_defaults(func=cmd_run)

    serve_p = sub.add_parser("serve", help="serve the CNC API over a paced simulation")
    common(serve_p)
    serve_p.add_argument(
        "--metrics-interval",
        type=float,
        default=1.0,
        help="sampling period in simulated seconds for the live stream",
    )
    serve_p.add_argument("--bind", default="127.0.0.1:8080")
    serve_p.add_argument("--admin-token", default=None)
    serve_p.add_argument(
        "--time-dilation",
        type=float,
        default=0.1,
        help="wall seconds per simulated second",
    )
    serve_p.add_argument("--assets", default="frontend/dist", help="dashboard asset dir")
    serve_p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = make_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
