import pytest

from antibiotic.cnc import RecordKind
from antibiotic.domain import (
    Credentials,
    DeviceCapabilities,
    OwnerProfile,
    PermanentCause,
    SimDevice,
    StateTag,
)
from antibiotic.engine import (
    ConfigError,
    Engine,
    EventLog,
    SimConfig,
    black_worm_can_infect,
    run,
)
from antibiotic.protocol import VulnReport, decode
from antibiotic.scenarios import (
    DEFAULT_DICTIONARY,
    baseline_black_only,
    competition,
    scenario1,
    scenario2,
    scenario3,
)


def small_mixed(seed=3, **overrides):
    params = dict(
        n_devices=12,
        seed=seed,
        horizon=1200.0,
        weak_credential_dictionary=DEFAULT_DICTIONARY,
        capability_mix=(0.5, 0.5, 0.5),
        owner_responsiveness=0.3,
        owner_response_delay=120.0,
        reboot_rate=300.0,
        white_worm_enabled=True,
        black_worm_enabled=True,
        white_scan_rate=0.2,
        black_scan_rate=0.2,
        owner_window=60.0,
        metrics_interval=50.0,
    )
    params.update(overrides)
    return SimConfig(**params)


class TestConfigValidation:
    def test_zero_devices_rejected(self):
        with pytest.raises(ConfigError):
            small_mixed(n_devices=0).validate()

    def test_zero_horizon_rejected(self):
        with pytest.raises(ConfigError):
            small_mixed(horizon=0).validate()

    def test_empty_dictionary_rejected(self):
        with pytest.raises(ConfigError):
            small_mixed(weak_credential_dictionary=()).validate()

    def test_bad_scan_rate_rejected(self):
        with pytest.raises(ConfigError):
            small_mixed(white_scan_rate=0.0).validate()

    def test_engine_rejects_invalid_config(self):
        with pytest.raises(ConfigError):
            Engine(small_mixed(n_devices=0))


class TestDeterminism:
    def test_identical_seed_identical_log(self):
        a, _ = run(small_mixed(seed=11))
        b, _ = run(small_mixed(seed=11))
        assert a.to_bytes() == b.to_bytes()

    def test_different_seed_differs(self):
        a, _ = run(small_mixed(seed=11))
        b, _ = run(small_mixed(seed=12))
        assert a.to_bytes() != b.to_bytes()

    def test_metrics_deterministic(self):
        _, m1 = run(small_mixed(seed=4))
        _, m2 = run(small_mixed(seed=4))
        assert m1.to_csv() == m2.to_csv()

    def test_log_serialization_roundtrip(self):
        log, _ = run(small_mixed(seed=5))
        blob = log.to_bytes()
        assert EventLog.from_bytes(blob).to_bytes() == blob


class TestConservationAndMonotonicity:
    def test_counts_sum_to_population_at_every_sample(self):
        cfg = small_mixed(seed=8)
        _, metrics = run(cfg)
        for _, snap in metrics.rows:
            assert snap.total_devices() == cfg.n_devices

    def test_secured_permanent_never_decreases(self):
        _, metrics = run(small_mixed(seed=8))
        values = [snap.secured_perm for _, snap in metrics.rows]
        assert all(b >= a for a, b in zip(values, values[1:]))

    def test_permanent_is_absorbing_in_log(self):
        log, _ = run(small_mixed(seed=9))
        for entry in log.state_changes():
            assert entry.old.tag is not StateTag.SECURED_PERMANENT

    def test_lattice_monotone_without_black_worm(self):
        log, _ = run(small_mixed(seed=10, black_worm_enabled=False))
        for entry in log.state_changes():
            assert entry.old.tag is not StateTag.SECURED_PERMANENT


class TestBlackWormEligibility:
    DICT = frozenset(DEFAULT_DICTIONARY)

    def target(self, **kwargs):
        defaults = dict(
            id=0,
            credentials=Credentials("admin", "admin"),
            capabilities=DeviceCapabilities(True, True, True),
            owner=OwnerProfile(0.0, 1.0),
        )
        defaults.update(kwargs)
        return SimDevice(**defaults)

    def test_vulnerable_weak_target_infectable(self):
        assert black_worm_can_infect(self.target(), 10.0, self.DICT)

    def test_permanently_secured_target_blocked(self):
        dev = self.target(permanent_cause=PermanentCause.FIRMWARE_UPDATE)
        assert not black_worm_can_infect(dev, 10.0, self.DICT)

    def test_white_resident_target_blocked(self):
        dev = self.target(white_resident=True, sanitized=True)
        assert not black_worm_can_infect(dev, 10.0, self.DICT)

    def test_down_target_blocked(self):
        assert not black_worm_can_infect(self.target(up=False), 10.0, self.DICT)

    def test_strong_credentials_blocked(self):
        dev = self.target(credentials=Credentials("u", "Xy9!longrandom"))
        assert not black_worm_can_infect(dev, 10.0, self.DICT)

    def test_no_reinfection_in_the_boot_instant(self):
        dev = self.target(last_up_at=10.0)
        assert not black_worm_can_infect(dev, 10.0, self.DICT)
        assert black_worm_can_infect(dev, 10.5, self.DICT)


class TestBlackWormVolatility:
    def test_never_black_immediately_after_up(self):
        log, _ = run(small_mixed(seed=13, horizon=2000.0))
        for entry in log.entries:
            if entry.reason == "up":
                assert entry.new.tag is not StateTag.INFECTED_BLACK

    def test_black_wiped_by_reboot(self):
        log, _ = run(small_mixed(seed=13, horizon=2000.0))
        wipes = [
            e
            for e in log.state_changes()
            if e.reason == "reboot_wipe" and e.old.tag is StateTag.INFECTED_BLACK
        ]
        for e in wipes:
            assert e.new.tag is StateTag.VULNERABLE

    def test_black_only_never_touches_white_states(self):
        log, _ = run(baseline_black_only(seed=1))
        for e in log.state_changes():
            assert e.new.tag in (StateTag.VULNERABLE, StateTag.INFECTED_BLACK)


class TestRebootSemantics:
    def base(self, **overrides):
        params = dict(
            n_devices=1,
            seed=0,
            horizon=400.0,
            weak_credential_dictionary=DEFAULT_DICTIONARY,
            capability_mix=(0.0, 0.0, 0.0),
            owner_responsiveness=0.0,
            reboot_rate=None,
            white_scan_rate=0.1,
            owner_window=3600.0,
            metrics_interval=100.0,
        )
        params.update(overrides)
        return SimConfig(**params)

    def test_nonpersistent_bot_wiped_and_state_reverts(self):
        # Guard-state device (no permanent fix possible), reboot mid-hold.
        cfg = self.base(scripted_reboots=((0, 100.0),))
        engine = Engine(cfg)
        log, _ = engine.run()
        wipe = [e for e in log.state_changes() if e.reason == "reboot_wipe"]
        assert len(wipe) == 1
        assert wipe[0].old.tag is StateTag.SECURED_TEMPORARY
        assert wipe[0].new.tag is StateTag.VULNERABLE
        # Reboot resistance: the loss is detected and the device reinfected.
        reasons = [e.reason for e in log.entries if e.at > 100.0]
        assert "watchlisted" in reasons
        reloads = [
            e for e in log.state_changes() if e.reason == "white_load" and e.at > 100.0
        ]
        assert len(reloads) == 1
        assert engine.devices[0].state.tag is StateTag.SECURED_TEMPORARY

    def test_persistent_bot_survives_and_resumes(self):
        cfg = self.base(capability_mix=(1.0, 0.0, 0.0), owner_window=20.0,
                        scripted_reboots=((0, 50.0),), horizon=300.0)
        engine = Engine(cfg)
        log, _ = engine.run()
        reasons = [e.reason for e in log.entries]
        assert "persist_installed" in reasons
        assert "reboot_persist" in reasons
        assert "white_resume" in reasons
        # Held through the reboot: never reverted to vulnerable.
        assert all(e.new.tag is not StateTag.VULNERABLE for e in log.state_changes()[1:])
        assert engine.devices[0].state.tag is StateTag.SECURED_TEMPORARY

    def test_permanently_secured_device_unchanged_by_reboot(self):
        cfg = self.base(capability_mix=(0.0, 1.0, 0.0), owner_window=20.0,
                        scripted_reboots=((0, 200.0),), horizon=300.0)
        engine = Engine(cfg)
        log, _ = engine.run()
        final = engine.devices[0].state
        assert final.cause is PermanentCause.CREDENTIAL_CHANGE
        after_reboot = [e for e in log.state_changes() if e.at >= 200.0]
        assert after_reboot == []

    def test_reboot_of_rebooting_device_is_noop(self):
        cfg = self.base(scripted_reboots=((0, 100.0), (0, 110.0)))
        engine = Engine(cfg)
        log, _ = engine.run()
        ups = [e for e in log.entries if e.reason == "up"]
        assert len(ups) == 1  # second reboot ignored while down

    def test_schedule_reboot_unknown_device_errors(self):
        engine = Engine(self.base())
        with pytest.raises(ConfigError):
            engine.schedule_reboot(5, 10.0)


class TestWhiteInfectionPath:
    def test_every_white_infection_has_report_and_load(self):
        """Log-scan oracle: each white_load is preceded by a vulnerability
        report for that target and a successful load at the same instant."""
        engine = Engine(small_mixed(seed=21))
        log, _ = engine.run()
        records = engine.cnc.storage.records
        report_times = {}
        load_success_times = {}
        for kind, at, body in records:
            if kind == RecordKind.MESSAGE:
                msg = decode(body)
                if isinstance(msg, VulnReport):
                    report_times.setdefault(msg.target, []).append(at)
            elif kind == RecordKind.LOAD_RESULT:
                import struct

                dev, ok = struct.unpack(">QB", body)
                if ok:
                    load_success_times.setdefault(dev, []).append(at)
        infections = [e for e in log.state_changes() if e.reason == "white_load"]
        assert infections, "expected at least one white infection"
        for e in infections:
            assert any(t < e.at for t in report_times.get(e.device, []))
            assert any(abs(t - e.at) < 1e-9 for t in load_success_times.get(e.device, []))

    def test_black_devices_get_taken_over(self):
        cfg = small_mixed(seed=2, horizon=3000.0, owner_responsiveness=0.0)
        engine = Engine(cfg)
        log, _ = engine.run()
        takeovers = [
            e
            for e in log.state_changes()
            if e.reason == "white_load" and e.old.tag is StateTag.INFECTED_BLACK
        ]
        assert takeovers, "white worm should displace black infections"

    def test_guard_holds_while_white_resident(self):
        """No black infection lands on a device while a white bot sits on it."""
        log, _ = run(small_mixed(seed=22, horizon=2500.0))
        resident = set()
        for e in log.entries:
            if e.reason == "white_load":
                resident.add(e.device)
            elif e.reason in ("reboot_wipe", "white_exit") or e.reason.startswith(
                "bot_terminated"
            ):
                resident.discard(e.device)
            elif e.reason == "black_infect":
                assert e.device not in resident

    def test_scenario_examples_end_permanently_secured(self):
        for cfg, cause in (
            (scenario1(), PermanentCause.OWNER_ACTION),
            (scenario2(), PermanentCause.CREDENTIAL_CHANGE),
            (scenario3(), PermanentCause.FIRMWARE_UPDATE),
        ):
            engine = Engine(cfg)
            log, _ = engine.run()
            assert engine.devices[0].state.cause is cause
            assert log.state_changes()[-1].new.cause is cause


class TestQuiescenceAndSampling:
    def test_metrics_fill_to_horizon(self):
        cfg = competition(seed=1)
        _, metrics = run(cfg)
        times = [t for t, _ in metrics.rows]
        assert times[0] == 0.0
        assert times[-1] == pytest.approx(cfg.horizon)
        assert len(times) == int(cfg.horizon / cfg.metrics_interval) + 1

    def test_stats_history_mirrors_metrics(self):
        cfg = small_mixed(seed=6)
        engine = Engine(cfg)
        _, metrics = engine.run()
        assert len(engine.cnc.stats_history) == len(metrics.rows)
        for (t, snap), hist in zip(metrics.rows, engine.cnc.stats_history):
            assert snap == hist
            assert snap.sim_time_us == round(t * 1e6)

    def test_outcome_histogram_covers_every_white_infection(self):
        engine = Engine(small_mixed(seed=14))
        engine.run()
        hist = engine.outcome_histogram()
        assert sum(hist.values()) == len(engine.ever_white)
