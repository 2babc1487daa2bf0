"""Fleet and physiological generators: determinism, physics, config."""

import json
import math
import random

import numpy as np
import pytest

from condmon.model import Timestamp
from condmon.features import Series, window_stats
from condmon.sim.config import (
    BadConfig,
    PhysioProfile,
    ScenarioConfig,
    StimulusEvent,
    default_config,
    dump_default_config,
    load_config,
    parse_config,
)
from condmon.sim.fleet import SIM_EPOCH, simulate_fleet
from condmon.sim.physio import generate_physio
from condmon.sim.world import BatteryModel, RssiModel, rssi, step_battery


def short_cfg(duration=60.0, seed=42) -> ScenarioConfig:
    cfg = default_config()
    cfg.duration_s = duration
    cfg.seed = seed
    return cfg


def msg_key(m):
    return (m.stream, m.stamp, m.seq, bytes(m.payload))


class TestRssiModel:
    def test_reference_distance_value(self):
        model = RssiModel(noise_sd_db=0.0)
        assert rssi(model, (0, 0), (1, 0)) == pytest.approx(-30.0)

    def test_monotone_in_distance_noise_free(self):
        model = RssiModel(noise_sd_db=0.0)
        values = [rssi(model, (0, 0), (d, 0))
                  for d in (1, 2, 4, 7, 11, 14)]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_clamped_below_reference_distance(self):
        model = RssiModel(noise_sd_db=0.0)
        assert rssi(model, (0, 0), (0.05, 0)) == rssi(model, (0, 0), (1, 0))

    def test_pathloss_formula(self):
        model = RssiModel(noise_sd_db=0.0)
        expect = -30.0 - 10 * 2.2 * math.log10(5.0)
        assert rssi(model, (0, 0), (5, 0)) == pytest.approx(expect)


class TestBatteryModel:
    def test_exact_linear_drain(self):
        model = BatteryModel()  # alpha 0.005, beta 0.02
        got = step_battery(model, 100.0, 0.5, 1.0)
        assert got == pytest.approx(100.0 - 0.015)

    def test_clamped_at_zero(self):
        assert step_battery(BatteryModel(alpha=5.0), 0.5, 0.0, 1.0) == 0.0

    def test_non_increasing_over_run(self):
        run = simulate_fleet(short_cfg(duration=120))
        for trace in run.robots.values():
            b = trace.battery
            assert all(x >= y for x, y in zip(b, b[1:]))
            assert all(0 <= x <= 100 for x in b)


class TestFleet:
    def test_deterministic_per_seed(self):
        a = simulate_fleet(short_cfg())
        b = simulate_fleet(short_cfg())
        assert list(map(msg_key, a.messages())) \
            == list(map(msg_key, b.messages()))

    def test_seed_changes_output(self):
        a = simulate_fleet(short_cfg(seed=1))
        b = simulate_fleet(short_cfg(seed=2))
        assert list(map(msg_key, a.messages())) \
            != list(map(msg_key, b.messages()))

    def test_robots_stay_in_workspace(self):
        cfg = short_cfg(duration=300)
        run = simulate_fleet(cfg)
        for trace in run.robots.values():
            assert all(0 <= x <= cfg.world.width for x in trace.x)
            assert all(0 <= y <= cfg.world.height for y in trace.y)

    def test_robots_never_intersect_obstacles(self):
        run = simulate_fleet(short_cfg(duration=300))
        assert run.min_obstacle_separation() > 0

    def test_duration_zero_zero_messages(self):
        run = simulate_fleet(short_cfg(duration=0))
        assert run.messages() == []
        assert run.stamps == []

    def test_ten_streams_with_default_config(self):
        run = simulate_fleet(short_cfg(duration=5))
        streams = {m.stream for m in run.messages()}
        assert len(streams) == 10
        assert streams == {f"robot{k}/{kind}" for k in range(1, 6)
                           for kind in ("battery", "wifi")}

    def test_initial_rssi_within_2db_of_run_minimum_noise_free(self):
        cfg = short_cfg(duration=600)
        cfg.rssi.noise_sd_db = 0.0
        run = simulate_fleet(cfg)
        for rid, trace in run.robots.items():
            gap = trace.rssi_dbm[0] - min(trace.rssi_dbm)
            assert gap <= 2.0, f"{rid}: start {gap:.2f} dB above minimum"

    def test_cpu_event_doubles_drain_in_window(self):
        cfg = short_cfg(duration=500)
        run = simulate_fleet(cfg)
        b = run.robots["robot4"].battery
        # Default event: robot4 cpu 0.2 -> 0.9 during [250, 420).
        drain_pre = b[100] - b[200]      # 100 s at cpu 0.2
        drain_during = b[300] - b[400]   # 100 s at cpu 0.9
        assert drain_pre == pytest.approx(100 * 0.009, rel=1e-9)
        assert drain_during == pytest.approx(100 * 0.023, rel=1e-9)

    def test_stamps_start_at_epoch_at_telemetry_rate(self):
        run = simulate_fleet(short_cfg(duration=3))
        assert run.stamps[0] == SIM_EPOCH
        assert [s.to_nanos() - SIM_EPOCH.to_nanos() for s in run.stamps] \
            == [0, 10**9, 2 * 10**9]

    def test_message_seq_counts_per_stream(self):
        run = simulate_fleet(short_cfg(duration=10))
        seqs = {}
        for m in run.messages():
            seqs.setdefault(m.stream, []).append(m.seq)
        for stream, seq in seqs.items():
            assert seq == list(range(1, 11)), stream


class TestPhysio:
    def test_deterministic_per_seed(self):
        p, sched = PhysioProfile(), default_config().schedule
        a = generate_physio(p, sched, 120.0, seed=9)
        b = generate_physio(p, sched, 120.0, seed=9)
        assert list(map(msg_key, a.messages())) \
            == list(map(msg_key, b.messages()))

    def test_channel_rates(self):
        run = generate_physio(PhysioProfile(), [], 60.0, seed=1)
        assert len(run.channels["ppg"].values) == 60 * 64
        assert len(run.channels["ecg"].values) == 60 * 130
        assert len(run.channels["gsr"].values) == 60 * 4
        n_ibi = len(run.channels["ibi"].values)
        assert 55 <= n_ibi <= 85  # ~0.85 s beats in 60 s

    def test_empty_schedule_is_stationary(self):
        """Disjoint 60 s windows agree within 3 sd of sampling error."""
        run = generate_physio(PhysioProfile(), [], 240.0, seed=5)
        for name, ch in run.channels.items():
            stamps = [int(t * 1e9) for t in ch.times_s]
            series = Series(name, stamps, list(ch.values))
            w1 = window_stats(series, Timestamp(0, 0), Timestamp(60, 0))
            w2 = window_stats(series, Timestamp(120, 0), Timestamp(180, 0))
            n1 = len(series.slice(Timestamp(0, 0), Timestamp(60, 0)))
            n2 = len(series.slice(Timestamp(120, 0), Timestamp(180, 0)))
            stderr = math.sqrt(w1.sd**2 / n1 + w2.sd**2 / n2)
            assert abs(w1.mean - w2.mean) <= 3 * stderr, name

    def test_single_image_onset_gsr_peak_timing_and_decay(self):
        sched = [StimulusEvent(30.0, "ImageOnset", 5.0)]
        run = generate_physio(PhysioProfile(), sched, 90.0, seed=3)
        ch = run.channels["gsr"]
        t = np.asarray(ch.times_s)
        v = np.asarray(ch.values, dtype=float)
        after = (t >= 30.0) & (t < 42.0)
        peak_t = t[after][np.argmax(v[after])]
        assert 1.5 <= peak_t - 30.0 <= 2.5
        # Decays back toward tonic: last 20 s sit well below the peak.
        tail = v[t >= 70.0].mean()
        assert v[after].max() - tail > 0.3

    def test_ibi_mean_rises_with_workload_level(self):
        sched = [StimulusEvent(60.0 * (k + 1), "WorkloadLevel", 60.0, level=k + 1)
                 for k in range(3)]
        run = generate_physio(PhysioProfile(), sched, 300.0, seed=7)
        ch = run.channels["ibi"]
        t = np.asarray(ch.times_s)
        v = np.asarray(ch.values, dtype=float)

        def mean_in(a, b):
            return v[(t >= a) & (t < b)].mean()

        base = mean_in(0, 60)
        levels = [mean_in(60 * (k + 1), 60 * (k + 2)) for k in range(3)]
        assert base < levels[0] < levels[1] < levels[2]

    def test_markers(self):
        sched = [StimulusEvent(60.0, "WorkloadLevel", 60.0, level=1),
                 StimulusEvent(30.0, "ImageOnset", 5.0)]
        run = generate_physio(PhysioProfile(), sched, 180.0, seed=2)
        assert run.segment_markers[0] == (0.0, "baseline")
        assert (60.0, "Dual 1-back") in run.segment_markers
        assert (120.0, "rest") in run.segment_markers
        assert run.stimulus_markers == [(30.0, "ImageOnset")]
        topics = {m.stream for m in run.messages()}
        assert "markers/segment" in topics
        assert "markers/stimulus" in topics

    def test_messages_sorted_with_unique_seq_per_stream(self):
        run = generate_physio(PhysioProfile(), default_config().schedule,
                              60.0, seed=4)
        messages = run.messages()
        keys = [(m.stamp.to_nanos(), m.stream, m.seq) for m in messages]
        assert keys == sorted(keys)
        per_stream = {}
        for m in messages:
            per_stream.setdefault(m.stream, []).append(m.seq)
        for stream, seqs in per_stream.items():
            assert seqs == sorted(seqs) and len(set(seqs)) == len(seqs)


class TestConfig:
    def test_default_dump_parses_back_identically(self):
        text = dump_default_config()
        cfg = parse_config(json.loads(text))
        assert cfg == default_config()

    def test_load_config_reports_json_syntax_position(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{\n  "seed": 1,\n  oops\n}\n')
        with pytest.raises(BadConfig, match=r"bad\.json:3:3"):
            load_config(str(p))

    def test_unknown_key_is_key_path_precise(self):
        with pytest.raises(BadConfig, match="seeed"):
            parse_config({"seeed": 1})

    def test_type_error_names_the_key(self):
        with pytest.raises(BadConfig, match="duration_s"):
            parse_config({"duration_s": "ten"})
        with pytest.raises(BadConfig, match="seed"):
            parse_config({"seed": True})  # bools are not ints here

    def test_semantic_error_robot_out_of_bounds(self):
        data = json.loads(dump_default_config())
        data["robots"][0]["x"] = 99.0
        with pytest.raises(BadConfig, match=r"robots\[0\]"):
            parse_config(data)

    def test_semantic_error_duplicate_robot_id(self):
        data = json.loads(dump_default_config())
        data["robots"][1]["id"] = data["robots"][0]["id"]
        with pytest.raises(BadConfig, match="duplicate"):
            parse_config(data)

    def test_semantic_error_cpu_event_unknown_robot(self):
        data = json.loads(dump_default_config())
        data["cpu_events"][0]["robot"] = "robot99"
        with pytest.raises(BadConfig, match="robot99"):
            parse_config(data)

    def test_stimulus_kind_validated(self):
        data = json.loads(dump_default_config())
        data["physio"]["schedule"][0]["kind"] = "Earthquake"
        with pytest.raises(BadConfig, match="Earthquake"):
            parse_config(data)
