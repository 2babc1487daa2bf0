"""Synthetic physiological streams with stimulus-driven deviations.

Phenomenological, not biophysical: a beat schedule drives IBI samples and
the PPG/ECG waveform templates; GSR is a tonic level plus noise plus
phasic responses. Stimulus events modulate the generators:

  WorkloadLevel(k)      IBI mean +k·ibi_workload_shift_s,
                        GSR tonic −k·gsr_workload_shift, for the duration
  ImageOnset/AudioOnset IBI mean −ibi_event_dip_s for the duration;
                        GSR adds one phasic response (latency 1.5 s,
                        0.2 s rise / 4 s decay double exponential), which
                        peaks ≈2.1 s after the marker

Everything is a pure function of (profile, schedule, duration, seed).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from condmon.model import StampedMessage, Timestamp
from condmon.bus.client import BusClient
from condmon.sim.config import PhysioProfile, StimulusEvent

SIM_EPOCH = Timestamp(1000, 0)

IBI_TOPIC = "human/ibi"
PPG_TOPIC = "human/ppg"
ECG_TOPIC = "human/ecg"
GSR_TOPIC = "human/gsr"
SEGMENT_TOPIC = "markers/segment"
STIMULUS_TOPIC = "markers/stimulus"


@dataclass
class Channel:
    topic: str
    times_s: np.ndarray  # seconds from scenario start
    values: np.ndarray


@dataclass
class PhysioRun:
    start: Timestamp
    channels: dict[str, Channel]
    segment_markers: list[tuple[float, str]]  # (t_s, segment name)
    stimulus_markers: list[tuple[float, str]]  # (t_s, kind)

    def messages(self) -> list[StampedMessage]:
        """Everything as stamped messages in global publish order."""
        out = []
        for name, t_s in sorted(
                [(f"segment:{n}", t) for t, n in self.segment_markers]
                + [(f"stimulus:{n}", t) for t, n in self.stimulus_markers],
                key=lambda p: p[1]):
            kind, _, label = name.partition(":")
            topic = SEGMENT_TOPIC if kind == "segment" else STIMULUS_TOPIC
            out.append(StampedMessage(
                stream=topic, stamp=_stamp(self.start, t_s), seq=0,
                payload=label.encode("utf-8")))
        for ch in self.channels.values():
            for i, (t, v) in enumerate(zip(ch.times_s, ch.values)):
                out.append(StampedMessage(
                    stream=ch.topic, stamp=_stamp(self.start, float(t)),
                    seq=i + 1, payload=struct.pack("<d", float(v))))
        out.sort(key=lambda m: (m.stamp.to_nanos(), m.stream, m.seq))
        # Re-number marker seq per topic after the global sort.
        seq: dict[str, int] = {}
        fixed = []
        for m in out:
            if m.seq == 0:
                seq[m.stream] = seq.get(m.stream, 0) + 1
                m = StampedMessage(stream=m.stream, stamp=m.stamp,
                                   seq=seq[m.stream], payload=m.payload)
            fixed.append(m)
        return fixed


def _stamp(start: Timestamp, t_s: float) -> Timestamp:
    return start.add_nanos(int(round(t_s * 1e9)))


def _workload_level(schedule: list[StimulusEvent], t: float) -> int:
    for e in schedule:
        if e.kind == "WorkloadLevel" and e.t_s <= t < e.t_s + e.duration_s:
            return e.level
    return 0


def _event_active(schedule: list[StimulusEvent], t: float) -> bool:
    return any(e.kind in ("ImageOnset", "AudioOnset")
               and e.t_s <= t < e.t_s + e.duration_s for e in schedule)


def generate_physio(profile: PhysioProfile, schedule: list[StimulusEvent],
                    duration_s: float, seed: int,
                    start: Timestamp = SIM_EPOCH) -> PhysioRun:
    rng = np.random.default_rng(seed)
    p = profile

    # Beat schedule: each interval drawn around the modulated IBI mean.
    beat_times = [0.0]
    ibis = []
    while beat_times[-1] < duration_s:
        t = beat_times[-1]
        mu = p.ibi_mean_s + _workload_level(schedule, t) * p.ibi_workload_shift_s
        if _event_active(schedule, t):
            mu -= p.ibi_event_dip_s
        ibi = max(0.3, mu + rng.normal(0.0, p.ibi_sd_s))
        ibis.append(ibi)
        beat_times.append(t + ibi)
    beats = np.asarray(beat_times)
    # IBI samples land on the closing beat of each interval.
    ibi_t = beats[1:]
    ibi_v = np.asarray(ibis)
    keep = ibi_t < duration_s
    ibi_t, ibi_v = ibi_t[keep], ibi_v[keep]

    def beat_phase(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Phase in [0,1) within the current beat, and the beat's IBI."""
        idx = np.clip(np.searchsorted(beats, t, side="right") - 1,
                      0, len(ibis) - 1)
        local_ibi = np.asarray(ibis)[idx]
        return (t - beats[idx]) / local_ibi, local_ibi

    # PPG: one systolic pulse per beat.
    n_ppg = int(duration_s * p.ppg_rate_hz)
    ppg_t = np.arange(n_ppg) / p.ppg_rate_hz
    phase, _ = beat_phase(ppg_t)
    ppg_v = (p.ppg_baseline
             + p.ppg_pulse_amp * np.exp(-((phase - 0.25) / 0.12) ** 2)
             + rng.normal(0.0, p.ppg_noise_sd, n_ppg))

    # ECG: P-QRS-T as gaussian bumps on the beat phase.
    n_ecg = int(duration_s * p.ecg_rate_hz)
    ecg_t = np.arange(n_ecg) / p.ecg_rate_hz
    phase, _ = beat_phase(ecg_t)
    bumps = ((0.15, 0.12, 0.040), (0.37, -0.12, 0.012), (0.40, 1.00, 0.012),
             (0.43, -0.20, 0.015), (0.60, 0.30, 0.060))
    ecg_v = rng.normal(0.0, p.ecg_noise_sd, n_ecg)
    for center, amp, width in bumps:
        ecg_v = ecg_v + amp * np.exp(-((phase - center) / width) ** 2)

    # GSR: tonic level (slow, tiny drift) − workload shift + phasics.
    n_gsr = int(duration_s * p.gsr_rate_hz)
    gsr_t = np.arange(n_gsr) / p.gsr_rate_hz
    levels = np.asarray([_workload_level(schedule, t) for t in gsr_t])
    gsr_v = (p.gsr_tonic
             + p.gsr_drift_amp * np.sin(2 * math.pi * gsr_t
                                        / p.gsr_drift_period_s)
             - p.gsr_workload_shift * levels
             + rng.normal(0.0, p.gsr_noise_sd, n_gsr))
    for e in schedule:
        if e.kind not in ("ImageOnset", "AudioOnset"):
            continue
        dt = gsr_t - (e.t_s + p.gsr_phasic_latency_s)
        shape = np.where(
            dt > 0,
            np.exp(-np.maximum(dt, 0.0) / p.gsr_phasic_decay_s)
            - np.exp(-np.maximum(dt, 0.0) / p.gsr_phasic_rise_s),
            0.0)
        peak = _double_exp_peak(p.gsr_phasic_rise_s, p.gsr_phasic_decay_s)
        gsr_v = gsr_v + p.gsr_phasic_amp * shape / peak

    # Segment markers: every workload block opens a "Dual k-back" segment
    # and closes with "rest" unless another block starts right there.
    segments = [(0.0, "baseline")]
    workloads = sorted((e for e in schedule if e.kind == "WorkloadLevel"),
                       key=lambda e: e.t_s)
    starts = {e.t_s for e in workloads}
    for e in workloads:
        segments.append((e.t_s, f"Dual {e.level}-back"))
        end = e.t_s + e.duration_s
        if end < duration_s and end not in starts:
            segments.append((end, "rest"))
    stimuli = [(e.t_s, e.kind) for e in sorted(schedule, key=lambda e: e.t_s)
               if e.kind in ("ImageOnset", "AudioOnset")]

    return PhysioRun(
        start=start,
        channels={
            "ibi": Channel(IBI_TOPIC, ibi_t, ibi_v),
            "ppg": Channel(PPG_TOPIC, ppg_t, ppg_v),
            "ecg": Channel(ECG_TOPIC, ecg_t, ecg_v),
            "gsr": Channel(GSR_TOPIC, gsr_t, gsr_v),
        },
        segment_markers=segments,
        stimulus_markers=stimuli,
    )


def _double_exp_peak(rise: float, decay: float) -> float:
    """Maximum of exp(-t/decay) − exp(-t/rise) over t ≥ 0."""
    t_star = math.log(decay / rise) * rise * decay / (decay - rise)
    return math.exp(-t_star / decay) - math.exp(-t_star / rise)


def run_physio_scenario(profile: PhysioProfile,
                        schedule: list[StimulusEvent], duration_s: float,
                        seed: int, client: BusClient,
                        start: Timestamp = SIM_EPOCH) -> PhysioRun:
    """Generate and publish all human/* streams plus marker topics."""
    run = generate_physio(profile, schedule, duration_s, seed, start)
    messages = run.messages()
    for topic in sorted({m.stream for m in messages}):
        client.advertise_topic(topic)
    for m in messages:
        client.publish_raw(m.stream, m.stamp, m.seq, bytes(m.payload))
    return run
