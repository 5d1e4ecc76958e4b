"""Synthetic cohorts of paired baseline/treatment sessions with known effects.

Only effect directions are encoded (tap STAY dispersion down, voice pitch
up, vertical gait oscillation up, slightly faster reactions); magnitudes are
knobs. Every draw comes from ``np.random.SeedSequence`` streams: the cohort
seed spawns one child per participant, which spawns one stream for the
participant's parameters and one per generated instance.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .core import (
    ActiveTestInstance,
    AccelSeries,
    AudioRecording,
    ReactionSession,
    ReactionTrial,
    TapEvent,
    TapSession,
)
from .evaluation import LEDRecord, daily_led, load_led_table
from .io import quantize_pcm16, write_instances, write_wav

GRAVITY = 9.81
PARTICIPANT_SPREAD = 0.03  # between-person spread of every base parameter
HESITATION_RATE = 0.08  # occasional long holds give STAY a heavy right tail


@dataclass(frozen=True)
class EffectProfile:
    tap_rhythm_stabilization: float = 0.3
    f0_shift: float = 0.1
    gait_y_gain: float = 0.2
    noise_level: float = 0.05
    reaction_speedup: float = 0.05

    def __post_init__(self):
        for name, val in asdict(self).items():
            if not math.isfinite(val):
                raise ValueError(f"{name} must be finite")
        if not 0 <= self.tap_rhythm_stabilization <= 1:
            raise ValueError("tap_rhythm_stabilization must lie in [0, 1]")
        if self.noise_level <= 0:
            raise ValueError("noise_level must be positive")

    def scaled(self, k):
        """Effect knobs multiplied by ``k``; noise is untouched."""
        return replace(self, tap_rhythm_stabilization=self.tap_rhythm_stabilization * k,
                       f0_shift=self.f0_shift * k, gait_y_gain=self.gait_y_gain * k,
                       reaction_speedup=self.reaction_speedup * k)

    @classmethod
    def null(cls, noise_level=0.05):
        return cls(0.0, 0.0, 0.0, noise_level, 0.0)


# --- LED response curves ---------------------------------------------

def mid_led_response(led):
    """Unimodal on (200, 2600) mg, peaking at 1400 mg, zero outside."""
    if led <= 200 or led >= 2600:
        return 0.0
    return math.sin(math.pi * (led - 200) / 2400) ** 2


RESPONSE_CURVES = {
    "mid_led": mid_led_response,
    "flat": lambda led: 1.0,
    "zero": lambda led: 0.0,
}


@dataclass(frozen=True)
class SimulationSettings:
    """Recording geometry of the simulated phone tests."""

    accel_rate: float = 20.0  # Hz, mean
    accel_jitter: float = 0.2  # fraction of the nominal interval
    gait_seconds: float = 15.0
    balance_seconds: float = 30.0
    gait_noise: float = 2.0  # m/s^2, broadband sensor + body noise
    audio_rate: int = 2000
    voice_seconds: float = 20.0
    tap_seconds: float = 20.0
    reaction_trials: int = 20


@dataclass(frozen=True)
class ParticipantModel:
    participant_id: str
    daily_led: float
    effect: EffectProfile  # already scaled by the response curve
    response: float
    stay_mean: float
    stay_sd: float
    move_mean: float
    move_sd: float
    base_f0: float
    voice_amp: float
    phonation_seconds: float
    gait_amp: tuple  # x, y, z oscillation amplitudes
    step_freq: float
    sway_amp: float
    react_median: float
    regimen: tuple = ()


def draw_participant(pid, led, profile, curve, seed, spread=PARTICIPANT_SPREAD) -> ParticipantModel:
    """Participant parameters: population centres scaled by ``1 + spread * U(-1, 1)``."""
    rng = np.random.Generator(np.random.PCG64(seed))
    response = float(curve(led))

    def draw(centre):
        return float(centre * (1 + spread * rng.uniform(-1, 1)))

    return ParticipantModel(
        participant_id=pid,
        daily_led=led,
        effect=profile.scaled(response),
        response=response,
        stay_mean=draw(0.13),
        stay_sd=draw(0.04),
        move_mean=draw(0.25),
        move_sd=draw(0.05),
        base_f0=draw(195.0),
        voice_amp=draw(0.3),
        phonation_seconds=draw(13.5),
        gait_amp=(draw(0.7), draw(1.0), draw(0.7)),
        step_freq=draw(1.85),
        sway_amp=draw(0.1),
        react_median=draw(0.25),
    )


def _jittered_times(rng, rate, seconds, jitter):
    n = int(round(seconds * rate))
    dt = (1.0 + rng.uniform(-jitter, jitter, n - 1)) / rate
    t = np.concatenate([[0.0], np.cumsum(dt)])
    return np.round(t, 6)


def _gait(rng, m: ParticipantModel, treated, s: SimulationSettings, noise):
    t = _jittered_times(rng, s.accel_rate, s.gait_seconds, s.accel_jitter)
    f = m.step_freq * (1 + 0.02 * rng.standard_normal())
    gain = 1.0 + (m.effect.gait_y_gain if treated else 0.0)
    amps = [a * (1 + noise * rng.standard_normal()) for a in m.gait_amp]
    ph = rng.uniform(0, 2 * np.pi, 3)
    x = amps[0] * np.sin(np.pi * f * t + ph[0])
    y = GRAVITY + gain * amps[1] * np.sin(2 * np.pi * f * t + ph[1])
    z = amps[2] * np.sin(2 * np.pi * f * t + ph[2])
    xyz = np.vstack([x, y, z]) + s.gait_noise * rng.standard_normal((3, len(t)))
    return AccelSeries(t=t, x=xyz[0], y=xyz[1], z=xyz[2], test_kind="gait")


def _balance(rng, m: ParticipantModel, s: SimulationSettings, noise):
    t = _jittered_times(rng, s.accel_rate, s.balance_seconds, s.accel_jitter)
    sway = m.sway_amp * (1 + noise * rng.standard_normal())
    fr = rng.uniform(0.2, 0.8, 3)
    ph = rng.uniform(0, 2 * np.pi, 3)
    base = np.array([[0.3], [GRAVITY], [0.5]])
    osc = sway * np.sin(2 * np.pi * fr[:, None] * t[None, :] + ph[:, None])
    xyz = base + osc + 0.05 * rng.standard_normal((3, len(t)))
    return AccelSeries(t=t, x=xyz[0], y=xyz[1], z=xyz[2], test_kind="balance")


def _voice(rng, m: ParticipantModel, treated, s: SimulationSettings, noise):
    fs = s.audio_rate
    n = int(round(s.voice_seconds * fs))
    t = np.arange(n) / fs
    f0 = m.base_f0 * (1 + (m.effect.f0_shift if treated else 0.0))
    f0 *= 1 + 0.2 * noise * rng.standard_normal()
    onset = rng.uniform(0.8, 1.6)
    length = m.phonation_seconds * (1 + noise * rng.standard_normal())
    length = min(length, s.voice_seconds - onset - 0.5)
    on = (t >= onset) & (t < onset + length)
    # slow pitch wander of a fraction of a percent
    wander = 1 + 0.002 * np.sin(2 * np.pi * rng.uniform(0.1, 0.3) * t + rng.uniform(0, 6.3))
    phase = 2 * np.pi * np.cumsum(f0 * wander) / fs
    tone = np.sin(phase) + 0.4 * np.sin(2 * phase) + 0.2 * np.sin(3 * phase)
    amp = m.voice_amp * (1 + noise * rng.standard_normal())
    env = amp * (1 + 0.1 * np.sin(2 * np.pi * rng.uniform(0.05, 0.2) * t))
    x = np.where(on, env * tone / 1.6, 0.0) + 0.002 * rng.standard_normal(n)
    return AudioRecording(sample_rate=fs, samples=quantize_pcm16(x))


def _taps(rng, m: ParticipantModel, treated, s: SimulationSettings, noise):
    stay_sd = m.stay_sd * (1 - (m.effect.tap_rhythm_stabilization if treated else 0.0))
    stay_sd *= 1 + noise * rng.standard_normal()
    stay_mean = m.stay_mean * (1 + noise * rng.standard_normal())
    events = []
    t = round(float(rng.uniform(0.3, 0.8)), 6)
    button = 0
    while t < s.tap_seconds:
        stay = max(0.03, stay_mean + abs(stay_sd) * rng.standard_normal())
        if rng.random() < HESITATION_RATE:
            stay += rng.uniform(0.1, 0.4)
        release = round(t + stay, 6)
        events.append(TapEvent(t, release, ("left", "right")[button]))
        move = max(0.02, m.move_mean + m.move_sd * rng.standard_normal())
        t = round(release + move, 6)
        button ^= 1
    return TapSession(events=tuple(events))


def _reaction(rng, m: ParticipantModel, treated, s: SimulationSettings, noise):
    speed = 1 - (m.effect.reaction_speedup if treated else 0.0)
    median = m.react_median * (1 + noise * rng.standard_normal()) * speed
    trials = []
    t = float(rng.uniform(1.0, 2.0))
    for _ in range(s.reaction_trials):
        stim = round(t, 6)
        if rng.random() < 0.03:
            trials.append(ReactionTrial(stim))
            t = stim + rng.uniform(1.5, 3.0)
            continue
        lag = 0.1 + (median - 0.1) * math.exp(0.35 * rng.standard_normal())
        press = round(stim + lag, 6)
        release = round(press + rng.uniform(0.1, 0.3), 6)
        trials.append(ReactionTrial(stim, press, release))
        t = release + rng.uniform(1.0, 2.5)
    return ReactionSession(trials=tuple(trials))


def generate_instance(model: ParticipantModel, condition, seed, started_at=None,
                      settings: SimulationSettings = SimulationSettings()) -> ActiveTestInstance:
    """One five-test session for ``model`` under ``condition`` (baseline/treatment)."""
    if condition not in ("baseline", "treatment"):
        raise ValueError(f"unknown condition {condition!r}")
    treated = condition == "treatment"
    noise = model.effect.noise_level
    streams = np.random.SeedSequence(seed) if isinstance(seed, int) else seed
    rngs = [np.random.Generator(np.random.PCG64(s)) for s in streams.spawn(5)]
    if started_at is None:
        started_at = datetime(2014, 6, 1, 8, 0, tzinfo=timezone.utc)
    return ActiveTestInstance(
        participant_id=model.participant_id,
        started_at=started_at,
        label=condition,
        voice=_voice(rngs[0], model, treated, settings, noise),
        balance=_balance(rngs[1], model, settings, noise),
        gait=_gait(rngs[2], model, treated, settings, noise),
        dexterity=_taps(rngs[3], model, treated, settings, noise),
        reaction=_reaction(rngs[4], model, treated, settings, noise),
    )


def regimen_for(led_target, rng):
    """A levodopa (+ optional pramipexole) regimen near ``led_target`` mg/day."""
    if led_target < 1:
        return ()
    times = int(rng.integers(3, 6))
    agonist = 0.0
    regimen = []
    if led_target > 400 and rng.random() < 0.5:
        dose = float(rng.choice([0.25, 0.5, 1.0]))
        if dose * 3 * 100 <= 0.4 * led_target:
            regimen.append(("pramipexole", dose, 3))
            agonist = dose * 300
    levodopa = round((led_target - agonist) / times, 1)
    regimen.insert(0, ("levodopa", levodopa, times))
    return tuple(regimen)


@dataclass
class Cohort:
    instances: list
    led_records: list
    models: list
    profile: EffectProfile
    curve: str
    seed: int
    settings: SimulationSettings = field(default_factory=SimulationSettings)

    def manifest(self):
        return {
            "schema_version": 1,
            "seed": self.seed,
            "response_curve": self.curve,
            "effect_profile": asdict(self.profile),
            "settings": asdict(self.settings),
            "participants": [
                {**asdict(m), "regimen": [list(r) for r in m.regimen]} for m in self.models
            ],
        }


def generate_cohort(n_participants, instances_per_participant, led_range=(0.0, 2500.0),
                    response_curve="mid_led", seed=0, profile: EffectProfile = EffectProfile(),
                    settings: SimulationSettings = SimulationSettings(), threads=1) -> Cohort:
    """Participants with paired sessions one simulated hour apart on distinct days.

    ``instances_per_participant // 2`` pairs are generated per participant.
    """
    if n_participants < 2:
        raise ValueError("need at least 2 participants")
    curve = RESPONSE_CURVES[response_curve] if isinstance(response_curve, str) else response_curve
    curve_name = response_curve if isinstance(response_curve, str) else "custom"
    table = load_led_table()
    n_pairs = instances_per_participant // 2
    day0 = datetime(2014, 6, 1, tzinfo=timezone.utc)

    def one(p_index, pseq):
        param_seq, led_seq, *inst_seqs = pseq.spawn(2 + 2 * n_pairs)
        led_rng = np.random.Generator(np.random.PCG64(led_seq))
        target = float(led_rng.uniform(*led_range))
        regimen = regimen_for(target, led_rng)
        led = daily_led(regimen, table)
        pid = f"sim{p_index:04d}"
        model = replace(draw_participant(pid, led, profile, curve, param_seq), regimen=regimen)
        insts = []
        for k in range(n_pairs):
            rng = np.random.Generator(np.random.PCG64(inst_seqs[2 * k]))
            morning = day0 + timedelta(days=k, hours=7, minutes=int(rng.integers(0, 120)))
            later = morning + timedelta(minutes=int(rng.integers(50, 71)))
            insts.append(generate_instance(model, "baseline", inst_seqs[2 * k].spawn(1)[0],
                                           morning, settings))
            insts.append(generate_instance(model, "treatment", inst_seqs[2 * k + 1], later,
                                           settings))
        return model, insts

    seqs = np.random.SeedSequence(seed).spawn(n_participants)
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(n_participants), seqs))
    else:
        results = [one(i, s) for i, s in enumerate(seqs)]
    models = [r[0] for r in results]
    instances = [inst for r in results for inst in r[1]]
    records = [LEDRecord(m.participant_id, m.regimen, m.daily_led) for m in models]
    return Cohort(instances, records, models, profile, curve_name, seed, settings)


def write_cohort(cohort: Cohort, out_dir, audio="wav"):
    """Write instances.jsonl, audio/*.wav, regimens.csv and manifest.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    voice_paths = {}
    if audio == "wav":
        (out / "audio").mkdir(exist_ok=True)
        for i, inst in enumerate(cohort.instances):
            rel = f"audio/{inst.participant_id}_{i:05d}.wav"
            write_wav(out / rel, inst.voice)
            voice_paths[i] = rel
    write_instances(out / "instances.jsonl", cohort.instances, voice_paths)
    with open(out / "regimens.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("participant_id,drug,dose_mg,times_per_day\r\n")
        for rec in cohort.led_records:
            for drug, dose, times in rec.regimen:
                fh.write(f"{rec.participant_id},{drug},{dose!r},{times}\r\n")
    with open(out / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(cohort.manifest(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def load_profile(path):
    """Read an EffectProfile JSON; an optional ``response_curve`` key is returned too."""
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    curve = d.pop("response_curve", "mid_led")
    if curve not in RESPONSE_CURVES:
        raise ValueError(f"unknown response_curve {curve!r}")
    return EffectProfile(**d), curve
