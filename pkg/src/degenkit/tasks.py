"""Seeded generators for the four task suites and their OOD variants.

All generators are pure functions of ``(spec, seed, batch)``: identical
arguments produce bit-identical trial tensors. Trials are returned as a
:class:`TrialBatch` of float64 arrays shaped ``(batch, time, dim)``.
"""

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .rng import STREAM_TASK, make_rng


class TaskKind(str, Enum):
    NBFF = "nbff"
    DELAYED_DISCRIMINATION = "delayed_discrimination"
    SINE_WAVE = "sine_wave"
    PATH_INTEGRATION = "path_integration"


class OodMode(str, Enum):
    NONE = "none"
    DOUBLED_TRIAL_LENGTH = "doubled_trial_length"
    DOUBLED_DELAY = "doubled_delay"


@dataclass(frozen=True)
class NbffParams:
    """Flip-flop memory: single-step pulses of +/-1, retain the last one."""

    p_switch: float = 0.3

    def __post_init__(self):
        if not 0.0 <= self.p_switch < 1.0:
            raise ValueError(f"p_switch must lie in [0, 1), got {self.p_switch}")


@dataclass(frozen=True)
class DelayedDiscriminationParams:
    """Compare two pulse amplitudes separated by a variable delay.

    Trial layout per channel: ``pre_silence`` silent steps, a first pulse of
    amplitude f1 held for ``pulse_len`` steps, a silent delay of d steps drawn
    uniformly from ``{delay_min..delay_max}``, a second pulse f2 held for
    ``pulse_len`` steps, then a response period until the trial ends.
    """

    delay_min: int = 5
    delay_max: int = 20
    stim_min: float = 2.0
    stim_max: float = 10.0
    pulse_len: int = 5
    pre_silence: int = 5
    aux_magnitude: bool = False

    def __post_init__(self):
        if not 5 <= self.delay_min <= self.delay_max:
            raise ValueError(
                f"delay range must satisfy 5 <= min <= max, got "
                f"[{self.delay_min}, {self.delay_max}]"
            )
        if self.stim_min >= self.stim_max:
            raise ValueError("stimulus range must be non-degenerate")
        if self.pulse_len < 1 or self.pre_silence < 0:
            raise ValueError("pulse_len must be >= 1 and pre_silence >= 0")


@dataclass(frozen=True)
class SineWaveParams:
    """Generate a sine wave at a frequency cued by a constant input."""

    freq_min: float = 1.0
    freq_max: float = 30.0
    n_freq: int = 100
    dt: float = 0.01

    def __post_init__(self):
        if self.n_freq < 1:
            raise ValueError(f"n_freq must be >= 1, got {self.n_freq}")
        if not 0 < self.freq_min <= self.freq_max:
            raise ValueError("frequency range must satisfy 0 < min <= max")
        if self.dt <= 0:
            raise ValueError("dt must be positive")


@dataclass(frozen=True)
class PathIntegrationParams:
    """Integrate heading/speed inputs to track position in a box arena."""

    dims: int = 2
    v_max: float = 0.4
    direction_std: float = math.pi / 10
    speed_std: float = 0.1
    obs_noise_std: float = 1e-4
    mean_stop: float = 30.0
    mean_go: float = 50.0
    arena_size: float = 10.0

    def __post_init__(self):
        if self.dims not in (2, 3):
            raise ValueError(f"dims must be 2 or 3, got {self.dims}")
        if self.v_max <= 0 or self.arena_size <= 0:
            raise ValueError("v_max and arena_size must be positive")
        if self.mean_stop < 1 or self.mean_go < 1:
            raise ValueError("mean stop/go durations must be >= 1")


_PARAM_TYPES = {
    TaskKind.NBFF: NbffParams,
    TaskKind.DELAYED_DISCRIMINATION: DelayedDiscriminationParams,
    TaskKind.SINE_WAVE: SineWaveParams,
    TaskKind.PATH_INTEGRATION: PathIntegrationParams,
}

_DEFAULT_TRIAL_LEN = {
    TaskKind.NBFF: 100,
    TaskKind.DELAYED_DISCRIMINATION: 60,
    TaskKind.SINE_WAVE: 100,
    TaskKind.PATH_INTEGRATION: 100,
}


@dataclass(frozen=True)
class TaskSpec:
    kind: TaskKind
    channels: int = 1
    trial_len: int = 0  # 0 -> per-kind default, resolved in __post_init__
    params: object = None
    ood_mode: OodMode = OodMode.NONE

    def __post_init__(self):
        kind = TaskKind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "ood_mode", OodMode(self.ood_mode))
        if self.params is None:
            object.__setattr__(self, "params", _PARAM_TYPES[kind]())
        elif not isinstance(self.params, _PARAM_TYPES[kind]):
            raise ValueError(
                f"params for {kind.value} must be {_PARAM_TYPES[kind].__name__}"
            )
        if self.trial_len == 0:
            object.__setattr__(self, "trial_len", _DEFAULT_TRIAL_LEN[kind])
        if self.trial_len < 1:
            raise ValueError(f"trial_len must be positive, got {self.trial_len}")
        if self.channels < 1:
            raise ValueError(f"channels must be positive, got {self.channels}")
        if kind is TaskKind.PATH_INTEGRATION and self.channels != 1:
            raise ValueError("path integration uses `dims`, not channels")
        if kind is TaskKind.DELAYED_DISCRIMINATION:
            p = self.params
            if _dd_min_len(p) > self.trial_len:
                raise ValueError(
                    f"trial_len={self.trial_len} too short for layout with "
                    f"delay_max={p.delay_max} (needs >= {_dd_min_len(p)})"
                )

    @property
    def input_dim(self):
        if self.kind is TaskKind.PATH_INTEGRATION:
            return self.params.dims
        return self.channels

    @property
    def output_dim(self):
        if self.kind is TaskKind.PATH_INTEGRATION:
            return self.params.dims
        if self.kind is TaskKind.DELAYED_DISCRIMINATION and self.params.aux_magnitude:
            return 2 * self.channels
        return self.channels


def _dd_min_len(p):
    # layout must leave at least one response step at the longest delay
    return p.pre_silence + 2 * p.pulse_len + p.delay_max + 1


def nbff_spec(channels=1, trial_len=100, p_switch=0.3):
    return TaskSpec(TaskKind.NBFF, channels, trial_len, NbffParams(p_switch))


def delayed_discrimination_spec(channels=1, trial_len=60, aux_magnitude=False, **kw):
    params = DelayedDiscriminationParams(aux_magnitude=aux_magnitude, **kw)
    return TaskSpec(TaskKind.DELAYED_DISCRIMINATION, channels, trial_len, params)


def sine_wave_spec(channels=1, trial_len=100, **kw):
    return TaskSpec(TaskKind.SINE_WAVE, channels, trial_len, SineWaveParams(**kw))


def path_integration_spec(dims=2, trial_len=100, **kw):
    params = PathIntegrationParams(dims=dims, **kw)
    return TaskSpec(TaskKind.PATH_INTEGRATION, 1, trial_len, params)


@dataclass
class TrialBatch:
    """Input/target/mask tensors for one batch of trials.

    ``loss_mask`` is applied multiplicatively inside the loss; its shape
    matches ``targets``.
    """

    inputs: np.ndarray
    targets: np.ndarray
    loss_mask: np.ndarray

    def __post_init__(self):
        b, t, _ = self.inputs.shape
        if self.targets.shape[:2] != (b, t) or self.loss_mask.shape != self.targets.shape:
            raise ValueError(
                f"inconsistent trial tensors: inputs {self.inputs.shape}, "
                f"targets {self.targets.shape}, mask {self.loss_mask.shape}"
            )

    @property
    def batch_size(self):
        return self.inputs.shape[0]

    @property
    def trial_len(self):
        return self.inputs.shape[1]


def _check_batch(spec, batch):
    if batch < 1:
        raise ValueError(f"batch must be positive, got {batch}")
    if spec.trial_len < 1:
        raise ValueError(f"trial_len must be positive, got {spec.trial_len}")


def gen_nbff(spec, seed, batch):
    """Flip-flop trials: per channel, each step emits a +/-1 pulse with
    probability ``p_switch``; the target holds the most recent pulse value
    (0 before the first pulse)."""
    if spec.kind is not TaskKind.NBFF:
        raise ValueError(f"expected an nbff spec, got {spec.kind.value}")
    _check_batch(spec, batch)
    rng = make_rng(STREAM_TASK, seed)
    T, n = spec.trial_len, spec.channels
    pulse = rng.random((batch, T, n)) < spec.params.p_switch
    signs = rng.integers(0, 2, size=(batch, T, n)) * 2 - 1
    inputs = np.where(pulse, signs.astype(np.float64), 0.0)

    step_idx = np.arange(T)[None, :, None]
    last_pulse = np.maximum.accumulate(np.where(pulse, step_idx, -1), axis=1)
    held = np.take_along_axis(inputs, np.clip(last_pulse, 0, None), axis=1)
    targets = np.where(last_pulse >= 0, held, 0.0)
    return TrialBatch(inputs, targets, np.ones_like(targets))


def gen_delayed_discrimination(spec, seed, batch):
    """Two-pulse discrimination trials.

    The sign channel target is sign(f2 - f1) during the response period and 0
    elsewhere; with ``aux_magnitude`` a second block of channels carries
    f2 - f1 during the response period. The mask is 1 everywhere on output
    channels, so the network is also trained to stay quiescent before the
    response period.
    """
    if spec.kind is not TaskKind.DELAYED_DISCRIMINATION:
        raise ValueError(f"expected a delayed_discrimination spec, got {spec.kind.value}")
    _check_batch(spec, batch)
    p = spec.params
    if _dd_min_len(p) > spec.trial_len:
        raise ValueError("trial_len too short for the trial layout at delay_max")
    rng = make_rng(STREAM_TASK, seed)
    T, n = spec.trial_len, spec.channels

    delay = rng.integers(p.delay_min, p.delay_max + 1, size=(batch, n))
    f1 = rng.uniform(p.stim_min, p.stim_max, size=(batch, n))
    f2 = rng.uniform(p.stim_min, p.stim_max, size=(batch, n))
    tie = f1 == f2
    while np.any(tie):  # sign(0) is undefined by the task; redraw tied pairs
        k = int(tie.sum())
        f1[tie] = rng.uniform(p.stim_min, p.stim_max, size=k)
        f2[tie] = rng.uniform(p.stim_min, p.stim_max, size=k)
        tie = f1 == f2

    t = np.arange(T)[None, :, None]
    on1 = p.pre_silence
    off1 = on1 + p.pulse_len
    on2 = off1 + delay[:, None, :]
    off2 = on2 + p.pulse_len
    in_pulse1 = (t >= on1) & (t < off1)
    in_pulse2 = (t >= on2) & (t < off2)
    in_response = t >= off2

    inputs = in_pulse1 * f1[:, None, :] + in_pulse2 * f2[:, None, :]
    sign = np.sign(f2 - f1)[:, None, :]
    sign_targets = np.where(in_response, sign, 0.0)
    if p.aux_magnitude:
        mag_targets = np.where(in_response, (f2 - f1)[:, None, :], 0.0)
        targets = np.concatenate([sign_targets, mag_targets], axis=2)
    else:
        targets = sign_targets
    return TrialBatch(inputs, targets, np.ones_like(targets))


def gen_sinewave(spec, seed, batch):
    """Sine-generation trials: a constant input f/freq_max cues the target
    ``sin(2*pi*f*t*dt)`` on the matching channel."""
    if spec.kind is not TaskKind.SINE_WAVE:
        raise ValueError(f"expected a sine_wave spec, got {spec.kind.value}")
    _check_batch(spec, batch)
    p = spec.params
    if p.n_freq < 1:
        raise ValueError("n_freq must be >= 1")
    rng = make_rng(STREAM_TASK, seed)
    T, n = spec.trial_len, spec.channels

    grid = np.linspace(p.freq_min, p.freq_max, p.n_freq)
    freqs = grid[rng.integers(0, p.n_freq, size=(batch, n))]
    steps = np.arange(T)[None, :, None]
    inputs = np.broadcast_to(freqs[:, None, :] / p.freq_max, (batch, T, n)).copy()
    targets = np.sin(2.0 * np.pi * freqs[:, None, :] * steps * p.dt)
    return TrialBatch(inputs, targets, np.ones_like(targets))


def gen_path_integration(spec, seed, batch):
    """Path-integration trials in a box arena.

    The agent random-walks its heading (std ``direction_std`` per step) and
    speed (std ``speed_std``, reflected at 0 and capped at v_max, so a moving
    agent always has positive speed) and alternates go/stop epochs with
    geometrically distributed durations; the speed is forced to 0 while
    stopped and the walk resumes from 0 afterwards. Positions are clipped
    hard at the arena walls. Inputs report the *realized* motion (heading
    and speed of the actual displacement, wall contact included) plus
    observation noise, so the targets are exactly the integral of the input
    velocities; targets are the noiseless positions.
    """
    if spec.kind is not TaskKind.PATH_INTEGRATION:
        raise ValueError(f"expected a path_integration spec, got {spec.kind.value}")
    _check_batch(spec, batch)
    p = spec.params
    rng = make_rng(STREAM_TASK, seed)
    T, d = spec.trial_len, p.dims

    start = rng.uniform(0.0, p.arena_size, size=(batch, d))
    theta = rng.uniform(0.0, 2.0 * np.pi, size=batch)
    phi = rng.uniform(-np.pi / 2, np.pi / 2, size=batch) if d == 3 else None
    speed = rng.uniform(0.0, p.v_max, size=batch)

    dtheta = rng.normal(0.0, p.direction_std, size=(batch, T - 1))
    dphi = rng.normal(0.0, p.direction_std, size=(batch, T - 1)) if d == 3 else None
    dspeed = rng.normal(0.0, p.speed_std, size=(batch, T - 1))
    moving = _stop_go_mask(rng, batch, T, p.mean_stop, p.mean_go)

    angles = np.empty((batch, T, d - 1))
    speeds = np.empty((batch, T))
    pos = np.empty((batch, T, d))
    cur = start.copy()
    for t in range(T):
        if t > 0:
            theta = theta + dtheta[:, t - 1]
            # reflect at 0 so zero speed unambiguously signals a stop epoch
            speed = np.minimum(np.abs(speed + dspeed[:, t - 1]), p.v_max)
            if d == 3:
                phi = phi + dphi[:, t - 1]
        # stops zero the speed itself; the walk resumes from zero afterwards
        speed = speed * moving[:, t]
        if d == 2:
            direction = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        else:
            direction = np.stack(
                [np.cos(phi) * np.cos(theta), np.cos(phi) * np.sin(theta), np.sin(phi)],
                axis=1,
            )
        nxt = np.clip(cur + speed[:, None] * direction, 0.0, p.arena_size)
        delta = nxt - cur
        # inputs describe the realized displacement (walls truncate motion),
        # so position is exactly the integral of the reported velocities
        v_real = np.linalg.norm(delta, axis=1)
        blocked = v_real <= 0.0
        theta_real = np.where(blocked, np.mod(theta, 2.0 * np.pi),
                              np.mod(np.arctan2(delta[:, 1], delta[:, 0]), 2.0 * np.pi))
        angles[:, t, 0] = theta_real
        if d == 3:
            with np.errstate(invalid="ignore"):
                phi_real = np.arcsin(np.clip(delta[:, 2] / np.where(blocked, 1.0, v_real), -1.0, 1.0))
            angles[:, t, 1] = np.where(blocked, phi, phi_real)
        speeds[:, t] = v_real
        cur = nxt
        pos[:, t] = cur

    inputs = np.concatenate([angles, speeds[:, :, None]], axis=2)
    if p.obs_noise_std > 0:
        inputs = inputs + rng.normal(0.0, p.obs_noise_std, size=inputs.shape)
    return TrialBatch(inputs, pos, np.ones_like(pos))


def _stop_go_mask(rng, batch, T, mean_stop, mean_go):
    """Per-trial {0,1} movement mask from alternating go/stop epochs."""
    moving = np.ones((batch, T))
    for b in range(batch):
        t = 0
        going = True
        while t < T:
            mean = mean_go if going else mean_stop
            dur = int(rng.geometric(1.0 / mean))
            if not going:
                moving[b, t : t + dur] = 0.0
            t += dur
            going = not going
    return moving


_GENERATORS = {
    TaskKind.NBFF: gen_nbff,
    TaskKind.DELAYED_DISCRIMINATION: gen_delayed_discrimination,
    TaskKind.SINE_WAVE: gen_sinewave,
    TaskKind.PATH_INTEGRATION: gen_path_integration,
}


def generate(spec, seed, batch):
    """Dispatch to the generator for ``spec.kind``."""
    return _GENERATORS[spec.kind](spec, seed, batch)


def make_ood_variant(spec):
    """Temporal-generalization variant of a training spec.

    Delayed discrimination doubles the delay range (extending the trial to
    keep the minimum response length); every other task doubles the whole
    trial length.
    """
    if spec.ood_mode is not OodMode.NONE:
        raise ValueError("spec is already an OOD variant")
    if spec.kind is TaskKind.DELAYED_DISCRIMINATION:
        p = spec.params
        new_params = replace(p, delay_min=2 * p.delay_min, delay_max=2 * p.delay_max)
        return replace(
            spec,
            params=new_params,
            trial_len=spec.trial_len + p.delay_max,
            ood_mode=OodMode.DOUBLED_DELAY,
        )
    return replace(
        spec, trial_len=2 * spec.trial_len, ood_mode=OodMode.DOUBLED_TRIAL_LENGTH
    )
