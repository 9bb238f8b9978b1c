"""Synthetic photon counts for an interferometer phase scan.

Counts at each phase are Poisson distributed around
``N0 (1 + V cos(theta)) + background``. The visibility ``V`` comes from the
coherence model at the interferometer delay; the pulse sequence decides
whether a post-selection window fits inside the overlap of the two arms.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass

import numpy as np
from numpy.typing import NDArray

from .core import SystemParams
from .visibility import VisibilityChannel, v_blue, v_diag1

__all__ = [
    "SequenceMode",
    "PulseSequence",
    "WindowCheck",
    "FringeRecord",
    "InfeasibleWindow",
    "RNG_NAME",
    "expected_rate",
    "window_feasible",
    "sample_fringe",
    "synthesize",
    "point_seed",
]

RNG_NAME = "numpy.random.Generator(PCG64)"


class InfeasibleWindow(ValueError):
    """The post-selection window does not fit the pulse overlap."""


class SequenceMode(str, enum.Enum):
    SINGLE_PULSE = "single"
    DOUBLE_PULSE = "double"


@dataclass(frozen=True)
class PulseSequence:
    """Preparation + excitation timing (all in ns).

    In single-pulse mode the excitation pulse has length ``excite_length``
    and the two interferometer arms overlap for ``excite_length - delta_t``.
    In double-pulse mode two excitation pulses of length ``pulse_length``
    start ``delta_t`` apart, so the late arm of the first pulse lands on the
    second pulse and the overlap is ``pulse_length`` regardless of the delay.
    """

    prep_length: float = 10.0
    excite_length: float = 10.0
    rep_period: float = 52.0
    window_length: float = 3.0
    window_start: float | None = None
    mode: SequenceMode = SequenceMode.SINGLE_PULSE
    delta_t: float | None = None
    pulse_length: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "mode", SequenceMode(self.mode))
        if min(self.prep_length, self.excite_length, self.window_length, self.pulse_length) < 0:
            raise ValueError("pulse and window lengths must be non-negative")
        active = self.pulse_length if self.mode is SequenceMode.DOUBLE_PULSE else self.excite_length
        if self.window_length > active:
            raise ValueError(
                f"window of {self.window_length} ns longer than the {active} ns excitation pulse"
            )
        if self.mode is SequenceMode.SINGLE_PULSE and self.rep_period < self.prep_length + self.excite_length:
            raise ValueError("repetition period shorter than the pulse sequence")
        if self.mode is SequenceMode.DOUBLE_PULSE:
            if self.delta_t is None:
                raise ValueError("double-pulse mode needs delta_t")
            if self.rep_period < self.prep_length + 2 * self.pulse_length:
                raise ValueError("repetition period shorter than the pulse sequence")

    def for_delay(self, delta_t: float) -> "PulseSequence":
        fields = asdict(self)
        fields["delta_t"] = delta_t
        return PulseSequence(**fields)


@dataclass(frozen=True)
class WindowCheck:
    feasible: bool
    overlap: float
    reason: str = ""

    def __bool__(self) -> bool:
        return self.feasible


def window_feasible(seq: PulseSequence, delta_t: float) -> WindowCheck:
    """Whether the post-selection window fits the overlap at delay ``delta_t``."""
    if delta_t < 0:
        return WindowCheck(False, 0.0, "negative delay")
    if seq.mode is SequenceMode.SINGLE_PULSE:
        overlap = max(seq.excite_length - delta_t, 0.0)
        if overlap < seq.window_length:
            return WindowCheck(False, overlap, "overlap shorter than the post-selection window")
        return WindowCheck(True, overlap)
    overlap = seq.pulse_length
    if overlap < seq.window_length:
        return WindowCheck(False, overlap, "pulse shorter than the post-selection window")
    if delta_t < seq.pulse_length:
        return WindowCheck(False, overlap, "excitation pulses overlap")
    if seq.prep_length + delta_t + seq.pulse_length > seq.rep_period:
        return WindowCheck(False, overlap, "second pulse runs past the repetition period")
    return WindowCheck(True, overlap)


def expected_rate(v: float, phase, mean_rate: float, background: float = 0.0):
    """Mean counts ``mean_rate (1 + v cos(phase)) + background``."""
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"visibility must lie in [0, 1], got {v}")
    return mean_rate * (1.0 + v * np.cos(phase)) + background


def point_seed(base_seed: int, index: int) -> int:
    """Seed for the ``index``-th point of a sweep."""
    return int(base_seed) + int(index)


@dataclass(frozen=True)
class FringeRecord:
    """Counts at one output port for a phase scan, with everything needed to replay it."""

    phase_grid: NDArray[np.float64]
    counts_port_a: NDArray[np.int64]
    visibility: float
    mean_rate: float
    integration_time: float
    window: tuple[float, float]
    channel: str
    delta_t: float | None
    seed: int
    background: float = 0.0
    rng: str = RNG_NAME

    def header(self) -> dict:
        return {
            "channel": self.channel,
            "delta_t_ns": self.delta_t,
            "visibility_injected": self.visibility,
            "mean_rate": self.mean_rate,
            "integration_time": self.integration_time,
            "background": self.background,
            "window_start_ns": self.window[0],
            "window_length_ns": self.window[1],
            "seed": self.seed,
            "rng": self.rng,
            "n_phases": int(self.phase_grid.size),
        }

    def header_json(self) -> str:
        return json.dumps(self.header(), indent=2, sort_keys=True)

    def columns(self) -> dict[str, NDArray]:
        return {"phase_rad": self.phase_grid, "counts": self.counts_port_a}


def sample_fringe(
    visibility: float,
    phases,
    mean_rate: float,
    seed: int,
    *,
    background: float = 0.0,
    integration_time: float = 1.0,
) -> NDArray[np.int64]:
    """Poisson counts around :func:`expected_rate`; fully determined by ``seed``."""
    phases = np.asarray(phases, dtype=float)
    lam = integration_time * expected_rate(visibility, phases, mean_rate, background)
    rng = np.random.Generator(np.random.PCG64(seed))
    return rng.poisson(lam).astype(np.int64)


def synthesize(
    seq: PulseSequence,
    p: SystemParams,
    phases,
    mean_rate: float,
    seed: int,
    *,
    channel: VisibilityChannel | str = VisibilityChannel.DIAG1,
    delta_t: float | None = None,
    background: float = 0.0,
    integration_time: float = 1.0,
) -> FringeRecord:
    """Simulate a phase scan at the interferometer delay of the sequence.

    ``delta_t`` defaults to the sequence's own delay (double-pulse mode).
    The visibility fed to the count model is the modelled fringe visibility of
    ``channel`` (``blue`` or ``diag1``) at that delay.
    """
    channel = VisibilityChannel(channel)
    if channel is VisibilityChannel.RATIO:
        raise ValueError("fringes are recorded for the blue or diag1 channel")
    dt = seq.delta_t if delta_t is None else delta_t
    if dt is None:
        raise ValueError("interferometer delay not given")
    check = window_feasible(seq, dt)
    if not check:
        raise InfeasibleWindow(f"delta_t = {dt} ns: {check.reason} (overlap {check.overlap} ns)")
    if dt == 0:
        v = 1.0
    else:
        curve = (v_blue if channel is VisibilityChannel.BLUE else v_diag1)(p, [0.0, dt])
        v = float(np.clip(curve.visibility[-1], 0.0, 1.0))
    start = seq.window_start if seq.window_start is not None else dt
    phases = np.asarray(phases, dtype=float)
    counts = sample_fringe(
        v, phases, mean_rate, seed, background=background, integration_time=integration_time
    )
    return FringeRecord(
        phase_grid=phases,
        counts_port_a=counts,
        visibility=v,
        mean_rate=mean_rate,
        integration_time=integration_time,
        window=(float(start), float(seq.window_length)),
        channel=channel.value,
        delta_t=float(dt),
        seed=int(seed),
        background=background,
    )
