"""Benchmark cohort generators: planted subtype curves, onset delays, corruptions.

Each scenario plants a handful of groups with known mean curves on a
common window, samples irregular observation times per subject, and then
misaligns the timeline: a random minority of subjects observe their curve
`d` days late, which shows up as observation times shifted down by `d`
with the earliest (pre-onset) part of the record missing. Ground truth is
recorded so recovery can be scored exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .dataset import CohortDataset, Trajectory

SAMPLE_WINDOW = (1.0, 21.0)
TRUNCATION_BOUND = 17.0
N_OBS_PER_SUBJECT = 28
NOISE_SD = 0.8
ZERO_SHIFT_FRACTION = 0.6
SHIFT_CHOICES = (1, 2, 3, 4)


def _sinusoid(level: float, slope: float, amp: float, rate: float, phase: float) -> Callable:
    def mean(t: np.ndarray) -> np.ndarray:
        return level + slope * t + amp * np.sin(rate * (t + phase))

    return mean


@dataclass(frozen=True)
class GroupSpec:
    size: int
    mean: Callable[[np.ndarray], np.ndarray]
    speed: float = 1.0
    speed_range: tuple[float, float] | None = None


# group tables per scenario id; sizes and curve parameters define the benchmark
SCENARIO_GROUPS: dict[int, tuple[GroupSpec, ...]] = {
    1: (
        GroupSpec(500, _sinusoid(20, 0.0, 3, 0.6, 4)),
        GroupSpec(500, _sinusoid(17, 0.0, 3, 0.6, 4)),
    ),
    2: (
        GroupSpec(500, _sinusoid(17, 0.0, 2, 0.6, 4)),
        GroupSpec(500, _sinusoid(0, 2.0, 3, 0.6, 4)),
    ),
    3: (
        GroupSpec(300, _sinusoid(20, 0.0, 3, 0.6, 4)),
        GroupSpec(400, _sinusoid(17, 0.0, 3, 0.6, 4)),
        GroupSpec(300, _sinusoid(16, 0.5, 3, 0.9, 4)),
    ),
    4: (
        GroupSpec(250, _sinusoid(24, 0.0, 3, 0.6, 4)),
        GroupSpec(250, _sinusoid(17, 0.0, 3, 0.6, 4)),
        GroupSpec(250, _sinusoid(38, -0.5, 4, 0.9, 3)),
        GroupSpec(250, _sinusoid(21, 0.9, 3, 0.6, 4)),
    ),
    5: (
        GroupSpec(250, _sinusoid(24, 0.0, 3, 0.6, 4)),
        GroupSpec(250, _sinusoid(17, 0.0, 3, 0.6, 4)),
        GroupSpec(250, _sinusoid(28, -0.5, 4, 0.9, 3)),
        GroupSpec(250, _sinusoid(21, -0.5, 4, 0.9, 3)),
    ),
    6: (
        GroupSpec(250, _sinusoid(23, 0.0, 3, 0.6, 4)),
        GroupSpec(250, _sinusoid(17, 0.0, 3, 0.6, 4)),
        GroupSpec(250, _sinusoid(20, 0.0, 3, 0.6, 4)),
        GroupSpec(250, _sinusoid(25, -0.5, 4, 0.9, 3)),
    ),
    7: (
        GroupSpec(500, _sinusoid(17, 0.0, 2, 0.6, 4)),
        GroupSpec(250, _sinusoid(0, 2.0, 3, 0.6, 4), speed=1.0),
        GroupSpec(250, _sinusoid(0, 2.0, 3, 0.6, 4), speed=0.7),
    ),
    8: (
        GroupSpec(300, _sinusoid(20, 0.0, 3, 0.6, 4)),
        GroupSpec(300, _sinusoid(17, 0.0, 3, 0.6, 4)),
        GroupSpec(200, _sinusoid(16, 0.5, 3, 0.9, 4), speed=1.0),
        GroupSpec(200, _sinusoid(16, 0.5, 3, 0.9, 4), speed=1.3),
    ),
    # mixed-speed family used only for agreement-metric comparisons
    9: (
        GroupSpec(300, _sinusoid(7, 1.5, 4, 0.7, 4)),
        GroupSpec(250, _sinusoid(0, 2.0, 3, 1.0, 4), speed=1.0),
        GroupSpec(250, _sinusoid(0, 2.0, 3, 1.0, 4), speed=0.7),
        GroupSpec(200, _sinusoid(0, 2.0, 3, 1.0, 4), speed_range=(0.7, 1.0)),
    ),
}

SCENARIO_IDS = tuple(sorted(SCENARIO_GROUPS))


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything needed to generate one benchmark cohort deterministically."""

    scenario_id: int
    groups: tuple[GroupSpec, ...]
    noise_sd: float = NOISE_SD
    n_obs_per_subject: int = N_OBS_PER_SUBJECT
    window: tuple[float, float] = SAMPLE_WINDOW
    truncation_bound: float = TRUNCATION_BOUND
    zero_shift_fraction: float = ZERO_SHIFT_FRACTION
    shift_choices: tuple[int, ...] = SHIFT_CHOICES
    speed_warps_times: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        if not 0.0 <= self.zero_shift_fraction <= 1.0:
            raise ValueError("zero_shift_fraction must lie in [0, 1]")
        if self.n_obs_per_subject < 1:
            raise ValueError("n_obs_per_subject must be >= 1")
        if not self.groups:
            raise ValueError("at least one group is required")

    @property
    def n_subjects(self) -> int:
        return sum(g.size for g in self.groups)

    @classmethod
    def standard(cls, scenario_id: int, seed: int = 0, **overrides) -> "ScenarioSpec":
        if scenario_id not in SCENARIO_GROUPS:
            raise ValueError(
                f"unknown scenario id {scenario_id}; choose one of {list(SCENARIO_IDS)}"
            )
        return cls(scenario_id=scenario_id, groups=SCENARIO_GROUPS[scenario_id], seed=seed, **overrides)


@dataclass(frozen=True)
class GroundTruth:
    """Planted shifts/groups/speeds, aligned with the cohort by subject index."""

    subject_ids: tuple[str, ...]
    shifts: np.ndarray
    groups: np.ndarray
    speeds: np.ndarray

    def __post_init__(self):
        shifts = np.asarray(self.shifts, dtype=int)
        groups = np.asarray(self.groups, dtype=int)
        speeds = np.asarray(self.speeds, dtype=float)
        if not (len(self.subject_ids) == shifts.size == groups.size == speeds.size):
            raise ValueError("ground-truth arrays must be aligned")
        for name, arr in (("shifts", shifts), ("groups", groups), ("speeds", speeds)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "subject_ids", tuple(self.subject_ids))


def _subject_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def generate(spec: ScenarioSpec) -> tuple[CohortDataset, GroundTruth]:
    """Draw one cohort plus its ground truth.

    Per subject: sample observation times uniformly on the window, evaluate
    the group curve (through the subject's speed factor where present), add
    Gaussian noise, draw the onset delay, subtract it from the observed
    times, and truncate to [window lo, truncation bound]. Per-subject RNG
    streams make generation order-independent.
    """
    lo, hi = spec.window
    trajectories: list[Trajectory] = []
    ids: list[str] = []
    shifts: list[int] = []
    groups: list[int] = []
    speeds: list[float] = []

    index = 0
    for g_no, group in enumerate(spec.groups, start=1):
        for _ in range(group.size):
            rng = _subject_rng(spec.seed, index)
            t = np.sort(rng.uniform(lo, hi, spec.n_obs_per_subject))
            speed = (
                float(rng.uniform(*group.speed_range))
                if group.speed_range is not None
                else float(group.speed)
            )
            noise = rng.normal(0.0, spec.noise_sd, spec.n_obs_per_subject)
            if spec.speed_warps_times:
                obs_times = speed * t
                values = group.mean(t) + noise
            else:
                obs_times = t
                values = group.mean(speed * t) + noise
            u = rng.uniform()
            if u < spec.zero_shift_fraction or not spec.shift_choices:
                delay = 0
            else:
                delay = int(spec.shift_choices[rng.integers(len(spec.shift_choices))])
            observed = obs_times - delay
            keep = (observed >= lo) & (observed <= spec.truncation_bound)
            sid = f"s{index:05d}"
            index += 1
            if not keep.any():
                continue  # vanishingly rare; subject dropped from cohort and truth
            trajectories.append(Trajectory(sid, observed[keep], values[keep]))
            ids.append(sid)
            shifts.append(delay)
            groups.append(g_no)
            speeds.append(speed)

    data = CohortDataset(tuple(trajectories), spec.window)
    truth = GroundTruth(tuple(ids), np.asarray(shifts), np.asarray(groups), np.asarray(speeds))
    return data, truth


@dataclass(frozen=True)
class CorruptionSpec:
    """Observation-level contamination applied after generation.

    Kinds: ``outlier_doubling`` (amount = count of values multiplied by 2),
    ``random_deletion`` (amount = fraction of observations removed,
    exact count), ``noise_inflation`` (amount = fractional variance
    increase; applied at generation time, see :func:`inflate_noise`).
    """

    kind: str
    amount: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("outlier_doubling", "random_deletion", "noise_inflation"):
            raise ValueError(f"unknown corruption kind {self.kind!r}")
        if self.kind == "outlier_doubling":
            if self.amount < 0 or self.amount != int(self.amount):
                raise ValueError("outlier_doubling amount must be a nonnegative integer count")
        elif self.kind == "random_deletion":
            if not 0.0 <= self.amount < 1.0:
                raise ValueError("random_deletion fraction must lie in [0, 1)")
        else:
            if self.amount < 0:
                raise ValueError("noise_inflation must be >= 0")


def inflate_noise(spec: ScenarioSpec, variance_increase: float) -> ScenarioSpec:
    """Scenario with the noise variance increased by the given fraction."""
    if variance_increase < 0:
        raise ValueError("variance_increase must be >= 0")
    return replace(spec, noise_sd=spec.noise_sd * math.sqrt(1.0 + variance_increase))


def corrupt(data: CohortDataset, spec: CorruptionSpec) -> CohortDataset:
    """Apply observation-level corruption; untouched subjects are reused as-is."""
    if spec.kind == "noise_inflation":
        raise ValueError(
            "noise_inflation acts on the generator; use inflate_noise() and regenerate"
        )
    sizes = np.array([len(tr) for tr in data.trajectories])
    total = int(sizes.sum())
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    rng = np.random.default_rng(spec.seed)

    if spec.kind == "outlier_doubling":
        count = int(spec.amount)
        if count > total:
            raise ValueError(f"cannot double {count} observations, cohort has {total}")
        if count == 0:
            return data
        chosen = np.sort(rng.choice(total, size=count, replace=False))
    else:
        n_del = int(math.floor(spec.amount * total))
        if n_del == 0:
            return data
        chosen = np.sort(rng.choice(total, size=n_del, replace=False))

    out: list[Trajectory] = []
    pos = 0
    for i, tr in enumerate(data.trajectories):
        start, stop = offsets[i], offsets[i + 1]
        hit = []
        while pos < chosen.size and chosen[pos] < stop:
            hit.append(int(chosen[pos] - start))
            pos += 1
        if not hit:
            out.append(tr)
            continue
        if spec.kind == "outlier_doubling":
            values = tr.values.copy()
            values[hit] *= 2.0
            out.append(Trajectory(tr.subject_id, tr.times, values))
        else:
            keep = np.ones(len(tr), dtype=bool)
            keep[hit] = False
            if not keep.any():
                raise ValueError(
                    f"deletion would remove every observation of subject {tr.subject_id!r}"
                )
            out.append(Trajectory(tr.subject_id, tr.times[keep], tr.values[keep]))
    return CohortDataset(tuple(out), data.window)


def save_ground_truth(truth: GroundTruth, path) -> None:
    """Companion CSV to the cohort file: subject_id, true_shift, true_group."""
    with open(path, "w") as fh:
        fh.write("subject_id,true_shift,true_group\n")
        for sid, shift, group in zip(truth.subject_ids, truth.shifts, truth.groups):
            fh.write(f"{sid},{int(shift)},{int(group)}\n")


def load_ground_truth(path) -> GroundTruth:
    ids: list[str] = []
    shifts: list[int] = []
    groups: list[int] = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "subject_id,true_shift,true_group":
            raise ValueError(f"{path}: unexpected ground-truth header {header!r}")
        for line_no, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ValueError(f"{path}: malformed row {line_no}: {line!r}")
            ids.append(parts[0])
            shifts.append(int(parts[1]))
            groups.append(int(parts[2]))
    return GroundTruth(tuple(ids), np.asarray(shifts), np.asarray(groups), np.ones(len(ids)))
