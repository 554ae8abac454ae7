"""Longitudinal cohort containers and delimited-text I/O.

A cohort is a set of subjects, each carrying an irregular sequence of
(time, value) observations inside a common study window. Times are
real-valued days; duplicate times are legal observations.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
import numpy as np

logger = logging.getLogger(__name__)

COHORT_HEADER = ("subject_id", "time", "value")


class CohortFormatError(ValueError):
    """A cohort file could not be parsed."""


def _readonly(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Trajectory:
    """One subject's observation sequence, sorted nondecreasing by time.

    May be empty (e.g. after shifting drops every point); cohorts reject
    empty members, so callers of :func:`shift_trajectory` must check.
    """

    subject_id: str
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = _readonly(self.times)
        values = _readonly(self.values)
        if times.ndim != 1 or values.ndim != 1 or times.size != values.size:
            raise ValueError(
                f"subject {self.subject_id!r}: times and values must be 1-D and equal length"
            )
        if times.size:
            if not np.isfinite(times).all():
                raise ValueError(f"subject {self.subject_id!r}: non-finite time")
            if not np.isfinite(values).all():
                raise ValueError(f"subject {self.subject_id!r}: non-finite value")
            if np.any(np.diff(times) < 0):
                raise ValueError(f"subject {self.subject_id!r}: times not sorted")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return int(self.times.size)


@dataclass(frozen=True)
class CohortDataset:
    """Immutable cohort: unique subjects, every observation in the window."""

    trajectories: tuple[Trajectory, ...]
    window: tuple[float, float]

    def __post_init__(self):
        lo, hi = (float(x) for x in self.window)
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo >= hi:
            raise ValueError(f"window must be finite with T_min < T_max, got ({lo}, {hi})")
        trajs = tuple(self.trajectories)
        if not trajs:
            raise ValueError("cohort must contain at least one subject")
        seen = set()
        for tr in trajs:
            if tr.subject_id in seen:
                raise ValueError(f"duplicate subject_id {tr.subject_id!r}")
            seen.add(tr.subject_id)
            if len(tr) == 0:
                raise ValueError(f"subject {tr.subject_id!r} has no observations")
            if tr.times[0] < lo or tr.times[-1] > hi:
                raise ValueError(
                    f"subject {tr.subject_id!r} has observations outside window ({lo}, {hi})"
                )
        object.__setattr__(self, "trajectories", trajs)
        object.__setattr__(self, "window", (lo, hi))

    def __len__(self) -> int:
        return len(self.trajectories)

    @property
    def subject_ids(self) -> tuple[str, ...]:
        return tuple(tr.subject_id for tr in self.trajectories)

    @property
    def n_observations(self) -> int:
        return sum(len(tr) for tr in self.trajectories)


@dataclass(frozen=True)
class LoadReport:
    """Per-load accounting, emitted to the log as structured text."""

    path: str
    rows_read: int
    subjects_loaded: int
    subjects_dropped: int
    observations_dropped: int

    def __str__(self) -> str:
        return (
            f"cohort load: path={self.path} rows={self.rows_read} "
            f"subjects={self.subjects_loaded} subjects_dropped={self.subjects_dropped} "
            f"observations_dropped={self.observations_dropped}"
        )


def read_cohort_csv(
    path, window: tuple[float, float], min_obs: int = 1
) -> tuple[CohortDataset, LoadReport]:
    """Parse a ``subject_id,time,value`` file; return the cohort and its load report.

    Observations outside the window are dropped; subjects left with fewer
    than ``min_obs`` observations are dropped and counted. The default
    ``min_obs=1`` only removes subjects with no usable observation.
    """
    lo, hi = (float(x) for x in window)
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo >= hi:
        raise ValueError(f"window must be finite with T_min < T_max, got ({lo}, {hi})")
    if min_obs < 1:
        raise ValueError("min_obs must be >= 1")

    path = Path(path)
    per_subject: dict[str, tuple[list[float], list[float]]] = {}
    rows_read = 0
    obs_dropped = 0
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise CohortFormatError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != COHORT_HEADER:
            raise CohortFormatError(
                f"{path}: expected header {','.join(COHORT_HEADER)!r}, got {header!r}"
            )
        for row_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue  # trailing blank line
            if len(row) != 3:
                raise CohortFormatError(f"{path}: malformed row {row_no}: {row!r}")
            sid = row[0].strip()
            try:
                t = float(row[1])
                v = float(row[2])
            except ValueError as exc:
                raise CohortFormatError(
                    f"{path}: malformed row {row_no}: {row!r}"
                ) from exc
            if not (math.isfinite(t) and math.isfinite(v)) or not sid:
                raise CohortFormatError(
                    f"{path}: non-finite or empty field at row {row_no}: {row!r}"
                )
            rows_read += 1
            bucket = per_subject.setdefault(sid, ([], []))
            if t < lo or t > hi:
                obs_dropped += 1
                continue
            bucket[0].append(t)
            bucket[1].append(v)

    trajectories = []
    subjects_dropped = 0
    for sid, (ts, vs) in per_subject.items():
        if len(ts) < min_obs:
            subjects_dropped += 1
            continue
        order = np.argsort(np.asarray(ts), kind="stable")
        trajectories.append(
            Trajectory(sid, np.asarray(ts)[order], np.asarray(vs)[order])
        )
    if not trajectories:
        raise CohortFormatError(f"{path}: no subjects left after windowing")

    report = LoadReport(
        path=str(path),
        rows_read=rows_read,
        subjects_loaded=len(trajectories),
        subjects_dropped=subjects_dropped,
        observations_dropped=obs_dropped,
    )
    return CohortDataset(tuple(trajectories), (lo, hi)), report


def load_cohort(path, window: tuple[float, float], min_obs: int = 1) -> CohortDataset:
    """Load a cohort file, logging the load report."""
    data, report = read_cohort_csv(path, window, min_obs=min_obs)
    logger.info("%s", report)
    return data


def save_cohort(data: CohortDataset, path) -> None:
    """Write a cohort back to ``subject_id,time,value`` text.

    Floats use ``repr`` so load -> save -> load is a fixed point.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COHORT_HEADER)
        for tr in data.trajectories:
            for t, v in zip(tr.times, tr.values):
                writer.writerow([tr.subject_id, repr(float(t)), repr(float(v))])


def shift_trajectory(
    traj: Trajectory, shift: float, window: tuple[float, float]
) -> Trajectory:
    """Translate observation times by ``shift``, dropping points that leave the window.

    Values and the relative ordering of surviving observations are preserved.
    The result may be empty.
    """
    if not math.isfinite(shift):
        raise ValueError("shift must be finite")
    lo, hi = (float(x) for x in window)
    times = traj.times + shift
    keep = (times >= lo) & (times <= hi)
    return Trajectory(traj.subject_id, times[keep], traj.values[keep])
