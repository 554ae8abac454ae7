"""Cubic B-spline bases and ridge-penalized trajectory embeddings.

Each trajectory, under every candidate time shift, is summarized by the
coefficients of a penalized cubic spline regression. The coefficient
vectors for all (subject, shift) pairs are stacked into a dense tensor so
the alignment loop can compare any subject at any candidate shift with a
single array lookup.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .dataset import CohortDataset, Trajectory, shift_trajectory

logger = logging.getLogger(__name__)

DEGREE = 3
CONDITION_WARN_THRESHOLD = 1e12


class EmbeddingError(RuntimeError):
    """A (subject, shift) cell could not be embedded."""


@dataclass(frozen=True)
class KnotVector:
    """Nondecreasing knots with quadruple (clamped) boundary knots.

    Length is q+8 where q is the number of interior knots; the cubic basis
    built on it has p = q+4 functions.
    """

    knots: np.ndarray

    def __post_init__(self):
        knots = np.array(self.knots, dtype=float)
        knots.setflags(write=False)
        if knots.ndim != 1 or knots.size < 8:
            raise ValueError("knot vector needs at least 8 entries (q >= 0)")
        if not np.isfinite(knots).all():
            raise ValueError("knots must be finite")
        if np.any(np.diff(knots) < 0):
            raise ValueError("knots must be nondecreasing")
        if not (knots[0] == knots[1] == knots[2] == knots[3]):
            raise ValueError("first four knots must coincide")
        if not (knots[-4] == knots[-3] == knots[-2] == knots[-1]):
            raise ValueError("last four knots must coincide")
        if knots[0] == knots[-1]:
            raise ValueError("knot span must have positive width")
        object.__setattr__(self, "knots", knots)

    @property
    def q(self) -> int:
        return self.knots.size - 8

    @property
    def lo(self) -> float:
        return float(self.knots[0])

    @property
    def hi(self) -> float:
        return float(self.knots[-1])

    @property
    def interior(self) -> np.ndarray:
        return self.knots[4:-4]


@dataclass(frozen=True)
class BasisSpec:
    """Cubic basis over a knot vector, identified by dropping the first function.

    The design used for fitting is (intercept, B_2, ..., B_p): the full
    basis sums to one, so an intercept plus all p functions would be
    collinear. Coefficient vectors therefore have length p with the
    intercept first.
    """

    knot_vector: KnotVector

    @property
    def p(self) -> int:
        return self.knot_vector.q + 4

    @property
    def window(self) -> tuple[float, float]:
        return (self.knot_vector.lo, self.knot_vector.hi)


@dataclass(frozen=True)
class ShiftGrid:
    """Ordered candidate time shifts; must contain 0."""

    shifts: np.ndarray

    def __post_init__(self):
        shifts = np.array(self.shifts, dtype=float)
        shifts.setflags(write=False)
        if shifts.ndim != 1 or shifts.size == 0:
            raise ValueError("shift grid must be a nonempty 1-D sequence")
        if not np.isfinite(shifts).all():
            raise ValueError("shifts must be finite")
        if np.any(np.diff(shifts) <= 0):
            raise ValueError("shifts must be strictly increasing")
        if not np.any(shifts == 0.0):
            raise ValueError("shift grid must contain 0")
        object.__setattr__(self, "shifts", shifts)

    def __len__(self) -> int:
        return int(self.shifts.size)

    def __iter__(self):
        return iter(self.shifts)

    @property
    def zero_index(self) -> int:
        return int(np.flatnonzero(self.shifts == 0.0)[0])

    def index_of(self, shift: float) -> int:
        hits = np.flatnonzero(self.shifts == float(shift))
        if hits.size == 0:
            raise ValueError(f"shift {shift} not on the grid")
        return int(hits[0])


def make_basis(
    window: tuple[float, float], interior_knots: Sequence[float]
) -> BasisSpec:
    """Clamped cubic basis: quadruple boundary knots at the window ends."""
    lo, hi = (float(x) for x in window)
    interior = np.asarray(interior_knots, dtype=float)
    if interior.size and np.any(np.diff(interior) < 0):
        raise ValueError("interior knots must be nondecreasing")
    if interior.size and (interior[0] <= lo or interior[-1] >= hi):
        raise ValueError(
            f"interior knots must lie strictly inside the window ({lo}, {hi})"
        )
    knots = np.concatenate([np.full(4, lo), interior, np.full(4, hi)])
    return BasisSpec(KnotVector(knots))


def _raw_basis_matrix(knots: np.ndarray, ts: np.ndarray, degree: int = DEGREE) -> np.ndarray:
    """Basis values of the given degree at each time, by the Cox-de Boor recursion.

    Degree-0 functions are indicators of [k_j, k_{j+1}); the right boundary
    point is assigned to the last interval of positive width so the whole
    closed span is covered. 0/0 terms in the recursion are taken as 0.
    """
    t = np.asarray(ts, dtype=float)
    n_k = knots.size
    B = ((knots[:-1][None, :] <= t[:, None]) & (t[:, None] < knots[1:][None, :])).astype(float)
    at_end = t == knots[-1]
    if np.any(at_end):
        last = int(np.flatnonzero(np.diff(knots) > 0)[-1])
        B[at_end, :] = 0.0
        B[at_end, last] = 1.0
    for d in range(1, degree + 1):
        m = n_k - d - 1
        den_l = (knots[d : d + m] - knots[:m])[None, :]
        den_r = (knots[d + 1 : d + 1 + m] - knots[1 : 1 + m])[None, :]
        num_l = (t[:, None] - knots[None, :m]) * B[:, :m]
        num_r = (knots[None, d + 1 : d + 1 + m] - t[:, None]) * B[:, 1 : m + 1]
        left = np.divide(num_l, den_l, out=np.zeros_like(num_l), where=den_l > 0)
        right = np.divide(num_r, den_r, out=np.zeros_like(num_r), where=den_r > 0)
        B = left + right
    return B


def cubic_basis_matrix(spec: BasisSpec, ts) -> np.ndarray:
    """Full (pre-drop) basis values, shape (len(ts), p)."""
    t = np.atleast_1d(np.asarray(ts, dtype=float))
    lo, hi = spec.window
    if t.size and (t.min() < lo or t.max() > hi):
        raise ValueError(f"time outside knot span [{lo}, {hi}]")
    return _raw_basis_matrix(spec.knot_vector.knots, t)


def design_matrix(spec: BasisSpec, ts) -> np.ndarray:
    """Fitting design: intercept column followed by B_2..B_p."""
    full = cubic_basis_matrix(spec, ts)
    return np.column_stack([np.ones(full.shape[0]), full[:, 1:]])


def basis_eval(spec: BasisSpec, t: float) -> np.ndarray:
    """Design row at a single time: (1, B_2(t), ..., B_p(t))."""
    return design_matrix(spec, [float(t)])[0]


def ridge_fit(traj: Trajectory, spec: BasisSpec, ridge_lambda: float) -> np.ndarray:
    """Penalized spline coefficients for one trajectory.

    Minimizes sum_r (x_r - beta_0 - sum_{j>=2} beta_j B_j(t_r))^2
    + lambda * sum_{j>=2} beta_j^2; the intercept is not penalized. Solved
    through the penalized normal equations with a symmetric factorization.
    """
    if ridge_lambda < 0:
        raise ValueError("ridge_lambda must be nonnegative")
    if len(traj) == 0:
        raise ValueError(f"subject {traj.subject_id!r}: no observations to fit")
    G = design_matrix(spec, traj.times)
    p = G.shape[1]
    A = G.T @ G
    idx = np.arange(1, p)
    A[idx, idx] += ridge_lambda
    b = G.T @ traj.values

    eigs = np.linalg.eigvalsh(A)
    if eigs[0] <= eigs[-1] * 1e-15 or not np.isfinite(eigs[0]):
        raise np.linalg.LinAlgError(
            f"subject {traj.subject_id!r}: singular ridge system "
            f"(lambda={ridge_lambda}); a positive lambda guarantees solvability"
        )
    cond = eigs[-1] / eigs[0]
    if cond > CONDITION_WARN_THRESHOLD:
        warnings.warn(
            f"ill-conditioned ridge system (cond ~ {cond:.2e}) "
            f"for subject {traj.subject_id!r}",
            RuntimeWarning,
            stacklevel=2,
        )
    return cho_solve(cho_factor(A, lower=True), b)


@dataclass(frozen=True)
class EmbeddingTensor:
    """Coefficient vectors for every (subject, shift) cell.

    ``coefficients`` has shape (N, len(grid), p); cells flagged unusable
    (too few in-window observations, or observations that cannot support
    the knot layout) hold NaN and must never be selected as a subject's
    active shift.
    """

    coefficients: np.ndarray
    usable: np.ndarray
    grid: ShiftGrid
    subject_ids: tuple[str, ...]

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=float)
        usable = np.asarray(self.usable, dtype=bool)
        if coef.ndim != 3 or usable.shape != coef.shape[:2]:
            raise ValueError("coefficients must be (N, L, p) with matching usable flags")
        if coef.shape[1] != len(self.grid):
            raise ValueError("shift axis does not match the grid")
        if len(self.subject_ids) != coef.shape[0]:
            raise ValueError("subject_ids do not match the subject axis")
        coef.setflags(write=False)
        usable.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "usable", usable)
        object.__setattr__(self, "subject_ids", tuple(self.subject_ids))

    @property
    def n_subjects(self) -> int:
        return self.coefficients.shape[0]

    @property
    def p(self) -> int:
        return self.coefficients.shape[2]

    def vectors_at(self, shift_idx: np.ndarray) -> np.ndarray:
        """Rows Omega[i, shift_idx[i], :]; every selected cell must be usable."""
        shift_idx = np.asarray(shift_idx, dtype=int)
        rows = np.arange(self.n_subjects)
        if not self.usable[rows, shift_idx].all():
            bad = rows[~self.usable[rows, shift_idx]]
            raise ValueError(f"unusable cells selected for subjects {bad[:5].tolist()}...")
        return self.coefficients[rows, shift_idx, :]

    def save(self, path) -> None:
        np.savez(
            path,
            coefficients=self.coefficients,
            usable=self.usable,
            shifts=self.grid.shifts,
            subject_ids=np.asarray(self.subject_ids, dtype=str),
        )


def load_embedding(path) -> EmbeddingTensor:
    with np.load(path, allow_pickle=False) as z:
        return EmbeddingTensor(
            z["coefficients"],
            z["usable"],
            ShiftGrid(z["shifts"]),
            tuple(str(s) for s in z["subject_ids"]),
        )


def _fit_subject(
    traj: Trajectory,
    window: tuple[float, float],
    grid_shifts: np.ndarray,
    interior: np.ndarray,
    boundary_policy: str,
    ridge_lambda: float,
    min_obs_per_fit: int,
    global_spec: BasisSpec | None,
    p: int,
) -> tuple[np.ndarray, np.ndarray]:
    coefs = np.full((grid_shifts.size, p), np.nan)
    usable = np.zeros(grid_shifts.size, dtype=bool)
    pad = 1e-6 * (window[1] - window[0])
    for li, shift in enumerate(grid_shifts):
        shifted = shift_trajectory(traj, shift, window)
        if len(shifted) < min_obs_per_fit:
            continue
        if boundary_policy == "global":
            spec = global_spec
        else:
            # boundary knots at the shifted data range, widened by a sliver
            # when needed so the fixed interior knots stay strictly inside
            lo, hi = float(shifted.times[0]), float(shifted.times[-1])
            if interior.size:
                lo = min(lo, float(interior[0]) - pad)
                hi = max(hi, float(interior[-1]) + pad)
            if hi <= lo:
                hi = lo + pad
            spec = make_basis((lo, hi), interior)
        try:
            coefs[li] = ridge_fit(shifted, spec, ridge_lambda)
        except np.linalg.LinAlgError as exc:
            raise EmbeddingError(
                f"subject {traj.subject_id!r}, shift {shift}: {exc}"
            ) from exc
        usable[li] = True
    return coefs, usable


def _fit_block(args):
    trajs, window, shifts, interior, policy, lam, min_obs, gspec, p = args
    out = [
        _fit_subject(tr, window, shifts, interior, policy, lam, min_obs, gspec, p)
        for tr in trajs
    ]
    return out


def build_embedding(
    data: CohortDataset,
    grid: ShiftGrid,
    interior_knots: Sequence[float],
    *,
    ridge_lambda: float = 0.01,
    boundary_policy: str = "adaptive",
    min_obs_per_fit: int = 2,
    workers: int = 1,
) -> EmbeddingTensor:
    """Fit every (subject, shift) cell and stack the coefficients.

    ``boundary_policy`` is either ``"global"`` (boundary knots fixed at the
    cohort window) or ``"adaptive"`` (per-cell boundary knots at the
    min/max of the shifted observation times, interior knots unchanged).
    Cells with fewer than ``min_obs_per_fit`` surviving observations are
    flagged unusable. Fits are pure per cell, so the result is identical
    for any ``workers`` count.
    """
    if boundary_policy not in ("global", "adaptive"):
        raise ValueError(f"unknown boundary_policy {boundary_policy!r}")
    interior = np.asarray(interior_knots, dtype=float)
    global_spec = make_basis(data.window, interior)
    p = global_spec.p
    n = len(data)

    if workers > 1:
        blocks = np.array_split(np.arange(n), workers)
        jobs = [
            (
                [data.trajectories[i] for i in blk],
                data.window,
                grid.shifts,
                interior,
                boundary_policy,
                ridge_lambda,
                min_obs_per_fit,
                global_spec,
                p,
            )
            for blk in blocks
            if blk.size
        ]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = [cell for block in pool.map(_fit_block, jobs) for cell in block]
    else:
        results = [
            _fit_subject(
                tr,
                data.window,
                grid.shifts,
                interior,
                boundary_policy,
                ridge_lambda,
                min_obs_per_fit,
                global_spec,
                p,
            )
            for tr in data.trajectories
        ]

    coefs = np.stack([r[0] for r in results])
    usable = np.stack([r[1] for r in results])
    dead = ~usable.any(axis=1)
    if dead.any():
        bad = [data.subject_ids[i] for i in np.flatnonzero(dead)[:5]]
        raise EmbeddingError(
            f"{int(dead.sum())} subject(s) have no usable shift cell, e.g. {bad}"
        )
    return EmbeddingTensor(coefs, usable, grid, data.subject_ids)
