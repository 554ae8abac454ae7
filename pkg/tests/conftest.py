import numpy as np
import pytest

from trajshift.dataset import CohortDataset, Trajectory

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def tiny_cohort():
    """Three subjects with hand-picked observations on the window (0, 21)."""
    trajs = (
        Trajectory("a", np.array([1.0, 2.0, 3.0]), np.array([5.0, 6.0, 7.0])),
        Trajectory("b", np.array([2.0, 4.0, 9.0]), np.array([1.0, 0.5, 2.0])),
        Trajectory("c", np.array([0.5, 10.0, 20.0]), np.array([3.0, 3.5, 4.0])),
    )
    return CohortDataset(trajs, (0.0, 21.0))


def make_blobs(centers, per_cluster, spread, seed, p=None):
    """Seeded Gaussian blobs around the given centers."""
    rng = np.random.default_rng(seed)
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if p is not None and centers.shape[1] != p:
        raise ValueError("centers do not match requested dimension")
    xs, labels = [], []
    for ci, c in enumerate(centers):
        xs.append(c + spread * rng.standard_normal((per_cluster, centers.shape[1])))
        labels.extend([ci] * per_cluster)
    return np.vstack(xs), np.asarray(labels)
