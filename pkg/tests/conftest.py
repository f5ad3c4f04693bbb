import numpy as np
import pytest

from bnml.data import Dataset, PatchedDataset
from bnml.linalg import Rng


def random_spd(rng: Rng, d: int) -> np.ndarray:
    """Well-conditioned random SPD matrix."""
    b = rng.normal(d * d).reshape(d, d)
    return b @ b.T + 0.5 * d * np.eye(d)


def random_linear_data(rng: Rng, n: int, d: int) -> Dataset:
    """Uncentered Gaussian dataset (d >= n keeps the equal-margin system solvable)."""
    return Dataset(inputs=rng.normal(n * d).reshape(n, d),
                   labels=rng.rademacher(n), train_mean=np.zeros(d))


def random_patched_data(rng: Rng, n: int, p: int, d: int) -> PatchedDataset:
    return PatchedDataset(inputs=rng.normal(n * p * d).reshape(n, p, d),
                          labels=rng.rademacher(n), train_mean=np.zeros(d))


def balanced_gaussian_seed(n: int, d: int, start: int = 1) -> int:
    """First seed whose Rademacher label draw sums to zero (the centered
    Gaussian experiment's equal-margin system is solvable only then)."""
    for seed in range(start, start + 2000):
        r = Rng(seed)
        r.normal(n * d)
        if float(r.rademacher(n).sum()) == 0.0:
            return seed
    raise RuntimeError("no balanced seed found")


def brute_discrepancy(margins: np.ndarray) -> float:
    """Mean squared pairwise margin difference via the explicit double loop."""
    m = np.asarray(margins, dtype=np.float64)
    total = 0.0
    for a in range(m.shape[0]):
        for b in range(m.shape[0]):
            total += (m[b] - m[a]) ** 2
    return total / m.shape[0] ** 2


@pytest.fixture
def rng() -> Rng:
    return Rng(20240131)
