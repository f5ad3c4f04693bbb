"""Training/test data construction: centered datasets, patched datasets, and
the two synthetic signal-plus-noise generators used for the generalization
comparisons.

The synthetic generators are *not* empirically centered: their population mean
is already zero, and empirical centering would perturb the exact orthogonality
between noise and signal directions that the generated problems rely on.  Pass
``center=True`` to force it.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigInvalid, DimensionMismatch, EmptyDataset
from .linalg import Rng, as_vector, project_out, sym_eigs

__all__ = [
    "Dataset",
    "PatchedDataset",
    "Example1Config",
    "Example2Config",
    "Example1Sampler",
    "Example2Sampler",
    "center",
    "gen_gaussian_experiment",
    "gen_example1",
    "gen_example2",
    "save_dataset",
    "load_dataset",
]


def _check_labels(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.float64)
    if not np.all(np.isin(labels, (-1.0, 1.0))):
        raise ConfigInvalid("labels must be -1 or +1")
    return labels


@dataclass(frozen=True)
class Dataset:
    """Centered inputs (n, d), labels in {-1,+1}, and the subtracted mean."""

    inputs: np.ndarray
    labels: np.ndarray
    train_mean: np.ndarray

    def __post_init__(self):
        if self.inputs.ndim != 2:
            raise DimensionMismatch("inputs must be (n, d)")
        if self.labels.shape[0] != self.inputs.shape[0]:
            raise DimensionMismatch("labels length must match inputs")
        if not np.all(np.isfinite(self.inputs)):
            raise ValueError("inputs must be finite")
        _check_labels(self.labels)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def d(self) -> int:
        return self.inputs.shape[1]

    @property
    def patch_count(self) -> int:
        return 1

    def rows(self) -> np.ndarray:
        """All normalization rows: for the linear model, just the inputs."""
        return self.inputs

    def row_labels(self) -> np.ndarray:
        return self.labels

    def xbar(self) -> np.ndarray:
        """Per-sample summed input (identical to ``inputs`` for P = 1)."""
        return self.inputs

    def z_rows(self) -> np.ndarray:
        """Constraint rows z_i = y_i * x_i."""
        return self.labels[:, None] * self.inputs

    def zbar(self) -> np.ndarray:
        return self.z_rows()

    @cached_property
    def sigma(self) -> np.ndarray:
        """Sample covariance (1/n) sum x_i x_i^T, built on first access."""
        return self.inputs.T @ self.inputs / self.n

    @cached_property
    def sigma_lambda_max(self) -> float:
        """Largest eigenvalue of sigma, from the n x n input Gram matrix."""
        gram = self.rows() @ self.rows().T / self.rows().shape[0]
        evals, _ = sym_eigs(gram)
        return max(float(evals[0]), 0.0)


@dataclass(frozen=True)
class PatchedDataset:
    """Inputs split into P patches per sample: shape (n, P, d)."""

    inputs: np.ndarray
    labels: np.ndarray
    train_mean: np.ndarray

    def __post_init__(self):
        if self.inputs.ndim != 3:
            raise DimensionMismatch("patched inputs must be (n, P, d)")
        if self.inputs.shape[1] < 1:
            raise ConfigInvalid("need at least one patch")
        if self.labels.shape[0] != self.inputs.shape[0]:
            raise DimensionMismatch("labels length must match inputs")
        if not np.all(np.isfinite(self.inputs)):
            raise ValueError("inputs must be finite")
        _check_labels(self.labels)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def d(self) -> int:
        return self.inputs.shape[2]

    @property
    def patch_count(self) -> int:
        return self.inputs.shape[1]

    def rows(self) -> np.ndarray:
        """All patches flattened to (n*P, d), sample-major."""
        return self.inputs.reshape(self.n * self.patch_count, self.d)

    def row_labels(self) -> np.ndarray:
        return np.repeat(self.labels, self.patch_count)

    @cached_property
    def _xbar(self) -> np.ndarray:
        return self.inputs.sum(axis=1)

    def xbar(self) -> np.ndarray:
        """Per-sample patch sums (n, d)."""
        return self._xbar

    def z_rows(self) -> np.ndarray:
        """Constraint rows z_{i,p} = y_i * x_i^{(p)}, flattened sample-major."""
        return self.row_labels()[:, None] * self.rows()

    def zbar(self) -> np.ndarray:
        return self.labels[:, None] * self.xbar()

    @cached_property
    def sigma(self) -> np.ndarray:
        rows = self.rows()
        return rows.T @ rows / rows.shape[0]

    @cached_property
    def sigma_lambda_max(self) -> float:
        gram = self.rows() @ self.rows().T / self.rows().shape[0]
        evals, _ = sym_eigs(gram)
        return max(float(evals[0]), 0.0)


def center(raw_inputs, labels) -> Dataset:
    """Subtract the empirical mean and remember it as ``train_mean``."""
    raw = np.asarray(raw_inputs, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[0] == 0:
        if raw.size == 0:
            raise EmptyDataset("need at least one sample")
        raise DimensionMismatch(f"expected (n, d) inputs, got shape {raw.shape}")
    labels = _check_labels(np.asarray(labels, dtype=np.float64))
    if labels.shape[0] != raw.shape[0]:
        raise DimensionMismatch("labels length must match inputs")
    mean = raw.mean(axis=0)
    return Dataset(inputs=raw - mean, labels=labels, train_mean=mean)


def gen_gaussian_experiment(rng: Rng, n: int, d: int) -> Dataset:
    """Standard-normal inputs with Rademacher labels, then centered.

    Draw order: all n*d input coordinates (row-major), then the n labels.
    """
    if n < 1 or d < 1:
        raise ConfigInvalid("n and d must be >= 1")
    raw = rng.normal(n * d).reshape(n, d)
    labels = rng.rademacher(n)
    return center(raw, labels)


@dataclass(frozen=True)
class Example1Config:
    """Signal u repeated in every patch plus noise orthogonal to u."""

    u: np.ndarray
    p_patches: int
    sigma: float
    n: int
    d: int

    def __post_init__(self):
        object.__setattr__(self, "u", as_vector(self.u))
        if float(np.linalg.norm(self.u)) <= 0.0:
            raise ConfigInvalid("signal u must be nonzero")
        if self.p_patches < 1:
            raise ConfigInvalid("need at least one patch")
        if self.sigma < 0.0:
            raise ConfigInvalid("sigma must be >= 0")
        if self.u.shape[0] != self.d:
            raise DimensionMismatch("u must have length d")

    @classmethod
    def theorem_scaled(cls, n: int, p_patches: int = 4, signal_norm: float = 1.0,
                       d: int | None = None, sigma: float | None = None) -> "Example1Config":
        """Configuration at the proved separation scale: d=2n, P>=4,
        sigma = 20*||u||*sqrt(P*d), with u on the first coordinate axis."""
        d = 2 * n if d is None else d
        u = np.zeros(d)
        u[0] = signal_norm
        if sigma is None:
            sigma = 20.0 * signal_norm * math.sqrt(p_patches * d)
        return cls(u=u, p_patches=p_patches, sigma=sigma, n=n, d=d)

    def separation_scale_ok(self) -> bool:
        unorm = float(np.linalg.norm(self.u))
        return (
            self.d == 2 * self.n
            and self.p_patches >= 4
            and self.sigma >= 20.0 * unorm * math.sqrt(self.p_patches * self.d)
        )


class Example1Sampler:
    """Fresh i.i.d. draws from the Example-1 law.

    Draw order per batch: labels, then the count*P*d noise coordinates
    (sample-major, patch-major).
    """

    def __init__(self, cfg: Example1Config):
        self.cfg = cfg
        self._u_hat = cfg.u / np.linalg.norm(cfg.u)

    def sample_patches(self, rng: Rng, count: int):
        cfg = self.cfg
        labels = rng.rademacher(count)
        noise = rng.normal(count * cfg.p_patches * cfg.d).reshape(count, cfg.p_patches, cfg.d)
        noise -= (noise @ self._u_hat)[..., None] * self._u_hat
        noise -= (noise @ self._u_hat)[..., None] * self._u_hat
        patches = labels[:, None, None] * cfg.u + cfg.sigma * noise
        return patches, labels

    def sample_xbar(self, rng: Rng, count: int):
        patches, labels = self.sample_patches(rng, count)
        return patches.sum(axis=1), labels


def gen_example1(rng: Rng, cfg: Example1Config, force_center: bool = False):
    """Training set plus a fresh-draw test sampler for the Example-1 law."""
    if not cfg.separation_scale_ok():
        warnings.warn(
            "Example-1 configuration is outside the proved separation regime "
            "(want d = 2n, P >= 4, sigma >= 20*||u||*sqrt(P*d)); proceeding anyway.",
            stacklevel=2,
        )
    sampler = Example1Sampler(cfg)
    patches, labels = sampler.sample_patches(rng, cfg.n)
    data = PatchedDataset(inputs=patches, labels=labels, train_mean=np.zeros(cfg.d))
    if force_center:
        data = _center_patched(data)
    return data, sampler


@dataclass(frozen=True)
class Example2Config:
    """Strong signal u vs. rare weak signal v with feature noise along u."""

    u: np.ndarray
    v: np.ndarray
    rho: float
    alpha: float
    sigma: float
    n: int
    d: int

    def __post_init__(self):
        object.__setattr__(self, "u", as_vector(self.u))
        object.__setattr__(self, "v", as_vector(self.v))
        unorm = float(np.linalg.norm(self.u))
        vnorm = float(np.linalg.norm(self.v))
        if unorm <= 0.0 or vnorm <= 0.0:
            raise ConfigInvalid("signals u, v must be nonzero")
        if abs(float(self.u @ self.v)) > 1e-12 * unorm * vnorm:
            raise ConfigInvalid("u and v must be orthogonal")
        if not 0.0 <= self.rho < 0.5:
            raise ConfigInvalid("rho must be in [0, 0.5)")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigInvalid("alpha must be in (0, 1)")
        if self.u.shape[0] != self.d or self.v.shape[0] != self.d:
            raise DimensionMismatch("u and v must have length d")

    @classmethod
    def paper_scaled(cls, n: int) -> "Example2Config":
        """d = ceil(n^2 ln n), sigma = d^-1/2, rho = n^-3/4, alpha = n^-1/2,
        ||u|| = 1, ||v|| = alpha^2, u/v on the first two coordinate axes."""
        if n < 3:
            raise ConfigInvalid("need n >= 3 for this scaling")
        d = math.ceil(n * n * math.log(n))
        if d > 200_000:
            raise ConfigInvalid(f"d = {d} exceeds the supported cap of 200000")
        alpha = n ** -0.5
        u = np.zeros(d)
        u[0] = 1.0
        v = np.zeros(d)
        v[1] = alpha * alpha
        return cls(u=u, v=v, rho=n ** -0.75, alpha=alpha, sigma=d ** -0.5, n=n, d=d)


class Example2Sampler:
    """Fresh i.i.d. draws from the Example-2 two-patch law.

    Each sample: with probability 1-rho one patch is y*u and the other is
    noise orthogonal to both u and v; with probability rho one patch is y*v
    and the other is isotropic noise plus alpha*zeta*u.  The signal patch
    slot is uniform over the two positions.

    Draw order per batch: labels, weak/strong indicators, slot choices, the
    count*d noise coordinates (sample-major), then one zeta per weak sample.
    """

    def __init__(self, cfg: Example2Config):
        self.cfg = cfg
        self._u_hat = cfg.u / np.linalg.norm(cfg.u)
        self._v_hat = cfg.v / np.linalg.norm(cfg.v)

    def _draw(self, rng: Rng, count: int):
        cfg = self.cfg
        labels = rng.rademacher(count)
        weak = rng.uniform(count) <= cfg.rho
        slot_second = rng.uniform(count) <= 0.5
        noise = cfg.sigma * rng.normal(count * cfg.d).reshape(count, cfg.d)
        strong = ~weak
        for _ in range(2):
            noise[strong] -= (noise[strong] @ self._u_hat)[:, None] * self._u_hat
            noise[strong] -= (noise[strong] @ self._v_hat)[:, None] * self._v_hat
        zeta = rng.rademacher(int(weak.sum()))
        other = noise
        other[weak] += (cfg.alpha * zeta)[:, None] * self.cfg.u
        signal = np.where(weak[:, None], labels[:, None] * cfg.v, labels[:, None] * cfg.u)
        return labels, weak, slot_second, signal, other

    def sample_patches(self, rng: Rng, count: int):
        labels, _, slot_second, signal, other = self._draw(rng, count)
        patches = np.empty((count, 2, self.cfg.d))
        first = np.where(slot_second[:, None], other, signal)
        second = np.where(slot_second[:, None], signal, other)
        patches[:, 0, :] = first
        patches[:, 1, :] = second
        return patches, labels

    def sample_xbar(self, rng: Rng, count: int):
        labels, _, _, signal, other = self._draw(rng, count)
        return signal + other, labels


def gen_example2(rng: Rng, cfg: Example2Config, force_center: bool = False):
    """Training set plus a fresh-draw test sampler for the Example-2 law."""
    sampler = Example2Sampler(cfg)
    patches, labels = sampler.sample_patches(rng, cfg.n)
    data = PatchedDataset(inputs=patches, labels=labels, train_mean=np.zeros(cfg.d))
    if force_center:
        data = _center_patched(data)
    return data, sampler


def _center_patched(data: PatchedDataset) -> PatchedDataset:
    mean = data.rows().mean(axis=0)
    return PatchedDataset(inputs=data.inputs - mean, labels=data.labels,
                          train_mean=mean + data.train_mean)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_dataset(data, path) -> None:
    """Write the documented CSV layout: ``# n=<n> d=<d> P=<P>`` then one row
    ``i,p,y,<d coordinates>`` per (sample, patch), 0-based indices."""
    p_count = data.patch_count
    rows = data.rows()
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"# n={data.n} d={data.d} P={p_count}\n")
        for i in range(data.n):
            y = int(data.labels[i])
            for p in range(p_count):
                coords = ",".join(_fmt(c) for c in rows[i * p_count + p])
                fh.write(f"{i},{p},{y:+d},{coords}\n")


def load_dataset(path):
    """Inverse of :func:`save_dataset`.  Returns Dataset when P=1, else
    PatchedDataset; the stored inputs are taken as already centered."""
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if not header.startswith("#"):
            raise ConfigInvalid("dataset file must start with a '# n=.. d=.. P=..' header")
        fields = dict(part.split("=") for part in header[1:].split())
        n, d, p_count = int(fields["n"]), int(fields["d"]), int(fields["P"])
        inputs = np.zeros((n, p_count, d))
        labels = np.zeros(n)
        for line in fh:
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            i, p, y = int(cells[0]), int(cells[1]), float(cells[2])
            if len(cells) != 3 + d:
                raise DimensionMismatch(f"row for sample {i} has {len(cells) - 3} coordinates, want {d}")
            inputs[i, p, :] = [float(c) for c in cells[3:]]
            labels[i] = y
    if p_count == 1:
        return Dataset(inputs=inputs[:, 0, :], labels=labels, train_mean=np.zeros(d))
    return PatchedDataset(inputs=inputs, labels=labels, train_mean=np.zeros(d))
