"""Small dense linear algebra and deterministic random sampling.

Everything here is self-contained on purpose: the random stream and the
factorizations are fully specified so that runs reproduce bit-for-bit across
platforms and so that an independent implementation can match them.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DimensionMismatch, NoConvergence, NotPositiveDefinite

__all__ = [
    "Rng",
    "as_vector",
    "as_sym_matrix",
    "solve_spd",
    "sym_eigs",
    "sample_gaussian",
    "project_out",
    "SEED_STRIDE",
]

# Weyl increment of SplitMix64; also the worker seed-splitting stride.
SEED_STRIDE = 0x9E3779B97F4A7C15
_MASK64 = 0xFFFFFFFFFFFFFFFF
_TWO53 = float(1 << 53)


def as_vector(values) -> np.ndarray:
    """Copy ``values`` into a finite 1-D float64 array."""
    v = np.array(values, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatch(f"expected a 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector entries must be finite")
    return v


def as_sym_matrix(values) -> np.ndarray:
    """Build an exactly symmetric float64 matrix by mirroring the upper triangle."""
    a = np.array(values, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    upper = np.triu(a)
    return upper + np.triu(a, 1).T


def _splitmix64(x: np.ndarray) -> np.ndarray:
    """Finalizer of SplitMix64 applied elementwise to a uint64 array."""
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


class Rng:
    """Deterministic counter-based random stream (SplitMix64 + Box-Muller).

    Draw ``k`` of the stream: ``out[i] = splitmix64((seed + (counter+i+1) *
    0x9E3779B97F4A7C15) mod 2^64)``.  Uniforms take the top 53 bits mapped to
    (0, 1]; normal pairs come from the Box-Muller transform

        g1 = sqrt(-2 ln u1) * cos(2 pi u2),  g2 = sqrt(-2 ln u1) * sin(2 pi u2),

    consuming two uniforms per pair (the second half of an odd request is
    discarded, not carried over).  Identical seeds therefore give identical
    streams on any platform; the generator is single-owner (not thread-safe).
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._counter = 0

    def raw(self, count: int) -> np.ndarray:
        """Next ``count`` raw 64-bit words."""
        idx = np.arange(self._counter + 1, self._counter + count + 1, dtype=np.uint64)
        self._counter += count
        return _splitmix64(np.uint64(self.seed) + idx * np.uint64(SEED_STRIDE))

    def uniform(self, count: int) -> np.ndarray:
        """``count`` uniforms in (0, 1]."""
        bits = (self.raw(count) >> np.uint64(11)).astype(np.float64)
        return (bits + 1.0) / _TWO53

    def normal(self, count: int) -> np.ndarray:
        """``count`` standard normals via Box-Muller."""
        pairs = (count + 1) // 2
        u1 = self.uniform(pairs)
        u2 = self.uniform(pairs)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = (2.0 * math.pi) * u2
        out = np.concatenate([r * np.cos(theta), r * np.sin(theta)])
        return out[:count]

    def rademacher(self, count: int) -> np.ndarray:
        """``count`` values in {-1.0, +1.0} with equal probability."""
        return np.where(self.uniform(count) <= 0.5, -1.0, 1.0)

    def spawn(self, index: int) -> "Rng":
        """Independent child stream ``index`` (seed = master XOR index*stride)."""
        return Rng(self.seed ^ ((index * SEED_STRIDE) & _MASK64))


def project_out(g: np.ndarray, directions) -> np.ndarray:
    """Subtract from ``g`` its components along the given orthonormal directions.

    Two subtraction passes per direction; the residual inner product is exactly
    zero for axis-aligned directions and at the rounding floor otherwise.
    """
    out = np.array(g, dtype=np.float64, copy=True)
    for _ in range(2):
        for u in directions:
            out -= (out @ u) * u
    return out


def sample_gaussian(rng: Rng, mean, sigma: float, projected_out=()) -> np.ndarray:
    """One draw from N(mean, sigma^2 * (I - sum uu^T)) for orthonormal u's.

    ``projected_out`` is a sequence of orthonormal vectors; components along
    them are removed by subtraction so the sample is orthogonal to each.
    ``sigma=0`` returns the mean exactly.
    """
    mean = as_vector(mean)
    if sigma == 0.0:
        return mean.copy()
    g = rng.normal(mean.shape[0])
    if projected_out:
        g = project_out(g, projected_out)
    return mean + sigma * g


def _cholesky(m: np.ndarray, pivot_floor: float):
    """Lower Cholesky factor of ``m``, or None when a pivot hits the floor."""
    d = m.shape[0]
    lower = np.zeros_like(m)
    for j in range(d):
        pivot = m[j, j] - lower[j, :j] @ lower[j, :j]
        if not pivot > pivot_floor:
            return None
        ljj = math.sqrt(pivot)
        lower[j, j] = ljj
        if j + 1 < d:
            lower[j + 1 :, j] = (m[j + 1 :, j] - lower[j + 1 :, :j] @ lower[j, :j]) / ljj
    return lower

def _solve_cholesky(lower: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = lower.shape[0]
    y = np.zeros(d)
    for i in range(d):
        y[i] = (b[i] - lower[i, :i] @ y[:i]) / lower[i, i]
    x = np.zeros(d)
    for i in range(d - 1, -1, -1):
        x[i] = (y[i] - lower[i + 1 :, i] @ x[i + 1 :]) / lower[i, i]
    return x


def solve_spd(a: np.ndarray, b, ridge: float = 0.0) -> np.ndarray:
    """Solve (a + ridge*I) x = b for symmetric positive definite ``a``.

    Cholesky with one step of iterative refinement; falls back to a Jacobi
    eigendecomposition when a pivot dips below 1e-14 * trace(a)/d, and raises
    NotPositiveDefinite when the spectrum itself is that small.
    """
    a = np.asarray(a, dtype=np.float64)
    b = as_vector(b)
    d = a.shape[0]
    if a.shape != (d, d) or b.shape[0] != d:
        raise DimensionMismatch(f"system shapes {a.shape} / {b.shape} do not match")
    pivot_floor = 1e-14 * np.trace(a) / d
    m = a if ridge == 0.0 else a + ridge * np.eye(d)

    lower = _cholesky(m, pivot_floor)
    if lower is not None:
        x = _solve_cholesky(lower, b)
        x += _solve_cholesky(lower, b - m @ x)  # one refinement pass
        return x

    evals, evecs = sym_eigs(m)
    if evals[-1] <= pivot_floor:
        raise NotPositiveDefinite(
            f"matrix has eigenvalue {evals[-1]:.3e} <= floor {pivot_floor:.3e} (ridge={ridge:g})"
        )
    return evecs @ ((evecs.T @ b) / evals)


def sym_eigs(a: np.ndarray):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi sweeps.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues sorted in
    descending order and eigenvectors as the corresponding columns.  Sweeps
    stop once every off-diagonal entry is <= 1e-12 * ||a||_F; raises
    NoConvergence after 100 sweeps.
    """
    a = np.array(a, dtype=np.float64, copy=True)
    d = a.shape[0]
    if a.shape != (d, d):
        raise DimensionMismatch(f"expected square matrix, got {a.shape}")
    v = np.eye(d)
    if d == 1:
        return a[0, :1].copy(), v
    fnorm = math.sqrt(float(np.sum(a * a)))
    tol = 1e-12 * fnorm

    def _max_off() -> float:
        return float(np.abs(a - np.diag(np.diag(a))).max())

    for _ in range(100):
        if _max_off() <= tol:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if abs(apq) <= tol / d:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                cp, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        if _max_off() > tol:
            raise NoConvergence("Jacobi eigensolver did not converge in 100 sweeps")

    evals = np.diag(a).copy()
    order = np.argsort(-evals)
    return evals[order], v[:, order]
