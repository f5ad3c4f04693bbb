"""Independent reference solvers and standalone theory checkers.

These are the oracles the training dynamics are verified against: the
minimum-norm uniform-margin solution (dual Gram system), the hard-margin SVM
(dual coordinate ascent), the span-restricted covariance spectrum, and two
self-contained sequence lemmas used by the convergence analysis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import Infeasible, NoConvergence, NotPositiveDefinite, NotSeparable, NotSorted
from .linalg import solve_spd, sym_eigs

__all__ = [
    "SolverReport",
    "SpectrumReport",
    "solve_uniform_margin",
    "solve_max_margin",
    "span_spectrum",
    "check_aux_inequality",
    "gamma_recurrence_bounds",
    "gamma_recurrence_batch",
]

RESIDUAL_TOL = 1e-6
KKT_TOL = 1e-8
MAX_SWEEPS = 1_000_000
RANK_RTOL = 1e-10


@dataclass
class SolverReport:
    """A reference solution with an honestly recomputed certificate."""

    solution: np.ndarray
    residual: float
    iterations: int
    certificate: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        cert = {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                for k, v in self.certificate.items()}
        return {
            "solution": self.solution.tolist(),
            "residual": self.residual,
            "iterations": self.iterations,
            "certificate": cert,
        }


@dataclass(frozen=True)
class SpectrumReport:
    lambda_min: float
    lambda_max: float
    rank: int


def solve_uniform_margin(data) -> SolverReport:
    """Minimum-norm solution of <w, z_row> = 1 over all constraint rows.

    Solves the m x m Gram system G a = 1 (m = n or n*P) and returns
    w = Z^T a, which lies in span{z} by construction.  A ridge escalation
    ladder (0, 1e-12, 1e-10 times tr(G)/m) handles rank-deficient Grams from
    duplicate constraints; the reported residual is recomputed from w itself.
    """
    z = data.z_rows()
    m = z.shape[0]
    gram = z @ z.T
    ones = np.ones(m)
    base = np.trace(gram) / m
    best = None
    for attempt, ridge in enumerate((0.0, 1e-12 * base, 1e-10 * base), start=1):
        try:
            a = solve_spd(gram, ones, ridge=ridge)
        except NotPositiveDefinite:
            continue
        w = z.T @ a
        residual = float(np.abs(z @ w - 1.0).max())
        if best is None or residual < best.residual:
            best = SolverReport(
                solution=w, residual=residual, iterations=attempt,
                certificate={"dual": a, "slacks": z @ w - 1.0, "ridge": ridge},
            )
        if residual <= RESIDUAL_TOL:
            return best
    if best is None:
        raise Infeasible("uniform-margin Gram system unsolvable at every ridge level")
    raise Infeasible(
        f"uniform-margin residual {best.residual:.3e} exceeds {RESIDUAL_TOL:g} "
        "after ridge escalation (the equal-margin system looks infeasible)"
    )


def solve_max_margin(data) -> SolverReport:
    """Hard-margin SVM on the patch sums: argmin ||w||^2 s.t. y_i <w, xbar_i> >= 1.

    Dual coordinate ascent on max sum(alpha) - 0.5 ||sum alpha_i y_i xbar_i||^2
    with alpha >= 0, run in Gram space with cyclic sweeps and shrinking of
    persistently inactive constraints.  Stops at max KKT violation <= 1e-8.
    """
    zbar = data.zbar()
    n = zbar.shape[0]
    q = zbar @ zbar.T
    qdiag = np.diag(q).copy()
    if np.any(qdiag <= 0.0):
        raise NotSeparable("a training point has zero patch sum; margins cannot reach 1")
    scale = float(np.sqrt(qdiag.max()))
    alpha = np.zeros(n)
    g = np.zeros(n)  # g = Q @ alpha = y_i <w, xbar_i>
    active = np.ones(n, dtype=bool)
    inactive_streak = np.zeros(n, dtype=int)

    def kkt_violation(idx) -> float:
        # maximize: grad_i = 1 - g_i; alpha_i = 0 wants grad <= 0, else grad = 0
        grad = 1.0 - g[idx]
        viol = np.where(alpha[idx] > 0.0, np.abs(grad), np.maximum(grad, 0.0))
        return float(viol.max()) if viol.size else 0.0

    sweeps = 0
    while sweeps < MAX_SWEEPS:
        sweeps += 1
        for i in np.flatnonzero(active):
            grad = 1.0 - g[i]
            new_a = max(0.0, alpha[i] + grad / qdiag[i])
            delta = new_a - alpha[i]
            if delta != 0.0:
                alpha[i] = new_a
                g += delta * q[:, i]
            if alpha[i] == 0.0 and grad < -KKT_TOL:
                inactive_streak[i] += 1
                if inactive_streak[i] >= 5:
                    active[i] = False
            else:
                inactive_streak[i] = 0
        if sweeps % 256 == 0:
            g = q @ alpha  # clear accumulated drift
        if kkt_violation(np.flatnonzero(active)) <= KKT_TOL:
            g = q @ alpha
            if kkt_violation(np.arange(n)) <= KKT_TOL:
                break
            active[:] = True
            inactive_streak[:] = 0
        wnorm2 = float(alpha @ g)
        if wnorm2 > (1e8 / scale) ** 2:
            raise NotSeparable(
                f"dual objective diverging (||w|| ~ {math.sqrt(max(wnorm2, 0)):.3e}); "
                "data looks linearly inseparable"
            )
    else:
        raise NoConvergence(f"SVM dual coordinate ascent hit the {MAX_SWEEPS} sweep cap")

    w = zbar.T @ alpha
    slacks = data.labels * (data.xbar() @ w) - 1.0
    residual = float(np.maximum(
        np.where(alpha > 0.0, np.abs(slacks), 0.0),
        np.maximum(-slacks, 0.0),
    ).max())
    return SolverReport(
        solution=w, residual=residual, iterations=sweeps,
        certificate={"alpha": alpha, "slacks": slacks},
    )


def span_spectrum(data) -> SpectrumReport:
    """Extreme nonzero eigenvalues of sigma restricted to the input span.

    Computed from the m x m row Gram matrix (same nonzero spectrum as the
    d x d covariance); eigenvalues below 1e-10 * lambda_max count as rank
    deficiency, not as lambda_min.
    """
    rows = data.rows()
    m = rows.shape[0]
    gram = rows @ rows.T / m
    evals, _ = sym_eigs(gram)
    lam_max = float(evals[0])
    if lam_max <= 0.0:
        return SpectrumReport(lambda_min=0.0, lambda_max=0.0, rank=0)
    keep = evals > RANK_RTOL * lam_max
    lam_min = float(evals[keep][-1])
    return SpectrumReport(lambda_min=lam_min, lambda_max=lam_max, rank=int(keep.sum()))


def check_aux_inequality(a, b):
    """Pairwise-maximum inequality for a nondecreasing ``a`` and nonincreasing
    nonnegative ``b``:

        sum_{i,i'} max(b_i, b_i') (a_i - a_i')^2
            >= (sum b) / (4n) * sum_{i,i'} (a_i - a_i')^2

    Returns (lhs, rhs, holds).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape:
        raise NotSorted("a and b must be 1-D sequences of equal length")
    if np.any(np.diff(a) < 0):
        raise NotSorted("a must be nondecreasing")
    if np.any(np.diff(b) > 0) or np.any(b < 0):
        raise NotSorted("b must be nonincreasing and nonnegative")
    n = a.shape[0]
    diff2 = (a[:, None] - a[None, :]) ** 2
    lhs = float((np.maximum(b[:, None], b[None, :]) * diff2).sum())
    rhs = float(b.sum() / (4.0 * n) * diff2.sum())
    holds = lhs >= rhs - 1e-12 * max(1.0, lhs, rhs)
    return lhs, rhs, holds


def gamma_recurrence_bounds(a0: float, c: float, t: int):
    """Iterate a <- a + c*exp(-a) for t steps and bracket the result by

        log(c t + e^{a0}) <= a_t <= c e^{-a0} + log(c t + e^{a0}).

    Returns (a_t, lower, upper); the bracket is asserted (tiny rounding slack).
    """
    if c <= 0:
        raise ValueError("c must be positive")
    if t < 0:
        raise ValueError("t must be >= 0")
    a = float(a0)
    for _ in range(int(t)):
        a += c * math.exp(-a)
    lower = math.log(c * t + math.exp(a0))
    upper = c * math.exp(-a0) + lower
    slack = 1e-9 * max(1.0, abs(a))
    if not (lower - slack <= a <= upper + slack):
        raise AssertionError(
            f"recurrence left its bracket: {lower} <= {a} <= {upper} fails "
            f"(a0={a0}, c={c}, t={t})"
        )
    return a, lower, upper


def gamma_recurrence_batch(a0s, cs, t: int):
    """Vectorized direct iteration of the recurrence for ``t`` steps.

    Returns (a_t, lower, upper) arrays; used for bulk property checks.
    """
    a = np.asarray(a0s, dtype=np.float64).copy()
    c = np.asarray(cs, dtype=np.float64)
    for _ in range(int(t)):
        a += c * np.exp(-a)
    lower = np.log(c * t + np.exp(np.asarray(a0s, dtype=np.float64)))
    upper = c * np.exp(-np.asarray(a0s, dtype=np.float64)) + lower
    return a, lower, upper
