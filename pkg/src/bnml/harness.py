"""Experiment orchestration: rate fitting, Monte-Carlo generalization runs for
the two synthetic separations, and paired BN/no-BN comparisons."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import (Example1Config, Example2Config, gen_example1, gen_example2)
from .errors import Infeasible, InsufficientData
from .linalg import Rng
from .solvers import solve_max_margin, solve_uniform_margin
from .training import TrainConfig, TrainTrace, train

__all__ = [
    "RateFit",
    "GenReport",
    "CompareSummary",
    "fit_rate",
    "mc_test_error",
    "mc_test_errors_paired",
    "run_example1",
    "run_example2",
    "run_example_seeds",
    "compare_bn_vs_plain",
    "gamma_envelope_check",
    "wilson_halfwidth",
    "worker_count",
]

D_CLIP = 1e-300
WILSON_Z = 1.959963984540054  # 97.5% normal quantile


@dataclass(frozen=True)
class RateFit:
    """OLS of log D against log^2 t over a tail window, plus t*L band stats."""

    slope: float
    intercept: float
    r_squared: float
    window: tuple[int, int]
    loss_band_ratio: float
    clipped_rows: int = 0

    def to_dict(self) -> dict:
        return {
            "slope": self.slope, "intercept": self.intercept,
            "r_squared": self.r_squared,
            "window": {"t_start": self.window[0], "t_end": self.window[1]},
            "loss_band_ratio": self.loss_band_ratio,
            "clipped_rows": self.clipped_rows,
        }


def fit_rate(trace: TrainTrace, tail_fraction: float = 0.5) -> RateFit:
    """Regress log D on log^2 t over the last ``tail_fraction`` of logged rows.

    Rows with t = 0 are excluded (log t undefined); rows with D <= 1e-300 are
    clipped to 1e-300 and counted.  Raises InsufficientData when fewer than 20
    usable rows with D > 0 land in the window.
    """
    if not 0.0 < tail_fraction <= 1.0:
        raise ValueError("tail_fraction must be in (0, 1]")
    rows = [r for r in trace.rows if r.t >= 1]
    start = int(math.floor(len(rows) * (1.0 - tail_fraction)))
    window_rows = rows[start:]
    usable = [r for r in window_rows if r.discrepancy > 0.0]
    if len(usable) < 20:
        raise InsufficientData(
            f"only {len(usable)} rows with positive discrepancy in the tail window (need 20)"
        )
    clipped = sum(1 for r in usable if r.discrepancy <= D_CLIP)
    x = np.log(np.array([r.t for r in usable], dtype=np.float64)) ** 2
    y = np.log(np.maximum([r.discrepancy for r in usable], D_CLIP))
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    sxy = float(((x - xm) * (y - ym)).sum())
    slope = sxy / sxx if sxx > 0 else 0.0
    intercept = ym - slope * xm
    resid = y - (slope * x + intercept)
    ss_res = float((resid ** 2).sum())
    ss_tot = float(((y - ym) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    tl = np.array([r.t * r.loss for r in window_rows if r.loss > 0.0])
    band = float(tl.max() / tl.min()) if tl.size else math.inf
    return RateFit(slope=slope, intercept=intercept, r_squared=r2,
                   window=(window_rows[0].t, window_rows[-1].t),
                   loss_band_ratio=band, clipped_rows=clipped)


def wilson_halfwidth(errors: int, total: int) -> float:
    """Half-width of the 95% Wilson score interval for errors/total."""
    if total < 1:
        return 1.0
    z2 = WILSON_Z * WILSON_Z
    phat = errors / total
    denom = 1.0 + z2 / total
    return (WILSON_Z * math.sqrt(phat * (1.0 - phat) / total + z2 / (4.0 * total * total))) / denom


@dataclass(frozen=True)
class McErrorEntry:
    error: float
    errors: int
    mc_samples: int
    wilson_halfwidth: float


def mc_test_errors_paired(ws, test_sampler, mc_samples: int, rng: Rng) -> list[McErrorEntry]:
    """Monte-Carlo test errors of sign(<w, xbar_test>) for several classifiers
    scored on one shared stream of fresh draws (a paired comparison).

    Ties (score exactly zero) count as errors.  Sampling is chunked with a
    fixed policy so reruns with the same seed are bit-identical.
    """
    if mc_samples < 1:
        raise ValueError("mc_samples must be >= 1")
    ws = [np.asarray(w, dtype=np.float64) for w in ws]
    d = ws[0].shape[0]
    chunk = max(1, 4_194_304 // max(d, 1))
    errors = [0] * len(ws)
    done = 0
    while done < mc_samples:
        take = min(chunk, mc_samples - done)
        xbar, y = test_sampler.sample_xbar(rng, take)
        for k, w in enumerate(ws):
            errors[k] += int(np.sum(y * (xbar @ w) <= 0.0))
        done += take
    return [McErrorEntry(error=e / mc_samples, errors=e, mc_samples=mc_samples,
                         wilson_halfwidth=wilson_halfwidth(e, mc_samples))
            for e in errors]


def mc_test_error(w: np.ndarray, test_sampler, mc_samples: int, rng: Rng) -> McErrorEntry:
    """Monte-Carlo test error of a single classifier on fresh draws."""
    return mc_test_errors_paired([w], test_sampler, mc_samples, rng)[0]


@dataclass(frozen=True)
class GenReport:
    """Paired generalization estimate for the uniform- and max-margin classifiers."""

    error_uniform: float
    error_max: float
    mc_samples: int
    wilson_halfwidth_uniform: float
    wilson_halfwidth_max: float
    residual_uniform: float
    kkt_max: float
    valid: bool
    seed: int

    def to_dict(self) -> dict:
        return {
            "error_uniform": self.error_uniform, "error_max": self.error_max,
            "mc_samples": self.mc_samples,
            "wilson_halfwidth_uniform": self.wilson_halfwidth_uniform,
            "wilson_halfwidth_max": self.wilson_halfwidth_max,
            "residual_uniform": self.residual_uniform, "kkt_max": self.kkt_max,
            "valid": self.valid, "seed": self.seed,
        }


def _run_example(gen, cfg, mc_samples: int, rng: Rng) -> GenReport:
    data, sampler = gen(rng, cfg)
    uniform = solve_uniform_margin(data)
    maxmargin = solve_max_margin(data)
    ent_u, ent_m = mc_test_errors_paired(
        [uniform.solution, maxmargin.solution], sampler, mc_samples, rng)
    return GenReport(
        error_uniform=ent_u.error, error_max=ent_m.error, mc_samples=mc_samples,
        wilson_halfwidth_uniform=ent_u.wilson_halfwidth,
        wilson_halfwidth_max=ent_m.wilson_halfwidth,
        residual_uniform=uniform.residual, kkt_max=maxmargin.residual,
        valid=uniform.residual <= 1e-6, seed=rng.seed,
    )


def run_example1(cfg: Example1Config, mc_samples: int, rng: Rng) -> GenReport:
    """Train-set solvers plus MC test errors for the Example-1 law."""
    return _run_example(gen_example1, cfg, mc_samples, rng)


def run_example2(cfg: Example2Config, mc_samples: int, rng: Rng) -> GenReport:
    """Train-set solvers plus MC test errors for the Example-2 law."""
    return _run_example(gen_example2, cfg, mc_samples, rng)


def worker_count(jobs: int) -> int:
    """Thread fan-out width, capped by the BNML_THREADS environment variable."""
    cap = os.environ.get("BNML_THREADS")
    limit = int(cap) if cap else min(4, os.cpu_count() or 1)
    return max(1, min(jobs, limit))


def run_example_seeds(which: int, cfg, mc_samples: int, master_seed: int, seeds: int):
    """Run an example across ``seeds`` repetitions, worker i seeded by
    master XOR (i * 0x9E3779B97F4A7C15).  Results come back in index order;
    a repetition whose uniform-margin system is infeasible yields None."""
    runner = run_example1 if which == 1 else run_example2
    master = Rng(master_seed)

    def job(i: int):
        try:
            return runner(cfg, mc_samples, master.spawn(i))
        except Infeasible:
            return None

    workers = worker_count(seeds)
    if workers == 1:
        return [job(i) for i in range(seeds)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, range(seeds)))


@dataclass(frozen=True)
class CompareSummary:
    """Final margin-uniformity stats of a paired BN vs plain-logistic run."""

    bn_trace: TrainTrace
    plain_trace: TrainTrace
    d_initial: float
    d_bn_final: float
    d_plain_final: float

    @property
    def bn_ratio(self) -> float:
        return self.d_bn_final / self.d_initial

    @property
    def plain_ratio(self) -> float:
        return self.d_plain_final / self.d_initial


def compare_bn_vs_plain(data, cfg_bn: TrainConfig, cfg_plain: TrainConfig,
                        wstar=None, wmax=None) -> CompareSummary:
    """Run BN and plain-logistic on the same data (shared init seed) and
    collect both traces with final discrepancy ratios."""
    bn = train(data, cfg_bn, wstar=wstar, wmax=wmax)
    plain = train(data, cfg_plain, wstar=wstar, wmax=wmax)
    return CompareSummary(
        bn_trace=bn, plain_trace=plain,
        d_initial=bn.rows[0].discrepancy,
        d_bn_final=bn.rows[-1].discrepancy,
        d_plain_final=plain.rows[-1].discrepancy,
    )


@dataclass(frozen=True)
class EnvelopeReport:
    triggered: bool
    t_start: int
    gamma_start: float
    checked: int
    violations: int


def gamma_envelope_check(trace: TrainTrace, eta: float, spread_frac: float = 0.25) -> EnvelopeReport:
    """Check gamma against the slow-growth envelope once margins are uniform.

    From the first logged row where (max - min) margin <= spread_frac * mean
    margin, every later row must satisfy

        log((eta/8) dt + e^{g1}) <= gamma <= log(8 eta dt + 2 e^{g1})

    with dt the iteration distance from that row and g1 its gamma.
    """
    start = None
    for idx, r in enumerate(trace.rows):
        mean_m = 0.5 * (r.min_margin + r.max_margin)
        if mean_m > 0 and (r.max_margin - r.min_margin) <= spread_frac * mean_m:
            start = idx
            break
    if start is None:
        return EnvelopeReport(False, -1, math.nan, 0, 0)
    base = trace.rows[start]
    viol = 0
    checked = 0
    for r in trace.rows[start:]:
        dt = r.t - base.t
        lo = math.log((eta / 8.0) * dt + math.exp(base.gamma))
        hi = math.log(8.0 * eta * dt + 2.0 * math.exp(base.gamma))
        checked += 1
        if not (lo <= r.gamma <= hi):
            viol += 1
    return EnvelopeReport(True, base.t, base.gamma, checked, viol)
