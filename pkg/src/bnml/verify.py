"""Randomized verification suites for the analytic identities and inequalities.

Every check evaluates the library path against an oracle computed here from
first principles (explicit double loops, central finite differences, direct
recurrence iteration), so a bug cannot hide on both sides at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, PatchedDataset
from .linalg import Rng
from .model import ModelState, discrepancy, forward, loss_and_grads, margin_profile
from .solvers import (check_aux_inequality, gamma_recurrence_bounds, solve_uniform_margin,
                      span_spectrum)

__all__ = ["CheckResult", "run_suite", "SUITES"]


@dataclass
class CheckResult:
    name: str
    trials: int
    failures: int
    worst: float
    tolerance: float
    failing_instance: dict | None = None

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status:4s}  {self.name:38s} trials={self.trials:<6d} "
                f"failures={self.failures:<4d} worst={self.worst:.3e} tol={self.tolerance:.1e}")


def _random_linear_instance(rng: Rng, max_n: int = 30, max_d: int = 50):
    """Uncentered Gaussian data with d >= n so the equal-margin system is solvable."""
    n = 2 + int(rng.uniform(1)[0] * (max_n - 2))
    d = n + int(rng.uniform(1)[0] * (max_d - n))
    inputs = rng.normal(n * d).reshape(n, d)
    labels = rng.rademacher(n)
    data = Dataset(inputs=inputs, labels=labels, train_mean=np.zeros(d))
    w = rng.normal(d)
    gamma = 0.25 + 2.0 * rng.uniform(1)[0]
    return data, ModelState(w=w, gamma=float(gamma))


def _random_cnn_instance(rng: Rng, max_d: int = 50):
    n = 2 + int(rng.uniform(1)[0] * 10)
    p = 2 + int(rng.uniform(1)[0] * 3)
    low = n * p
    d = low + int(rng.uniform(1)[0] * max(1, max_d - low)) if low < max_d else low
    inputs = rng.normal(n * p * d).reshape(n, p, d)
    labels = rng.rademacher(n)
    data = PatchedDataset(inputs=inputs, labels=labels, train_mean=np.zeros(d))
    w = rng.normal(d)
    gamma = 0.25 + 2.0 * rng.uniform(1)[0]
    return data, ModelState(w=w, gamma=float(gamma))


def _serialize_instance(data, state) -> dict:
    return {
        "inputs": data.inputs.tolist(),
        "labels": data.labels.tolist(),
        "w": state.w.tolist(),
        "gamma": state.gamma,
    }


def _gradient_inner_oracle(data, state) -> float:
    """Double-sum formula for <-grad_w L, w*> computed with explicit loops."""
    fw = forward(state, data)
    n = data.n
    p = data.patch_count
    s = fw.sigma_norm
    lp = np.abs(fw.dloss)
    z = data.z_rows()
    u = np.array([sum(float(z[i * p + q] @ state.w) for q in range(p)) for i in range(n)])
    total = 0.0
    for i in range(n):
        for j in range(n):
            total += lp[i] * lp[j] * (u[j] - u[i]) * (u[j] / lp[j] - u[i] / lp[i])
    value = state.gamma / (2.0 * n * n * p * s ** 3) * total
    if p > 1:
        patch_u = z @ state.w
        within = 0.0
        for i in range(n):
            ui = patch_u[i * p: (i + 1) * p]
            for a in range(p):
                for b in range(p):
                    within += (ui[a] - ui[b]) ** 2
        value += state.gamma / (2.0 * n * n * p * s ** 3) * float(lp.sum()) * within
    return value


def _check(name, trials, tol, gen, fn) -> CheckResult:
    """Run ``fn(instance) -> (measure, detail)`` over random instances."""
    failures = 0
    worst = 0.0
    failing = None
    for k in range(trials):
        instance = gen(k)
        measure, detail = fn(instance)
        worst = max(worst, measure)
        if measure > tol:
            failures += 1
            if failing is None:
                failing = detail
    return CheckResult(name=name, trials=trials, failures=failures, worst=worst,
                       tolerance=tol, failing_instance=failing)


def _suite_gradients(rng: Rng, trials: int, corrupt: bool = False) -> list[CheckResult]:
    results = []

    def perturb(g):
        if corrupt and g.size:
            g = g.copy()
            g[0] += 1e-3 * (np.linalg.norm(g) + 1.0)
        return g

    def gen(k):
        if k % 2 == 0:
            return _random_linear_instance(rng)
        return _random_cnn_instance(rng)

    def fd_check(inst):
        data, state = inst
        loss, gw, gg = loss_and_grads(state, data)
        gw = perturb(gw)
        h = rng.normal(state.w.shape[0])
        h /= np.linalg.norm(h)
        eps = 1e-6
        lp_, _, _ = loss_and_grads(ModelState(state.w + eps * h, state.gamma), data)
        lm_, _, _ = loss_and_grads(ModelState(state.w - eps * h, state.gamma), data)
        fd_w = (lp_ - lm_) / (2 * eps)
        gp, _, _ = loss_and_grads(ModelState(state.w, state.gamma + eps), data)
        gm, _, _ = loss_and_grads(ModelState(state.w, state.gamma - eps), data)
        fd_g = (gp - gm) / (2 * eps)
        scale = max(abs(fd_w), abs(fd_g), 1e-8)
        rel = max(abs(fd_w - float(gw @ h)), abs(fd_g - gg)) / scale
        return rel, _serialize_instance(data, state)

    def orth_check(inst):
        data, state = inst
        _, gw, _ = loss_and_grads(state, data)
        gw = perturb(gw)
        denom = max(np.linalg.norm(gw) * np.linalg.norm(state.w), 1e-300)
        return abs(float(gw @ state.w)) / denom, _serialize_instance(data, state)

    def stationarity_check(inst):
        data, state = inst
        wstar = solve_uniform_margin(data).solution
        fw = forward(ModelState(wstar, state.gamma), data)
        gw = perturb(fw.grad_w)
        # grad_w vanishes identically at w*, so normalize by the size the
        # gradient sum would have without cancellation
        term_scale = (abs(state.gamma) / (data.n * fw.sigma_norm)) * float(
            np.abs(fw.dloss) @ np.linalg.norm(data.xbar(), axis=1)
        ) * float(np.linalg.norm(wstar))
        return abs(float(gw @ wstar)) / max(term_scale, 1e-300), _serialize_instance(data, state)

    results.append(_check("finite-difference gradients", trials, 1e-5, gen, fd_check))
    results.append(_check("gradient orthogonal to w", trials, 1e-10, gen, orth_check))
    results.append(_check("stationarity at equal margins", trials, 1e-10, gen, stationarity_check))
    return results


def _suite_identities(rng: Rng, trials: int) -> list[CheckResult]:
    results = []

    def gen_lin(_):
        return _random_linear_instance(rng)

    def gen_cnn(_):
        return _random_cnn_instance(rng)

    def inner_identity(inst):
        data, state = inst
        wstar = solve_uniform_margin(data).solution
        _, gw, _ = loss_and_grads(state, data)
        lhs = -float(gw @ wstar)
        rhs = _gradient_inner_oracle(data, state)
        rel = abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-12)
        return rel, _serialize_instance(data, state)

    def metric_identity(inst):
        data, state = inst
        wstar = solve_uniform_margin(data).solution
        s2 = float(state.w @ (data.sigma @ state.w))
        lhs = s2 * discrepancy(state, data)
        coeff = float(wstar @ (data.sigma @ state.w))
        delta = state.w - coeff * wstar
        rhs = 2.0 * float(delta @ (data.sigma @ delta))
        rel = abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-12)
        return rel, _serialize_instance(data, state)

    def metric_sandwich(inst):
        data, state = inst
        # restrict w to the data span so the plain l2 norm matches the
        # projected norm the sandwich is stated with
        coeffs = rng.normal(data.z_rows().shape[0])
        w = data.z_rows().T @ coeffs
        wstar = solve_uniform_margin(data).solution
        spec = span_spectrum(data)
        coeff = float(wstar @ (data.sigma @ w))
        mid = float((w - coeff * wstar) @ (data.sigma @ (w - coeff * wstar)))
        resid = w - (float(wstar @ w) / float(wstar @ wstar)) * wstar
        outer = float(resid @ resid)
        lo, hi = spec.lambda_min * outer, spec.lambda_max * outer
        violation = max(lo - mid, mid - hi, 0.0) / max(abs(mid), abs(hi), 1e-12)
        return (violation if violation > 1e-10 else 0.0), _serialize_instance(data, state)

    def discrepancy_brute(inst):
        data, state = inst
        fast = discrepancy(state, data)
        m = margin_profile(state, data)
        total = 0.0
        for a in range(m.shape[0]):
            for b in range(m.shape[0]):
                total += (m[b] - m[a]) ** 2
        brute = total / m.shape[0] ** 2
        rel = abs(fast - brute) / max(abs(brute), 1e-12)
        return rel, _serialize_instance(data, state)

    half = max(1, trials // 2)
    results.append(_check("gradient/w* identity (linear)", half, 1e-8, gen_lin, inner_identity))
    results.append(_check("gradient/w* identity (patched)", half, 1e-8, gen_cnn, inner_identity))
    results.append(_check("metric identity ||w||^2 D = 2||.||^2", trials, 1e-10,
                          lambda k: gen_lin(k) if k % 2 == 0 else gen_cnn(k), metric_identity))
    results.append(_check("metric sandwich lambda bounds", trials, 1e-10,
                          lambda k: gen_lin(k) if k % 2 == 0 else gen_cnn(k), metric_sandwich))
    results.append(_check("discrepancy fast path vs brute force", trials, 1e-12,
                          lambda k: gen_lin(k) if k % 2 == 0 else gen_cnn(k), discrepancy_brute))
    return results


def _suite_inequalities(rng: Rng, trials: int) -> list[CheckResult]:
    results = []

    def gen_aux(_):
        n = 2 + int(rng.uniform(1)[0] * 48)
        a = np.sort(rng.normal(n))
        b = np.sort(np.abs(rng.normal(n)))[::-1].copy()
        return a, b

    def aux(inst):
        a, b = inst
        lhs, rhs, holds = check_aux_inequality(a, b)
        measure = 0.0 if holds else (rhs - lhs) / max(abs(rhs), 1e-12)
        return measure, {"a": a.tolist(), "b": b.tolist()}

    def gen_rec(_):
        a0 = 0.1 + 2.9 * rng.uniform(1)[0]
        c = 10 ** (-3.0 * rng.uniform(1)[0])
        t = int(10 ** (6.0 * rng.uniform(1)[0]))
        return a0, c, t

    def rec(inst):
        a0, c, t = inst
        try:
            at, lo, hi = gamma_recurrence_bounds(a0, c, t)
        except AssertionError:
            return 1.0, {"a0": a0, "c": c, "t": t}
        slack = 1e-9 * max(1.0, abs(at))
        measure = max(lo - at, at - hi, 0.0)
        return (measure if measure > slack else 0.0), {"a0": a0, "c": c, "t": t}

    results.append(_check("pairwise-max sum inequality", trials, 0.0, gen_aux, aux))
    results.append(_check("gamma recurrence bracket", max(1, trials // 10), 0.0, gen_rec, rec))
    return results


SUITES = {
    "gradients": _suite_gradients,
    "identities": _suite_identities,
    "inequalities": _suite_inequalities,
}


def run_suite(suite: str, trials: int, seed: int, corrupt_gradients: bool = False) -> list[CheckResult]:
    """Run one named suite (or ``all``) and return its check results."""
    rng = Rng(seed)
    if trials == 0:
        return []
    names = list(SUITES) if suite == "all" else [suite]
    results: list[CheckResult] = []
    for name in names:
        if name == "gradients":
            results.extend(_suite_gradients(rng, trials, corrupt=corrupt_gradients))
        elif name == "identities":
            results.extend(_suite_identities(rng, trials))
        elif name == "inequalities":
            results.extend(_suite_inequalities(rng, trials))
        else:
            raise KeyError(f"unknown suite {name!r}")
    return results
