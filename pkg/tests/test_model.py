import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bnml.data import Dataset, PatchedDataset
from bnml.errors import DegenerateDirection
from bnml.linalg import Rng
from bnml.model import (ModelState, bn_norm, discrepancy, forward, logistic_dloss,
                        logistic_loss, loss_and_grads, margin_profile, predict_cnn,
                        predict_linear)
from bnml.solvers import solve_uniform_margin, span_spectrum

from conftest import brute_discrepancy, random_linear_data, random_patched_data


def two_point_axis_data():
    return Dataset(inputs=np.array([[1.0, 0.0], [-1.0, 0.0]]),
                   labels=np.array([1.0, -1.0]), train_mean=np.zeros(2))


def unit_axes_data():
    """z_1 = (1,0), z_2 = (0,1): Sigma = I/2, w* = (1,1)."""
    return Dataset(inputs=np.array([[1.0, 0.0], [0.0, 1.0]]),
                   labels=np.array([1.0, 1.0]), train_mean=np.zeros(2))


class TestBnNorm:
    def test_hand_value(self):
        assert bn_norm(np.array([3.0, 4.0]), two_point_axis_data()) == 3.0

    def test_zero_vector_degenerate(self):
        with pytest.raises(DegenerateDirection):
            bn_norm(np.zeros(2), two_point_axis_data())

    def test_null_direction_degenerate(self):
        with pytest.raises(DegenerateDirection):
            bn_norm(np.array([0.0, 1.0]), two_point_axis_data())

    def test_duplicated_patches_reduce_to_linear(self, rng):
        lin = random_linear_data(rng, 6, 8)
        doubled = PatchedDataset(
            inputs=np.stack([lin.inputs, lin.inputs], axis=1),
            labels=lin.labels, train_mean=np.zeros(8))
        w = rng.normal(8)
        assert np.isclose(bn_norm(w, doubled), bn_norm(w, lin), rtol=1e-12)

    def test_matches_cached_sigma_quadratic_form(self, rng):
        data = random_linear_data(rng, 10, 6)
        w = rng.normal(6)
        via_sigma = float(np.sqrt(w @ data.sigma @ w))
        assert abs(bn_norm(w, data) - via_sigma) <= 1e-10 * via_sigma


class TestPredict:
    def test_linear_hand_value(self):
        state = ModelState(w=np.array([3.0, 4.0]), gamma=2.0)
        assert predict_linear(state, two_point_axis_data(), [1.0, 0.0]) == 2.0

    def test_gamma_zero(self, rng):
        data = random_linear_data(rng, 5, 7)
        state = ModelState(w=rng.normal(7), gamma=0.0)
        assert predict_linear(state, data, rng.normal(7)) == 0.0

    def test_gamma_homogeneous(self, rng):
        data = random_linear_data(rng, 5, 7)
        w = rng.normal(7)
        x = rng.normal(7)
        f1 = predict_linear(ModelState(w, 1.0), data, x)
        f3 = predict_linear(ModelState(w, 3.0), data, x)
        assert f3 == 3.0 * f1

    def test_cnn_sign_matches_patch_sum(self, rng):
        data = random_patched_data(rng, 6, 3, 9)
        state = ModelState(w=rng.normal(9), gamma=0.7)
        for _ in range(10):
            patches = rng.normal(3 * 9).reshape(3, 9)
            g = predict_cnn(state, data, patches)
            assert np.sign(g) == np.sign(state.w @ patches.sum(axis=0))


class TestMarginProfile:
    def test_hand_values(self):
        state = ModelState(w=np.array([2.0, 1.0]), gamma=1.0)
        m = margin_profile(state, unit_axes_data())
        np.testing.assert_allclose(m, [2.0 / np.sqrt(2.5), 1.0 / np.sqrt(2.5)], atol=1e-15)

    def test_uniform_at_wstar(self, rng):
        data = random_linear_data(rng, 8, 12)
        ws = solve_uniform_margin(data).solution
        m = margin_profile(ModelState(ws, 1.0), data)
        assert np.abs(m - m[0]).max() <= 1e-10 * abs(m[0])

    def test_scale_invariance(self, rng):
        data = random_linear_data(rng, 7, 9)
        w = rng.normal(9)
        m1 = margin_profile(ModelState(w, 1.0), data)
        m5 = margin_profile(ModelState(5.0 * w, 1.0), data)
        np.testing.assert_allclose(m1, m5, rtol=1e-12)


class TestDiscrepancy:
    def test_hand_value(self):
        assert np.isclose(discrepancy(ModelState(np.array([2.0, 1.0]), 1.0),
                                      unit_axes_data()), 0.2, atol=1e-14)

    def test_single_sample_zero(self, rng):
        data = Dataset(inputs=rng.normal(3).reshape(1, 3),
                       labels=np.array([1.0]), train_mean=np.zeros(3))
        assert discrepancy(ModelState(rng.normal(3), 1.0), data) == 0.0

    def test_zero_at_wstar(self, rng):
        data = random_linear_data(rng, 6, 10)
        ws = solve_uniform_margin(data).solution
        assert discrepancy(ModelState(ws, 1.0), data) <= 1e-20

    @pytest.mark.parametrize("trial", range(20))
    def test_fast_path_matches_brute_force(self, trial):
        rng = Rng(1000 + trial)
        if trial % 2 == 0:
            n = 2 + int(rng.uniform(1)[0] * 28)
            data = random_linear_data(rng, n, n + 3)
        else:
            n = 2 + int(rng.uniform(1)[0] * 8)
            p = 2 + int(rng.uniform(1)[0] * 3)
            data = random_patched_data(rng, n, p, n * p + 2)
        state = ModelState(rng.normal(data.d), 1.0)
        fast = discrepancy(state, data)
        brute = brute_discrepancy(margin_profile(state, data))
        assert abs(fast - brute) <= 1e-12 * max(1.0, brute)


class TestGradients:
    def test_orthogonality(self, rng):
        for _ in range(20):
            data = random_linear_data(rng, 8, 14)
            state = ModelState(rng.normal(14), 0.5 + rng.uniform(1)[0])
            _, gw, _ = loss_and_grads(state, data)
            assert abs(gw @ state.w) <= 1e-10 * np.linalg.norm(gw) * np.linalg.norm(state.w)

    def test_finite_difference(self, rng):
        for _ in range(10):
            data = random_linear_data(rng, 6, 9)
            state = ModelState(rng.normal(9), 0.8)
            _, gw, gg = loss_and_grads(state, data)
            h = rng.normal(9)
            h /= np.linalg.norm(h)
            eps = 1e-6
            lp, _, _ = loss_and_grads(ModelState(state.w + eps * h, state.gamma), data)
            lm, _, _ = loss_and_grads(ModelState(state.w - eps * h, state.gamma), data)
            fd = (lp - lm) / (2 * eps)
            assert abs(fd - gw @ h) <= 1e-5 * max(abs(fd), 1e-8)
            gp, _, _ = loss_and_grads(ModelState(state.w, state.gamma + eps), data)
            gm, _, _ = loss_and_grads(ModelState(state.w, state.gamma - eps), data)
            fdg = (gp - gm) / (2 * eps)
            assert abs(fdg - gg) <= 1e-5 * max(abs(fdg), 1e-8)

    def test_gradient_vanishes_at_wstar(self, rng):
        data = random_linear_data(rng, 7, 11)
        ws = solve_uniform_margin(data).solution
        fw = forward(ModelState(ws, 1.2), data)
        scale = (1.2 / (data.n * fw.sigma_norm)) * float(
            np.abs(fw.dloss) @ np.linalg.norm(data.xbar(), axis=1)) * np.linalg.norm(ws)
        assert abs(fw.grad_w @ ws) <= 1e-10 * scale

    def test_gradient_inner_product_identity(self, rng):
        # <-grad L, w*> equals the pairwise double-sum formula, linear and patched
        for trial in range(10):
            if trial % 2 == 0:
                data = random_linear_data(rng, 6, 9)
            else:
                data = random_patched_data(rng, 4, 2, 10)
            state = ModelState(rng.normal(data.d), 0.5 + rng.uniform(1)[0])
            ws = solve_uniform_margin(data).solution
            _, gw, _ = loss_and_grads(state, data)
            lhs = -float(gw @ ws)
            rhs = self._double_sum(data, state)
            assert abs(lhs - rhs) <= 1e-8 * max(abs(lhs), abs(rhs), 1e-12)

    @staticmethod
    def _double_sum(data, state):
        fw = forward(state, data)
        n, p, s = data.n, data.patch_count, fw.sigma_norm
        lp = np.abs(fw.dloss)
        z = data.z_rows()
        u = [sum(float(z[i * p + q] @ state.w) for q in range(p)) for i in range(n)]
        total = 0.0
        for i in range(n):
            for j in range(n):
                total += lp[i] * lp[j] * (u[j] - u[i]) * (u[j] / lp[j] - u[i] / lp[i])
        value = state.gamma / (2 * n * n * p * s ** 3) * total
        if p > 1:
            pu = z @ state.w
            within = sum((pu[i * p + a] - pu[i * p + b]) ** 2
                         for i in range(n) for a in range(p) for b in range(p))
            value += state.gamma / (2 * n * n * p * s ** 3) * float(lp.sum()) * within
        return value


class TestMetricIdentity:
    def test_hand_anchor_both_sides_half(self):
        data = unit_axes_data()
        state = ModelState(np.array([2.0, 1.0]), 1.0)
        ws = solve_uniform_margin(data).solution
        np.testing.assert_allclose(ws, [1.0, 1.0], atol=1e-12)
        s2 = float(state.w @ data.sigma @ state.w)
        lhs = s2 * discrepancy(state, data)
        coeff = float(ws @ data.sigma @ state.w)
        assert np.isclose(coeff, 1.5, atol=1e-12)
        delta = state.w - coeff * ws
        rhs = 2.0 * float(delta @ data.sigma @ delta)
        assert abs(lhs - 0.5) <= 1e-12
        assert abs(rhs - 0.5) <= 1e-12

    def test_identity_random(self, rng):
        for _ in range(15):
            data = random_linear_data(rng, 6, 10)
            w = rng.normal(10)
            ws = solve_uniform_margin(data).solution
            s2 = float(w @ data.sigma @ w)
            lhs = s2 * discrepancy(ModelState(w, 1.0), data)
            coeff = float(ws @ data.sigma @ w)
            delta = w - coeff * ws
            rhs = 2.0 * float(delta @ data.sigma @ delta)
            assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), abs(rhs), 1e-12)

    def test_sandwich_in_span(self, rng):
        for _ in range(10):
            data = random_linear_data(rng, 6, 10)
            w = data.z_rows().T @ rng.normal(6)
            ws = solve_uniform_margin(data).solution
            spec = span_spectrum(data)
            coeff = float(ws @ data.sigma @ w)
            mid = float((w - coeff * ws) @ data.sigma @ (w - coeff * ws))
            resid = w - (float(ws @ w) / float(ws @ ws)) * ws
            outer = float(resid @ resid)
            slack = 1e-10 * max(1.0, spec.lambda_max * outer)
            assert spec.lambda_min * outer - slack <= mid <= spec.lambda_max * outer + slack


class TestHomogeneity:
    @settings(max_examples=20, deadline=None)
    @given(c=st.floats(1e-3, 1e3), seed=st.integers(0, 10_000))
    def test_zero_homogeneity_in_w(self, c, seed):
        rng = Rng(seed)
        data = random_linear_data(rng, 5, 8)
        w = rng.normal(8)
        d1 = discrepancy(ModelState(w, 1.0), data)
        d2 = discrepancy(ModelState(c * w, 1.0), data)
        assert abs(d1 - d2) <= 1e-12 * max(1.0, d1)


class TestLogisticStability:
    def test_extreme_arguments(self):
        z = np.array([-1000.0, -50.0, 0.0, 50.0, 1000.0])
        loss = logistic_loss(z)
        assert np.all(np.isfinite(loss))
        assert loss[0] == 1000.0  # log(1+e^1000) ~ 1000
        assert loss[2] == np.log(2.0)
        assert loss[4] == 0.0  # underflow to zero loss, not overflow
        dl = logistic_dloss(z)
        assert np.all(np.isfinite(dl))
        assert dl[0] == -1.0
        assert dl[2] == -0.5
        assert dl[4] == 0.0

    def test_derivative_consistency(self):
        z = np.linspace(-20, 20, 41)
        eps = 1e-6
        fd = (logistic_loss(z + eps) - logistic_loss(z - eps)) / (2 * eps)
        np.testing.assert_allclose(logistic_dloss(z), fd, atol=1e-9)
