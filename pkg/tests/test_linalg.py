import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bnml.errors import DimensionMismatch, NotPositiveDefinite
from bnml.linalg import (Rng, as_sym_matrix, as_vector, project_out, sample_gaussian,
                         solve_spd, sym_eigs)

from conftest import random_spd


class TestRng:
    def test_same_seed_same_stream(self):
        a = Rng(123).normal(1024)
        b = Rng(123).normal(1024)
        assert np.array_equal(a, b)

    def test_different_seeds_differ(self):
        a = Rng(1).normal(1024)
        b = Rng(2).normal(1024)
        assert not np.array_equal(a, b)

    def test_uniform_in_half_open_unit(self):
        u = Rng(9).uniform(10_000)
        assert u.min() > 0.0 and u.max() <= 1.0

    def test_normal_moments(self):
        g = Rng(5).normal(200_000)
        assert abs(g.mean()) < 0.01
        assert abs(g.std() - 1.0) < 0.01

    def test_stream_continues_not_repeats(self):
        r = Rng(7)
        first = r.normal(100)
        second = r.normal(100)
        assert not np.array_equal(first, second)

    def test_spawn_deterministic_and_distinct(self):
        master = Rng(99)
        a1 = master.spawn(1).normal(64)
        a2 = Rng(99).spawn(1).normal(64)
        b = master.spawn(2).normal(64)
        assert np.array_equal(a1, a2)
        assert not np.array_equal(a1, b)

    def test_rademacher_values(self):
        v = Rng(3).rademacher(1000)
        assert set(np.unique(v)) <= {-1.0, 1.0}


class TestValidation:
    def test_as_vector_rejects_nan(self):
        with pytest.raises(ValueError):
            as_vector([1.0, np.nan])

    def test_as_vector_rejects_matrix(self):
        with pytest.raises(DimensionMismatch):
            as_vector([[1.0, 2.0]])

    def test_as_sym_matrix_mirrors_upper(self):
        m = as_sym_matrix([[1.0, 5.0], [2.0, 3.0]])
        assert m[1, 0] == m[0, 1] == 5.0


class TestSolveSpd:
    def test_diagonal_system(self):
        x = solve_spd(np.diag([2.0, 3.0]), [2.0, 3.0])
        np.testing.assert_allclose(x, [1.0, 1.0], rtol=0, atol=1e-14)

    def test_zero_rhs(self):
        x = solve_spd(np.eye(2), [0.0, 0.0])
        np.testing.assert_array_equal(x, [0.0, 0.0])

    def test_two_by_two_multiply_back(self):
        a = np.array([[2.0, 1.0], [1.0, 2.0]])
        x = solve_spd(a, [3.0, 3.0])
        np.testing.assert_allclose(a @ x, [3.0, 3.0], atol=1e-12)
        np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-12)

    @pytest.mark.parametrize("d", [5, 50, 200])
    def test_residual_bound_random_spd(self, rng, d):
        a = random_spd(rng, d)
        b = rng.normal(d)
        x = solve_spd(a, b)
        assert np.linalg.norm(a @ x - b) <= 1e-10 * (1 + np.linalg.norm(b))

    def test_ridge_shifts_system(self, rng):
        a = random_spd(rng, 8)
        b = rng.normal(8)
        x = solve_spd(a, b, ridge=0.5)
        m = a + 0.5 * np.eye(8)
        assert np.linalg.norm(m @ x - b) <= 1e-10 * (1 + np.linalg.norm(b))

    def test_not_positive_definite(self):
        with pytest.raises(NotPositiveDefinite):
            solve_spd(np.array([[1.0, 0.0], [0.0, -1.0]]), [1.0, 1.0])

    def test_singular_matrix_raises(self):
        with pytest.raises(NotPositiveDefinite):
            solve_spd(np.ones((3, 3)), [1.0, 1.0, 1.0])


class TestSymEigs:
    def test_diagonal(self):
        evals, _ = sym_eigs(np.diag([2.0, 3.0]))
        np.testing.assert_allclose(evals, [3.0, 2.0], atol=1e-14)

    def test_scaled_identity(self):
        evals, _ = sym_eigs(0.5 * np.eye(2))
        np.testing.assert_allclose(evals, [0.5, 0.5], atol=1e-14)

    def test_rank_one_ones(self):
        evals, evecs = sym_eigs(np.ones((2, 2)))
        np.testing.assert_allclose(evals, [2.0, 0.0], atol=1e-12)
        target = np.array([1.0, 1.0]) / np.sqrt(2.0)
        assert min(np.linalg.norm(evecs[:, 0] - target),
                   np.linalg.norm(evecs[:, 0] + target)) < 1e-10

    @pytest.mark.parametrize("d", [3, 10, 40])
    def test_reconstruction_and_orthonormality(self, rng, d):
        a = rng.normal(d * d).reshape(d, d)
        a = (a + a.T) / 2
        evals, evecs = sym_eigs(a)
        fro = np.linalg.norm(a, "fro")
        assert np.linalg.norm(evecs @ np.diag(evals) @ evecs.T - a, "fro") <= 1e-9 * fro
        assert np.abs(evecs.T @ evecs - np.eye(d)).max() <= 1e-10
        assert np.all(np.diff(evals) <= 1e-12 * max(1.0, fro))

    def test_zero_matrix(self):
        evals, _ = sym_eigs(np.zeros((3, 3)))
        np.testing.assert_array_equal(evals, np.zeros(3))


class TestSampleGaussian:
    def test_sigma_zero_returns_mean(self, rng):
        mean = np.array([1.0, -2.0, 3.0])
        out = sample_gaussian(rng, mean, 0.0)
        np.testing.assert_array_equal(out, mean)

    def test_axis_projection_exactly_zero(self, rng):
        u = np.zeros(6)
        u[0] = 1.0
        out = sample_gaussian(rng, np.zeros(6), 1.0, projected_out=[u])
        assert out @ u == 0.0

    def test_general_projection_near_zero(self, rng):
        u = rng.normal(16)
        u /= np.linalg.norm(u)
        out = sample_gaussian(rng, np.zeros(16), 2.5, projected_out=[u])
        assert abs(out @ u) <= 1e-14 * np.linalg.norm(out)

    def test_determinism(self):
        a = sample_gaussian(Rng(42), np.zeros(4), 1.0)
        b = sample_gaussian(Rng(42), np.zeros(4), 1.0)
        assert np.array_equal(a, b)

    def test_project_out_multiple_directions(self, rng):
        dirs = [np.eye(8)[0], np.eye(8)[3]]
        g = project_out(rng.normal(8), dirs)
        assert g @ dirs[0] == 0.0 and g @ dirs[1] == 0.0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32), d=st.integers(2, 12))
def test_solve_spd_property(seed, d):
    rng = Rng(seed)
    a = random_spd(rng, d)
    b = rng.normal(d)
    x = solve_spd(a, b)
    assert np.linalg.norm(a @ x - b) <= 1e-10 * (1 + np.linalg.norm(b))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32), d=st.integers(1, 10))
def test_sym_eigs_property(seed, d):
    rng = Rng(seed)
    a = rng.normal(d * d).reshape(d, d)
    a = (a + a.T) / 2
    evals, evecs = sym_eigs(a)
    fro = np.linalg.norm(a, "fro")
    assert np.linalg.norm(evecs @ np.diag(evals) @ evecs.T - a, "fro") <= 1e-9 * max(fro, 1e-30)
