"""Batch-normalized predictors and their analytic gradients.

The model normalizes the linear response by the data-covariance norm
``||w||_sigma = sqrt(mean_i <w, x_i>^2)`` (mean over all patches for patched
data) and multiplies by a trainable scale ``gamma``:

    linear:  f(w, gamma, x) = gamma * <w, x> / ||w||_sigma
    patched: g(w, gamma, x) = sum_p gamma * <w, x^(p)> / ||w||_sigma

``f`` is 0-homogeneous in ``w`` and 1-homogeneous in ``gamma``; consequently
the loss gradient in ``w`` is orthogonal to ``w``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateDirection
from .linalg import as_vector

__all__ = [
    "ModelState",
    "Forward",
    "bn_norm",
    "predict_linear",
    "predict_cnn",
    "loss_and_grads",
    "margin_profile",
    "discrepancy",
    "logistic_loss",
    "logistic_dloss",
    "forward",
]

DEGENERACY_RTOL = 1e-12


@dataclass
class ModelState:
    """Trainable parameters: weight vector w and BN scale gamma."""

    w: np.ndarray
    gamma: float

    def __post_init__(self):
        self.w = as_vector(self.w)
        self.gamma = float(self.gamma)

    def copy(self) -> "ModelState":
        return ModelState(w=self.w.copy(), gamma=self.gamma)


def logistic_loss(z):
    """log(1 + exp(-z)), stable for any z."""
    return np.logaddexp(0.0, -np.asarray(z, dtype=np.float64))


def logistic_dloss(z):
    """d/dz log(1 + exp(-z)) = -1/(1 + exp(z)), computed without overflow."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    ez = np.exp(-z[pos])
    out[pos] = -ez / (1.0 + ez)
    out[~pos] = -1.0 / (1.0 + np.exp(z[~pos]))
    return out


def bn_norm(w: np.ndarray, data) -> float:
    """||w||_sigma computed from the row inner products (O(N d), no d x d matrix).

    Raises DegenerateDirection when the result is <= 1e-12 * ||w||_2 * sqrt(lambda_max),
    i.e. when w is numerically in the null space of the covariance.
    """
    u = data.rows() @ w
    s = float(np.sqrt(u @ u / u.shape[0]))
    floor = DEGENERACY_RTOL * float(np.linalg.norm(w)) * np.sqrt(data.sigma_lambda_max)
    if s <= floor:
        raise DegenerateDirection(
            f"||w||_sigma = {s:.3e} is below the degeneracy floor {floor:.3e}"
        )
    return s


class Forward(NamedTuple):
    """One full forward/backward evaluation at a fixed state."""

    loss: float
    grad_w: np.ndarray
    grad_gamma: float
    u_rows: np.ndarray      # <w, row> for every normalization row
    sigma_norm: float       # ||w||_sigma
    sample_scores: np.ndarray  # y_i * sum_p <w, x_i^(p)>  (= y_i <w, x_i> linear)
    margins: np.ndarray     # f_i = gamma * sample_scores / sigma_norm
    dloss: np.ndarray       # l'(margins)


def forward(state: ModelState, data) -> Forward:
    """Loss, gradients and intermediates of the BN model on ``data``.

    The w-gradient keeps the projection structure of the update rule:
    grad_w = (gamma / (n * s)) * sum_i l'_i y_i (I - Sigma w w^T / s^2) xbar_i.
    """
    w, gamma = state.w, state.gamma
    rows = data.rows()
    n, n_rows = data.n, rows.shape[0]
    u_rows = rows @ w
    s2 = float(u_rows @ u_rows) / n_rows
    s = float(np.sqrt(s2))
    floor = DEGENERACY_RTOL * float(np.linalg.norm(w)) * np.sqrt(data.sigma_lambda_max)
    if s <= floor:
        raise DegenerateDirection(
            f"||w||_sigma = {s:.3e} is below the degeneracy floor {floor:.3e}"
        )
    if data.patch_count == 1:
        scores = data.labels * u_rows
    else:
        scores = data.labels * u_rows.reshape(n, data.patch_count).sum(axis=1)
    f = gamma * scores / s
    lp = logistic_dloss(f)
    loss = float(np.mean(logistic_loss(f)))
    zbar_lp = data.xbar().T @ (data.labels * lp)
    sigma_w = rows.T @ u_rows / n_rows
    grad_w = (gamma / (n * s)) * (zbar_lp - sigma_w * (float(lp @ scores) / s2))
    grad_gamma = float(lp @ scores) / (n * s)
    return Forward(loss=loss, grad_w=grad_w, grad_gamma=grad_gamma, u_rows=u_rows,
                   sigma_norm=s, sample_scores=scores, margins=f, dloss=lp)


def loss_and_grads(state: ModelState, data):
    """(loss, grad_w, grad_gamma) of the cross-entropy objective at ``state``."""
    fw = forward(state, data)
    return fw.loss, fw.grad_w, fw.grad_gamma


def predict_linear(state: ModelState, data, x) -> float:
    """f(w, gamma, x) for one (already train-mean-centered) input vector."""
    s = bn_norm(state.w, data)
    return state.gamma * float(state.w @ as_vector(x)) / s


def predict_cnn(state: ModelState, data, patches) -> float:
    """g(w, gamma, x) = sum over patches of the normalized responses."""
    s = bn_norm(state.w, data)
    patches = np.asarray(patches, dtype=np.float64)
    return state.gamma * float((patches @ state.w).sum()) / s


def margin_profile(state: ModelState, data) -> np.ndarray:
    """Normalized margins y_i <w, x_i^(p)> / ||w||_sigma, one per row.

    Length n for linear data, n*P for patched data; independent of gamma and
    of positive rescaling of w.
    """
    u = data.rows() @ state.w
    s = bn_norm(state.w, data)
    return data.row_labels() * u / s


def discrepancy(state: ModelState, data) -> float:
    """Mean squared pairwise margin difference, via the variance identity
    D = 2 * (mean(m^2) - mean(m)^2) over the margin profile."""
    m = margin_profile(state, data)
    return 2.0 * float(np.mean(m * m) - np.mean(m) ** 2)
