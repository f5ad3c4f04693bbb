"""Full-batch gradient descent loops with per-iteration metric traces.

Three model kinds share one loop:

* ``bn_linear`` / ``bn_cnn``: simultaneous update of (w, gamma) with the
  analytic gradients from :mod:`bnml.model`;
* ``plain_logistic``: ordinary logistic regression on the raw (patch-summed)
  responses, no normalization and no gamma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigInvalid, Diverged
from .linalg import Rng
from .model import ModelState, forward, logistic_dloss, logistic_loss

__all__ = [
    "TrainConfig",
    "TraceRow",
    "TrainTrace",
    "MonotonicityReport",
    "init_state",
    "train",
    "monotonicity_report",
]

TRACE_HEADER = "t,loss,discrepancy,gamma,w_norm2,w_sigma_norm,align_wstar,align_wmax,min_margin,max_margin"

MODEL_KINDS = ("bn_linear", "bn_cnn", "plain_logistic")


@dataclass(frozen=True)
class TrainConfig:
    eta: float = 0.05
    steps: int = 200_000
    init_scale: float = 0.01
    gamma0: float = 1.0
    seed: int = 0
    log_every: int = 100
    model_kind: str = "bn_linear"

    def __post_init__(self):
        if self.eta <= 0 or self.init_scale <= 0:
            raise ConfigInvalid("eta and init_scale must be positive")
        if self.steps < 0:
            raise ConfigInvalid("steps must be >= 0")
        if self.log_every < 1:
            raise ConfigInvalid("log_every must be >= 1")
        if self.model_kind not in MODEL_KINDS:
            raise ConfigInvalid(f"model_kind must be one of {MODEL_KINDS}")


@dataclass(frozen=True)
class TraceRow:
    t: int
    loss: float
    discrepancy: float
    gamma: float
    w_norm2: float
    w_sigma_norm: float
    align_wstar: float | None
    align_wmax: float | None
    min_margin: float
    max_margin: float


@dataclass
class TrainTrace:
    """Logged metric rows of one run, plus optional per-sample margin history."""

    rows: list[TraceRow] = field(default_factory=list)
    margin_history: list[np.ndarray] | None = None
    final_state: ModelState | None = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=np.float64)

    @property
    def ts(self) -> np.ndarray:
        return np.array([r.t for r in self.rows], dtype=np.int64)

    def to_csv(self, path) -> None:
        def cell(v):
            if v is None or (isinstance(v, float) and math.isnan(v)):
                return ""
            return format(float(v), ".17g")

        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(TRACE_HEADER + "\n")
            for r in self.rows:
                fh.write(
                    f"{r.t},{cell(r.loss)},{cell(r.discrepancy)},{cell(r.gamma)},"
                    f"{cell(r.w_norm2)},{cell(r.w_sigma_norm)},{cell(r.align_wstar)},"
                    f"{cell(r.align_wmax)},{cell(r.min_margin)},{cell(r.max_margin)}\n"
                )

    @classmethod
    def from_csv(cls, path) -> "TrainTrace":
        rows = []
        with open(path, "r", encoding="ascii") as fh:
            header = fh.readline().strip()
            if header != TRACE_HEADER:
                raise ConfigInvalid(f"unexpected trace header: {header!r}")
            for line in fh:
                cells = line.strip().split(",")
                if len(cells) != 10:
                    continue
                opt = lambda c: None if c == "" else float(c)
                rows.append(TraceRow(
                    t=int(cells[0]), loss=float(cells[1]), discrepancy=float(cells[2]),
                    gamma=float(cells[3]), w_norm2=float(cells[4]), w_sigma_norm=float(cells[5]),
                    align_wstar=opt(cells[6]), align_wmax=opt(cells[7]),
                    min_margin=float(cells[8]), max_margin=float(cells[9]),
                ))
        return cls(rows=rows)


def init_state(rng: Rng, cfg: TrainConfig, d: int) -> ModelState:
    """Random direction scaled to ``init_scale``; gamma starts at ``gamma0``."""
    if d < 1:
        raise ConfigInvalid("d must be >= 1")
    while True:
        g = rng.normal(d)
        norm = float(np.linalg.norm(g))
        if norm >= 1e-8:
            break
    return ModelState(w=cfg.init_scale * g / norm, gamma=cfg.gamma0)


def _cos(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return float("nan")
    return float(a @ b) / (na * nb)


def _plain_forward(w: np.ndarray, data):
    """Loss and gradient of unnormalized logistic regression on patch sums."""
    scores = data.labels * (data.xbar() @ w)
    lp = logistic_dloss(scores)
    loss = float(np.mean(logistic_loss(scores)))
    grad = data.xbar().T @ (data.labels * lp) / data.n
    return loss, grad, scores


def train(data, cfg: TrainConfig, wstar=None, wmax=None, collect_margins: bool = False) -> TrainTrace:
    """Run ``cfg.steps`` full-batch GD iterations and return the metric trace.

    ``wstar`` / ``wmax`` are optional probe directions; when given, the trace
    records the cosine alignment of w with each.  ``collect_margins`` keeps the
    per-sample inner products y_i <w, xbar_i> at every logged step (for plots).

    Raises Diverged (carrying the partial trace) if the loss goes non-finite.
    """
    rng = Rng(cfg.seed)
    state = init_state(rng, cfg, data.d)
    plain = cfg.model_kind == "plain_logistic"
    rows_mat = data.rows()
    n_rows = rows_mat.shape[0]
    row_labels = data.row_labels()
    trace = TrainTrace(rows=[], margin_history=[] if collect_margins else None)

    def record(t: int, w: np.ndarray, gamma: float, loss: float):
        u = rows_mat @ w
        s = float(np.sqrt(u @ u / n_rows))
        m = row_labels * u / s if s > 0 else np.full(n_rows, np.nan)
        disc = 2.0 * float(np.mean(m * m) - np.mean(m) ** 2)
        trace.rows.append(TraceRow(
            t=t, loss=loss, discrepancy=disc, gamma=gamma,
            w_norm2=float(np.linalg.norm(w)), w_sigma_norm=s,
            align_wstar=None if wstar is None else _cos(w, wstar),
            align_wmax=None if wmax is None else _cos(w, wmax),
            min_margin=float(m.min()), max_margin=float(m.max()),
        ))
        if collect_margins:
            trace.margin_history.append(data.labels * (data.xbar() @ w))

    w = state.w
    gamma = state.gamma
    for t in range(cfg.steps):
        try:
            if plain:
                loss, grad, step_gamma = *_plain_forward(w, data)[:2], 0.0
            else:
                loss, grad, step_gamma = loss_and_grads_at(w, gamma, data)
        except ValueError as exc:  # non-finite parameters
            raise Diverged(f"parameters became non-finite at step {t}", trace=trace) from exc
        if not math.isfinite(loss):
            raise Diverged(f"loss became non-finite at step {t}", trace=trace)
        if t % cfg.log_every == 0:
            record(t, w, gamma, loss)
        w = w - cfg.eta * grad
        if not plain:
            gamma = gamma - cfg.eta * step_gamma

    try:
        if plain:
            final_loss, _, _ = _plain_forward(w, data)
        else:
            final_loss, _, _ = loss_and_grads_at(w, gamma, data)
    except ValueError as exc:
        raise Diverged(f"parameters became non-finite at step {cfg.steps}", trace=trace) from exc
    if not math.isfinite(final_loss):
        raise Diverged(f"loss became non-finite at step {cfg.steps}", trace=trace)
    record(cfg.steps, w, gamma, final_loss)
    trace.final_state = ModelState(w=w, gamma=gamma)
    return trace


def loss_and_grads_at(w: np.ndarray, gamma: float, data):
    """BN loss and both gradients at raw (w, gamma) values."""
    fw = forward(ModelState(w=w, gamma=gamma), data)
    return fw.loss, fw.grad_w, fw.grad_gamma


@dataclass(frozen=True)
class MonotonicityReport:
    norm_transitions: int
    norm_violations: int
    inner_transitions: int
    inner_violations: int

    @property
    def clean(self) -> bool:
        return self.norm_violations == 0 and self.inner_violations == 0


def monotonicity_report(trace: TrainTrace, per_step_slack: float = 1e-12) -> MonotonicityReport:
    """Count violations of ||w||_2 monotone growth, and (when the w* probe is
    present) of <w, w*> monotone growth from the first row with gamma >= 1/2."""
    norms = trace.column("w_norm2")
    nviol = int(np.sum(norms[1:] < norms[:-1] - per_step_slack * np.maximum(1.0, norms[:-1])))

    iviol = itrans = 0
    aligns = [r.align_wstar for r in trace.rows]
    if all(a is not None for a in aligns) and len(aligns) > 1:
        inner = np.array(aligns) * norms  # <w, w*> / ||w*||, same monotonicity
        gammas = trace.column("gamma")
        start_idx = next((i for i, g in enumerate(gammas) if g >= 0.5), None)
        if start_idx is not None:
            seg = inner[start_idx:]
            itrans = len(seg) - 1
            scale = np.maximum(1.0, np.abs(seg[:-1]))
            iviol = int(np.sum(seg[1:] < seg[:-1] - per_step_slack * scale))
    return MonotonicityReport(
        norm_transitions=len(norms) - 1, norm_violations=nviol,
        inner_transitions=itrans, inner_violations=iviol,
    )
