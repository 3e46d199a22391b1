"""Feed-forward ReLU start-time predictor trained with a Lagrangian dual loop.

Durations are routed twice, once per job and once per machine, through small
dedicated ReLU blocks. The concatenated features go through two shared ReLU
layers of width ``2 * J * T`` and a final affine map to the ``J * T`` starts.
Everything is plain numpy with hand-written backpropagation.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .instance import JssInstance, Schedule, makespan
from .projection import project_feasible

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "jssdesign-model"
CHECKPOINT_VERSION = 1

_PARAM_ORDER = ("job_W", "job_b", "mach_W", "mach_b", "W1", "b1", "W2", "b2", "W_out", "b_out")


@dataclass
class Model:
    jobs: int
    machines: int
    machine_index: np.ndarray  # (M, J) flat task index of job j's task on machine m
    params: Dict[str, np.ndarray]
    normalizer: Optional["Normalizer"] = None

    @property
    def out_dim(self) -> int:
        return self.jobs * self.machines

    def copy(self) -> "Model":
        return Model(self.jobs, self.machines, self.machine_index.copy(),
                     {k: v.copy() for k, v in self.params.items()}, self.normalizer)


@dataclass
class Multipliers:
    """One multiplier for all precedences, one per machine for overlaps."""

    precedence: float
    overlap: np.ndarray

    def __post_init__(self):
        self.overlap = np.asarray(self.overlap, dtype=float)
        if self.precedence < 0 or (self.overlap < 0).any():
            raise ValueError("Lagrange multipliers must be nonnegative")

    @classmethod
    def zeros(cls, machines: int) -> "Multipliers":
        return cls(0.0, np.zeros(machines))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    batch_size: int = 16
    learning_rate: float = 2e-3
    dual_learning_rate: float = 1e-2
    seed: int = 0
    lagrangian: bool = True
    normalization: Optional[float] = None  # None: derive from the dataset
    optimizer: str = "adam"
    standardize_inputs: bool = True

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if not self.learning_rate > 0 or self.dual_learning_rate < 0:
            raise ValueError("learning rates must be positive (dual may be zero)")
        if self.normalization is not None and not self.normalization > 0:
            raise ValueError("normalization constant must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class History:
    loss: List[float] = field(default_factory=list)
    mse: List[float] = field(default_factory=list)
    violation: List[float] = field(default_factory=list)
    lambda_precedence: List[float] = field(default_factory=list)
    lambda_overlap: List[List[float]] = field(default_factory=list)
    meta: Dict[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class Metrics:
    prediction_error: float
    constraint_violation: float
    optimality_gap: float
    count: int


# ---------------------------------------------------------------------------
# model


def _machine_index(jobs: int, machines: int, machine: Optional[np.ndarray]) -> np.ndarray:
    if machine is None:
        machine = np.tile(np.arange(machines), (jobs, 1))
    machine = np.asarray(machine)
    if machine.shape != (jobs, machines):
        raise ValueError(f"machine routing shape {machine.shape} != {(jobs, machines)}")
    idx = np.zeros((machines, jobs), dtype=np.int64)
    for j in range(jobs):
        for t in range(machines):
            idx[machine[j, t], j] = j * machines + t
    return idx


def build_model(inst_shape: Tuple[int, int], seed: int = 0, machine=None) -> Model:
    """Randomly initialised network for ``inst_shape = (J, T)``.

    ``machine`` gives the task-to-machine routing of the instance family and
    defaults to task ``t`` on machine ``t``. Weights are uniform in
    ``+-sqrt(6 / fan_in)``, biases zero.
    """
    J, T = inst_shape
    if J < 1 or T < 1:
        raise ValueError("need at least one job and one machine")
    rng = np.random.default_rng(seed)
    hj, hm, hs, out = 2 * T, 2 * J, 2 * J * T, J * T
    feat = J * hj + T * hm

    def unif(fan_in, shape):
        lim = np.sqrt(6.0 / fan_in)
        return rng.uniform(-lim, lim, size=shape)

    params = {
        "job_W": unif(T, (J, T, hj)),
        "job_b": np.zeros((J, hj)),
        "mach_W": unif(J, (T, J, hm)),
        "mach_b": np.zeros((T, hm)),
        "W1": unif(feat, (feat, hs)),
        "b1": np.zeros(hs),
        "W2": unif(hs, (hs, hs)),
        "b2": np.zeros(hs),
        "W_out": unif(hs, (hs, out)),
        "b_out": np.zeros(out),
    }
    return Model(J, T, _machine_index(J, T, machine), params)


def _forward(model: Model, X: np.ndarray):
    p = model.params
    B = X.shape[0]
    J, T = model.jobs, model.machines
    Xj = X.reshape(B, J, T)
    zj = np.einsum("bjt,jth->bjh", Xj, p["job_W"]) + p["job_b"]
    hj = np.maximum(zj, 0.0)
    Xm = X.reshape(B, J * T)[:, model.machine_index]  # (B, M, J)
    zm = np.einsum("bmj,mjh->bmh", Xm, p["mach_W"]) + p["mach_b"]
    hm = np.maximum(zm, 0.0)
    feat = np.concatenate([hj.reshape(B, -1), hm.reshape(B, -1)], axis=1)
    z1 = feat @ p["W1"] + p["b1"]
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ p["W2"] + p["b2"]
    a2 = np.maximum(z2, 0.0)
    y = a2 @ p["W_out"] + p["b_out"]
    cache = (Xj, Xm, zj, hj, zm, hm, feat, z1, a1, z2, a2)
    return y, cache


def _backward(model: Model, cache, dy: np.ndarray) -> Dict[str, np.ndarray]:
    p = model.params
    Xj, Xm, zj, hj, zm, hm, feat, z1, a1, z2, a2 = cache
    B = dy.shape[0]
    g = {}
    g["W_out"] = a2.T @ dy
    g["b_out"] = dy.sum(axis=0)
    da2 = dy @ p["W_out"].T
    dz2 = da2 * (z2 > 0)
    g["W2"] = a1.T @ dz2
    g["b2"] = dz2.sum(axis=0)
    da1 = dz2 @ p["W2"].T
    dz1 = da1 * (z1 > 0)
    g["W1"] = feat.T @ dz1
    g["b1"] = dz1.sum(axis=0)
    dfeat = dz1 @ p["W1"].T
    nj = hj.size // B
    dhj = dfeat[:, :nj].reshape(hj.shape)
    dhm = dfeat[:, nj:].reshape(hm.shape)
    dzj = dhj * (zj > 0)
    dzm = dhm * (zm > 0)
    g["job_W"] = np.einsum("bjt,bjh->jth", Xj, dzj)
    g["job_b"] = dzj.sum(axis=0)
    g["mach_W"] = np.einsum("bmj,bmh->mjh", Xm, dzm)
    g["mach_b"] = dzm.sum(axis=0)
    return g


def forward(model: Model, durations) -> np.ndarray:
    """Predicted (normalized) starts for one duration array or a batch of them."""
    X = np.asarray(durations, dtype=float)
    single = X.ndim <= 2 and X.size == model.out_dim
    Xb = X.reshape(1, -1) if single else X.reshape(X.shape[0], -1)
    if Xb.shape[1] != model.out_dim:
        raise ValueError(f"expected {model.out_dim} durations per sample, got {Xb.shape[1]}")
    y, _ = _forward(model, Xb)
    return y[0] if single else y


# ---------------------------------------------------------------------------
# loss


@dataclass(frozen=True)
class _Structure:
    """Index arrays for the constraints of a fixed (J, T, routing)."""

    prec_a: np.ndarray
    prec_b: np.ndarray
    pair_a: np.ndarray
    pair_b: np.ndarray
    pair_machine: np.ndarray
    machines: int

    @classmethod
    def of(cls, jobs: int, machines: int, machine_index: np.ndarray) -> "_Structure":
        pa = [j * machines + t for j in range(jobs) for t in range(machines - 1)]
        pairs = [
            (machine_index[m, i], machine_index[m, k], m)
            for m in range(machines)
            for i in range(jobs)
            for k in range(i + 1, jobs)
        ]
        arr = np.array(pairs, dtype=np.int64).reshape(-1, 3)
        return cls(np.array(pa, dtype=np.int64), np.array(pa, dtype=np.int64) + 1,
                   arr[:, 0], arr[:, 1], arr[:, 2], machines)


def _violations(S: _Structure, s: np.ndarray, d: np.ndarray):
    """Relaxed violation degrees and their subgradients for flat batches."""
    vp_raw = s[:, S.prec_a] + d[:, S.prec_a] - s[:, S.prec_b]
    vp = np.maximum(vp_raw, 0.0)
    sa, sb = s[:, S.pair_a], s[:, S.pair_b]
    da, db = d[:, S.pair_a], d[:, S.pair_b]
    left = np.maximum(sa + da - sb, 0.0)
    right = np.maximum(sb + db - sa, 0.0)
    use_left = left <= right
    active = (da > 0) & (db > 0)
    vo = np.where(active, np.where(use_left, left, right), 0.0)
    # d(left)/d(sa) = +1, d(right)/d(sa) = -1 where the hinge is open
    dleft = (sa + da - sb > 0) & use_left & active
    dright = (sb + db - sa > 0) & ~use_left & active
    sign_a = dleft.astype(float) - dright.astype(float)
    return vp, vp_raw > 0, vo, sign_a


def _loss_and_grad(S: _Structure, pred, target, d, mult: Multipliers, lagrangian: bool = True):
    B, n = pred.shape
    diff = pred - target
    mse = (diff ** 2).mean(axis=1)
    grad = 2.0 * diff / n
    if not lagrangian:
        return mse, grad, None, None
    vp, open_p, vo, sign_a = _violations(S, pred, d)
    lam_o = mult.overlap[S.pair_machine]
    loss = mse + mult.precedence * vp.sum(axis=1) + (lam_o * vo).sum(axis=1)
    gp = mult.precedence * open_p.astype(float)
    np.add.at(grad, (slice(None), S.prec_a), gp)
    np.add.at(grad, (slice(None), S.prec_b), -gp)
    go = lam_o * sign_a
    np.add.at(grad, (slice(None), S.pair_a), go)
    np.add.at(grad, (slice(None), S.pair_b), -go)
    prec_group = vp.sum(axis=1)
    mach_group = np.zeros((B, S.machines))
    np.add.at(mach_group, (slice(None), S.pair_machine), vo)
    return loss, grad, prec_group, mach_group


def lagrangian_loss(pred, target, inst: JssInstance, mult: Multipliers) -> Tuple[float, np.ndarray]:
    """MSE plus multiplier-weighted relaxed violation degrees, and its gradient.

    The gradient is with respect to ``pred``; at a hinge kink the closed
    side (zero) is used, and a tied overlap min follows its first branch.
    """
    if mult.precedence < 0 or (np.asarray(mult.overlap) < 0).any():
        raise ValueError("Lagrange multipliers must be nonnegative")
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.size != inst.n_tasks or target.size != inst.n_tasks:
        raise ValueError("prediction/target size does not match the instance")
    S = _Structure.of(inst.jobs, inst.machines, _machine_index(inst.jobs, inst.machines, inst.machine))
    loss, grad, _, _ = _loss_and_grad(
        S, pred.reshape(1, -1), target.reshape(1, -1),
        inst.duration.reshape(1, -1).astype(float), mult,
    )
    return float(loss[0]), grad[0].reshape(pred.shape)


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class Normalizer:
    """Maps raw durations and starts to the units the network works in.

    Durations and starts are divided by ``scale``. The network input is then
    optionally standardized per feature with ``mean`` and ``std``. Violation
    terms always use the scaled, unstandardized durations.
    """

    scale: float
    mean: Optional[np.ndarray] = None
    std: Optional[np.ndarray] = None

    @classmethod
    def fit(cls, ds, standardize: bool = False, scale: Optional[float] = None) -> "Normalizer":
        scale = float(scale or max(makespan(e.instance, e.solution) for e in ds.entries))
        if not standardize:
            return cls(scale)
        X = np.stack([e.instance.duration.reshape(-1) for e in ds.entries]) / scale
        std = X.std(axis=0)
        return cls(scale, X.mean(axis=0), np.where(std > 0, std, 1.0))

    def network_input(self, scaled_durations: np.ndarray) -> np.ndarray:
        if self.mean is None:
            return scaled_durations
        return (scaled_durations - self.mean) / self.std

    def to_json(self):
        return {
            "scale": self.scale,
            "mean": None if self.mean is None else self.mean.tolist(),
            "std": None if self.std is None else self.std.tolist(),
        }

    @classmethod
    def from_json(cls, obj) -> "Normalizer":
        mean = None if obj["mean"] is None else np.array(obj["mean"], dtype=float)
        std = None if obj["std"] is None else np.array(obj["std"], dtype=float)
        return cls(float(obj["scale"]), mean, std)


def _arrays(model: Model, ds, norm: Normalizer):
    first = ds.entries[0].instance
    for e in ds.entries:
        if e.instance.shape != (model.jobs, model.machines):
            raise ValueError("dataset shape does not match the model")
        if not np.array_equal(e.instance.machine, first.machine):
            raise ValueError("dataset mixes machine routings")
    D = np.stack([e.instance.duration.reshape(-1) for e in ds.entries]).astype(float) / norm.scale
    Y = np.stack([e.solution.start.reshape(-1) for e in ds.entries]).astype(float) / norm.scale
    return norm.network_input(D), D, Y


class _Adam:
    def __init__(self, params, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


class _SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params, grads):
        for k, g in grads.items():
            params[k] -= self.lr * g


def train(model: Model, ds, cfg: TrainConfig = TrainConfig(), mult: Optional[Multipliers] = None):
    """Alternate primal epochs at fixed multipliers with projected dual ascent.

    After every epoch each multiplier grows by the dual learning rate times
    the mean violation of its group over that epoch, then is clipped at 0.
    Returns a trained copy of the model (carrying its normalizer) and the
    history.
    """
    if len(ds.entries) == 0:
        raise ValueError("empty dataset")
    model = model.copy()
    norm = Normalizer.fit(ds, cfg.standardize_inputs, cfg.normalization)
    model.normalizer = norm
    X, D, Y = _arrays(model, ds, norm)
    S = _Structure.of(model.jobs, model.machines, model.machine_index)
    mult = mult or Multipliers.zeros(model.machines)
    mult = Multipliers(mult.precedence, mult.overlap.copy())
    rng = np.random.default_rng(cfg.seed)
    if cfg.optimizer == "sgd":
        opt = _SGD(cfg.learning_rate)
    elif cfg.optimizer == "adam":
        opt = _Adam(model.params, cfg.learning_rate)
    else:
        raise ValueError(f"unknown optimizer {cfg.optimizer!r}")
    hist = History(meta={
        "normalizer": norm.to_json(),
        "multiplier_groups": "precedence: 1, overlap: per machine",
        "optimizer": cfg.optimizer,
        "lagrangian": cfg.lagrangian,
    })
    N = X.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(N)
        loss_sum = mse_sum = 0.0
        prec_sum = 0.0
        mach_sum = np.zeros(model.machines)
        for lo in range(0, N, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            pred, cache = _forward(model, X[idx])
            loss, dpred, pg, mg = _loss_and_grad(S, pred, Y[idx], D[idx], mult, cfg.lagrangian)
            opt.step(model.params, _backward(model, cache, dpred / len(idx)))
            loss_sum += float(loss.sum())
            mse_sum += float(((pred - Y[idx]) ** 2).mean(axis=1).sum())
            if pg is not None:
                prec_sum += float(pg.sum())
                mach_sum += mg.sum(axis=0)
        mean_prec, mean_mach = prec_sum / N, mach_sum / N
        if cfg.lagrangian:
            mult = Multipliers(
                max(0.0, mult.precedence + cfg.dual_learning_rate * mean_prec),
                np.maximum(0.0, mult.overlap + cfg.dual_learning_rate * mean_mach),
            )
        hist.loss.append(loss_sum / N)
        hist.mse.append(mse_sum / N)
        hist.violation.append(mean_prec + float(mean_mach.sum()))
        hist.lambda_precedence.append(mult.precedence)
        hist.lambda_overlap.append(mult.overlap.tolist())
    hist.meta["multipliers"] = {"precedence": mult.precedence, "overlap": mult.overlap.tolist()}
    return model, hist


# ---------------------------------------------------------------------------
# evaluation


def predict_starts(model: Model, inst: JssInstance, normalizer: Optional[Normalizer] = None) -> np.ndarray:
    """Start predictions for one instance in raw time units, shaped (J, T)."""
    norm = normalizer or model.normalizer or Normalizer(1.0)
    x = norm.network_input(inst.duration.reshape(-1) / norm.scale)
    return (forward(model, x) * norm.scale).reshape(inst.shape)


def evaluate(model: Model, ds, normalizer: Optional[Normalizer] = None) -> Metrics:
    """Mean prediction error, constraint violation and optimality gap (percent).

    The first two are L1 distances expressed as a percentage of the
    instance's mean task duration. Prediction error compares the projected
    prediction with the target, and constraint violation compares the raw
    prediction with its projection. The gap is the relative makespan
    difference between the projected prediction and the target.
    """
    rows = []
    for e in ds.entries:
        if e.instance.shape != (model.jobs, model.machines):
            raise ValueError("dataset shape does not match the model")
        rows.append(score_prediction(e.instance, predict_starts(model, e.instance, normalizer), e.solution))
    err, viol, gap = np.mean(rows, axis=0) if rows else (0.0, 0.0, 0.0)
    return Metrics(float(err), float(viol), float(gap), len(rows))


def score_prediction(inst: JssInstance, yhat, target: Schedule) -> Tuple[float, float, float]:
    """(prediction error, constraint violation, optimality gap) of one raw prediction."""
    yhat = np.asarray(yhat, dtype=float).reshape(inst.shape)
    proj = project_feasible(inst, yhat)
    avg = float(inst.duration.mean())
    target_ms = makespan(inst, target)
    return (
        float(np.abs(proj.start - target.start).sum() / avg * 100.0),
        float(np.abs(proj.start - yhat).sum() / avg * 100.0),
        float((makespan(inst, proj) - target_ms) / target_ms * 100.0),
    )


# ---------------------------------------------------------------------------
# checkpoints


def model_to_json(model: Model) -> str:
    return json.dumps({
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "jobs": model.jobs,
        "machines": model.machines,
        "widths": {"job": 2 * model.machines, "machine": 2 * model.jobs,
                   "shared": [2 * model.out_dim] * 2, "output": model.out_dim},
        "normalizer": None if model.normalizer is None else model.normalizer.to_json(),
        "machine_index": model.machine_index.tolist(),
        "params": {k: {"shape": list(model.params[k].shape),
                       "data": model.params[k].reshape(-1).tolist()} for k in _PARAM_ORDER},
    })


def model_from_json(text: str) -> Model:
    obj = json.loads(text)
    if obj.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not a model checkpoint")
    if obj.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {obj.get('version')}")
    params = {
        k: np.array(v["data"], dtype=float).reshape(v["shape"]) for k, v in obj["params"].items()
    }
    norm = None if obj.get("normalizer") is None else Normalizer.from_json(obj["normalizer"])
    return Model(obj["jobs"], obj["machines"], np.array(obj["machine_index"], dtype=np.int64), params, norm)


def save_model(model: Model, path) -> None:
    Path(path).write_text(model_to_json(model), encoding="utf-8")


def load_model(path) -> Model:
    return model_from_json(Path(path).read_text(encoding="utf-8"))
