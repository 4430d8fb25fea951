"""Small single-layer LSTM regressor with hand-written backpropagation.

Everything is float64 numpy. Gates are stored fused in the order
``input, forget, cell, output`` so one matrix product per timestep covers all
four. The network maps a window of ``lookback`` scalar inputs to one scalar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

GATES = ("input", "forget", "cell", "output")
PARAM_NAMES = ("w_in", "w_rec", "bias", "w_head", "b_head")


class TrainingError(FloatingPointError):
    """Raised when a training step produces a non-finite loss or gradient."""


@dataclass
class TrainConfig:
    eta: int = 500
    batch_size: int = 64
    epochs: int = 5
    learning_rate: float = 0.01
    grad_clip_norm: float = 1.0
    loss_multiplier: float = 10.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.loss_multiplier < 1:
            raise ValueError(f"loss_multiplier must be >= 1, got {self.loss_multiplier}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.grad_clip_norm <= 0:
            raise ValueError(f"grad_clip_norm must be > 0, got {self.grad_clip_norm}")


@dataclass
class LstmParams:
    """Weights of the LSTM layer and its linear head.

    ``w_in`` has shape (4H,) because the input is a scalar per step, ``w_rec``
    is (H, 4H), ``bias`` is (4H,), ``w_head`` is (H,) and ``b_head`` is a 0-d
    array so that it can be updated in place like the others.
    """

    hidden_size: int
    lookback: int
    w_in: np.ndarray
    w_rec: np.ndarray
    bias: np.ndarray
    w_head: np.ndarray
    b_head: np.ndarray = field(default_factory=lambda: np.array(0.0))

    def __post_init__(self):
        H = self.hidden_size
        if H < 1 or self.lookback < 1:
            raise ValueError("hidden_size and lookback must be >= 1")
        expected = {"w_in": (4 * H,), "w_rec": (H, 4 * H), "bias": (4 * H,),
                    "w_head": (H,), "b_head": ()}
        for name, shape in expected.items():
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            setattr(self, name, arr)

    @classmethod
    def initialize(cls, hidden_size: int, lookback: int, rng=None, scale: float = 0.08):
        if rng is None or isinstance(rng, (int, np.integer)):
            rng = np.random.default_rng(rng)
        H = hidden_size
        params = cls(
            hidden_size=H,
            lookback=lookback,
            w_in=rng.uniform(-scale, scale, 4 * H),
            w_rec=rng.uniform(-scale, scale, (H, 4 * H)),
            bias=rng.uniform(-scale, scale, 4 * H),
            w_head=rng.uniform(-scale, scale, H),
            b_head=np.array(rng.uniform(-scale, scale)),
        )
        params.bias[H:2 * H] = 1.0
        return params

    @classmethod
    def zeros(cls, hidden_size: int, lookback: int):
        H = hidden_size
        return cls(H, lookback, np.zeros(4 * H), np.zeros((H, 4 * H)),
                   np.zeros(4 * H), np.zeros(H), np.array(0.0))

    def arrays(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def gate(self, name: str) -> dict:
        """Views of the input weights, recurrent weights and bias of one gate."""
        k = GATES.index(name)
        sl = slice(k * self.hidden_size, (k + 1) * self.hidden_size)
        return {"w_in": self.w_in[sl], "w_rec": self.w_rec[:, sl], "bias": self.bias[sl]}

    def copy(self) -> "LstmParams":
        return LstmParams(self.hidden_size, self.lookback,
                          *(getattr(self, n).copy() for n in PARAM_NAMES))

    def flat(self) -> np.ndarray:
        return np.concatenate([getattr(self, n).ravel() for n in PARAM_NAMES])

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays().values())


def _sigmoid(x):
    # tanh form avoids overflow warnings for large |x|
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


@dataclass
class ForwardCache:
    x: np.ndarray
    gates: list
    cells: list
    hiddens: list


def lstm_forward(params: LstmParams, x) -> tuple:
    """Run the LSTM over one window (shape (L,)) or a batch (shape (B, L)).

    Returns ``(prediction, cache)``; the prediction is a float for a single
    window and an array of shape (B,) for a batch.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.lookback:
        raise ValueError(f"expected input of length {params.lookback}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite value in LSTM input")

    H = params.hidden_size
    B, L = x.shape
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    gates, cells, hiddens = [], [c], [h]
    for t in range(L):
        z = h @ params.w_rec
        z += x[:, t, None] * params.w_in
        z += params.bias
        a = _sigmoid(z)
        a[:, 2 * H:3 * H] = np.tanh(z[:, 2 * H:3 * H])
        c = a[:, H:2 * H] * c + a[:, :H] * a[:, 2 * H:3 * H]
        h = a[:, 3 * H:] * np.tanh(c)
        gates.append(a)
        cells.append(c)
        hiddens.append(h)
    pred = h @ params.w_head + params.b_head
    cache = ForwardCache(x, gates, cells, hiddens)
    return (float(pred[0]) if single else pred), cache


def lstm_backward(params: LstmParams, cache: ForwardCache, dpred) -> dict:
    """Backpropagate d(loss)/d(prediction) through time; returns a gradient per array."""
    H = params.hidden_size
    dpred = np.atleast_1d(np.asarray(dpred, dtype=np.float64))
    x = cache.x
    L = x.shape[1]

    grads = {
        "w_head": cache.hiddens[-1].T @ dpred,
        "b_head": np.array(dpred.sum()),
        "w_in": np.zeros_like(params.w_in),
        "w_rec": np.zeros_like(params.w_rec),
        "bias": np.zeros_like(params.bias),
    }
    dh = np.outer(dpred, params.w_head)
    dc = np.zeros_like(dh)
    dz = np.empty((x.shape[0], 4 * H))
    for t in reversed(range(L)):
        a = cache.gates[t]
        i, f, g, o = a[:, :H], a[:, H:2 * H], a[:, 2 * H:3 * H], a[:, 3 * H:]
        c_prev = cache.cells[t]
        tc = np.tanh(cache.cells[t + 1])
        dc = dc + dh * o * (1.0 - tc * tc)
        dz[:, :H] = dc * g * i * (1.0 - i)
        dz[:, H:2 * H] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * H:3 * H] = dc * i * (1.0 - g * g)
        dz[:, 3 * H:] = dh * tc * o * (1.0 - o)
        grads["w_in"] += x[:, t] @ dz
        grads["w_rec"] += cache.hiddens[t].T @ dz
        grads["bias"] += dz.sum(axis=0)
        dc = dc * f
        dh = dz @ params.w_rec.T
    return grads


def asymmetric_loss(pred, target, multiplier: float):
    """Squared error, scaled by ``multiplier`` where the prediction falls short of the target."""
    pred = np.asarray(pred, dtype=np.float64)
    diff = np.asarray(target, dtype=np.float64) - pred
    weight = np.where(diff > 0, multiplier, 1.0)
    loss = weight * diff * diff
    return float(loss) if loss.ndim == 0 else loss


def asymmetric_loss_grad(pred, target, multiplier: float) -> np.ndarray:
    """Gradient of the batch-mean asymmetric loss with respect to each prediction."""
    pred = np.asarray(pred, dtype=np.float64)
    diff = np.asarray(target, dtype=np.float64) - pred
    weight = np.where(diff > 0, multiplier, 1.0)
    return -2.0 * weight * diff / pred.size


def batch_loss_and_grads(params: LstmParams, x, y, multiplier: float) -> tuple:
    pred, cache = lstm_forward(params, np.atleast_2d(x))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    loss = float(np.mean(asymmetric_loss(pred, y, multiplier)))
    grads = lstm_backward(params, cache, asymmetric_loss_grad(pred, y, multiplier))
    return loss, grads


def batch_slices(n_samples: int, batch_size: int) -> Iterator[slice]:
    for start in range(0, n_samples, batch_size):
        yield slice(start, min(start + batch_size, n_samples))


def clip_by_global_norm(grads: dict, max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def lstm_train_epochs(params: LstmParams, x, y, cfg: TrainConfig,
                      rng: Optional[np.random.Generator] = None) -> list:
    """Train ``params`` in place for ``cfg.epochs`` shuffled passes over (x, y).

    ``x`` has shape (N, L) and ``y`` shape (N,). Pass a persistent ``rng`` to
    continue one shuffle stream across calls; otherwise a generator seeded with
    ``cfg.rng_seed`` is used. Returns the mean batch loss of each epoch.

    A step whose loss or gradient is non-finite raises ``TrainingError``
    before any update of that step is applied.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
        y = np.atleast_1d(y)
    if len(x) == 0:
        raise ValueError("no training samples")
    if len(x) != len(y):
        raise ValueError(f"{len(x)} inputs but {len(y)} targets")
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)

    arrays = params.arrays()
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(x))
        losses = []
        for sl in batch_slices(len(x), cfg.batch_size):
            idx = order[sl]
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grads = batch_loss_and_grads(params, x[idx], y[idx], cfg.loss_multiplier)
                norm = clip_by_global_norm(grads, cfg.grad_clip_norm)
            if not (math.isfinite(loss) and math.isfinite(norm)):
                raise TrainingError(
                    f"non-finite training step (epoch {epoch}, loss={loss}, grad norm={norm})")
            for name, g in grads.items():
                arrays[name] -= cfg.learning_rate * g
            losses.append(loss)
        history.append(float(np.mean(losses)))
    return history
