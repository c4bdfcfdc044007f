"""Per-node regression models: a one-hidden-layer sigmoid MLP.

Each model maps a point (normalised to the node's frame) to an ordinal
position, a child index for inner nodes or a block index for leaves. The
output is a single linear unit scaled to ``[0, C-1]``.

By default the network is constrained to be monotone in each input
coordinate (output weights non-negative, input weights sign-locked per
axis). The prediction range over a rectangle is then spanned by its
corners, which is what makes corner-based traversal complete.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from stix.core import TrainingDivergedError
from stix.geometry import Mbr


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 500
    batch_size: int = 8
    # larger populations are subsampled for training; bounds still use all points
    max_samples: int | None = 10_000
    seed: int = 0
    monotone: bool = True


@dataclass(frozen=True)
class ErrorBounds:
    """Worst over- (``lo``) and under-prediction (``hi``) in position units."""

    lo: int = 0
    hi: int = 0


@dataclass(eq=False)
class Mlp:
    w_hidden: np.ndarray  # (2, h)
    b_hidden: np.ndarray  # (h,)
    w_out: np.ndarray  # (h,)
    b_out: float
    n_outputs: int
    frame: Mbr
    initial_loss: float = math.nan
    final_loss: float = math.nan
    signs: tuple[float, float] = field(default=(1.0, 1.0))

    @property
    def hidden(self) -> int:
        return len(self.b_hidden)

    def normalize(self, xy: np.ndarray) -> np.ndarray:
        f = self.frame
        out = np.empty_like(xy, dtype=np.float64)
        for axis, (lo, hi) in enumerate(((f[0], f[2]), (f[1], f[3]))):
            span = hi - lo
            out[:, axis] = (xy[:, axis] - lo) / span if span > 0 else 0.0
        return out

    def raw(self, xy) -> np.ndarray:
        u = self.normalize(np.asarray(xy, dtype=np.float64).reshape(-1, 2))
        a = _sigmoid(u @ self.w_hidden + self.b_hidden)
        return a @ self.w_out + self.b_out

    def predict_many(self, xy) -> np.ndarray:
        """Real-valued positions clamped to ``[0, C-1]``."""
        top = self.n_outputs - 1
        if top == 0:
            return np.zeros(len(np.asarray(xy).reshape(-1, 2)))
        return np.clip(self.raw(xy) * top, 0.0, top)

    def predict(self, p) -> float:
        return float(self.predict_many([p])[0])

    def nbytes(self) -> int:
        return self.w_hidden.nbytes + self.b_hidden.nbytes + self.w_out.nbytes + 8 * 6


def hidden_width(n_outputs: int, n_inputs: int = 2) -> int:
    return max(1, math.ceil((n_inputs + n_outputs) / 2))


def round_position(p):
    """Round half up; used for predictions and error bounds alike."""
    return np.floor(np.asarray(p) + 0.5).astype(np.int64)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500.0, 500.0)))


@numba.njit(cache=True)
def _accumulate(X, y, idx, start, end, scale, W, b, v, c, act, gW, gb, gv):
    """Add ``scale``-weighted squared-error gradients of rows idx[start:end].

    Returns (sum of squared residuals / 2, gradient of the output bias).
    """
    h = v.shape[0]
    loss = 0.0
    gc = 0.0
    for ii in range(start, end):
        i = idx[ii]
        out = c
        for k in range(h):
            z = X[i, 0] * W[0, k] + X[i, 1] * W[1, k] + b[k]
            act[k] = 1.0 / (1.0 + math.exp(-z))
            out += act[k] * v[k]
        r = out - y[i]
        loss += 0.5 * r * r
        r *= scale
        gc += r
        for k in range(h):
            gv[k] += r * act[k]
            d = r * v[k] * act[k] * (1.0 - act[k])
            gb[k] += d
            gW[0, k] += d * X[i, 0]
            gW[1, k] += d * X[i, 1]
    return loss, gc


@numba.njit(cache=True)
def _sgd(X, y, W, b, v, c, signs, lr, epochs, batch, seed, monotone):
    n = X.shape[0]
    h = v.shape[0]
    np.random.seed(seed)
    act = np.empty(h)
    gW = np.empty((2, h))
    gb = np.empty(h)
    gv = np.empty(h)
    for _ in range(epochs):
        perm = np.random.permutation(n)
        for start in range(0, n, batch):
            end = min(n, start + batch)
            gW[:] = 0.0
            gb[:] = 0.0
            gv[:] = 0.0
            _, gc = _accumulate(X, y, perm, start, end, 1.0 / (end - start), W, b, v, c[0], act, gW, gb, gv)
            c[0] -= lr * gc
            for k in range(h):
                v[k] -= lr * gv[k]
                b[k] -= lr * gb[k]
                W[0, k] -= lr * gW[0, k]
                W[1, k] -= lr * gW[1, k]
                if monotone:
                    if v[k] < 0.0:
                        v[k] = 0.0
                    if W[0, k] * signs[0] < 0.0:
                        W[0, k] = 0.0
                    if W[1, k] * signs[1] < 0.0:
                        W[1, k] = 0.0
        if not math.isfinite(c[0]):
            return
    return


def loss_and_gradients(W, b, v, c, X, y):
    """Mean half squared error of raw outputs and its analytic gradients."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = len(X)
    gW = np.zeros_like(W)
    gb = np.zeros_like(b)
    gv = np.zeros_like(v)
    act = np.empty(len(v))
    idx = np.arange(n)
    loss, gc = _accumulate(X, y, idx, 0, n, 1.0 / n, W, b, v, float(c), act, gW, gb, gv)
    return loss / n, gW, gb, gv, gc


def _mean_loss(W, b, v, c, X, y) -> float:
    out = _sigmoid(X @ W + b) @ v + c
    return float(0.5 * np.mean((out - y) ** 2))


def train(points, targets, n_outputs: int, config: TrainConfig = TrainConfig(), frame: Mbr | None = None) -> Mlp:
    """Fit a model mapping ``points`` to integer ``targets`` in ``[0, n_outputs)``.

    Deterministic for a fixed ``config.seed``. Raises
    :class:`TrainingDivergedError` if the loss goes non-finite twice (the
    retry uses a tenth of the learning rate).
    """
    if n_outputs < 1:
        raise ValueError("a model needs at least one output position")
    xy = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    t = np.asarray(targets, dtype=np.float64)
    if len(xy) == 0:
        raise ValueError("cannot train on zero samples")
    if len(t) != len(xy):
        raise ValueError("points and targets differ in length")
    if t.min() < 0 or t.max() >= n_outputs:
        raise ValueError(f"targets must lie in [0, {n_outputs})")
    if frame is None:
        frame = Mbr.of_points(xy)

    rng = np.random.default_rng(config.seed)
    h = hidden_width(n_outputs)
    W = rng.uniform(-0.5, 0.5, size=(2, h))
    b = rng.uniform(-0.5, 0.5, size=h)
    v = rng.uniform(-0.5, 0.5, size=h)
    c = float(rng.uniform(-0.5, 0.5))
    model = Mlp(W, b, v, c, n_outputs, Mbr(*frame))
    if n_outputs == 1:
        model.initial_loss = model.final_loss = 0.0
        return model

    if config.max_samples is not None and len(xy) > config.max_samples:
        keep = np.sort(rng.choice(len(xy), size=config.max_samples, replace=False))
        xy, t = xy[keep], t[keep]
    X = np.ascontiguousarray(model.normalize(xy))
    y = t / (n_outputs - 1)

    signs = np.ones(2)
    if config.monotone:
        for axis in (0, 1):
            if np.std(X[:, axis]) > 0 and np.cov(X[:, axis], y)[0, 1] < 0:
                signs[axis] = -1.0
        W = np.abs(W) * signs[:, None]
        v = np.abs(v)

    initial = _mean_loss(W, b, v, c, X, y)
    lr = config.learning_rate
    for attempt in range(2):
        W1, b1, v1, c1 = W.copy(), b.copy(), v.copy(), np.array([c])
        _sgd(X, y, W1, b1, v1, c1, signs, lr, config.epochs, max(1, config.batch_size), config.seed, config.monotone)
        final = _mean_loss(W1, b1, v1, c1[0], X, y)
        if math.isfinite(final) and np.isfinite(W1).all() and np.isfinite(v1).all():
            break
        lr /= 10.0
    else:
        raise TrainingDivergedError(
            f"training diverged at learning rates {config.learning_rate} and {lr * 10}: "
            f"{len(X)} samples, {n_outputs} outputs"
        )
    return Mlp(W1, b1, v1, float(c1[0]), n_outputs, Mbr(*frame), initial, final, (float(signs[0]), float(signs[1])))


def compute_error_bounds(model: Mlp, points, targets) -> ErrorBounds:
    """Tightest bounds with ``round(pred) - lo <= target <= round(pred) + hi``."""
    t = np.asarray(targets, dtype=np.int64)
    if len(t) == 0:
        return ErrorBounds()
    pred = round_position(model.predict_many(points))
    diff = pred - t
    return ErrorBounds(int(max(0, diff.max())), int(max(0, -diff.min())))
