"""Minimal feed-forward scoring network with hand-rolled backprop and Adam.

Parameters live in one flat vector with per-layer views, which keeps the
optimizer to a handful of vectorized array ops. The default stack is six
256-wide then nine 128-wide LeakyReLU hidden layers feeding a scalar score.
"""

from __future__ import annotations

import base64

import numpy as np

DEFAULT_HIDDEN = (256,) * 6 + (128,) * 9
LEAKY_SLOPE = 0.02


class DeepGravityNet:
    """MLP scoring one origin-destination feature row to a real-valued s(i,j)."""

    def __init__(self, input_dim: int, hidden=DEFAULT_HIDDEN, slope: float = LEAKY_SLOPE,
                 seed: int = 0, dtype=np.float32):
        self.input_dim = int(input_dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.slope = float(slope)
        self.dtype = np.dtype(dtype)
        dims = [self.input_dim] + list(self.hidden) + [1]
        self.dims = dims

        total = sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))
        self.theta = np.empty(total, dtype=self.dtype)
        self._views = []
        off = 0
        for a, b in zip(dims[:-1], dims[1:]):
            w = self.theta[off:off + a * b].reshape(a, b)
            off += a * b
            bias = self.theta[off:off + b]
            off += b
            self._views.append((w, bias))

        rng = np.random.default_rng(seed)
        for w, bias in self._views:
            fan_in = w.shape[0]
            w[:] = (rng.standard_normal(w.shape) * np.sqrt(2.0 / fan_in)).astype(self.dtype)
            bias[:] = 0

    @property
    def n_params(self) -> int:
        return self.theta.size

    def forward_acts(self, x: np.ndarray) -> list:
        """Layer activations for a (rows, input_dim) matrix; last one holds scores."""
        h = np.asarray(x, dtype=self.dtype)
        if h.ndim == 1:
            h = h[None, :]
        acts = [h]
        last = len(self._views) - 1
        for li, (w, b) in enumerate(self._views):
            h = h @ w + b
            if li != last:
                h = np.where(h > 0, h, self.dtype.type(self.slope) * h)
            acts.append(h)
        return acts

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Scores for a (rows, input_dim) matrix."""
        return self.forward_acts(x)[-1][:, 0]

    def backward(self, acts: list, dscore: np.ndarray, grad_out: np.ndarray):
        """Accumulate the gradient of sum(dscore * score) into the flat grad_out."""
        last = len(self._views) - 1
        g = np.asarray(dscore, dtype=self.dtype)[:, None]
        off = self.theta.size
        for li in range(last, -1, -1):
            w, b = self._views[li]
            a, bsz = w.shape
            if li != last:
                post = acts[li + 1]
                g = g * np.where(post > 0, self.dtype.type(1.0), self.dtype.type(self.slope))
            gb = g.sum(axis=0)
            gw = acts[li].T @ g
            off -= bsz
            grad_out[off:off + bsz] += gb
            off -= a * bsz
            grad_out[off:off + a * bsz] += gw.ravel()
            if li > 0:
                g = g @ w.T

    # --- checkpointing ---

    def state_dict(self) -> dict:
        return {
            "v": 1,
            "input_dim": self.input_dim,
            "hidden": list(self.hidden),
            "slope": self.slope,
            "dtype": self.dtype.name,
            "theta": base64.b64encode(
                np.ascontiguousarray(self.theta).tobytes()).decode("ascii"),
        }

    @classmethod
    def from_state_dict(cls, doc: dict) -> "DeepGravityNet":
        net = cls(doc["input_dim"], hidden=tuple(doc["hidden"]), slope=doc["slope"],
                  seed=0, dtype=np.dtype(doc["dtype"]))
        raw = base64.b64decode(doc["theta"])
        net.theta[:] = np.frombuffer(raw, dtype=net.dtype)
        return net


class Adam:
    """Adam with bias correction over one flat parameter vector."""

    def __init__(self, n_params: int, lr: float = 5e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, dtype=np.float32):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = np.zeros(n_params, dtype=dtype)
        self.v = np.zeros(n_params, dtype=dtype)
        self._sq = np.empty(n_params, dtype=dtype)
        self._upd = np.empty(n_params, dtype=dtype)

    def step(self, theta: np.ndarray, grad: np.ndarray):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        np.multiply(self.m, b1, out=self.m)
        self.m += (1 - b1) * grad
        np.multiply(grad, grad, out=self._sq)
        np.multiply(self.v, b2, out=self.v)
        self.v += (1 - b2) * self._sq
        lr_t = self.lr * np.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t)
        np.sqrt(self.v, out=self._upd)
        self._upd += self.eps
        np.divide(self.m, self._upd, out=self._upd)
        theta -= theta.dtype.type(lr_t) * self._upd


def softmax(scores: np.ndarray) -> np.ndarray:
    """Numerically stable softmax of a 1-d score vector."""
    s = np.asarray(scores, dtype=float)
    e = np.exp(s - s.max())
    return e / e.sum()


def softmax_allocate(scores: np.ndarray, total: float) -> np.ndarray:
    """Distribute `total` across candidates proportionally to exp(score)."""
    return total * softmax(scores)
