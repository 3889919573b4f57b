"""Small tanh MLPs with hand-written reverse mode, plus Adam."""
from __future__ import annotations

import numpy as np


class MLP:
    """Fully connected net: tanh on hidden layers, linear output.

    Parameters live in ``self.params`` as [W1, b1, W2, b2, ...] with
    ``W`` of shape (fan_in, fan_out) so a batch ``X`` of shape (B, fan_in)
    maps as ``X @ W + b``.
    """

    def __init__(self, sizes, rng, out_scale: float = 1.0):
        self.sizes = tuple(int(s) for s in sizes)
        self.params = []
        for i, (fi, fo) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            lim = 1.0 / np.sqrt(fi)
            if i == len(self.sizes) - 2:
                lim *= out_scale
            self.params.append(rng.uniform(-lim, lim, (fi, fo)))
            self.params.append(rng.uniform(-lim, lim, fo))

    @property
    def n_layers(self) -> int:
        return len(self.params) // 2

    def forward(self, X):
        acts = [X]
        h = X
        for i in range(self.n_layers):
            z = h @ self.params[2 * i] + self.params[2 * i + 1]
            h = np.tanh(z) if i < self.n_layers - 1 else z
            acts.append(h)
        return h, acts

    def __call__(self, X):
        return self.forward(X)[0]

    def backward(self, acts, dout):
        """Gradients of sum(dout * output) w.r.t. params and input."""
        grads = [None] * len(self.params)
        d = dout
        for i in reversed(range(self.n_layers)):
            if i < self.n_layers - 1:
                d = d * (1.0 - acts[i + 1] ** 2)
            grads[2 * i] = acts[i].T @ d
            grads[2 * i + 1] = d.sum(axis=0)
            d = d @ self.params[2 * i].T
        return grads, d

    def copy(self) -> "MLP":
        other = MLP.__new__(MLP)
        other.sizes = self.sizes
        other.params = [p.copy() for p in self.params]
        return other

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat):
        i = 0
        for p in self.params:
            p[...] = flat[i:i + p.size].reshape(p.shape)
            i += p.size


class Adam:
    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_dict(self) -> dict:
        return {"t": self.t, "m": [a.tolist() for a in self.m], "v": [a.tolist() for a in self.v]}

    def load_state_dict(self, d):
        self.t = int(d["t"])
        for dst, src in zip(self.m, d["m"]):
            dst[...] = np.asarray(src)
        for dst, src in zip(self.v, d["v"]):
            dst[...] = np.asarray(src)
