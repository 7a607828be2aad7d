"""Branch-trunk network with hand-rolled backprop and Adam.

Prediction for boundary encoding b and query point x:

    value(x) = sum_i branch_i(b) * trunk_i(x) + output_bias

Hidden activations are tanh; the branch head is linear, the trunk head tanh.
Weight matrices are stored row-major as (out, in), matching the solver's
weight-file layout.
"""
from __future__ import annotations

import numpy as np


class MLP:
    def __init__(self, dims: list[int], acts: list[str], rng: np.random.Generator):
        assert len(acts) == len(dims) - 1
        self.weights = []
        self.biases = []
        self.acts = list(acts)
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            std = np.sqrt(2.0 / (fan_in + fan_out))
            self.weights.append(rng.normal(0.0, std, size=(fan_out, fan_in)))
            self.biases.append(np.zeros(fan_out))

    def forward(self, x: np.ndarray, want_cache: bool = False):
        h = x
        cache = [h]
        for w, b, act in zip(self.weights, self.biases, self.acts):
            h = h @ w.T + b
            if act == "tanh":
                h = np.tanh(h)
            cache.append(h)
        return (h, cache) if want_cache else h

    def backward(self, cache, grad_out: np.ndarray):
        """Accumulate parameter grads; returns grad w.r.t. the input."""
        g = grad_out
        self.grad_w = [None] * len(self.weights)
        self.grad_b = [None] * len(self.weights)
        for idx in range(len(self.weights) - 1, -1, -1):
            h_out = cache[idx + 1]
            h_in = cache[idx]
            if self.acts[idx] == "tanh":
                g = g * (1.0 - h_out * h_out)
            self.grad_w[idx] = g.T @ h_in
            self.grad_b[idx] = g.sum(axis=0)
            g = g @ self.weights[idx]
        return g

    def params(self):
        return self.weights + self.biases

    def grads(self):
        return self.grad_w + self.grad_b


class BranchTrunk:
    def __init__(self, m: int, p: int, width: int, depth: int, seed: int):
        rng = np.random.default_rng(seed)
        hidden = [width] * depth
        self.m, self.p = m, p
        self.branch = MLP([m] + hidden + [p], ["tanh"] * depth + ["id"], rng)
        self.trunk = MLP([2] + hidden + [p], ["tanh"] * depth + ["tanh"], rng)
        # keep the p-term dot product O(1) at init so the head does not have
        # to collapse before anything else can train
        self.branch.weights[-1] /= np.sqrt(p)
        self.output_bias = 0.0

    def predict(self, encodings: np.ndarray, points: np.ndarray, owner: np.ndarray):
        """encodings (nb, m); points (np, 2); owner maps point -> encoding row."""
        coeff = self.branch.forward(encodings)
        feats = self.trunk.forward(points)
        return (feats * coeff[owner]).sum(axis=1) + self.output_bias

    def loss_and_grads(self, encodings, points, owner, targets):
        coeff, bcache = self.branch.forward(encodings, want_cache=True)
        feats, tcache = self.trunk.forward(points, want_cache=True)
        pred = (feats * coeff[owner]).sum(axis=1) + self.output_bias
        resid = pred - targets
        n = len(targets)
        loss = float(resid @ resid) / n
        dpred = (2.0 / n) * resid
        d_feats = dpred[:, None] * coeff[owner]
        d_coeff = np.zeros_like(coeff)
        np.add.at(d_coeff, owner, dpred[:, None] * feats)
        self.d_bias = float(dpred.sum())
        self.trunk.backward(tcache, d_feats)
        self.branch.backward(bcache, d_coeff)
        return loss

    def params(self):
        return self.branch.params() + self.trunk.params()

    def grads(self):
        return self.branch.grads() + self.trunk.grads()


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0
        self.m_bias = 0.0
        self.v_bias = 0.0

    def step(self, params, grads, model: BranchTrunk):
        self.t += 1
        b1t = 1.0 - self.b1**self.t
        b2t = 1.0 - self.b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)
        g = model.d_bias
        self.m_bias = self.b1 * self.m_bias + (1 - self.b1) * g
        self.v_bias = self.b2 * self.v_bias + (1 - self.b2) * g * g
        model.output_bias -= self.lr * (self.m_bias / b1t) / (
            np.sqrt(self.v_bias / b2t) + self.eps
        )
