"""Small dense ELU networks trained by plain (momentum) SGD on squared error."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np

FORMAT_VERSION = 1


class TrainingError(ArithmeticError):
    pass


def elu(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0.0, z, np.expm1(np.minimum(z, 0.0)))


def elu_grad(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0.0, 1.0, np.exp(np.minimum(z, 0.0)))


class Mlp:
    """Fully connected network: affine + ELU per hidden layer, affine output.

    Weights are stored ``(fan_out, fan_in)``; inputs may be a single vector
    or a ``(batch, fan_in)`` array.
    """

    def __init__(self, sizes: Sequence[int], seed: int | None = 0, zero: bool = False,
                 momentum: float = 0.0):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise ValueError("need at least input and output sizes, all positive")
        self.sizes = sizes
        self.momentum = float(momentum)
        rng = np.random.default_rng(seed)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            if zero:
                W = np.zeros((fan_out, fan_in))
            else:
                bound = np.sqrt(6.0 / fan_in)
                W = rng.uniform(-bound, bound, size=(fan_out, fan_in))
            self.weights.append(W)
            self.biases.append(np.zeros(fan_out))
        self._velocity = None

    @property
    def n_in(self) -> int:
        return self.sizes[0]

    @property
    def n_out(self) -> int:
        return self.sizes[-1]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def copy(self) -> "Mlp":
        other = Mlp(self.sizes, zero=True, momentum=self.momentum)
        other.weights = [W.copy() for W in self.weights]
        other.biases = [b.copy() for b in self.biases]
        return other

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n_in:
            raise ValueError(f"expected input size {self.n_in}, got {x.shape[-1]}")
        return x

    def forward(self, x) -> np.ndarray:
        a = self._check(x)
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ W.T + b
            a = z if i == last else elu(z)
        return a

    __call__ = forward

    def loss_and_grads(self, inputs, targets):
        """Mean over the batch of ``||net(x) - y||^2`` and its parameter gradients."""
        X = np.atleast_2d(self._check(inputs))
        Y = np.atleast_2d(np.asarray(targets, dtype=float))
        if Y.shape != (X.shape[0], self.n_out):
            raise ValueError("targets do not match batch/output size")
        acts = [X]
        pre = []
        a = X
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ W.T + b
            pre.append(z)
            a = z if i == last else elu(z)
            acts.append(a)
        n = X.shape[0]
        err = a - Y
        loss = float(np.sum(err * err) / n)
        delta = 2.0 * err / n
        gW = [None] * len(self.weights)
        gb = [None] * len(self.weights)
        for i in range(last, -1, -1):
            gW[i] = delta.T @ acts[i]
            gb[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i]) * elu_grad(pre[i - 1])
        return loss, gW, gb

    def train_step(self, inputs, targets, lr: float) -> float:
        """One gradient step; returns the loss before the step."""
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        loss, gW, gb = self.loss_and_grads(inputs, targets)
        if not np.isfinite(loss):
            raise TrainingError("non-finite loss")
        grads = []
        for a, b in zip(gW, gb):
            grads += [a, b]
        params = self.parameters()
        if self.momentum > 0.0:
            if self._velocity is None:
                self._velocity = [np.zeros_like(p) for p in params]
            for p, g, v in zip(params, grads, self._velocity):
                v *= self.momentum
                v -= lr * g
                p += v
        else:
            for p, g in zip(params, grads):
                p -= lr * g
        return loss

    def to_dict(self) -> dict:
        return {
            "format": "hympc-mlp",
            "version": FORMAT_VERSION,
            "sizes": self.sizes,
            "activation": "elu",
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Mlp":
        if data.get("format") != "hympc-mlp" or data.get("version") != FORMAT_VERSION:
            raise ValueError("unsupported network file format")
        net = cls(data["sizes"], zero=True)
        net.weights = [np.array(W, dtype=float) for W in data["weights"]]
        net.biases = [np.array(b, dtype=float) for b in data["biases"]]
        for W, b, fi, fo in zip(net.weights, net.biases, net.sizes[:-1], net.sizes[1:]):
            if W.shape != (fo, fi) or b.shape != (fo,):
                raise ValueError("parameter shapes do not match header sizes")
        return net

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "Mlp":
        return cls.from_dict(json.loads(Path(path).read_text()))
