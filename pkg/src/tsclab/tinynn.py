"""Dense feedforward networks with hand-written reverse-mode gradients.

The only substrate the trainers use: affine layers with ReLU hidden
activations and an identity output, plus Adam.  Forward passes are pure
and deterministic, so frozen copies can be evaluated concurrently while a
single thread trains.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

RELU = "relu"
IDENTITY = "identity"


class DenseNet:
    """Fully connected net: sizes[0] -> ... -> sizes[-1].

    Parameters are initialized uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))
    from the supplied seeded generator.
    """

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator):
        if len(sizes) < 2:
            raise ValueError("need at least an input and an output size")
        self.sizes = tuple(int(s) for s in sizes)
        self.weights: List[np.ndarray] = []
        self.biases: List[np.ndarray] = []
        for fan_in, fan_out in zip(self.sizes, self.sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(rng.uniform(-bound, bound, size=(fan_out,)))

    # -- inference -----------------------------------------------------------

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, list]:
        """Returns (output, cache); accepts a vector or a (batch, in) matrix."""
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.shape[1] != self.sizes[0]:
            raise ValueError(
                f"input width {x.shape[1]} does not match first layer {self.sizes[0]}"
            )
        activations = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = z if i == last else np.maximum(z, 0.0)
            activations.append(h)
        out = h[0] if squeeze else h
        return out, (activations, squeeze)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    # -- gradients -----------------------------------------------------------

    def backward(self, cache, grad_out: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
        """Exact reverse-mode gradients.

        Returns (param_grads, grad_input) with param_grads ordered like
        ``params``: [dW0, db0, dW1, db1, ...].
        """
        activations, squeeze = cache
        g = np.asarray(grad_out, dtype=np.float64)
        if squeeze:
            g = g[None, :]
        grads_w: List[np.ndarray] = [np.empty(0)] * len(self.weights)
        grads_b: List[np.ndarray] = [np.empty(0)] * len(self.biases)
        last = len(self.weights) - 1
        for i in range(last, -1, -1):
            if i != last:
                g = g * (activations[i + 1] > 0.0)  # ReLU mask
            grads_w[i] = activations[i].T @ g
            grads_b[i] = g.sum(axis=0)
            g = g @ self.weights[i].T
        grad_input = g[0] if squeeze else g
        flat: List[np.ndarray] = []
        for dw, db in zip(grads_w, grads_b):
            flat.extend((dw, db))
        return flat, grad_input

    # -- parameter plumbing ----------------------------------------------------

    @property
    def params(self) -> List[np.ndarray]:
        flat: List[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            flat.extend((w, b))
        return flat

    def set_params(self, params: Sequence[np.ndarray]) -> None:
        expected = self.params
        if len(params) != len(expected):
            raise ValueError("parameter list length mismatch")
        it = iter(params)
        for i in range(len(self.weights)):
            w = next(it)
            b = next(it)
            if w.shape != self.weights[i].shape or b.shape != self.biases[i].shape:
                raise ValueError("parameter shape mismatch")
            self.weights[i] = np.array(w, dtype=np.float64)
            self.biases[i] = np.array(b, dtype=np.float64)

    def copy(self) -> "DenseNet":
        dup = DenseNet.__new__(DenseNet)
        dup.sizes = self.sizes
        dup.weights = [w.copy() for w in self.weights]
        dup.biases = [b.copy() for b in self.biases]
        return dup

    def copy_from(self, other: "DenseNet") -> None:
        self.set_params(other.params)

    def state(self) -> Dict[str, np.ndarray]:
        out: Dict[str, np.ndarray] = {"sizes": np.asarray(self.sizes, dtype=np.int64)}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"w{i}"] = w
            out[f"b{i}"] = b
        return out

    @classmethod
    def from_state(cls, state: Dict[str, np.ndarray]) -> "DenseNet":
        net = cls.__new__(cls)
        net.sizes = tuple(int(s) for s in state["sizes"])
        net.weights = [np.array(state[f"w{i}"]) for i in range(len(net.sizes) - 1)]
        net.biases = [np.array(state[f"b{i}"]) for i in range(len(net.sizes) - 1)]
        return net


class Adam:
    """Adam with bias correction over a fixed list of parameter arrays."""

    def __init__(self, params: Sequence[np.ndarray], lr: float = 5e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        """Update ``params`` in place from matching ``grads``."""
        if len(params) != len(self.m) or len(grads) != len(self.m):
            raise ValueError("params/grads length does not match optimizer state")
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)

    def state(self) -> Dict[str, np.ndarray]:
        out: Dict[str, np.ndarray] = {
            "t": np.asarray(self.t, dtype=np.int64),
            "hyper": np.asarray([self.lr, self.beta1, self.beta2, self.eps]),
        }
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"m{i}"] = m
            out[f"v{i}"] = v
        return out

    @classmethod
    def from_state(cls, state: Dict[str, np.ndarray]) -> "Adam":
        lr, b1, b2, eps = (float(x) for x in state["hyper"])
        opt = cls.__new__(cls)
        opt.lr, opt.beta1, opt.beta2, opt.eps = lr, b1, b2, eps
        opt.t = int(state["t"])
        n = sum(1 for k in state if k.startswith("m"))
        opt.m = [np.array(state[f"m{i}"]) for i in range(n)]
        opt.v = [np.array(state[f"v{i}"]) for i in range(n)]
        return opt


def finite_difference_grad(loss_fn, params: Sequence[np.ndarray],
                           h: float = 1e-5) -> List[np.ndarray]:
    """Central-difference gradient of a scalar loss over parameter arrays.

    The independent oracle for every analytic gradient in the package.
    """
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat_p = p.ravel()
        flat_g = g.ravel()
        for j in range(flat_p.size):
            orig = flat_p[j]
            flat_p[j] = orig + h
            hi = loss_fn()
            flat_p[j] = orig - h
            lo = loss_fn()
            flat_p[j] = orig
            flat_g[j] = (hi - lo) / (2.0 * h)
        grads.append(g)
    return grads


def max_relative_error(analytic: Sequence[np.ndarray],
                       numeric: Sequence[np.ndarray]) -> float:
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.abs(a) + np.abs(n), 1e-8)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst
