"""State-conditioned monotonic mixing of per-agent utilities.

Two mixing layers whose weights come from hypernetworks of the global
state, made non-negative with an absolute value, plus unconstrained
state-conditioned biases:

    hidden = qs @ |W1(s)| + b1(s)
    q_tot  = hidden . |w2(s)| + b2(s)

Every effective mixing weight is >= 0, so dq_tot/dq_i >= 0 for all states:
mixing can rescale and shift per-agent utilities but never invert them.
"""

from __future__ import annotations

from typing import Dict, List, Tuple

import numpy as np

from ..tinynn import DenseNet


class MixingNet:
    def __init__(self, state_dim: int, n_agents: int, embed_dim: int = 32,
                 hyper_hidden: int = 64, rng: np.random.Generator = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.state_dim = state_dim
        self.n_agents = n_agents
        self.embed_dim = embed_dim
        self.hyper_w1 = DenseNet([state_dim, hyper_hidden, n_agents * embed_dim], rng)
        self.hyper_b1 = DenseNet([state_dim, hyper_hidden, embed_dim], rng)
        self.hyper_w2 = DenseNet([state_dim, hyper_hidden, embed_dim], rng)
        self.hyper_b2 = DenseNet([state_dim, hyper_hidden, 1], rng)

    @property
    def _nets(self) -> List[DenseNet]:
        return [self.hyper_w1, self.hyper_b1, self.hyper_w2, self.hyper_b2]

    @property
    def params(self) -> List[np.ndarray]:
        flat: List[np.ndarray] = []
        for net in self._nets:
            flat.extend(net.params)
        return flat

    def forward(self, qs: np.ndarray, states: np.ndarray):
        """qs: (B, n), states: (B, state_dim) -> (q_tot (B,), cache)."""
        b = qs.shape[0]
        a1, c1 = self.hyper_w1.forward(states)
        b1, cb1 = self.hyper_b1.forward(states)
        a2, c2 = self.hyper_w2.forward(states)
        b2, cb2 = self.hyper_b2.forward(states)
        w1 = np.abs(a1).reshape(b, self.n_agents, self.embed_dim)
        w2 = np.abs(a2)
        hidden = np.einsum("bn,bne->be", qs, w1) + b1
        q_tot = (hidden * w2).sum(axis=1) + b2[:, 0]
        cache = (qs, a1, a2, w1, w2, hidden, c1, cb1, c2, cb2)
        return q_tot, cache

    def predict(self, qs: np.ndarray, states: np.ndarray) -> np.ndarray:
        return self.forward(qs, states)[0]

    def backward(self, cache, dq_tot: np.ndarray):
        """Returns (param grads aligned with ``params``, dqs (B, n))."""
        qs, a1, a2, w1, w2, hidden, c1, cb1, c2, cb2 = cache
        b = qs.shape[0]
        up = dq_tot[:, None]
        dhidden = up * w2                                   # (B, E)
        dw2 = up * hidden                                   # (B, E)
        db2 = up.copy()                                     # (B, 1)
        dqs = np.einsum("be,bne->bn", dhidden, w1)
        dw1 = np.einsum("bn,be->bne", qs, dhidden)          # (B, n, E)
        db1 = dhidden
        da1 = (dw1 * np.sign(a1).reshape(b, self.n_agents, self.embed_dim))
        da1 = da1.reshape(b, self.n_agents * self.embed_dim)
        da2 = dw2 * np.sign(a2)
        g1, _ = self.hyper_w1.backward(c1, da1)
        gb1, _ = self.hyper_b1.backward(cb1, db1)
        g2, _ = self.hyper_w2.backward(c2, da2)
        gb2, _ = self.hyper_b2.backward(cb2, db2)
        return g1 + gb1 + g2 + gb2, dqs

    def effective_weights(self, states: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(|W1|, |w2|) for the given states; both are non-negative by construction."""
        b = states.shape[0]
        w1 = np.abs(self.hyper_w1.predict(states)).reshape(b, self.n_agents, self.embed_dim)
        w2 = np.abs(self.hyper_w2.predict(states))
        return w1, w2

    # -- copies and serialization -------------------------------------------

    def copy(self) -> "MixingNet":
        dup = MixingNet.__new__(MixingNet)
        dup.state_dim = self.state_dim
        dup.n_agents = self.n_agents
        dup.embed_dim = self.embed_dim
        dup.hyper_w1 = self.hyper_w1.copy()
        dup.hyper_b1 = self.hyper_b1.copy()
        dup.hyper_w2 = self.hyper_w2.copy()
        dup.hyper_b2 = self.hyper_b2.copy()
        return dup

    def copy_from(self, other: "MixingNet") -> None:
        for mine, theirs in zip(self._nets, other._nets):
            mine.copy_from(theirs)

    def state(self) -> Dict[str, np.ndarray]:
        out: Dict[str, np.ndarray] = {
            "meta": np.asarray([self.state_dim, self.n_agents, self.embed_dim])
        }
        for name, net in zip(("w1", "b1", "w2", "b2"), self._nets):
            for k, v in net.state().items():
                out[f"{name}.{k}"] = v
        return out

    @classmethod
    def from_state(cls, state: Dict[str, np.ndarray]) -> "MixingNet":
        mix = cls.__new__(cls)
        mix.state_dim, mix.n_agents, mix.embed_dim = (int(x) for x in state["meta"])
        for attr, name in (("hyper_w1", "w1"), ("hyper_b1", "b1"),
                           ("hyper_w2", "w2"), ("hyper_b2", "b2")):
            sub = {k.split(".", 1)[1]: v for k, v in state.items()
                   if k.startswith(name + ".")}
            setattr(mix, attr, DenseNet.from_state(sub))
        return mix
