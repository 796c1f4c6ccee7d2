"""Binary-feedback correction scores and their policy-gradient training.

A single 3-layer MLP (tanh hidden layers, linear head) is shared by all
candidates; each output row belongs to one arm, keyed by llm_id so that
adding or removing candidates never misattributes a learned row. The head
starts at zero, so an untrained net contributes nothing to routing.

Per-arm confidence is 1 / (variance + eps) over a ring buffer of recent
scores; with fewer than two samples the confidence is zero, which keeps
cold feedback from swaying decisions.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from .errors import DimensionMismatch, IndexOutOfRange, WidthMismatch


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits)
    ez = np.exp(z)
    return ez / ez.sum()


def confidence(recent_scores, epsilon: float) -> float:
    """1/(Var + eps) over a candidate's recent scores; 0 until 2 samples exist."""
    scores = np.asarray(list(recent_scores), dtype=float)
    if scores.size < 2:
        return 0.0
    return 1.0 / (float(np.var(scores)) + epsilon)


class FeedbackNet:
    """Shared scorer mapping a routing embedding to one score per active arm."""

    def __init__(self, d_in: int, arm_ids, hidden: int = 64,
                 df_window: int = 50, seed: int = 0):
        self.d_in = d_in
        self.hidden = hidden
        self.df_window = df_window
        self.arm_ids = list(arm_ids)
        rng = np.random.default_rng(seed)
        self.W1 = rng.normal(size=(hidden, d_in)) / np.sqrt(d_in)
        self.b1 = np.zeros(hidden)
        self.W2 = rng.normal(size=(hidden, hidden)) / np.sqrt(hidden)
        self.b2 = np.zeros(hidden)
        # zero head: a fresh net scores every arm 0 and never changes a decision
        self.W3 = np.zeros((len(self.arm_ids), hidden))
        self.b3 = np.zeros(len(self.arm_ids))
        self.buffers: dict[str, deque] = {
            aid: deque(maxlen=df_window) for aid in self.arm_ids
        }

    @property
    def n_out(self) -> int:
        return len(self.arm_ids)

    def _check(self, e: np.ndarray) -> np.ndarray:
        e = np.asarray(e, dtype=float)
        if e.shape != (self.d_in,):
            raise DimensionMismatch(f"embedding dim {e.shape} != {self.d_in}")
        return e

    def _forward(self, e: np.ndarray):
        h1 = np.tanh(self.W1 @ e + self.b1)
        h2 = np.tanh(self.W2 @ h1 + self.b2)
        out = self.W3 @ h2 + self.b3
        return out, h1, h2

    def forward(self, e: np.ndarray) -> np.ndarray:
        """Score vector, one entry per arm in arm_ids order. No side effects."""
        return self._forward(self._check(e))[0]

    def scores(self, e: np.ndarray) -> np.ndarray:
        """Forward pass that also records the scores in the variance buffers."""
        out = self.forward(e)
        for aid, s in zip(self.arm_ids, out):
            self.buffers[aid].append(float(s))
        return out

    def kappa(self, llm_id: str, epsilon: float) -> float:
        return confidence(self.buffers[llm_id], epsilon)

    def log_policy_grads(self, e: np.ndarray, chosen: int):
        """Gradient of log softmax(scores)[chosen] w.r.t. every parameter."""
        if not 0 <= chosen < self.n_out:
            raise IndexOutOfRange(f"chosen index {chosen} outside 0..{self.n_out - 1}")
        e = self._check(e)
        out, h1, h2 = self._forward(e)
        pi = softmax(out)
        dlogits = -pi
        dlogits[chosen] += 1.0
        dW3 = np.outer(dlogits, h2)
        db3 = dlogits
        d2 = (self.W3.T @ dlogits) * (1.0 - h2**2)
        dW2 = np.outer(d2, h1)
        db2 = d2
        d1 = (self.W2.T @ d2) * (1.0 - h1**2)
        dW1 = np.outer(d1, e)
        db1 = d1
        return {"W1": dW1, "b1": db1, "W2": dW2, "b2": db2, "W3": dW3, "b3": db3}

    def policy_update(self, e: np.ndarray, chosen: int, reward: float,
                      lr: float, maximize: bool = True) -> "FeedbackNet":
        """Policy-gradient step scaled by the reward.

        maximize=True steps up the log-probability of the chosen arm (so a
        positive reward makes it more likely); maximize=False flips the sign.
        reward 0 is a no-op either way.
        """
        grads = self.log_policy_grads(e, chosen)
        step = lr * reward if maximize else -lr * reward
        self.W1 = self.W1 + step * grads["W1"]
        self.b1 = self.b1 + step * grads["b1"]
        self.W2 = self.W2 + step * grads["W2"]
        self.b2 = self.b2 + step * grads["b2"]
        self.W3 = self.W3 + step * grads["W3"]
        self.b3 = self.b3 + step * grads["b3"]
        return self

    def sync_arms(self, active_ids) -> "FeedbackNet":
        """Re-key the head to a new active-id list.

        Rows for surviving ids are kept verbatim (their scores are unchanged);
        new ids get zero rows and empty buffers; dropped ids lose their row.
        A re-added id therefore starts fresh.
        """
        active_ids = list(active_ids)
        old_rows = {aid: (self.W3[i], self.b3[i]) for i, aid in enumerate(self.arm_ids)}
        W3 = np.zeros((len(active_ids), self.hidden))
        b3 = np.zeros(len(active_ids))
        buffers: dict[str, deque] = {}
        for i, aid in enumerate(active_ids):
            if aid in old_rows:
                W3[i], b3[i] = old_rows[aid]
                buffers[aid] = self.buffers[aid]
            else:
                buffers[aid] = deque(maxlen=self.df_window)
        self.arm_ids = active_ids
        self.W3 = W3
        self.b3 = b3
        self.buffers = buffers
        return self

    def to_dict(self) -> dict:
        # buffers are transient scoring state and are not persisted
        return {
            "d_in": self.d_in,
            "hidden": self.hidden,
            "df_window": self.df_window,
            "arm_ids": list(self.arm_ids),
            "W1": self.W1.tolist(), "b1": self.b1.tolist(),
            "W2": self.W2.tolist(), "b2": self.b2.tolist(),
            "W3": self.W3.tolist(), "b3": self.b3.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeedbackNet":
        net = cls(int(d["d_in"]), d["arm_ids"], hidden=int(d["hidden"]),
                  df_window=int(d["df_window"]))
        for name in ("W1", "b1", "W2", "b2", "W3", "b3"):
            setattr(net, name, np.asarray(d[name], dtype=float))
        return net


def df_scores(net: FeedbackNet, e: np.ndarray, active_count: int | None = None
              ) -> np.ndarray:
    """Score the active arms, recording into the variance buffers."""
    if active_count is not None and active_count != net.n_out:
        raise WidthMismatch(
            f"net emits {net.n_out} scores but {active_count} candidates are active"
        )
    return net.scores(e)


def policy_update(net: FeedbackNet, e: np.ndarray, chosen: int, reward: float,
                  lr: float, maximize: bool = True) -> FeedbackNet:
    return net.policy_update(e, chosen, reward, lr, maximize=maximize)


def resize_feedback_net(net: FeedbackNet, active) -> FeedbackNet:
    """Adapt the head to a changed candidate set.

    `active` is normally the ordered list of active llm_ids. A bare count is
    also accepted: the head grows with placeholder ids or shrinks from the
    end, which only makes sense when changes happen at the tail.
    """
    if isinstance(active, int):
        if active < 1:
            raise ValueError("active count must be >= 1")
        if active == net.n_out:
            return net
        if active < net.n_out:
            return net.sync_arms(net.arm_ids[:active])
        extra = [f"arm{net.n_out + i}" for i in range(active - net.n_out)]
        return net.sync_arms(net.arm_ids + extra)
    return net.sync_arms(active)
