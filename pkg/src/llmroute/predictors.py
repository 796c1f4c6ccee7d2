"""Per-candidate response-quality and response-length regressors.

Two interchangeable kinds:

  linear-ridge       prediction = prior + theta . e ; offline fit is the
                     closed-form ridge solution, online updates are plain
                     SGD steps on squared error.
  k-nearest-neighbor prediction = mean target of the k closest stored
                     exemplars; online updates append exemplars.

Quality predictions are clamped to [0, 1], length predictions to >= 0.
Untrained states predict a neutral prior (quality 0.5, length 256 tokens)
so a cold arm is neither favored nor starved.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import DimensionMismatch

if TYPE_CHECKING:
    from .catalog import LLMCandidate

QUALITY_PRIOR = 0.5
LENGTH_PRIOR = 256.0
LINEAR = "linear-ridge"
KNN = "k-nearest-neighbor"


@dataclass(frozen=True)
class CostEstimate:
    """Dollar cost split into the known input part and predicted output part."""

    input_cost: float
    output_cost: float

    @property
    def total(self) -> float:
        return self.input_cost + self.output_cost


class RegressorState:
    """Mutable regression state for one (candidate, target) pair."""

    def __init__(self, kind: str, target: str, dim: int, *, k: int = 5,
                 ridge: float = 1.0):
        if kind not in (LINEAR, KNN):
            raise ValueError(f"unknown regressor kind {kind!r}")
        if target not in ("quality", "length"):
            raise ValueError(f"unknown target {target!r}")
        self.kind = kind
        self.target = target
        self.dim = dim
        self.prior = QUALITY_PRIOR if target == "quality" else LENGTH_PRIOR
        self.k = k
        self.ridge = ridge
        self.theta = np.zeros(dim)
        self.exemplars: list[np.ndarray] = []
        self.targets: list[float] = []

    def _check(self, e: np.ndarray) -> np.ndarray:
        e = np.asarray(e, dtype=float)
        if e.shape != (self.dim,):
            raise DimensionMismatch(f"embedding dim {e.shape} != {self.dim}")
        return e

    def _raw(self, e: np.ndarray) -> float:
        if self.kind == LINEAR:
            return self.prior + float(self.theta @ e)
        if not self.exemplars:
            return self.prior
        stack = np.asarray(self.exemplars)
        dists = np.linalg.norm(stack - e, axis=1)
        order = np.argsort(dists, kind="stable")[: self.k]
        return float(np.mean(np.asarray(self.targets)[order]))

    def predict(self, e: np.ndarray) -> float:
        raw = self._raw(self._check(e))
        if self.target == "quality":
            return float(np.clip(raw, 0.0, 1.0))
        return max(raw, 0.0)

    def sgd_update(self, e: np.ndarray, observed: float, lr: float) -> None:
        """One gradient step on squared error, or an exemplar append for kNN."""
        e = self._check(e)
        if self.kind == KNN:
            self.exemplars.append(e.copy())
            self.targets.append(float(observed))
            return
        delta = float(observed) - self.predict(e)
        self.theta = self.theta + lr * delta * e

    def fit(self, X: np.ndarray, y: np.ndarray) -> None:
        """Batch (re)fit: closed-form ridge for linear, exemplar reset for kNN."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float)
        if X.shape[1] != self.dim:
            raise DimensionMismatch(f"feature dim {X.shape[1]} != {self.dim}")
        if self.kind == KNN:
            self.exemplars = [row.copy() for row in X]
            self.targets = [float(v) for v in y]
            return
        gram = X.T @ X + self.ridge * np.eye(self.dim)
        self.theta = np.linalg.solve(gram, X.T @ (y - self.prior))

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "target": self.target,
            "dim": self.dim,
            "k": self.k,
            "ridge": self.ridge,
        }
        if self.kind == LINEAR:
            d["theta"] = self.theta.tolist()
        else:
            d["exemplars"] = [e.tolist() for e in self.exemplars]
            d["targets"] = list(self.targets)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RegressorState":
        state = cls(d["kind"], d["target"], int(d["dim"]), k=int(d.get("k", 5)),
                    ridge=float(d.get("ridge", 1.0)))
        if state.kind == LINEAR:
            state.theta = np.asarray(d["theta"], dtype=float)
        else:
            state.exemplars = [np.asarray(e, dtype=float) for e in d.get("exemplars", [])]
            state.targets = [float(v) for v in d.get("targets", [])]
        return state


def predict_quality(state: RegressorState, e: np.ndarray) -> float:
    if state.target != "quality":
        raise ValueError("state does not predict quality")
    return state.predict(e)


def predict_length(state: RegressorState, e: np.ndarray) -> float:
    if state.target != "length":
        raise ValueError("state does not predict length")
    return state.predict(e)


def update_quality(state: RegressorState, e: np.ndarray, observed: float,
                   lr: float = 1.0) -> RegressorState:
    if state.target != "quality":
        raise ValueError("state does not predict quality")
    state.sgd_update(e, observed, lr)
    return state


def update_length(state: RegressorState, e: np.ndarray, observed: float,
                  lr: float = 1.0) -> RegressorState:
    if state.target != "length":
        raise ValueError("state does not predict length")
    state.sgd_update(e, observed, lr)
    return state


def estimate_cost(candidate: "LLMCandidate", prompt_tokens: int,
                  predicted_len: float) -> CostEstimate:
    """Dollar cost of a query: token counts times per-1k prices."""
    return CostEstimate(
        input_cost=prompt_tokens * candidate.prompt_price / 1000.0,
        output_cost=predicted_len * candidate.response_price / 1000.0,
    )
