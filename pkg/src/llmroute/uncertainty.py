"""Per-candidate information matrix for exploration scoring.

Each arm keeps A = I + sum of outer products of the embeddings it has seen.
The score e' A^-1 e is large for directions the arm knows little about and
shrinks as observations accumulate. The inverse is maintained by rank-one
(Sherman-Morrison) updates with a drift check that falls back to a direct
inversion if accumulated float error ever exceeds 1e-6 in Frobenius norm.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch

_DRIFT_TOL = 1e-6
# exact consistency check is O(d^3); amortize it for wide embeddings
_CHECK_EVERY_WIDE = 64
_WIDE_DIM = 128


class ArmUncertainty:
    def __init__(self, dim: int):
        self.dim = dim
        self.A = np.eye(dim)
        self.A_inv = np.eye(dim)
        self._updates = 0

    def _check(self, e: np.ndarray) -> np.ndarray:
        e = np.asarray(e, dtype=float)
        if e.shape != (self.dim,):
            raise DimensionMismatch(f"embedding dim {e.shape} != {self.dim}")
        return e

    def score(self, e: np.ndarray) -> float:
        """Quadratic form e' A^-1 e; zero for the zero vector."""
        e = self._check(e)
        return float(e @ self.A_inv @ e)

    def update(self, e: np.ndarray) -> "ArmUncertainty":
        """Rank-one accumulate A += e e' and refresh the maintained inverse."""
        e = self._check(e)
        self.A = self.A + np.outer(e, e)
        Ae = self.A_inv @ e
        denom = 1.0 + float(e @ Ae)
        self.A_inv = self.A_inv - np.outer(Ae, Ae) / denom
        self._updates += 1
        if self.dim <= _WIDE_DIM or self._updates % _CHECK_EVERY_WIDE == 0:
            self._refresh_if_drifted()
        return self

    def _refresh_if_drifted(self) -> None:
        drift = np.linalg.norm(self.A @ self.A_inv - np.eye(self.dim))
        if drift >= _DRIFT_TOL:
            self.A_inv = np.linalg.inv(self.A)

    def to_dict(self) -> dict:
        return {"A": self.A.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ArmUncertainty":
        A = np.asarray(d["A"], dtype=float)
        arm = cls(A.shape[0])
        arm.A = A
        arm.A_inv = np.linalg.inv(A)
        return arm
