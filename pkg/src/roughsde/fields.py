"""Vector-field sets: drift, diffusion columns and their Jacobians.

Callbacks operate on batches of states, shape (batch, m) -> (batch, m) for
the drift and each column, and (batch, m) -> (batch, m, m) for Jacobians.
Single-state callbacks are supported via ``vectorized=False`` and wrapped.
Missing Jacobians fall back to central finite differences with a step that
scales with the state magnitude.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ValidationError

__all__ = ["VectorFieldSet", "affine_field", "constant_field", "zero_field"]


def _wrap_vector(fn):
    def batched(s):
        return np.stack([np.asarray(fn(row), dtype=float) for row in s])

    return batched


def _wrap_matrix(fn):
    def batched(s):
        return np.stack([np.asarray(fn(row), dtype=float) for row in s])

    return batched


@dataclass
class VectorFieldSet:
    """Drift ``a`` and columns ``V_1..V_k`` on R^m with optional Jacobians.

    Attributes:
        state_dim: dimension m of the state space.
        drift: drift callback, (batch, m) -> (batch, m).
        columns: k column callbacks, each (batch, m) -> (batch, m).
        jacobians: optional k Jacobian callbacks, (batch, m) -> (batch, m, m)
            with entry [.., i, j] = d column_i / d state_j.  When omitted,
            central finite differences with step fd_scale*(1+|s|) are used.
        vectorized: set False when callbacks take a single state vector.
    """

    state_dim: int
    drift: Callable
    columns: Sequence[Callable]
    jacobians: Optional[Sequence[Callable]] = None
    vectorized: bool = True
    fd_scale: float = 1e-5

    def __post_init__(self):
        if self.state_dim < 1:
            raise ValidationError("state_dim must be >= 1")
        self.columns = list(self.columns)
        if not self.vectorized:
            self.drift = _wrap_vector(self.drift)
            self.columns = [_wrap_vector(c) for c in self.columns]
            if self.jacobians is not None:
                self.jacobians = [_wrap_matrix(j) for j in self.jacobians]
            self.vectorized = True
        if self.jacobians is not None:
            self.jacobians = list(self.jacobians)
            if len(self.jacobians) != len(self.columns):
                raise ValidationError("need one Jacobian per column")

    @property
    def n_columns(self) -> int:
        return len(self.columns)

    def eval_drift(self, s: np.ndarray) -> np.ndarray:
        return np.asarray(self.drift(s), dtype=float)

    def eval_columns(self, s: np.ndarray) -> np.ndarray:
        """Stack of column values, shape (batch, m, k)."""
        return np.stack([np.asarray(c(s), dtype=float) for c in self.columns], axis=-1)

    def fd_jacobian(self, col: Callable, s: np.ndarray) -> np.ndarray:
        """Central finite-difference Jacobian, shape (batch, m, m)."""
        b, m = s.shape
        h = self.fd_scale * (1.0 + np.linalg.norm(s, axis=1))
        out = np.empty((b, m, m))
        for j in range(m):
            bump = np.zeros_like(s)
            bump[:, j] = h
            out[:, :, j] = (col(s + bump) - col(s - bump)) / (2.0 * h[:, None])
        return out

    def eval_jacobians(self, s: np.ndarray) -> np.ndarray:
        """Stack of Jacobians per column, shape (batch, k, m, m)."""
        if self.jacobians is not None:
            mats = [np.asarray(j(s), dtype=float) for j in self.jacobians]
        else:
            mats = [self.fd_jacobian(c, s) for c in self.columns]
        return np.stack(mats, axis=1)

    def check_jacobians(self, probes: np.ndarray, tol: float = 1e-5) -> float:
        """Max deviation of user Jacobians from finite differences on probes.

        Raises ValidationError when supplied Jacobians disagree beyond tol.
        """
        if self.jacobians is None:
            return 0.0
        probes = np.atleast_2d(np.asarray(probes, dtype=float))
        worst = 0.0
        for col, jac in zip(self.columns, self.jacobians):
            fd = self.fd_jacobian(col, probes)
            worst = max(worst, float(np.max(np.abs(fd - jac(probes)))))
        if worst > tol:
            raise ValidationError(
                f"user Jacobians deviate from finite differences by {worst:.3e}"
            )
        return worst


def affine_field(A, b) -> Callable:
    """Field s -> A s + b, batched; Jacobian is the constant matrix A."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)

    def fn(s):
        return s @ A.T + b

    fn.jacobian = lambda s: np.broadcast_to(A, (s.shape[0],) + A.shape).copy()
    return fn


def constant_field(v) -> Callable:
    v = np.asarray(v, dtype=float)

    def fn(s):
        return np.broadcast_to(v, (s.shape[0],) + v.shape).copy()

    fn.jacobian = lambda s: np.zeros((s.shape[0], v.size, v.size))
    return fn


def zero_field(m: int) -> Callable:
    def fn(s):
        return np.zeros((s.shape[0], m))

    return fn
