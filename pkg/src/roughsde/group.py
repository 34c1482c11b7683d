"""Step-2 truncated tensor-group algebra over R^d.

A group element carries a level-1 increment vector and a level-2 matrix of
iterated integrals.  Geometric elements satisfy the shuffle identity
``sym(level2) = 1/2 level1 (x) level1``; equivalently they are
``exp(v + A)`` for an antisymmetric area matrix ``A``.  The product is the
truncated tensor (Chen) product, which makes multiplicativity over
concatenated intervals exact by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

__all__ = [
    "GroupElement2",
    "identity",
    "exp2",
    "log2",
    "mul",
    "inv",
    "hom_norm",
    "dilate",
    "is_geometric",
    "geometricity_residual",
]


def _as_locked(a, shape, name):
    arr = np.array(a, dtype=float)
    if arr.shape != shape:
        raise ValidationError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class GroupElement2:
    """Element of the step-2 truncated tensor group over R^dim.

    Attributes:
        dim: ambient dimension d.
        level1: increment vector, shape (d,).
        level2: iterated-integral matrix, shape (d, d); entry (i, j) plays
            the role of the integral of coordinate i against coordinate j.
    """

    dim: int
    level1: np.ndarray
    level2: np.ndarray

    def __post_init__(self):
        d = int(self.dim)
        if d < 1:
            raise ValidationError("dim must be a positive integer")
        object.__setattr__(self, "dim", d)
        object.__setattr__(self, "level1", _as_locked(self.level1, (d,), "level1"))
        object.__setattr__(self, "level2", _as_locked(self.level2, (d, d), "level2"))


def identity(dim: int) -> GroupElement2:
    """Neutral element: zero increment, zero second level."""
    return GroupElement2(dim, np.zeros(dim), np.zeros((dim, dim)))


def geometricity_residual(g: GroupElement2) -> float:
    """Max-abs defect of sym(level2) = 1/2 level1 (x) level1."""
    sym = 0.5 * (g.level2 + g.level2.T)
    return float(np.max(np.abs(sym - 0.5 * np.outer(g.level1, g.level1))))


def is_geometric(g: GroupElement2, tol: float = 1e-9) -> bool:
    scale = max(1.0, float(np.dot(g.level1, g.level1)))
    return geometricity_residual(g) <= tol * scale


def exp2(v, A, tol: float = 1e-12) -> GroupElement2:
    """Exponential of (v, A) with A antisymmetric: level2 = 1/2 v(x)v + A.

    Raises:
        ValidationError: if A fails antisymmetry beyond ``tol`` (relative to
            the magnitude of A).
    """
    v = np.asarray(v, dtype=float)
    A = np.asarray(A, dtype=float)
    d = v.shape[0]
    if A.shape != (d, d):
        raise ValidationError(f"area matrix must be {d}x{d}, got {A.shape}")
    scale = max(1.0, float(np.max(np.abs(A))))
    if np.max(np.abs(A + A.T)) > tol * scale:
        raise ValidationError("area matrix is not antisymmetric")
    return GroupElement2(d, v, 0.5 * np.outer(v, v) + A)


def log2(g: GroupElement2, tol: float = 1e-9):
    """Inverse of :func:`exp2`: returns (level1, antisymmetric area part).

    Requires a geometric element; the symmetric part of level2 is then
    redundant and only the area survives.
    """
    if not is_geometric(g, tol):
        raise ValidationError(
            f"element is not geometric (residual {geometricity_residual(g):.3e})"
        )
    return g.level1.copy(), 0.5 * (g.level2 - g.level2.T)


def mul(g: GroupElement2, h: GroupElement2) -> GroupElement2:
    """Truncated tensor (Chen) product of two elements of equal dimension."""
    if g.dim != h.dim:
        raise ValidationError(f"dimension mismatch: {g.dim} vs {h.dim}")
    return GroupElement2(
        g.dim,
        g.level1 + h.level1,
        g.level2 + h.level2 + np.outer(g.level1, h.level1),
    )


def inv(g: GroupElement2) -> GroupElement2:
    """Group inverse: mul(g, inv(g)) is the identity."""
    return GroupElement2(g.dim, -g.level1, -g.level2 + np.outer(g.level1, g.level1))


def hom_norm(g: GroupElement2) -> float:
    """Homogeneous norm max(|level1|_2, |level2|_F^(1/2)).

    Equivalent to the Carnot-Caratheodory norm on the step-2 group; scales
    linearly under dilation and vanishes exactly at the identity.
    """
    n1 = float(np.linalg.norm(g.level1))
    n2 = float(np.linalg.norm(g.level2, ord="fro"))
    return max(n1, np.sqrt(n2))


def dilate(g: GroupElement2, lam: float) -> GroupElement2:
    """Dilation: level1 scales by lam, level2 by lam^2."""
    return GroupElement2(g.dim, lam * g.level1, lam * lam * g.level2)
