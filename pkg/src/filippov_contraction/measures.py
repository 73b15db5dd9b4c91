"""Vector norms, induced matrix norms and matrix measures (logarithmic norms).

Supported metrics are the weighted l1, l2 and l-infinity families:
``|x|_{D,1} = |Dx|_1`` and ``|x|_{D,inf} = |Dx|_inf`` with a positive diagonal
``D``, and ``|x|_{Q,2} = |Qx|_2`` with ``P = Q^T Q`` positive definite. The
measure of ``A`` in a weighted norm is the unweighted measure of ``Q A Q^-1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels

__all__ = [
    "Metric",
    "MetricError",
    "NEGATIVE_TOL",
    "matrix_measure",
    "measure_limit_oracle",
    "induced_norm",
    "vector_norm",
    "rank1_measure",
    "lmi_check",
    "sqrtm_spd",
    "is_spd",
]

FAMILIES = ("l1", "l2", "linf")

#: "strictly negative" means below this
NEGATIVE_TOL = 1e-12


class MetricError(ValueError):
    pass


def is_spd(P) -> bool:
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        return False
    if not np.allclose(P, P.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(P).max())):
        return False
    try:
        np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        return False
    return True


def sqrtm_spd(P) -> np.ndarray:
    """Principal square root of a symmetric positive definite matrix."""
    P = np.asarray(P, dtype=float)
    if not is_spd(P):
        raise MetricError("P is not symmetric positive definite")
    w, V = _kernels.jacobi_eigh(0.5 * (P + P.T))
    Q = (V * np.sqrt(w)) @ V.T
    return 0.5 * (Q + Q.T)


@dataclass(frozen=True)
class Metric:
    """A norm family plus an optional weight.

    ``weight`` is ``None`` (identity), a 1-D array of positive diagonal
    entries (l1/linf only) or a square invertible factor ``Q`` (l2 only).
    """

    family: str
    weight: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        fam = self.family.lower()
        if fam == "inf":
            fam = "linf"
        if fam not in FAMILIES:
            raise MetricError(f"unknown norm family {self.family!r}")
        object.__setattr__(self, "family", fam)
        w = self.weight
        if w is None:
            return
        w = np.array(w, dtype=float)
        if w.ndim == 1:
            if fam == "l2":
                raise MetricError("diagonal weights are only supported for l1/linf")
            if not np.all(np.isfinite(w)) or np.any(w <= 0.0):
                raise MetricError("diagonal weights must be finite and strictly positive")
        elif w.ndim == 2:
            if fam != "l2":
                raise MetricError("factor weights are only supported for l2")
            if w.shape[0] != w.shape[1]:
                raise MetricError("weight factor Q must be square")
            if not np.all(np.isfinite(w)):
                raise MetricError("weight factor Q must be finite")
            if not is_spd(w.T @ w):
                raise MetricError("weight factor Q is singular")
        else:
            raise MetricError("weight must be a vector or a square matrix")
        w.setflags(write=False)
        object.__setattr__(self, "weight", w)

    @classmethod
    def from_P(cls, P) -> "Metric":
        """Euclidean metric with ``Q = P^{1/2}`` (principal root)."""
        return cls("l2", sqrtm_spd(P))

    @classmethod
    def diagonal(cls, family: str, d) -> "Metric":
        return cls(family, np.asarray(d, dtype=float))

    @property
    def P(self) -> Optional[np.ndarray]:
        if self.family != "l2" or self.weight is None:
            return None
        return self.weight.T @ self.weight

    def dim_ok(self, n: int) -> bool:
        return self.weight is None or self.weight.shape[0] == n

    def _check(self, n: int):
        if not self.dim_ok(n):
            raise MetricError(f"weight has dimension {self.weight.shape[0]}, expected {n}")

    def transform(self, A) -> np.ndarray:
        """``Q A Q^-1`` (``D A D^-1`` for diagonal weights)."""
        A = np.asarray(A, dtype=float)
        self._check(A.shape[0])
        if self.weight is None:
            return A
        if self.weight.ndim == 1:
            d = self.weight
            return A * d[:, None] / d[None, :]
        Q = self.weight
        return Q @ np.linalg.solve(Q.T, A.T).T

    def describe(self) -> dict:
        out = {"family": self.family}
        if self.weight is None:
            out["weight"] = "identity"
        elif self.weight.ndim == 1:
            out["weight"] = "diagonal"
            out["D"] = self.weight.tolist()
        else:
            out["weight"] = "factor"
            out["Q"] = self.weight.tolist()
        return out

    def __repr__(self) -> str:
        kind = "I" if self.weight is None else ("D" if self.weight.ndim == 1 else "Q")
        return f"Metric({self.family!r}, {kind})"


def _square(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise MetricError(f"expected a non-empty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise MetricError("matrix has non-finite entries")
    return A


_MEASURES = {"l1": "mu1", "l2": "mu2", "linf": "muinf"}
_NORMS = {"l1": "norm1", "l2": "norm2", "linf": "norminf"}


def matrix_measure(A, metric: Metric) -> float:
    """Matrix measure of ``A`` from the closed-form column/row/eigen formulas."""
    At = metric.transform(_square(A))
    return float(getattr(_kernels, _MEASURES[metric.family])(At))


def induced_norm(A, metric: Metric) -> float:
    At = metric.transform(_square(A))
    return float(getattr(_kernels, _NORMS[metric.family])(At))


def vector_norm(x, metric: Metric) -> float:
    x = np.asarray(x, dtype=float)
    metric._check(x.shape[0])
    if metric.weight is not None:
        x = metric.weight * x if metric.weight.ndim == 1 else metric.weight @ x
    if metric.family == "l1":
        return float(np.abs(x).sum())
    if metric.family == "linf":
        return float(np.abs(x).max())
    return float(math.sqrt(float(x @ x)))


def measure_limit_oracle(A, metric: Metric, h: float = 1e-7) -> float:
    """``(||I + hA|| - 1) / h``: the defining one-sided limit at a finite step.

    The induced norm is computed directly, not through the measure formulas,
    so this serves as an independent check of :func:`matrix_measure`.
    """
    if not 0.0 < h <= 1e-4:
        raise ValueError("h must lie in (0, 1e-4]")
    A = _square(A)
    return (induced_norm(np.eye(A.shape[0]) + h * A, metric) - 1.0) / h


def _vec(v, n=None) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(-1)
    if n is not None and v.shape[0] != n:
        raise MetricError(f"vector length {v.shape[0]} does not match {n}")
    return v


def _excl_sums(a: np.ndarray) -> np.ndarray:
    # s[j] = sum_{i != j} a[i] without subtracting (no cancellation)
    prefix = np.concatenate(([0.0], np.cumsum(a)[:-1]))
    suffix = np.concatenate((np.cumsum(a[::-1])[::-1][1:], [0.0]))
    return prefix + suffix


def rank1_measure(x, y, metric: Metric) -> float:
    """Measure of the rank-one matrix ``x y^T`` in closed form.

    l2: ``(x~.y~ + |x~||y~|)/2`` with ``x~ = Qx``, ``y~ = Q^-T y``, evaluated as
    ``|x~||y~| |x^ + y^|^2 / 4`` (unit vectors) so the antiparallel case is
    exactly zero. l1/linf use the column/row sums of ``D x y^T D^-1`` in O(n).
    For ``n >= 2`` the result is non-negative; for ``n = 1`` it is ``x y``.
    """
    x = _vec(x)
    y = _vec(y, x.shape[0])
    metric._check(x.shape[0])
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise MetricError("non-finite vector")
    if not np.any(x) or not np.any(y):
        return 0.0
    w = metric.weight
    if x.shape[0] == 1:
        # scalar: every weighted measure of a 1x1 matrix is its entry
        return float(x[0] * y[0])
    if metric.family == "l2":
        if w is not None:
            x = w @ x
            y = np.linalg.solve(w.T, y)
        nx = math.sqrt(float(x @ x))
        ny = math.sqrt(float(y @ y))
        s = x / nx + y / ny
        return 0.25 * nx * ny * float(s @ s)
    d = np.ones_like(x) if w is None else w
    if metric.family == "l1":
        # column j: x_j y_j + (|y_j| / d_j) * sum_{i != j} |d_i x_i|
        cols = x * y + np.abs(y) / d * _excl_sums(np.abs(d * x))
        return float(cols.max())
    # row i: x_i y_i + |d_i x_i| * sum_{j != i} |y_j| / d_j
    rows = x * y + np.abs(d * x) * _excl_sums(np.abs(y) / d)
    return float(rows.max())


def lmi_check(A, P) -> bool:
    """True iff ``PA + A^T P`` is negative definite (max eigenvalue < -1e-12)."""
    A = _square(A)
    P = np.asarray(P, dtype=float)
    if not is_spd(P):
        raise MetricError("P is not symmetric positive definite")
    if P.shape != A.shape:
        raise MetricError("P and A must have the same shape")
    M = P @ A + A.T @ P
    return _kernels.sym_max_eig(0.5 * (M + M.T)) < -NEGATIVE_TOL
