"""Bimodal Filippov systems, their sliding field and regularization.

A :class:`FilippovSystem` switches between ``f_plus`` where ``H(x) > 0`` and
``f_minus`` where ``H(x) < 0``. An optional input ``u`` enters both modes
additively through ``B``. Piecewise-affine and relay systems convert to the
generic form with :meth:`PWASystem.to_filippov` / :meth:`RelaySystem.to_filippov`.
"""

from __future__ import annotations

import enum
import json
import os
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Optional, Sequence, Union

import numpy as np

from . import _kernels
from .expr import (
    Const,
    Expression,
    ExpressionError,
    Var,
    add,
    as_expression,
    compile_program,
    gradient,
    jacobian,
    mul,
    render,
    variables,
)

__all__ = [
    "ModelError",
    "DegenerateSwitchingError",
    "TangencyError",
    "RegionError",
    "RegionLabel",
    "TransitionFunction",
    "FilippovSystem",
    "PWASystem",
    "RelaySystem",
    "RegularizedJacobian",
    "as_filippov",
    "classify_point",
    "sliding_field",
    "regularized_field",
    "regularized_jacobian",
    "load_system",
    "system_from_dict",
    "system_to_dict",
    "SIGMA_TOL",
]

SIGMA_TOL = 1e-9


class ModelError(ValueError):
    """Malformed or inconsistent system definition."""


class DegenerateSwitchingError(ModelError):
    """grad H vanishes on the switching manifold."""


class TangencyError(ModelError):
    """Both Lie derivatives vanish: outside the supported hypotheses."""


class RegionError(ValueError):
    """Point is not in the region an operation requires."""


class RegionLabel(str, enum.Enum):
    S_PLUS = "plus"
    S_MINUS = "minus"
    CROSSING = "crossing"
    SLIDING = "sliding"
    ESCAPING = "escaping"


@dataclass(frozen=True)
class TransitionFunction:
    """``sat`` (piecewise linear) or ``cubic`` (C^1) transition function."""

    kind: str = "sat"

    def __post_init__(self):
        if self.kind not in ("sat", "cubic"):
            raise ValueError(f"unknown transition function {self.kind!r}")

    @property
    def code(self) -> int:
        return _kernels.PHI_SAT if self.kind == "sat" else _kernels.PHI_CUBIC

    @property
    def dphi_max(self) -> float:
        return 1.0 if self.kind == "sat" else 1.5

    def phi(self, s: float) -> float:
        if s >= 1.0:
            return 1.0
        if s <= -1.0:
            return -1.0
        if self.kind == "sat":
            return float(s)
        return 0.5 * (3.0 * s - s * s * s)

    def dphi(self, s: float) -> float:
        # sat: right-continuous at the kinks
        if self.kind == "sat":
            return 1.0 if -1.0 <= s < 1.0 else 0.0
        if -1.0 < s < 1.0:
            return 1.5 * (1.0 - s * s)
        return 0.0


def _matrix(value, shape, name) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ModelError(f"field {name!r} is not numeric") from None
    if arr.shape != tuple(shape):
        raise ModelError(f"field {name!r} has shape {arr.shape}, expected {tuple(shape)}")
    if not np.all(np.isfinite(arr)):
        raise ModelError(f"field {name!r} has non-finite entries")
    return arr


class FilippovSystem:
    """Two vector fields, a switching function and an optional input channel."""

    def __init__(
        self,
        f_plus: Sequence[Union[str, Expression]],
        f_minus: Sequence[Union[str, Expression]],
        H: Union[str, Expression],
        m: int = 0,
        B=None,
        input: Optional[Sequence[Union[str, Expression]]] = None,
        name: Optional[str] = None,
    ):
        n = len(f_plus)
        if n == 0:
            raise ModelError("field 'f_plus' must be non-empty")
        if len(f_minus) != n:
            raise ModelError(f"field 'f_minus' has length {len(f_minus)}, expected {n}")
        self.n = n
        self.m = int(m)
        self.name = name
        try:
            self.f_plus = tuple(as_expression(e, n, self.m) for e in f_plus)
            self.f_minus = tuple(as_expression(e, n, self.m) for e in f_minus)
            self.H = as_expression(H, n, self.m)
        except ExpressionError as exc:
            raise ModelError(str(exc)) from exc
        self.B = None if B is None else _matrix(B, (n, self.m), "B")
        if self.B is not None and self.m == 0:
            self.B = None
        self.input = None
        if input is not None:
            if len(input) != self.m:
                raise ModelError(f"field 'input' has length {len(input)}, expected m={self.m}")
            try:
                self.input = tuple(as_expression(e, 0, 0) for e in input)
            except ExpressionError as exc:
                raise ModelError(f"field 'input': {exc}") from exc
            for e in self.input:
                if any(v.kind != "t" for v in variables(e)):
                    raise ModelError("field 'input' may only reference t")
        self.jac_plus = jacobian(self.f_plus, n)
        self.jac_minus = jacobian(self.f_minus, n)
        self.grad_H = gradient(self.H, n)

    # compiled evaluation --------------------------------------------------

    @staticmethod
    def _set(exprs):
        return _kernels.ProgramSet([compile_program(e) for e in exprs])

    @cached_property
    def _programs(self):
        flat = lambda rows: [e for row in rows for e in row]  # noqa: E731
        return {
            "fp": self._set(self.f_plus),
            "fm": self._set(self.f_minus),
            "H": self._set([self.H]),
            "gH": self._set(self.grad_H),
            "Jp": self._set(flat(self.jac_plus)),
            "Jm": self._set(flat(self.jac_minus)),
            "in": self._set(self.input) if self.input is not None else None,
        }

    @cached_property
    def evaluator(self):
        """Kernel-backed evaluator used by the integrators (owns its scratch stacks)."""
        return _kernels.FieldEvaluator(
            self.n,
            self.m,
            self._set(self.f_plus),
            self._set(self.f_minus),
            self._set([self.H]),
            self._set(self.grad_H),
            self._set(self.input) if self.input is not None else None,
            self.B,
        )

    # pointwise queries ----------------------------------------------------

    def u_at(self, t: float = 0.0, u=None) -> np.ndarray:
        if u is not None:
            u = np.asarray(u, dtype=float).reshape(-1)
            if u.shape[0] != self.m:
                raise ModelError(f"input has length {u.shape[0]}, expected m={self.m}")
            return u
        if self.input is not None:
            return self._programs["in"].evaluate(t, np.zeros(0), np.zeros(0))
        return np.zeros(self.m)

    def _x(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.n:
            raise ModelError(f"state has length {x.shape[0]}, expected n={self.n}")
        return x

    def _bu(self, u: np.ndarray) -> np.ndarray:
        if self.B is None:
            return np.zeros(self.n)
        return self.B @ u

    def raw_fields(self, x, t: float = 0.0, u=None):
        """``(f_plus, f_minus, Bu)`` without the input term added."""
        x = self._x(x)
        u = self.u_at(t, u)
        p = self._programs
        return p["fp"].evaluate(t, x, u), p["fm"].evaluate(t, x, u), self._bu(u)

    def fields(self, x, t: float = 0.0, u=None):
        """``(f_plus + Bu, f_minus + Bu)``."""
        fp, fm, bu = self.raw_fields(x, t, u)
        return fp + bu, fm + bu

    def delta_f(self, x, t: float = 0.0, u=None) -> np.ndarray:
        fp, fm, _ = self.raw_fields(x, t, u)
        return fp - fm

    def switching(self, x, t: float = 0.0, u=None) -> float:
        return float(self._programs["H"].evaluate(t, self._x(x), self.u_at(t, u))[0])

    def gradient_H(self, x, t: float = 0.0, u=None) -> np.ndarray:
        return self._programs["gH"].evaluate(t, self._x(x), self.u_at(t, u))

    def jacobian(self, mode: str, x, t: float = 0.0, u=None) -> np.ndarray:
        key = {"plus": "Jp", "minus": "Jm"}[mode]
        vals = self._programs[key].evaluate(t, self._x(x), self.u_at(t, u))
        return vals.reshape(self.n, self.n)

    def lie_derivatives(self, x, t: float = 0.0, u=None):
        fp, fm = self.fields(x, t, u)
        g = self.gradient_H(x, t, u)
        return float(g @ fp), float(g @ fm)

    # construction helpers ------------------------------------------------

    def with_input(self, input: Sequence[Union[str, Expression]], B=None) -> "FilippovSystem":
        m = len(input)
        if B is None:
            if self.B is None or self.m != m:
                raise ModelError("field 'B' is required to attach an input")
            B = self.B
        return FilippovSystem(self.f_plus, self.f_minus, self.H, m=m, B=B, input=input, name=self.name)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "type": "filippov",
            "n": self.n,
            "m": self.m,
            "f_plus": [render(e) for e in self.f_plus],
            "f_minus": [render(e) for e in self.f_minus],
            "H": render(self.H),
        }
        if self.B is not None:
            out["B"] = self.B.tolist()
        if self.input is not None:
            out["input"] = [render(e) for e in self.input]
        return out

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"<FilippovSystem{label} n={self.n} m={self.m}>"


def _affine(A_row, b_i) -> Expression:
    e: Expression = Const(0.0)
    for j, a in enumerate(A_row):
        if a != 0.0:
            e = add(e, mul(Const(float(a)), Var("x", j)))
    if b_i != 0.0:
        e = add(e, Const(float(b_i)))
    return e


@dataclass(frozen=True, eq=False)
class PWASystem:
    """``x' = A1 x + b1 + Bu`` if ``h.x > 0``, ``A2 x + b2 + Bu`` if ``h.x < 0``."""

    A1: np.ndarray
    A2: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    h: np.ndarray
    B: Optional[np.ndarray] = None
    input: Optional[tuple] = None
    name: Optional[str] = None

    def __post_init__(self):
        A1 = np.array(self.A1, dtype=float)
        if A1.ndim != 2 or A1.shape[0] != A1.shape[1]:
            raise ModelError(f"field 'A1' must be square, got shape {A1.shape}")
        n = A1.shape[0]
        object.__setattr__(self, "A1", _matrix(A1, (n, n), "A1"))
        object.__setattr__(self, "A2", _matrix(self.A2, (n, n), "A2"))
        object.__setattr__(self, "b1", _matrix(self.b1, (n,), "b1"))
        object.__setattr__(self, "b2", _matrix(self.b2, (n,), "b2"))
        object.__setattr__(self, "h", _matrix(self.h, (n,), "h"))
        if not np.any(self.h):
            raise ModelError("field 'h' must be nonzero")
        if self.B is not None:
            B = np.array(self.B, dtype=float)
            if B.ndim == 1:
                B = B.reshape(n, 1)
            object.__setattr__(self, "B", _matrix(B, (n, B.shape[1] if B.ndim == 2 else 0), "B"))
        if self.input is not None:
            object.__setattr__(self, "input", tuple(self.input))

    @property
    def n(self) -> int:
        return self.A1.shape[0]

    @property
    def m(self) -> int:
        return 0 if self.B is None else self.B.shape[1]

    @property
    def delta_A(self) -> np.ndarray:
        return self.A1 - self.A2

    @property
    def delta_b(self) -> np.ndarray:
        return self.b1 - self.b2

    def to_filippov(self) -> FilippovSystem:
        n = self.n
        f_plus = [_affine(self.A1[i], self.b1[i]) for i in range(n)]
        f_minus = [_affine(self.A2[i], self.b2[i]) for i in range(n)]
        H = _affine(self.h, 0.0)
        return FilippovSystem(f_plus, f_minus, H, m=self.m, B=self.B, input=self.input, name=self.name)

    def with_input(self, input, B=None) -> "PWASystem":
        B = self.B if B is None else B
        if B is None:
            raise ModelError("field 'B' is required to attach an input")
        return PWASystem(self.A1, self.A2, self.b1, self.b2, self.h, B, tuple(input), self.name)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "type": "pwa",
            "A1": self.A1.tolist(),
            "A2": self.A2.tolist(),
            "b1": self.b1.tolist(),
            "b2": self.b2.tolist(),
            "h": self.h.tolist(),
        }
        if self.B is not None:
            out["B"] = self.B.tolist()
        if self.input is not None:
            out["input"] = [e if isinstance(e, str) else render(e) for e in self.input]
        return out


@dataclass(frozen=True, eq=False)
class RelaySystem:
    """``x' = A x - b sgn(c.x)``."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    name: Optional[str] = None

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ModelError(f"field 'A' must be square, got shape {A.shape}")
        n = A.shape[0]
        object.__setattr__(self, "A", _matrix(A, (n, n), "A"))
        object.__setattr__(self, "b", _matrix(self.b, (n,), "b"))
        object.__setattr__(self, "c", _matrix(self.c, (n,), "c"))
        if not np.any(self.c):
            raise ModelError("field 'c' must be nonzero")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def to_pwa(self) -> PWASystem:
        return PWASystem(self.A, self.A, -self.b, self.b, self.c, name=self.name)

    def to_filippov(self) -> FilippovSystem:
        return self.to_pwa().to_filippov()

    def to_dict(self) -> dict:
        return {"type": "relay", "A": self.A.tolist(), "b": self.b.tolist(), "c": self.c.tolist()}


AnySystem = Union[FilippovSystem, PWASystem, RelaySystem]


def as_filippov(system: AnySystem) -> FilippovSystem:
    if isinstance(system, FilippovSystem):
        return system
    return system.to_filippov()


# -- region classification and the Filippov/regularized fields -----------------


def classify_point(sys: FilippovSystem, x, t: float = 0.0, u=None, tol: float = SIGMA_TOL) -> RegionLabel:
    """Region of ``x``: S+, S-, or the crossing/sliding/escaping part of Sigma.

    Sigma membership is ``|H(x)| <= tol * |grad H(x)|``, i.e. a band of width
    about ``tol`` in distance.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    hv = sys.switching(x, t, u)
    g = sys.gradient_H(x, t, u)
    gnorm = float(np.linalg.norm(g))
    band = tol * gnorm
    if hv > band and gnorm > 0:
        return RegionLabel.S_PLUS
    if hv < -band and gnorm > 0:
        return RegionLabel.S_MINUS
    if gnorm == 0.0:
        if abs(hv) <= tol:
            raise DegenerateSwitchingError(f"grad H vanishes on Sigma at x={list(map(float, x))}")
        return RegionLabel.S_PLUS if hv > 0 else RegionLabel.S_MINUS
    lp, lm = sys.lie_derivatives(x, t, u)
    return _sigma_label(lp, lm, tol * gnorm, x)


def _sigma_label(lp: float, lm: float, tol: float, x=None) -> RegionLabel:
    if abs(lp) <= tol and abs(lm) <= tol:
        where = "" if x is None else f" at x={list(map(float, x))}"
        raise TangencyError(f"both Lie derivatives vanish{where}")
    if lp <= 0.0 <= lm:
        return RegionLabel.SLIDING
    if lp > 0.0 and lm < 0.0:
        return RegionLabel.ESCAPING
    return RegionLabel.CROSSING


def sliding_field(sys: FilippovSystem, x, t: float = 0.0, u=None, tol: float = SIGMA_TOL):
    """Filippov sliding vector field and its convex weight ``lambda``.

    ``f_s = (1 - lam) f_plus + lam f_minus`` with ``lam = L+ / (L+ - L-)``,
    the unique combination tangent to Sigma.
    """
    label = classify_point(sys, x, t, u, tol)
    if label is not RegionLabel.SLIDING:
        raise RegionError(f"point is {label.value}, not in the sliding region")
    fp, fm = sys.fields(x, t, u)
    lp, lm = sys.lie_derivatives(x, t, u)
    lam = lp / (lp - lm)
    return (1.0 - lam) * fp + lam * fm, lam


def _weights(sys, phi: TransitionFunction, eps: float, x, t, u):
    if not eps > 0:
        raise ValueError("eps must be positive")
    s = sys.switching(x, t, u) / eps
    p = phi.phi(s)
    return 0.5 * (1.0 + p), 0.5 * (1.0 - p), phi.dphi(s) / (2.0 * eps)


def regularized_field(sys: FilippovSystem, phi: TransitionFunction, eps: float, x, t: float = 0.0, u=None):
    """``alpha f_plus + beta f_minus (+ Bu)`` with ``alpha = (1 + phi(H/eps))/2``."""
    alpha, beta, _ = _weights(sys, phi, eps, x, t, u)
    fp, fm, bu = sys.raw_fields(x, t, u)
    return alpha * fp + beta * fm + bu


@dataclass(frozen=True)
class RegularizedJacobian:
    matrix: np.ndarray
    alpha: float
    beta: float
    gamma: float


def regularized_jacobian(sys: FilippovSystem, phi: TransitionFunction, eps: float, x, t: float = 0.0, u=None) -> RegularizedJacobian:
    """``alpha J+ + beta J- + gamma (f+ - f-) grad H``, ``gamma = phi'(H/eps)/(2 eps)``.

    At the kinks of ``sat`` the right-hand derivative is used.
    """
    alpha, beta, gamma = _weights(sys, phi, eps, x, t, u)
    Jp = sys.jacobian("plus", x, t, u)
    Jm = sys.jacobian("minus", x, t, u)
    M = alpha * Jp + beta * Jm
    if gamma != 0.0:
        M = M + gamma * np.outer(sys.delta_f(x, t, u), sys.gradient_H(x, t, u))
    return RegularizedJacobian(M, alpha, beta, gamma)


# -- definition files --------------------------------------------------------


def _require(d: dict, key: str):
    if key not in d:
        raise ModelError(f"missing field {key!r}")
    return d[key]


def system_from_dict(d: dict, name: Optional[str] = None) -> AnySystem:
    if not isinstance(d, dict):
        raise ModelError("system definition must be a JSON object")
    kind = d.get("type", "filippov")
    if kind == "pwa":
        return PWASystem(
            _require(d, "A1"),
            _require(d, "A2"),
            _require(d, "b1"),
            _require(d, "b2"),
            _require(d, "h"),
            d.get("B"),
            tuple(d["input"]) if d.get("input") is not None else None,
            name,
        )
    if kind == "relay":
        return RelaySystem(_require(d, "A"), _require(d, "b"), _require(d, "c"), name)
    if kind != "filippov":
        raise ModelError(f"field 'type' must be filippov, pwa or relay, got {kind!r}")
    f_plus = _require(d, "f_plus")
    f_minus = _require(d, "f_minus")
    H = _require(d, "H")
    n = d.get("n", len(f_plus))
    if n != len(f_plus):
        raise ModelError(f"field 'f_plus' has length {len(f_plus)}, expected n={n}")
    for key, val in (("f_plus", f_plus), ("f_minus", f_minus)):
        if not isinstance(val, list) or not all(isinstance(v, str) for v in val):
            raise ModelError(f"field {key!r} must be a list of expression strings")
    if not isinstance(H, str):
        raise ModelError("field 'H' must be an expression string")
    m = int(d.get("m", 0))
    input_exprs = d.get("input")
    return FilippovSystem(f_plus, f_minus, H, m=m, B=d.get("B"), input=input_exprs, name=name)


def system_to_dict(system: AnySystem) -> dict:
    return system.to_dict()


def load_system(path: Union[str, os.PathLike]) -> AnySystem:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ModelError(f"cannot read system file {os.fspath(path)!r}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ModelError(f"system file {os.fspath(path)!r} is not valid JSON: {exc}") from exc
    return system_from_dict(data, name=os.path.splitext(os.path.basename(os.fspath(path)))[0])
