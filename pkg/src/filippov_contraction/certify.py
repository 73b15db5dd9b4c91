"""Sampled contraction certificates for bimodal Filippov, PWA and relay systems.

Conditions are checked on a grid over a user-declared box: the two mode
Jacobian measures must be uniformly negative on the closures of ``S+`` and
``S-`` and the rank-one jump ``(f+ - f-) grad H`` must have zero measure on
``Sigma``. A passing certificate means "certified on the sampled set"; forward
invariance of the box is assumed, not checked.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from .measures import (
    Metric,
    MetricError,
    is_spd,
    lmi_check,
    matrix_measure,
    rank1_measure,
)
from .system import (
    SIGMA_TOL,
    FilippovSystem,
    ModelError,
    PWASystem,
    RelaySystem,
    TransitionFunction,
    as_filippov,
)

__all__ = [
    "PASS_MARGIN",
    "CertificationError",
    "EmptyRegionError",
    "Domain",
    "ConditionResult",
    "Certificate",
    "RankOneVerdict",
    "PavlovReport",
    "NoLimitCycleReport",
    "MetricSearchResult",
    "sample_sigma",
    "check_mode_contraction",
    "check_jump_condition",
    "rank1_zero_condition",
    "certify_filippov",
    "certify_pwa",
    "certify_relay",
    "certify",
    "check_pavlov",
    "planar_no_limit_cycle",
    "search_metric",
]

#: required margin for every passing condition
PASS_MARGIN = 1e-9
#: |H| target of the Sigma bisection
SIGMA_BISECT_TOL = 1e-12
JITTER = 1e-7

CERTIFIED = "certified"
REFUTED = "refuted-at-witness"
INCONCLUSIVE = "inconclusive"

ASSUMPTIONS = (
    "conditions verified on the sampled set only",
    "forward invariance of the box is assumed, not verified",
    "box is convex, so K = 1",
)


class CertificationError(ValueError):
    pass


class EmptyRegionError(CertificationError):
    """The box contains no sample of the region a condition lives on."""


def default_seed() -> int:
    raw = os.environ.get("FILIPPOV_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise CertificationError(f"FILIPPOV_SEED must be an integer, got {raw!r}") from None


class Domain:
    """Axis-aligned box with a sampling resolution and a jitter seed.

    Interior grid nodes are perturbed by up to ``1e-7`` of a cell so that no
    sample sits exactly on a measure-zero kink set; nodes on the box faces
    stay on the faces so that extremal values on the boundary are reached.
    """

    def __init__(self, lower: Sequence[float], upper: Sequence[float], samples: int = 41, seed: Optional[int] = None):
        lo = np.array(lower, dtype=float).reshape(-1)
        hi = np.array(upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape or lo.size == 0:
            raise CertificationError("box bounds must be non-empty and of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise CertificationError("box bounds must be finite")
        if np.any(lo >= hi):
            raise CertificationError("box requires lower < upper on every axis")
        if int(samples) < 3:
            raise CertificationError("samples per axis must be at least 3")
        self.lower = lo
        self.upper = hi
        self.samples = int(samples)
        self.seed = default_seed() if seed is None else int(seed)

    @classmethod
    def parse(cls, text: str, samples: int = 41, seed: Optional[int] = None) -> "Domain":
        """Box from ``lo:hi[,lo:hi...]``."""
        lows, highs = [], []
        for part in text.split(","):
            bits = part.split(":")
            if len(bits) != 2:
                raise CertificationError(f"bad box interval {part!r}, expected lo:hi")
            try:
                lows.append(float(bits[0]))
                highs.append(float(bits[1]))
            except ValueError:
                raise CertificationError(f"bad box interval {part!r}, expected numbers") from None
        return cls(lows, highs, samples, seed)

    @property
    def n(self) -> int:
        return self.lower.size

    def axes(self) -> List[np.ndarray]:
        return [np.linspace(a, b, self.samples) for a, b in zip(self.lower, self.upper)]

    def lattice(self) -> np.ndarray:
        """Unperturbed grid nodes, shape ``(samples**n, n)``, C order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def points(self) -> np.ndarray:
        """Jittered grid nodes (deterministic for a given seed)."""
        pts = self.lattice()
        cell = (self.upper - self.lower) / (self.samples - 1)
        rng = np.random.default_rng(self.seed)
        offs = rng.uniform(-1.0, 1.0, size=pts.shape) * (JITTER * cell)
        interior = (pts > self.lower) & (pts < self.upper)
        return np.where(interior, pts + offs, pts)

    def describe(self) -> dict:
        return {
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "samples_per_axis": self.samples,
            "seed": self.seed,
            "jitter": JITTER,
        }

    def __repr__(self) -> str:
        box = ",".join(f"{a:g}:{b:g}" for a, b in zip(self.lower, self.upper))
        return f"Domain({box}, samples={self.samples}, seed={self.seed})"


@dataclass
class ConditionResult:
    """One checked inequality ``value <= threshold``.

    ``passed`` is ``None`` when the condition could not be evaluated.
    """

    name: str
    value: Optional[float]
    threshold: float
    passed: Optional[bool]
    witness: Optional[List[float]] = None
    samples: int = 0
    rate: Optional[float] = None
    note: str = ""

    @property
    def margin(self) -> Optional[float]:
        return None if self.value is None else self.threshold - self.value

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "threshold": self.threshold,
            "margin": self.margin,
            "passed": self.passed,
            "witness": self.witness,
            "samples": self.samples,
            "rate": self.rate,
            "note": self.note,
        }


@dataclass
class Certificate:
    kind: str
    metric: Metric
    conditions: List[ConditionResult]
    c1: Optional[float]
    c2: Optional[float]
    domain: Optional[Domain] = None
    K: float = 1.0
    system: Optional[str] = None

    @property
    def c(self) -> Optional[float]:
        if self.c1 is None or self.c2 is None:
            return None
        return min(self.c1, self.c2)

    @property
    def verdict(self) -> str:
        if any(cond.passed is False for cond in self.conditions):
            return REFUTED
        if any(cond.passed is None for cond in self.conditions):
            return INCONCLUSIVE
        return CERTIFIED

    @property
    def certified(self) -> bool:
        return self.verdict == CERTIFIED

    def condition(self, name: str) -> ConditionResult:
        for cond in self.conditions:
            if cond.name == name:
                return cond
        raise KeyError(name)

    @property
    def worst_margin(self) -> Optional[float]:
        margins = [c.margin for c in self.conditions if c.margin is not None]
        return min(margins) if margins else None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "system": self.system,
            "metric": self.metric.describe(),
            "domain": None if self.domain is None else self.domain.describe(),
            "conditions": [c.to_dict() for c in self.conditions],
            "rates": {"c1": self.c1, "c2": self.c2, "c": self.c, "K": self.K},
            "verdict": self.verdict,
            "assumptions": list(ASSUMPTIONS),
        }


# -- sampling helpers ----------------------------------------------------------


def _lex_argmax(values: np.ndarray, points: np.ndarray) -> int:
    """Index of the max value; ties broken by smallest point, lexicographically."""
    best = np.max(values)
    idx = np.flatnonzero(values == best)
    if idx.size == 1:
        return int(idx[0])
    keys = [points[idx, k] for k in range(points.shape[1] - 1, -1, -1)]
    return int(idx[np.lexsort(keys)[0]])


def _bisect(H: Callable[[np.ndarray], float], a: np.ndarray, b: np.ndarray, ha: float, hb: float) -> np.ndarray:
    for _ in range(200):
        mid = 0.5 * (a + b)
        hm = H(mid)
        if abs(hm) <= SIGMA_BISECT_TOL or np.array_equal(mid, a) or np.array_equal(mid, b):
            return mid
        if (hm < 0.0) == (ha < 0.0):
            a, ha = mid, hm
        else:
            b, hb = mid, hm
    return a if abs(ha) <= abs(hb) else b


def sample_sigma(H: Callable[[np.ndarray], float], domain: Domain) -> np.ndarray:
    """Points of ``{H = 0}`` in the box, found by bisection along grid lines.

    ``H`` maps a state vector to a float. Returns a ``(k, n)`` array sorted
    lexicographically with duplicates removed (possibly empty).
    """
    lat = domain.lattice()
    N, n = domain.samples, domain.n
    hv = np.array([H(p) for p in lat]).reshape((N,) * n)
    pts = lat.reshape((N,) * n + (n,))
    found = [lat[i] for i in np.flatnonzero(hv.reshape(-1) == 0.0)]
    for axis in range(n):
        h0 = np.moveaxis(hv, axis, -1)
        p0 = np.moveaxis(pts, axis, -2)
        lo_h, hi_h = h0[..., :-1], h0[..., 1:]
        mask = ((lo_h < 0.0) & (hi_h > 0.0)) | ((lo_h > 0.0) & (hi_h < 0.0))
        for idx in zip(*np.nonzero(mask)):
            *rest, j = idx
            rest = tuple(rest)
            a = p0[rest + (j,)]
            b = p0[rest + (j + 1,)]
            found.append(_bisect(H, a.copy(), b.copy(), float(lo_h[idx]), float(hi_h[idx])))
    if not found:
        return np.zeros((0, n))
    arr = np.unique(np.array(found), axis=0)
    return arr


def _system_name(system) -> Optional[str]:
    return getattr(system, "name", None)


def _mode_samples(sys: FilippovSystem, mode: str, domain: Domain, t: float, sigma: Optional[np.ndarray]):
    pts = domain.points()
    u = sys.u_at(t)
    keep = []
    for p in pts:
        hv = sys.switching(p, t, u)
        if (mode == "plus" and hv >= -SIGMA_TOL) or (mode == "minus" and hv <= SIGMA_TOL):
            keep.append(p)
    if sigma is not None and len(sigma):
        keep.extend(sigma)
    if not keep:
        return np.zeros((0, sys.n))
    return np.array(keep)


def _sigma_of(sys: FilippovSystem, domain: Domain, t: float) -> np.ndarray:
    u = sys.u_at(t)
    return sample_sigma(lambda p: sys.switching(p, t, u), domain)


# -- the three conditions --------------------------------------------------------


def check_mode_contraction(
    sys: Union[FilippovSystem, PWASystem, RelaySystem],
    mode: str,
    metric: Metric,
    domain: Domain,
    t: float = 0.0,
    sigma: Optional[np.ndarray] = None,
) -> ConditionResult:
    """Sup of ``mu(df/dx)`` over grid samples in the closure of the mode's region.

    Passes when the sup is at most ``-1e-9``; the implied rate is ``-sup``.
    Sigma samples (found by bisection) are included for both modes.
    """
    if mode not in ("plus", "minus"):
        raise ValueError("mode must be 'plus' or 'minus'")
    sys = as_filippov(sys)
    if not metric.dim_ok(sys.n) or domain.n != sys.n:
        raise CertificationError("metric/domain dimension does not match the system")
    if sigma is None:
        sigma = _sigma_of(sys, domain, t)
    pts = _mode_samples(sys, mode, domain, t, sigma)
    name = f"mode_{mode}"
    if len(pts) == 0:
        raise EmptyRegionError(f"box does not intersect the closure of S{'+' if mode == 'plus' else '-'}")
    u = sys.u_at(t)
    vals = np.array([matrix_measure(sys.jacobian(mode, p, t, u), metric) for p in pts])
    k = _lex_argmax(vals, pts)
    sup = float(vals[k])
    return ConditionResult(
        name=name,
        value=sup,
        threshold=-PASS_MARGIN,
        passed=sup <= -PASS_MARGIN,
        witness=pts[k].tolist(),
        samples=len(pts),
        rate=-sup,
    )


def check_jump_condition(
    sys: Union[FilippovSystem, PWASystem, RelaySystem],
    metric: Metric,
    domain: Domain,
    t: float = 0.0,
    sigma: Optional[np.ndarray] = None,
) -> ConditionResult:
    """Max of ``mu((f+ - f-) grad H)`` over Sigma samples; passes when ``<= 1e-9``."""
    sys = as_filippov(sys)
    if sigma is None:
        sigma = _sigma_of(sys, domain, t)
    if len(sigma) == 0:
        raise EmptyRegionError("no Sigma points found in the box")
    u = sys.u_at(t)
    vals = np.array(
        [rank1_measure(sys.delta_f(p, t, u), sys.gradient_H(p, t, u), metric) for p in sigma]
    )
    k = _lex_argmax(vals, sigma)
    val = float(vals[k])
    return ConditionResult(
        name="jump",
        value=val,
        threshold=PASS_MARGIN,
        passed=val <= PASS_MARGIN,
        witness=sigma[k].tolist(),
        samples=len(sigma),
    )


@dataclass(frozen=True)
class RankOneVerdict:
    holds: bool
    value: float
    reason: str
    #: l2 only: whether any weight P can make the measure vanish here
    p_exists: Optional[bool] = None

    def __bool__(self) -> bool:
        return self.holds


def _axis(g: np.ndarray) -> Optional[int]:
    nz = np.flatnonzero(g)
    return int(nz[0]) if nz.size == 1 else None


def rank1_zero_condition(delta_f, grad_H, metric: Metric) -> RankOneVerdict:
    """Structural test of ``mu(delta_f grad_H) = 0`` for the metric's family.

    l1 (weight D) with ``grad_H`` along ``e_k``: ``sign(g_k) df_k < 0`` and
    ``d_k |df_k| >= sum_{i != k} d_i |df_i|``. linf: ``delta_f`` antiparallel
    to ``grad_H``. l2 (weight Q): ``P delta_f = -a grad_H`` with ``a > 0``;
    some P exists iff ``grad_H . delta_f < 0``. When ``grad_H`` is not along
    an axis the closed-form rank-one measure decides.
    """
    df = np.asarray(delta_f, dtype=float).reshape(-1)
    g = np.asarray(grad_H, dtype=float).reshape(-1)
    if df.shape != g.shape:
        raise MetricError("delta_f and grad_H must have equal length")
    value = rank1_measure(df, g, metric)
    if not np.any(df):
        return RankOneVerdict(True, 0.0, "delta_f is zero (continuous field)", True if metric.family == "l2" else None)
    holds = value <= PASS_MARGIN
    k = _axis(g)
    fam = metric.family
    if fam == "l2":
        inner = float(g @ df)
        exists = inner < 0.0
        if holds:
            reason = "P delta_f is a negative multiple of grad_H"
        elif not exists:
            reason = f"grad_H . delta_f = {inner:.6g} >= 0: no weight P can satisfy the condition"
        else:
            reason = "P delta_f is not antiparallel to grad_H for this weight"
        return RankOneVerdict(holds, value, reason, exists)
    if k is None:
        return RankOneVerdict(holds, value, f"closed-form rank-one measure = {value:.6g}")
    d = np.ones_like(df) if metric.weight is None else metric.weight
    s = math.copysign(1.0, g[k])
    if fam == "l1":
        lhs = d[k] * abs(df[k])
        rhs = float(np.sum(np.abs(d * df))) - lhs
        structural = s * df[k] < 0.0 and lhs >= rhs
        reason = (
            f"normal component sign {'ok' if s * df[k] < 0 else 'wrong'}, "
            f"dominance d_k|df_k| = {lhs:.6g} vs {rhs:.6g}"
        )
    else:
        others = np.delete(df, k)
        structural = not np.any(others) and s * df[k] <= 0.0
        reason = "antiparallel to grad_H" if structural else "not antiparallel to grad_H"
    return RankOneVerdict(bool(structural), value, reason)


def _guard(fn, *args, name: str, threshold: float, **kwargs) -> ConditionResult:
    try:
        return fn(*args, **kwargs)
    except EmptyRegionError as exc:
        return ConditionResult(name=name, value=None, threshold=threshold, passed=None, note=str(exc))


def certify_filippov(
    sys: Union[FilippovSystem, PWASystem, RelaySystem],
    metric: Metric,
    domain: Domain,
    t: float = 0.0,
) -> Certificate:
    """Both mode conditions and the jump condition on the sampled box.

    Conditions that have no samples in the box are reported as unevaluated,
    which makes the verdict inconclusive.
    """
    name = _system_name(sys)
    fs = as_filippov(sys)
    if domain.n != fs.n:
        raise CertificationError(f"box has dimension {domain.n}, system has n={fs.n}")
    metric._check(fs.n)
    sigma = _sigma_of(fs, domain, t)
    plus = _guard(check_mode_contraction, fs, "plus", metric, domain, t, sigma, name="mode_plus", threshold=-PASS_MARGIN)
    minus = _guard(check_mode_contraction, fs, "minus", metric, domain, t, sigma, name="mode_minus", threshold=-PASS_MARGIN)
    jump = _guard(check_jump_condition, fs, metric, domain, t, sigma, name="jump", threshold=PASS_MARGIN)
    return Certificate("filippov", metric, [plus, minus, jump], plus.rate, minus.rate, domain, system=name)


def _const_condition(name: str, value: float, threshold: float, rate: bool = False) -> ConditionResult:
    return ConditionResult(
        name=name,
        value=float(value),
        threshold=threshold,
        passed=value <= threshold,
        samples=1,
        rate=-float(value) if rate else None,
        note="constant matrix",
    )


def certify_pwa(p: PWASystem, metric: Metric, domain: Optional[Domain] = None) -> Certificate:
    """``mu(A1) <= -c1``, ``mu(A2) <= -c2``, ``mu(dA x h^T) = 0`` on Sigma, ``mu(db h^T) = 0``.

    The third condition is sampled over Sigma in the box; without a box it is
    evaluated only when ``dA h^T``-terms vanish identically (``dA = 0``) or
    ``dA`` has the form ``g h^T`` (then ``dA x = g (h.x) = 0`` on Sigma).
    """
    metric._check(p.n)
    m1 = matrix_measure(p.A1, metric)
    m2 = matrix_measure(p.A2, metric)
    c1 = _const_condition("mu_A1", m1, -PASS_MARGIN, rate=True)
    c2 = _const_condition("mu_A2", m2, -PASS_MARGIN, rate=True)
    dA = p.delta_A
    if domain is not None:
        if domain.n != p.n:
            raise CertificationError(f"box has dimension {domain.n}, system has n={p.n}")
        sigma = sample_sigma(lambda x: float(p.h @ x), domain)
        if len(sigma) == 0:
            c3 = ConditionResult("jump_A", None, PASS_MARGIN, None, note="no Sigma points found in the box")
        else:
            vals = np.array([rank1_measure(dA @ x, p.h, metric) for x in sigma])
            k = _lex_argmax(vals, sigma)
            c3 = ConditionResult(
                "jump_A", float(vals[k]), PASS_MARGIN, bool(vals[k] <= PASS_MARGIN), sigma[k].tolist(), len(sigma)
            )
    else:
        g = dA @ p.h / float(p.h @ p.h)
        resid = float(np.max(np.abs(dA - np.outer(g, p.h)))) if dA.size else 0.0
        if resid <= 1e-12:
            c3 = ConditionResult("jump_A", 0.0, PASS_MARGIN, True, note="dA = g h^T vanishes on Sigma")
        else:
            c3 = ConditionResult("jump_A", None, PASS_MARGIN, None, note="needs a box to sample Sigma")
    c4 = _const_condition("jump_b", rank1_measure(p.delta_b, p.h, metric), PASS_MARGIN)
    return Certificate("pwa", metric, [c1, c2, c3, c4], c1.rate, c2.rate, domain, system=p.name)


def certify_relay(r: RelaySystem, metric: Metric) -> Certificate:
    """``mu(A) <= -c_bar`` and ``mu(-b c^T) = 0``; rate ``c_bar = -mu(A)``."""
    metric._check(r.n)
    mA = matrix_measure(r.A, metric)
    c1 = _const_condition("mu_A", mA, -PASS_MARGIN, rate=True)
    c2 = _const_condition("jump_b", rank1_measure(-r.b, r.c, metric), PASS_MARGIN)
    return Certificate("relay", metric, [c1, c2], c1.rate, c1.rate, None, system=r.name)


def certify(system, metric: Metric, domain: Optional[Domain] = None) -> Certificate:
    """Dispatch on the system type."""
    if isinstance(system, RelaySystem):
        return certify_relay(system, metric)
    if isinstance(system, PWASystem):
        return certify_pwa(system, metric, domain)
    if domain is None:
        raise CertificationError("a box is required to certify a general Filippov system")
    return certify_filippov(system, metric, domain)


# -- comparison conditions -------------------------------------------------------

PAVLOV_TOL = 1e-9


@dataclass(frozen=True)
class PavlovReport:
    lmi_A1: bool
    lmi_A2: bool
    rank_one_dA: bool
    g: np.ndarray
    dA_residual: float
    jump_b: bool
    db_residual: float
    gamma: int

    @property
    def holds(self) -> bool:
        return self.lmi_A1 and self.lmi_A2 and self.rank_one_dA and self.jump_b

    def to_dict(self) -> dict:
        return {
            "lmi_A1": self.lmi_A1,
            "lmi_A2": self.lmi_A2,
            "rank_one_dA": self.rank_one_dA,
            "g": self.g.tolist(),
            "dA_residual": self.dA_residual,
            "jump_b": self.jump_b,
            "db_residual": self.db_residual,
            "gamma": self.gamma,
            "holds": self.holds,
        }


def check_pavlov(p: PWASystem, P, gamma: int) -> PavlovReport:
    """``P A_i + A_i^T P < 0``, ``dA = g h^T`` and ``P db = -gamma h``."""
    if gamma not in (0, 1):
        raise ValueError("gamma must be 0 or 1")
    P = np.asarray(P, dtype=float)
    if not is_spd(P):
        raise MetricError("P is not symmetric positive definite")
    dA = p.delta_A
    g = dA @ p.h / float(p.h @ p.h)
    r2 = float(np.linalg.norm(dA - np.outer(g, p.h), 2))
    r3 = float(np.linalg.norm(P @ p.delta_b + gamma * p.h))
    return PavlovReport(
        lmi_check(p.A1, P),
        lmi_check(p.A2, P),
        r2 <= PAVLOV_TOL,
        g,
        r2,
        r3 <= PAVLOV_TOL,
        r3,
        gamma,
    )


@dataclass(frozen=True)
class NoLimitCycleReport:
    holds: bool
    trace: float
    cb: float
    reason: str

    def __bool__(self) -> bool:
        return self.holds


def planar_no_limit_cycle(r: RelaySystem, phi: Optional[TransitionFunction] = None) -> NoLimitCycleReport:
    """Divergence test for the regularized planar relay system.

    ``div f_eps = tr A - phi'(c.x/eps) c.b / eps`` is negative everywhere for
    every ``eps > 0`` iff ``tr A < 0`` and ``c.b > 0`` (``phi' >= 0`` with
    ``phi' = 0`` outside the band), so no limit cycles exist.
    """
    if r.n != 2:
        raise ModelError(f"planar test needs n = 2, got n = {r.n}")
    tr = float(np.trace(r.A))
    cb = float(r.c @ r.b)
    holds = tr < 0.0 and cb > 0.0
    if holds:
        reason = "divergence negative everywhere: no limit cycles"
    elif tr >= 0.0:
        reason = "tr A >= 0: divergence not negative outside the band"
    else:
        reason = "c.b <= 0: divergence not negative inside the band"
    return NoLimitCycleReport(holds, tr, cb, reason)


# -- metric search -------------------------------------------------------------------


@dataclass
class MetricSearchResult:
    metric: Optional[Metric]
    certificate: Optional[Certificate]
    objective: float
    evaluations: int
    reason: str

    @property
    def found(self) -> bool:
        return self.metric is not None


class _Problem:
    """Samples precomputed once; objective = worst ``value - threshold``."""

    def __init__(self, system, domain: Optional[Domain]):
        self.system = system
        if isinstance(system, RelaySystem):
            self.mode_mats = [system.A]
            self.rank1 = [(-system.b, system.c)]
            self.normals = [(-2.0 * system.b, system.c)]
            self.n = system.n
            return
        if isinstance(system, PWASystem):
            self.mode_mats = [system.A1, system.A2]
            self.rank1 = [(system.delta_b, system.h)]
            self.normals = []
            self.n = system.n
            if domain is not None:
                sigma = sample_sigma(lambda x: float(system.h @ x), domain)
                self.rank1 += [(system.delta_A @ x, system.h) for x in sigma]
                self.normals = [(system.delta_A @ x + system.delta_b, system.h) for x in sigma]
            else:
                self.normals = [(system.delta_b, system.h)]
            return
        if domain is None:
            raise CertificationError("a box is required to search a metric for a Filippov system")
        fs = as_filippov(system)
        self.n = fs.n
        sigma = _sigma_of(fs, domain, 0.0)
        u = fs.u_at(0.0)
        mats = []
        for mode in ("plus", "minus"):
            pts = _mode_samples(fs, mode, domain, 0.0, sigma)
            mats += [fs.jacobian(mode, p, 0.0, u) for p in pts]
        self.mode_mats = _unique_mats(mats)
        self.rank1 = [(fs.delta_f(p, 0.0, u), fs.gradient_H(p, 0.0, u)) for p in sigma]
        self.normals = list(self.rank1)

    def objective(self, metric: Metric) -> float:
        worst = -math.inf
        for A in self.mode_mats:
            worst = max(worst, matrix_measure(A, metric) + PASS_MARGIN)
        for x, y in self.rank1:
            worst = max(worst, rank1_measure(x, y, metric) - PASS_MARGIN)
        return worst


def _unique_mats(mats):
    if not mats:
        return []
    arr = np.unique(np.array(mats).reshape(len(mats), -1), axis=0)
    n = int(round(math.sqrt(arr.shape[1])))
    return [row.reshape(n, n) for row in arr]


_FAMILY_ALIASES = {
    "l1": "l1",
    "l1-diag": "l1",
    "linf": "linf",
    "inf": "linf",
    "linf-diag": "linf",
    "l2": "l2",
    "l2-factor": "l2",
}


def _metric_from_params(family: str, theta: np.ndarray, n: int) -> Metric:
    if family in ("l1", "linf"):
        return Metric(family, np.exp(theta))
    L = np.zeros((n, n))
    L[np.tril_indices(n)] = theta
    L[np.diag_indices(n)] = np.exp(np.diag(L))
    return Metric.from_P(L @ L.T)


def search_metric(system, family: str, domain: Optional[Domain] = None, budget: int = 200) -> MetricSearchResult:
    """Coordinate descent over a weight family to make all conditions pass.

    l1/linf search the log-diagonal of ``D``; l2 searches the Cholesky factor of
    ``P`` (log-diagonal). Starts at the identity. For l2 a sample with
    ``grad H . delta_f > 0`` on Sigma short-circuits: no ``P`` can exist.
    Returning no metric is not a refutation.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    fam = _FAMILY_ALIASES.get(family.lower())
    if fam is None:
        raise MetricError(f"unknown metric family {family!r}")
    prob = _Problem(system, domain)
    n = prob.n

    def finish(theta, obj, evals, reason):
        metric = _metric_from_params(fam, theta, n)
        if obj <= 0.0:
            return MetricSearchResult(metric, certify(system, metric, domain), obj, evals, reason)
        return MetricSearchResult(None, None, obj, evals, reason)

    if fam == "l2":
        for df, g in prob.normals:
            if np.any(df) and float(np.dot(g, df)) > 0.0:
                inner = float(np.dot(g, df))
                return MetricSearchResult(
                    None,
                    None,
                    math.inf,
                    0,
                    f"no Euclidean weight exists: grad H . delta_f = {inner:.6g} > 0 on Sigma",
                )
    size = n if fam != "l2" else n * (n + 1) // 2
    theta = np.zeros(size)
    best = prob.objective(_metric_from_params(fam, theta, n))
    evals = 1
    if best <= 0.0:
        return finish(theta, best, evals, "identity weight certifies")
    step = 1.0
    while evals < budget and step > 1e-6:
        improved = False
        for i in range(size):
            for sgn in (1.0, -1.0):
                if evals >= budget:
                    break
                trial = theta.copy()
                trial[i] += sgn * step
                try:
                    val = prob.objective(_metric_from_params(fam, trial, n))
                except MetricError:
                    val = math.inf
                evals += 1
                if val < best:
                    theta, best, improved = trial, val, True
                    if best <= 0.0:
                        return finish(theta, best, evals, "coordinate descent found a certifying weight")
                    break
        if not improved:
            step *= 0.5
    return finish(theta, best, evals, "budget exhausted without a certifying weight")
