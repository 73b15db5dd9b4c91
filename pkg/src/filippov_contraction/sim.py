"""Event-driven Filippov integration, regularized integration and empirical studies.

Both integrators use fixed-step RK4 on a uniform grid ``t0 + k h``. The
Filippov integrator locates switching events by bisection on the step length,
continues through crossings, and follows sliding arcs with the Filippov
convex combination plus a Newton projection back onto ``Sigma``.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from . import _kernels
from ._kernels import KernelError
from .measures import Metric, vector_norm
from .system import (
    FilippovSystem,
    ModelError,
    RegionLabel,
    TangencyError,
    TransitionFunction,
    as_filippov,
)

__all__ = [
    "SimulationError",
    "EscapingError",
    "SimOptions",
    "Event",
    "Trajectory",
    "DecayReport",
    "SweepRow",
    "SweepReport",
    "EntrainmentReport",
    "integrate_filippov",
    "integrate_regularized",
    "decay_study",
    "epsilon_sweep",
    "entrainment_study",
    "write_trajectory_csv",
    "write_events_csv",
]

PLUS, MINUS, SLIDING = RegionLabel.S_PLUS, RegionLabel.S_MINUS, RegionLabel.SLIDING
_MODE_CODE = {PLUS: _kernels.MODE_PLUS, MINUS: _kernels.MODE_MINUS, SLIDING: _kernels.MODE_SLIDING}

ENTER_SLIDING = "enter-sliding"
EXIT_SLIDING = "exit-sliding"
CROSSING = "crossing"


class SimulationError(RuntimeError):
    pass


class EscapingError(SimulationError):
    """Trajectory reached the escaping region; forward uniqueness is lost."""


@dataclass(frozen=True)
class SimOptions:
    """Integrator settings.

    ``h`` is the RK4 grid step, ``stride`` keeps every stride-th grid point in
    the output, ``event_tol`` is the ``|H|`` target of event bisection and
    ``exit_hysteresis`` the slack on ``lambda`` before a sliding arc ends.
    ``courant`` scales the boundary-layer step cap of regularized runs.
    """

    h: float = 1e-3
    stride: int = 1
    event_tol: float = 1e-12
    exit_hysteresis: float = 1e-10
    courant: float = 0.5
    max_steps: int = 100_000_000
    max_events_per_instant: int = 16

    def __post_init__(self):
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ValueError("h must be positive")
        if int(self.stride) < 1:
            raise ValueError("stride must be at least 1")
        for name in ("event_tol", "exit_hysteresis", "courant"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class Event:
    t: float
    kind: str
    x: Tuple[float, ...] = ()


@dataclass
class Trajectory:
    """Uniformly sampled solution with per-sample mode labels and events.

    ``dense`` holds ``(times, states, derivatives)`` at every internal step
    (duplicated at events with one-sided derivatives) for Hermite
    interpolation; it is filled only when requested.
    """

    t: np.ndarray
    x: np.ndarray
    modes: List[RegionLabel]
    events: List[Event] = field(default_factory=list)
    steps: int = 0
    dense: Optional[Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]] = None

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def final(self) -> np.ndarray:
        return self.x[-1]

    def interpolate(self, tq) -> np.ndarray:
        """State at arbitrary times from the dense record.

        Cubic Hermite when derivatives are stored, linear otherwise.
        """
        if self.dense is None:
            raise SimulationError("trajectory was integrated without a dense record")
        ts, xs, fs = self.dense
        tq = np.atleast_1d(np.asarray(tq, dtype=float))
        if np.any(tq < ts[0] - 1e-12) or np.any(tq > ts[-1] + 1e-12):
            raise ValueError("query time outside the integration span")
        # last node at or before tq, so duplicated event nodes resolve to the
        # right-hand copy and the interval has positive length
        i = np.searchsorted(ts, tq, side="right") - 1
        last = len(ts) - 2
        while ts[last + 1] <= ts[last] and last > 0:
            last -= 1
        i = np.clip(i, 0, last)
        t0, t1 = ts[i], ts[i + 1]
        dt = t1 - t0
        s = ((tq - t0) / dt)[:, None]
        x0, x1 = xs[i], xs[i + 1]
        if fs is None:
            return (1.0 - s) * x0 + s * x1
        f0, f1 = fs[i] * dt[:, None], fs[i + 1] * dt[:, None]
        s2, s3 = s * s, s * s * s
        return (
            (2 * s3 - 3 * s2 + 1) * x0
            + (s3 - 2 * s2 + s) * f0
            + (-2 * s3 + 3 * s2) * x1
            + (s3 - s2) * f1
        )


# -- helpers ------------------------------------------------------------------------


def _prepare(system, input) -> FilippovSystem:
    sys = as_filippov(system)
    if input is not None:
        if isinstance(input, str):
            input = [input]
        sys = sys.with_input(list(input))
    return sys


def _grid(t_span: Sequence[float], h: float) -> np.ndarray:
    t0, t1 = (float(v) for v in t_span)
    if not t1 > t0:
        raise ValueError("t_span must satisfy t0 < t1")
    steps = int(math.ceil((t1 - t0) / h - 1e-9))
    ts = t0 + h * np.arange(steps + 1)
    ts[-1] = t1
    return ts


def _x0(sys: FilippovSystem, x0) -> np.ndarray:
    x = np.asarray(x0, dtype=float).reshape(-1)
    if x.shape[0] != sys.n:
        raise ModelError(f"initial state has length {x.shape[0]}, expected n={sys.n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("initial state must be finite")
    return x


def _lambda(lp: float, lm: float) -> float:
    den = lp - lm
    if den >= 0.0:
        return math.nan
    return lp / den


class _Filippov:
    """State machine driving one Filippov integration."""

    def __init__(self, sys: FilippovSystem, opts: SimOptions, dense: bool):
        self.sys = sys
        self.ev = sys.evaluator
        self.opts = opts
        self.events: List[Event] = []
        self.dense = dense
        self.nodes_t: List[float] = []
        self.nodes_x: List[np.ndarray] = []
        self.nodes_f: List[np.ndarray] = []
        self.steps = 0

    # classification on Sigma, from the Lie derivatives only
    def _sigma_mode(self, t: float, x: np.ndarray, came_from: Optional[RegionLabel]) -> RegionLabel:
        H, lp, lm, g2 = self.ev.normal_data(t, x)
        if g2 == 0.0:
            raise ModelError(f"grad H vanishes on Sigma at t={t!r}")
        tol = 1e-9 * math.sqrt(g2) * (1.0 + float(np.max(np.abs(x))))
        if abs(lp) <= tol and abs(lm) <= tol:
            raise TangencyError(f"both Lie derivatives vanish at t={t!r}, x={x.tolist()}")
        if lp <= 0.0 <= lm:
            return SLIDING
        if lp > 0.0 and lm < 0.0:
            raise EscapingError(f"escaping region reached at t={t!r}, x={x.tolist()}")
        # crossing: both fields push to the same side
        if lp > 0.0 or lm > 0.0:
            return PLUS
        return MINUS

    def initial_mode(self, t: float, x: np.ndarray) -> Tuple[RegionLabel, np.ndarray]:
        H, _, _, g2 = self.ev.normal_data(t, x)
        band = self.opts.event_tol if g2 == 0.0 else self.opts.event_tol * max(1.0, math.sqrt(g2))
        if H > band:
            return PLUS, x
        if H < -band:
            return MINUS, x
        mode = self._sigma_mode(t, x, None)
        if mode is SLIDING:
            x = self.ev.project(t, x)
        return mode, x

    def _node(self, t: float, x: np.ndarray, mode: RegionLabel):
        if self.dense:
            self.nodes_t.append(t)
            self.nodes_x.append(x.copy())
            self.nodes_f.append(self.ev.rhs(_MODE_CODE[mode], t, x))

    def _locate(self, code: int, t: float, x: np.ndarray, dt: float, g, target: float):
        """Shortest step ``s`` in ``(0, dt]`` with ``g(s)`` past ``target``.

        ``g`` maps the state after a step to a scalar whose sign relative to
        ``target`` flips over ``[0, dt]``. Returns ``(s, x(s))`` on the far side.
        """
        lo, hi = 0.0, dt
        x_hi = self.ev.rk4(code, t, x, dt)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            xm = self.ev.rk4(code, t, x, mid)
            gm = g(t + mid, xm) - target
            if gm > 0.0:
                hi, x_hi = mid, xm
                if gm <= self.opts.event_tol:
                    break
            else:
                lo = mid
                if -gm <= self.opts.event_tol:
                    # close enough from the near side: step just past it
                    hi = mid
                    x_hi = xm
                    break
        return hi, x_hi

    def advance(self, t: float, x: np.ndarray, mode: RegionLabel, t_end: float):
        ev = self.ev
        hyst = self.opts.exit_hysteresis
        stuck = 0
        while t < t_end:
            dt = t_end - t
            if dt <= 1e-15 * max(1.0, abs(t)):
                t = t_end
                break
            code = _MODE_CODE[mode]
            if mode is SLIDING:
                xn = ev.project(t_end, ev.rk4(code, t, x, dt))
                _, lp, lm, _ = ev.normal_data(t_end, xn)
                lam = _lambda(lp, lm)
                if math.isnan(lam):
                    raise EscapingError(f"sliding arc reached the escaping region near t={t_end!r}")
                if -hyst <= lam <= 1.0 + hyst:
                    t, x = t_end, xn
                    self.steps += 1
                    self._node(t, x, mode)
                    continue
                low = lam < -hyst

                def excess(tt, xx, low=low):
                    xx = ev.project(tt, xx)
                    _, a, b, _ = ev.normal_data(tt, xx)
                    lm_ = _lambda(a, b)
                    if math.isnan(lm_):
                        return math.inf
                    return -lm_ if low else lm_

                target = hyst if low else 1.0 + hyst
                s, xs = self._locate(code, t, x, dt, excess, target)
                t, x = t + s, ev.project(t + s, xs)
                self._node(t, x, mode)
                mode = PLUS if low else MINUS
                self.events.append(Event(t, EXIT_SLIDING, tuple(x.tolist())))
                self._node(t, x, mode)
                self.steps += 1
            else:
                sign = 1.0 if mode is PLUS else -1.0
                xn = ev.rk4(code, t, x, dt)
                hn = ev.switching(t_end, xn)
                if sign * hn >= 0.0:
                    t, x = t_end, xn
                    self.steps += 1
                    self._node(t, x, mode)
                    continue
                s, xs = self._locate(code, t, x, dt, lambda tt, xx: -sign * ev.switching(tt, xx), 0.0)
                t, x = t + s, xs
                self._node(t, x, mode)
                new = self._sigma_mode(t, x, mode)
                if new is SLIDING:
                    x = ev.project(t, x)
                    self.events.append(Event(t, ENTER_SLIDING, tuple(x.tolist())))
                elif new is not mode:
                    self.events.append(Event(t, CROSSING, tuple(x.tolist())))
                mode = new
                self._node(t, x, mode)
                self.steps += 1
            if s <= 1e-14 * max(1.0, abs(t)):
                stuck += 1
                if stuck > self.opts.max_events_per_instant:
                    raise SimulationError(f"event chattering at t={t!r}: no progress after {stuck} events")
            else:
                stuck = 0
            if not np.all(np.isfinite(x)):
                raise SimulationError(f"non-finite state at t={t!r}")
        return t, x, mode


def integrate_filippov(
    system,
    x0,
    t_span: Sequence[float],
    input=None,
    opts: Optional[SimOptions] = None,
    dense: bool = False,
) -> Trajectory:
    """Filippov solution from ``x0`` over ``t_span``.

    ``input`` optionally replaces the system's input expressions (functions of
    ``t``). Raises :class:`EscapingError` if the escaping region is reached.
    """
    opts = opts or SimOptions()
    sys = _prepare(system, input)
    x = _x0(sys, x0)
    grid = _grid(t_span, opts.h)
    run = _Filippov(sys, opts, dense)
    t = float(grid[0])
    mode, x = run.initial_mode(t, x)
    run._node(t, x, mode)
    out_t, out_x, out_m = [t], [x.copy()], [mode]
    for k in range(1, len(grid)):
        t, x, mode = run.advance(t, x, mode, float(grid[k]))
        if k % opts.stride == 0 or k == len(grid) - 1:
            out_t.append(float(grid[k]))
            out_x.append(x.copy())
            out_m.append(mode)
    traj = Trajectory(np.array(out_t), np.array(out_x), out_m, run.events, run.steps)
    if dense:
        traj.dense = (np.array(run.nodes_t), np.array(run.nodes_x), np.array(run.nodes_f))
    return traj


def integrate_regularized(
    system,
    phi: Union[TransitionFunction, str],
    eps: float,
    x0,
    t_span: Sequence[float],
    input=None,
    opts: Optional[SimOptions] = None,
    dense: bool = False,
) -> Trajectory:
    """RK4 on ``f_eps`` with a boundary-layer step cap.

    Near the layer the step is ``min(h, eps/5, courant * 2 eps / (phi'_max
    |grad H . (f+ - f-)|))``; the second bound keeps explicit RK4 stable for
    the fast normal dynamics. Samples are labelled plus/minus by ``sign H``
    and sign changes of ``H`` between output samples are recorded as crossings.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    phi = TransitionFunction(phi) if isinstance(phi, str) else phi
    opts = opts or SimOptions()
    sys = _prepare(system, input)
    ev = sys.evaluator
    x = _x0(sys, x0)
    grid = _grid(t_span, opts.h)

    def label(tt, xx):
        return PLUS if ev.switching(tt, xx) >= 0.0 else MINUS

    t = float(grid[0])
    out_t, out_x, out_m = [t], [x.copy()], [label(t, x)]
    events: List[Event] = []
    d_t: List[float] = [t]
    d_x: List = [x.tolist()]
    steps = 0
    budget = opts.max_steps
    for k in range(1, len(grid)):
        t_end = float(grid[k])
        try:
            x, nsteps, ts, xs = ev.advance_regularized(
                t, x, t_end, opts.h, eps, phi.code, opts.courant, budget - steps, dense
            )
        except KernelError as exc:
            raise SimulationError(str(exc)) from exc
        steps += nsteps
        t = t_end
        if dense:
            d_t.extend(ts)
            d_x.extend(xs)
        if k % opts.stride == 0 or k == len(grid) - 1:
            m = label(t, x)
            if m is not out_m[-1]:
                events.append(Event(t, CROSSING, tuple(x.tolist())))
            out_t.append(t)
            out_x.append(x.copy())
            out_m.append(m)
    traj = Trajectory(np.array(out_t), np.array(out_x), out_m, events, steps)
    if dense:
        traj.dense = (np.array(d_t), np.array(d_x, dtype=float).reshape(len(d_t), sys.n), None)
    return traj


# -- studies ----------------------------------------------------------------------------


@dataclass
class DecayReport:
    times: np.ndarray
    distances: np.ndarray
    envelope: np.ndarray
    c: float
    K: float
    metric: Metric
    max_ratio: float
    t_max_ratio: float
    x: Optional[Trajectory] = None
    y: Optional[Trajectory] = None

    @property
    def ratios(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(self.envelope > 0, self.distances / self.envelope, np.where(self.distances > 0, np.inf, 0.0))
        return r

    @property
    def max_violation(self) -> float:
        """``max(0, max_ratio - 1)``."""
        return max(0.0, self.max_ratio - 1.0)

    def summary(self) -> dict:
        return {
            "c": self.c,
            "K": self.K,
            "metric": self.metric.describe(),
            "t0": float(self.times[0]),
            "t1": float(self.times[-1]),
            "initial_distance": float(self.distances[0]),
            "final_distance": float(self.distances[-1]),
            "max_ratio": self.max_ratio,
            "t_max_ratio": self.t_max_ratio,
            "max_violation": self.max_violation,
            "samples": int(self.times.size),
        }


def decay_study(
    system,
    x0,
    y0,
    metric: Metric,
    c: float,
    K: float = 1.0,
    t_span: Sequence[float] = (0.0, 5.0),
    opts: Optional[SimOptions] = None,
    input=None,
) -> DecayReport:
    """Distance between two Filippov solutions against ``K exp(-c (t - t0)) |x0 - y0|``."""
    opts = opts or SimOptions()
    tx = integrate_filippov(system, x0, t_span, input, opts)
    ty = integrate_filippov(system, y0, t_span, input, opts)
    d = np.array([vector_norm(a - b, metric) for a, b in zip(tx.x, ty.x)])
    env = K * np.exp(-c * (tx.t - tx.t[0])) * d[0]
    rep = DecayReport(tx.t, d, env, float(c), float(K), metric, 0.0, float(tx.t[0]), tx, ty)
    r = rep.ratios
    k = int(np.argmax(r))
    rep.max_ratio = float(r[k])
    rep.t_max_ratio = float(tx.t[k])
    return rep


@dataclass(frozen=True)
class SweepRow:
    eps: float
    sup_error: float
    ratio: float
    t_sup: float
    steps: int


@dataclass
class SweepReport:
    rows: List[SweepRow]
    phi: str
    metric: Metric

    @property
    def ratios(self) -> np.ndarray:
        return np.array([r.ratio for r in self.rows])

    @property
    def ratio_band(self) -> float:
        """``max / min`` of ``sup_error / eps`` over the sweep."""
        r = self.ratios
        return float(r.max() / r.min()) if r.min() > 0 else math.inf

    @property
    def within_band(self) -> bool:
        """All ratios within a factor 3 of their median."""
        r = self.ratios
        med = float(np.median(r))
        return bool(med > 0 and np.all(r <= 3.0 * med) and np.all(r >= med / 3.0))

    @property
    def monotone(self) -> bool:
        """Errors shrink with eps (10% slack)."""
        errs = [r.sup_error for r in self.rows]
        return all(b <= 1.1 * a for a, b in zip(errs, errs[1:]))

    def summary(self) -> dict:
        return {
            "phi": self.phi,
            "metric": self.metric.describe(),
            "rows": [
                {"eps": r.eps, "sup_error": r.sup_error, "ratio": r.ratio, "t_sup": r.t_sup, "steps": r.steps}
                for r in self.rows
            ],
            "ratio_band": self.ratio_band,
            "within_3x_of_median": self.within_band,
            "monotone": self.monotone,
        }


def epsilon_sweep(
    system,
    phi: Union[TransitionFunction, str],
    eps_list: Sequence[float],
    x0,
    t_span: Sequence[float] = (0.0, 1.0),
    opts: Optional[SimOptions] = None,
    metric: Optional[Metric] = None,
    input=None,
) -> SweepReport:
    """``sup_t |x_eps(t) - x(t)|`` for decreasing ``eps``.

    The supremum is taken over every internal step of the regularized run (the
    boundary-layer transient lasts only ``O(eps)``), with the Filippov
    reference evaluated there by cubic Hermite interpolation of its steps.
    """
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 3:
        raise ValueError("eps_list needs at least 3 entries")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])) or eps_list[-1] <= 0:
        raise ValueError("eps_list must be positive and strictly decreasing")
    phi = TransitionFunction(phi) if isinstance(phi, str) else phi
    metric = metric or Metric("l1")
    opts = opts or SimOptions()
    ref = integrate_filippov(system, x0, t_span, input, opts, dense=True)
    rows = []
    for eps in eps_list:
        reg = integrate_regularized(system, phi, eps, x0, t_span, input, opts, dense=True)
        ts, xs, _ = reg.dense
        xr = ref.interpolate(ts)
        errs = np.array([vector_norm(a - b, metric) for a, b in zip(xs, xr)])
        k = int(np.argmax(errs))
        rows.append(SweepRow(eps, float(errs[k]), float(errs[k] / eps), float(ts[k]), reg.steps))
    return SweepReport(rows, phi.kind, metric)


@dataclass
class EntrainmentReport:
    period: float
    t_tail: float
    pairwise_distance: float
    period_mismatch: float
    trajectories: List[Trajectory]
    metric: Metric

    def summary(self) -> dict:
        return {
            "period": self.period,
            "tail_start": self.t_tail,
            "max_pairwise_distance": self.pairwise_distance,
            "max_period_mismatch": self.period_mismatch,
            "initial_conditions": len(self.trajectories),
            "metric": self.metric.describe(),
        }


def entrainment_study(
    system,
    period: float,
    ics: Sequence,
    t_span: Sequence[float] = (0.0, 10.0),
    opts: Optional[SimOptions] = None,
    input=None,
    metric: Optional[Metric] = None,
) -> EntrainmentReport:
    """Convergence of several solutions to one ``period``-periodic orbit.

    The first half of ``t_span`` is discarded as transient. Reports the max
    pairwise distance on the tail and ``max |x(t + T) - x(t)|`` over tail
    times with ``t + T`` still in the span.
    """
    if not period > 0:
        raise ValueError("period must be positive")
    ics = [np.asarray(ic, dtype=float) for ic in ics]
    if not ics:
        raise ValueError("at least one initial condition is required")
    metric = metric or Metric("l1")
    opts = opts or SimOptions()
    trajs = [integrate_filippov(system, ic, t_span, input, opts) for ic in ics]
    t = trajs[0].t
    t_tail = 0.5 * (t[0] + t[-1])
    tail = t >= t_tail - 1e-12
    pair = 0.0
    for a, b in itertools.combinations(trajs, 2):
        d = max(vector_norm(p - q, metric) for p, q in zip(a.x[tail], b.x[tail]))
        pair = max(pair, d)
    mism = 0.0
    valid = tail & (t + period <= t[-1] + 1e-12)
    if not np.any(valid):
        raise ValueError("span too short: tail shorter than one period")
    dt = t[1] - t[0]
    shift = period / dt
    for tr in trajs:
        if abs(shift - round(shift)) < 1e-6 and np.allclose(np.diff(t[:-1]), dt, rtol=0, atol=1e-9):
            s = int(round(shift))
            idx = np.flatnonzero(valid)
            idx = idx[idx + s < len(t)]
            later = tr.x[idx + s]
        else:
            idx = np.flatnonzero(valid)
            later = np.stack([np.interp(t[idx] + period, t, tr.x[:, j]) for j in range(tr.n)], axis=1)
        d = max(vector_norm(p - q, metric) for p, q in zip(tr.x[idx], later))
        mism = max(mism, d)
    return EntrainmentReport(float(period), float(t_tail), float(pair), float(mism), trajs, metric)


# -- CSV output -------------------------------------------------------------------------


def write_trajectory_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"x{i + 1}" for i in range(traj.n)] + ["mode"])
        for t, x, m in zip(traj.t, traj.x, traj.modes):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in x] + [m.value])


def write_events_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "kind"])
        for e in traj.events:
            w.writerow([repr(float(e.t)), e.kind])
