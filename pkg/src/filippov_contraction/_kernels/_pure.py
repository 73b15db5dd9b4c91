"""Pure-Python kernels. Reference implementation for the compiled backend.

Small dense matrices are handled as lists of lists; Python float arithmetic
on lists is much faster than element access into tiny numpy arrays.
"""

from __future__ import annotations

import math

import numpy as np

from ..expr import (
    OP_ABS,
    OP_ADD,
    OP_CONST,
    OP_COS,
    OP_DIV,
    OP_DSAT,
    OP_EXP,
    OP_MUL,
    OP_NEG,
    OP_POW,
    OP_SAT,
    OP_SIGN,
    OP_SIN,
    OP_SQRT,
    OP_SUB,
    OP_T,
    OP_TANH,
    OP_U,
    OP_X,
    Program,
)
from ._errors import NonFiniteStateError, StepUnderflowError

MODE_PLUS, MODE_MINUS, MODE_SLIDING, MODE_REGULARIZED = 0, 1, 2, 3
PHI_SAT, PHI_CUBIC = 0, 1
DPHI_MAX = (1.0, 1.5)

# -- symmetric eigenproblem ----------------------------------------------------


def jacobi_eigh(S, tol: float = 1e-12, max_sweeps: int = 100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(w, V)`` with eigenvalues ascending and eigenvectors in the
    columns of ``V``. Iterates until the off-diagonal Frobenius norm is at
    most ``tol`` times the full Frobenius norm.
    """
    a = [list(map(float, row)) for row in np.asarray(S, dtype=float)]
    n = len(a)
    v = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
    fro = math.sqrt(sum(x * x for row in a for x in row))
    for _ in range(max_sweeps):
        off = 0.0
        for i in range(n):
            row = a[i]
            for j in range(n):
                if i != j:
                    off += row[j] * row[j]
        if math.sqrt(off) <= tol * fro:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p][q]
                if apq == 0.0:
                    continue
                tau = (a[q][q] - a[p][p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    ak = a[k]
                    akp, akq = ak[p], ak[q]
                    ak[p] = c * akp - s * akq
                    ak[q] = s * akp + c * akq
                ap, aq = a[p], a[q]
                for k in range(n):
                    apk, aqk = ap[k], aq[k]
                    ap[k] = c * apk - s * aqk
                    aq[k] = s * apk + c * aqk
                for k in range(n):
                    vk = v[k]
                    vkp, vkq = vk[p], vk[q]
                    vk[p] = c * vkp - s * vkq
                    vk[q] = s * vkp + c * vkq
    w = np.array([a[i][i] for i in range(n)])
    order = np.argsort(w, kind="stable")
    return w[order], np.array(v)[:, order]


def sym_max_eig(S) -> float:
    return float(jacobi_eigh(S)[0][-1])


# -- matrix measures of an (already weighted) matrix -------------------------


def mu1(A) -> float:
    a = np.asarray(A, dtype=float).tolist()
    n = len(a)
    best = -math.inf
    for j in range(n):
        s = a[j][j]
        for i in range(n):
            if i != j:
                s += abs(a[i][j])
        best = max(best, s)
    return best


def muinf(A) -> float:
    a = np.asarray(A, dtype=float).tolist()
    n = len(a)
    best = -math.inf
    for i in range(n):
        row = a[i]
        s = row[i]
        for j in range(n):
            if i != j:
                s += abs(row[j])
        best = max(best, s)
    return best


def mu2(A) -> float:
    A = np.asarray(A, dtype=float)
    return sym_max_eig(0.5 * (A + A.T))


def norm1(A) -> float:
    return float(np.abs(np.asarray(A, dtype=float)).sum(axis=0).max())


def norminf(A) -> float:
    return float(np.abs(np.asarray(A, dtype=float)).sum(axis=1).max())


def norm2(A) -> float:
    A = np.asarray(A, dtype=float)
    return math.sqrt(max(sym_max_eig(A.T @ A), 0.0))


# -- expression programs -----------------------------------------------------

_UNARY_SRC = {
    OP_SIN: "_sin({})",
    OP_COS: "_cos({})",
    OP_EXP: "_exp({})",
    OP_SQRT: "_sqrt({})",
    OP_ABS: "abs({})",
    OP_TANH: "_tanh({})",
    OP_SAT: "(1.0 if {0} > 1.0 else (-1.0 if {0} < -1.0 else {0}))",
    OP_SIGN: "(1.0 if {0} >= 0.0 else -1.0)",
    OP_DSAT: "(1.0 if -1.0 <= {0} < 1.0 else 0.0)",
}
_BINARY_SRC = {OP_ADD: "+", OP_SUB: "-", OP_MUL: "*", OP_DIV: "/"}
_NAMESPACE = {
    "_sin": math.sin,
    "_cos": math.cos,
    "_exp": math.exp,
    "_sqrt": math.sqrt,
    "_tanh": math.tanh,
}


def program_source(prog: Program) -> str:
    """Python source for one program over names ``t``, ``x``, ``u``.

    Operands that are referenced more than once (sat, sign, dsat) are bound
    to temporaries through the walrus operator so they are evaluated once.
    """
    stack: list[str] = []
    tmp = 0
    for op, arg in zip(prog.ops.tolist(), prog.args.tolist()):
        if op == OP_CONST:
            stack.append(repr(float(arg)) if math.isfinite(arg) else f"float('{arg}')")
        elif op == OP_X:
            stack.append(f"x[{int(arg)}]")
        elif op == OP_U:
            stack.append(f"u[{int(arg)}]")
        elif op == OP_T:
            stack.append("t")
        elif op == OP_NEG:
            stack.append(f"(-{stack.pop()})")
        elif op in _BINARY_SRC:
            b = stack.pop()
            a = stack.pop()
            stack.append(f"({a} {_BINARY_SRC[op]} {b})")
        elif op == OP_POW:
            stack.append(f"({stack.pop()} ** {int(arg)})")
        elif op in (OP_SAT, OP_SIGN, OP_DSAT):
            name = f"_v{tmp}"
            tmp += 1
            inner = stack.pop()
            template = _UNARY_SRC[op]
            first = template.replace("{0}", f"({name} := {inner})", 1)
            stack.append(first.replace("{0}", name))
        elif op in _UNARY_SRC:
            stack.append(_UNARY_SRC[op].format(stack.pop()))
        else:
            raise ValueError(f"bad opcode {op}")
    (src,) = stack
    return src


class ProgramSet:
    """A vector of programs evaluated together: ``evaluate(t, x, u) -> array``.

    Domain errors (division by zero, sqrt of a negative) produce NaN/inf
    entries instead of raising, matching the compiled backend's IEEE
    behaviour closely enough for callers that check finiteness.
    """

    def __init__(self, programs):
        self.programs = list(programs)
        self.size = len(self.programs)
        srcs = [program_source(p) for p in self.programs]
        ns = dict(_NAMESPACE)
        code = "def _f(t, x, u):\n    return [" + ", ".join(srcs) + "]\n"
        exec(compile(code, "<programset>", "exec"), ns)
        self._f = ns["_f"]
        self._singles = []
        for s in srcs:
            single = dict(_NAMESPACE)
            exec(compile(f"def _g(t, x, u):\n    return {s}\n", "<program>", "exec"), single)
            self._singles.append(single["_g"])

    def call(self, t: float, x, u) -> list:
        try:
            return self._f(t, x, u)
        except (ArithmeticError, ValueError):
            out = []
            for g in self._singles:
                try:
                    out.append(float(g(t, x, u)))
                except ZeroDivisionError:
                    out.append(math.inf)
                except (ArithmeticError, ValueError):
                    out.append(math.nan)
            return out

    def evaluate(self, t: float, x, u=()) -> np.ndarray:
        xs = np.asarray(x, dtype=float).tolist()
        us = np.asarray(u, dtype=float).tolist()
        return np.array(self.call(float(t), xs, us), dtype=float)


def _phi(kind: int, s: float) -> float:
    if s >= 1.0:
        return 1.0
    if s <= -1.0:
        return -1.0
    if kind == PHI_SAT:
        return s
    return 0.5 * (3.0 * s - s * s * s)


class FieldEvaluator:
    """Fast vector-field evaluation and RK4 stepping for one bimodal system.

    Modes: 0 plus, 1 minus, 2 sliding (Filippov convex combination),
    3 regularized (needs ``eps`` and ``phi``).
    """

    def __init__(self, n, m, fplus, fminus, H, gradH, inputs=None, B=None):
        self.n = int(n)
        self.m = int(m)
        self._fp = fplus.call
        self._fm = fminus.call
        self._h = H.call
        self._g = gradH.call
        self._in = inputs.call if inputs is not None else None
        if B is not None and self.m > 0:
            self._B = np.asarray(B, dtype=float).reshape(self.n, self.m).tolist()
        else:
            self._B = None
        self._zero_u = [0.0] * self.m

    # internal helpers on lists

    def _u(self, t):
        if self._in is None:
            return self._zero_u
        return self._in(t, (), ())

    def _bu(self, u):
        if self._B is None:
            return None
        return [sum(bij * uj for bij, uj in zip(row, u)) for row in self._B]

    def _rhs(self, mode, t, x, eps, phi):
        u = self._u(t)
        bu = self._bu(u)
        if mode == MODE_PLUS:
            f = self._fp(t, x, u)
        elif mode == MODE_MINUS:
            f = self._fm(t, x, u)
        elif mode == MODE_SLIDING:
            fp = self._fp(t, x, u)
            fm = self._fm(t, x, u)
            if bu is not None:
                fp = [a + b for a, b in zip(fp, bu)]
                fm = [a + b for a, b in zip(fm, bu)]
            g = self._g(t, x, u)
            lp = sum(gi * fi for gi, fi in zip(g, fp))
            lm = sum(gi * fi for gi, fi in zip(g, fm))
            lam = lp / (lp - lm)
            return [(1.0 - lam) * a + lam * b for a, b in zip(fp, fm)]
        else:
            fp = self._fp(t, x, u)
            fm = self._fm(t, x, u)
            ph = _phi(phi, self._h(t, x, u)[0] / eps)
            alpha = 0.5 * (1.0 + ph)
            beta = 0.5 * (1.0 - ph)
            f = [alpha * a + beta * b for a, b in zip(fp, fm)]
        if bu is not None:
            f = [a + b for a, b in zip(f, bu)]
        return f

    def _rk4(self, mode, t, x, h, eps, phi, k1=None):
        f = self._rhs
        if k1 is None:
            k1 = f(mode, t, x, eps, phi)
        hh = 0.5 * h
        k2 = f(mode, t + hh, [a + hh * b for a, b in zip(x, k1)], eps, phi)
        k3 = f(mode, t + hh, [a + hh * b for a, b in zip(x, k2)], eps, phi)
        k4 = f(mode, t + h, [a + h * b for a, b in zip(x, k3)], eps, phi)
        h6 = h / 6.0
        return [
            xi + h6 * (a + 2.0 * b + 2.0 * c + d)
            for xi, a, b, c, d in zip(x, k1, k2, k3, k4)
        ]

    # public API on numpy arrays

    def input(self, t: float) -> np.ndarray:
        return np.array(self._u(float(t)), dtype=float)

    def rhs(self, mode: int, t: float, x, eps: float = 1.0, phi: int = PHI_SAT) -> np.ndarray:
        return np.array(self._rhs(mode, float(t), np.asarray(x, float).tolist(), eps, phi))

    def rk4(self, mode: int, t: float, x, h: float, eps: float = 1.0, phi: int = PHI_SAT):
        return np.array(
            self._rk4(mode, float(t), np.asarray(x, float).tolist(), float(h), eps, phi)
        )

    def switching(self, t: float, x) -> float:
        xs = np.asarray(x, float).tolist()
        return self._h(float(t), xs, self._u(float(t)))[0]

    def normal_data(self, t: float, x):
        """``(H, L+, L-, |grad H|^2)`` at ``x``; Lie derivatives include ``Bu``."""
        t = float(t)
        xs = np.asarray(x, float).tolist()
        u = self._u(t)
        bu = self._bu(u)
        fp = self._fp(t, xs, u)
        fm = self._fm(t, xs, u)
        if bu is not None:
            fp = [a + b for a, b in zip(fp, bu)]
            fm = [a + b for a, b in zip(fm, bu)]
        g = self._g(t, xs, u)
        lp = sum(gi * fi for gi, fi in zip(g, fp))
        lm = sum(gi * fi for gi, fi in zip(g, fm))
        return self._h(t, xs, u)[0], lp, lm, sum(gi * gi for gi in g)

    def project(self, t: float, x) -> np.ndarray:
        """One Newton step along grad H towards H = 0."""
        t = float(t)
        xs = np.asarray(x, float).tolist()
        u = self._u(t)
        hv = self._h(t, xs, u)[0]
        g = self._g(t, xs, u)
        g2 = sum(gi * gi for gi in g)
        if g2 == 0.0:
            return np.array(xs)
        r = hv / g2
        return np.array([a - r * b for a, b in zip(xs, g)])

    def advance_regularized(
        self,
        t: float,
        x,
        t_end: float,
        h: float,
        eps: float,
        phi: int = PHI_SAT,
        courant: float = 0.5,
        max_steps: int = 100_000_000,
        record: bool = False,
    ):
        """RK4 on the regularized field from ``t`` to exactly ``t_end``.

        Steps are capped at ``min(eps/5, courant * 2 eps / (phi'_max |grad H . df|))``
        near the boundary layer and shortened on approach so a single step cannot
        jump across it. Returns ``(x_end, steps, times, states)``; the last two
        are filled only when ``record`` is true.
        """
        t = float(t)
        xs = np.asarray(x, float).tolist()
        t_end = float(t_end)
        dmax = DPHI_MAX[phi]
        two_eps = 2.0 * eps
        ts: list[float] = []
        states: list[list[float]] = []
        steps = 0
        fp_fn, fm_fn, h_fn, g_fn = self._fp, self._fm, self._h, self._g
        while t < t_end:
            u = self._u(t)
            fp = fp_fn(t, xs, u)
            fm = fm_fn(t, xs, u)
            hv = h_fn(t, xs, u)[0]
            g = g_fn(t, xs, u)
            ph = _phi(phi, hv / eps)
            alpha = 0.5 * (1.0 + ph)
            beta = 0.5 * (1.0 - ph)
            k1 = [alpha * a + beta * b for a, b in zip(fp, fm)]
            bu = self._bu(u)
            if bu is not None:
                k1 = [a + b for a, b in zip(k1, bu)]
            jump = abs(sum(gi * (a - b) for gi, a, b in zip(g, fp, fm)))
            cap = eps / 5.0
            if jump > 0.0:
                cap = min(cap, courant * two_eps / (dmax * jump))
            ahv = abs(hv)
            if ahv < two_eps:
                hs = min(h, cap)
            else:
                speed = abs(sum(gi * fi for gi, fi in zip(g, k1)))
                dist = ahv - two_eps
                hs = min(h, max(dist / speed, cap)) if speed * h > dist else h
            last = False
            if hs >= t_end - t:
                hs = t_end - t
                last = True
            elif hs < 1e-15 * max(1.0, abs(t)):
                raise StepUnderflowError(f"step underflow at t={t!r} (eps={eps!r})")
            xs = self._rk4(MODE_REGULARIZED, t, xs, hs, eps, phi, k1=k1)
            t = t_end if last else t + hs
            steps += 1
            if not all(math.isfinite(v) for v in xs):
                raise NonFiniteStateError(f"non-finite state at t={t!r}")
            if steps > max_steps:
                raise StepUnderflowError(f"step budget {max_steps} exhausted at t={t!r}")
            if record:
                ts.append(t)
                states.append(xs)
        return np.array(xs), steps, ts, states
