# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: Jacobi eigensolver, matrix measures, a postfix
expression VM and RK4 stepping of bimodal vector fields.

Mirrors ``_pure`` function for function; see there for semantics.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, sin, cos, exp, tanh, pow, isfinite, INFINITY
from libc.stdlib cimport malloc, free

from ._errors import NonFiniteStateError, StepUnderflowError

cnp.import_array()

cdef enum:
    OP_CONST = 0
    OP_X = 1
    OP_U = 2
    OP_T = 3
    OP_NEG = 4
    OP_ADD = 5
    OP_SUB = 6
    OP_MUL = 7
    OP_DIV = 8
    OP_POW = 9
    OP_SIN = 10
    OP_COS = 11
    OP_EXP = 12
    OP_SQRT = 13
    OP_ABS = 14
    OP_TANH = 15
    OP_SAT = 16
    OP_SIGN = 17
    OP_DSAT = 18

MODE_PLUS, MODE_MINUS, MODE_SLIDING, MODE_REGULARIZED = 0, 1, 2, 3
PHI_SAT, PHI_CUBIC = 0, 1


# -- symmetric eigenproblem --------------------------------------------------

cdef int _jacobi(double* a, double* v, int n, double tol, int max_sweeps) noexcept nogil:
    cdef int i, j, k, p, q, sweep
    cdef double fro = 0.0, off, apq, tau, t, c, s, akp, akq, apk, aqk
    for i in range(n * n):
        fro += a[i] * a[i]
    fro = sqrt(fro)
    for i in range(n):
        for j in range(n):
            v[i * n + j] = 1.0 if i == j else 0.0
    for sweep in range(max_sweeps):
        off = 0.0
        for i in range(n):
            for j in range(n):
                if i != j:
                    off += a[i * n + j] * a[i * n + j]
        if sqrt(off) <= tol * fro:
            return sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p * n + q]
                if apq == 0.0:
                    continue
                tau = (a[q * n + q] - a[p * n + p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + sqrt(1.0 + tau * tau))
                c = 1.0 / sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    akp = a[k * n + p]
                    akq = a[k * n + q]
                    a[k * n + p] = c * akp - s * akq
                    a[k * n + q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p * n + k]
                    aqk = a[q * n + k]
                    a[p * n + k] = c * apk - s * aqk
                    a[q * n + k] = s * apk + c * aqk
                for k in range(n):
                    akp = v[k * n + p]
                    akq = v[k * n + q]
                    v[k * n + p] = c * akp - s * akq
                    v[k * n + q] = s * akp + c * akq
    return max_sweeps


def jacobi_eigh(S, double tol=1e-12, int max_sweeps=100):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] a = np.array(S, dtype=np.float64, order="C", copy=True)
    cdef int n = a.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] v = np.empty((n, n), dtype=np.float64)
    if n > 0:
        _jacobi(&a[0, 0], &v[0, 0], n, tol, max_sweeps)
    w = np.diagonal(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


cdef double _sym_max_eig(double* a, int n) noexcept nogil:
    cdef double* v = <double*> malloc(n * n * sizeof(double))
    cdef int i
    cdef double best = -INFINITY
    _jacobi(a, v, n, 1e-12, 100)
    for i in range(n):
        if a[i * n + i] > best:
            best = a[i * n + i]
    free(v)
    return best


def sym_max_eig(S):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] a = np.array(S, dtype=np.float64, order="C", copy=True)
    return _sym_max_eig(&a[0, 0], a.shape[0])


def mu1(A):
    cdef double[:, :] a = np.ascontiguousarray(A, dtype=np.float64)
    cdef int n = a.shape[0], i, j
    cdef double s, best = -INFINITY
    for j in range(n):
        s = a[j, j]
        for i in range(n):
            if i != j:
                s += fabs(a[i, j])
        if s > best:
            best = s
    return best


def muinf(A):
    cdef double[:, :] a = np.ascontiguousarray(A, dtype=np.float64)
    cdef int n = a.shape[0], i, j
    cdef double s, best = -INFINITY
    for i in range(n):
        s = a[i, i]
        for j in range(n):
            if i != j:
                s += fabs(a[i, j])
        if s > best:
            best = s
    return best


def mu2(A):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] a = np.ascontiguousarray(A, dtype=np.float64)
    return sym_max_eig(0.5 * (a + a.T))


def norm1(A):
    return float(np.abs(np.asarray(A, dtype=float)).sum(axis=0).max())


def norminf(A):
    return float(np.abs(np.asarray(A, dtype=float)).sum(axis=1).max())


def norm2(A):
    a = np.asarray(A, dtype=float)
    return sqrt(max(sym_max_eig(a.T @ a), 0.0))


# -- expression VM -------------------------------------------------------------

cdef inline double _run(const int* ops, const double* args, int start, int end,
                        double* stack, double t, const double* x, const double* u) noexcept nogil:
    cdef int k, sp = 0, op
    cdef double a, b
    for k in range(start, end):
        op = ops[k]
        if op == OP_CONST:
            stack[sp] = args[k]
            sp += 1
        elif op == OP_X:
            stack[sp] = x[<int> args[k]]
            sp += 1
        elif op == OP_U:
            stack[sp] = u[<int> args[k]]
            sp += 1
        elif op == OP_T:
            stack[sp] = t
            sp += 1
        elif op == OP_NEG:
            stack[sp - 1] = -stack[sp - 1]
        elif op == OP_ADD:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] + stack[sp]
        elif op == OP_SUB:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] - stack[sp]
        elif op == OP_MUL:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] * stack[sp]
        elif op == OP_DIV:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] / stack[sp]
        elif op == OP_POW:
            stack[sp - 1] = pow(stack[sp - 1], args[k])
        else:
            a = stack[sp - 1]
            if op == OP_SIN:
                b = sin(a)
            elif op == OP_COS:
                b = cos(a)
            elif op == OP_EXP:
                b = exp(a)
            elif op == OP_SQRT:
                b = sqrt(a)
            elif op == OP_ABS:
                b = fabs(a)
            elif op == OP_TANH:
                b = tanh(a)
            elif op == OP_SAT:
                b = 1.0 if a > 1.0 else (-1.0 if a < -1.0 else a)
            elif op == OP_SIGN:
                b = 1.0 if a >= 0.0 else -1.0
            else:
                b = 1.0 if (-1.0 <= a and a < 1.0) else 0.0
            stack[sp - 1] = b
    return stack[0]


cdef class ProgramSet:
    cdef int* ops
    cdef double* args
    cdef int* offsets
    cdef double* stack
    cdef readonly int size
    cdef readonly list programs

    def __cinit__(self, programs):
        self.programs = list(programs)
        self.size = len(self.programs)
        cdef int total = 0, depth = 1, i, k, pos = 0
        for p in self.programs:
            total += len(p.ops)
            depth = max(depth, p.depth)
        self.ops = <int*> malloc(max(total, 1) * sizeof(int))
        self.args = <double*> malloc(max(total, 1) * sizeof(double))
        self.offsets = <int*> malloc((self.size + 1) * sizeof(int))
        self.stack = <double*> malloc(depth * sizeof(double))
        self.offsets[0] = 0
        for i, p in enumerate(self.programs):
            ops = p.ops.tolist()
            args = p.args.tolist()
            for k in range(len(ops)):
                self.ops[pos] = ops[k]
                self.args[pos] = args[k]
                pos += 1
            self.offsets[i + 1] = pos

    def __dealloc__(self):
        free(self.ops)
        free(self.args)
        free(self.offsets)
        free(self.stack)

    cdef void eval_into(self, double t, const double* x, const double* u, double* out) noexcept nogil:
        cdef int i
        for i in range(self.size):
            out[i] = _run(self.ops, self.args, self.offsets[i], self.offsets[i + 1],
                          self.stack, t, x, u)

    def evaluate(self, double t, x, u=()):
        cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64).reshape(-1)
        cdef double[::1] uv = np.ascontiguousarray(u, dtype=np.float64).reshape(-1)
        cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(self.size, dtype=np.float64)
        cdef double dummy = 0.0
        cdef const double* xp = &xv[0] if xv.shape[0] > 0 else &dummy
        cdef const double* up = &uv[0] if uv.shape[0] > 0 else &dummy
        if self.size:
            self.eval_into(t, xp, up, &out[0])
        return out

    def call(self, double t, x, u):
        return self.evaluate(t, x, u).tolist()


cdef inline double _phi(int kind, double s) noexcept nogil:
    if s >= 1.0:
        return 1.0
    if s <= -1.0:
        return -1.0
    if kind == 0:
        return s
    return 0.5 * (3.0 * s - s * s * s)


cdef class FieldEvaluator:
    cdef readonly int n, m
    cdef ProgramSet fp_set, fm_set, h_set, g_set, in_set
    cdef bint has_input, has_B
    cdef double* B
    # scratch: u, bu, fp, fm, g, k1..k4, tmp, hbuf
    cdef double* u
    cdef double* bu
    cdef double* fp
    cdef double* fm
    cdef double* g
    cdef double* k1
    cdef double* k2
    cdef double* k3
    cdef double* k4
    cdef double* tmp
    cdef double* xw
    cdef double hbuf[1]

    def __cinit__(self, n, m, fplus, fminus, H, gradH, inputs=None, B=None):
        self.n = n
        self.m = m
        self.fp_set = fplus
        self.fm_set = fminus
        self.h_set = H
        self.g_set = gradH
        self.has_input = inputs is not None
        self.in_set = inputs
        cdef int nn = max(self.n, 1), mm = max(self.m, 1), i
        self.B = <double*> malloc(nn * mm * sizeof(double))
        self.has_B = B is not None and self.m > 0
        if self.has_B:
            flat = np.asarray(B, dtype=float).reshape(-1).tolist()
            for i in range(self.n * self.m):
                self.B[i] = flat[i]
        self.u = <double*> malloc(mm * sizeof(double))
        for i in range(mm):
            self.u[i] = 0.0
        self.bu = <double*> malloc(nn * sizeof(double))
        self.fp = <double*> malloc(nn * sizeof(double))
        self.fm = <double*> malloc(nn * sizeof(double))
        self.g = <double*> malloc(nn * sizeof(double))
        self.k1 = <double*> malloc(nn * sizeof(double))
        self.k2 = <double*> malloc(nn * sizeof(double))
        self.k3 = <double*> malloc(nn * sizeof(double))
        self.k4 = <double*> malloc(nn * sizeof(double))
        self.tmp = <double*> malloc(nn * sizeof(double))
        self.xw = <double*> malloc(nn * sizeof(double))

    def __dealloc__(self):
        free(self.B)
        free(self.u)
        free(self.bu)
        free(self.fp)
        free(self.fm)
        free(self.g)
        free(self.k1)
        free(self.k2)
        free(self.k3)
        free(self.k4)
        free(self.tmp)
        free(self.xw)

    cdef void _load_u(self, double t) noexcept nogil:
        cdef int i, j
        cdef double s
        if self.has_input:
            self.in_set.eval_into(t, self.u, self.u, self.u)
        if self.has_B:
            for i in range(self.n):
                s = 0.0
                for j in range(self.m):
                    s = s + self.B[i * self.m + j] * self.u[j]
                self.bu[i] = s

    cdef void _rhs(self, int mode, double t, const double* x, double eps, int phi,
                   double* out) noexcept nogil:
        cdef int i, n = self.n
        cdef double lp, lm, lam, ph, alpha, beta
        self._load_u(t)
        if mode == 0:
            self.fp_set.eval_into(t, x, self.u, out)
        elif mode == 1:
            self.fm_set.eval_into(t, x, self.u, out)
        elif mode == 2:
            self.fp_set.eval_into(t, x, self.u, self.fp)
            self.fm_set.eval_into(t, x, self.u, self.fm)
            if self.has_B:
                for i in range(n):
                    self.fp[i] = self.fp[i] + self.bu[i]
                    self.fm[i] = self.fm[i] + self.bu[i]
            self.g_set.eval_into(t, x, self.u, self.g)
            lp = 0.0
            lm = 0.0
            for i in range(n):
                lp = lp + self.g[i] * self.fp[i]
            for i in range(n):
                lm = lm + self.g[i] * self.fm[i]
            lam = lp / (lp - lm)
            for i in range(n):
                out[i] = (1.0 - lam) * self.fp[i] + lam * self.fm[i]
            return
        else:
            self.fp_set.eval_into(t, x, self.u, self.fp)
            self.fm_set.eval_into(t, x, self.u, self.fm)
            self.h_set.eval_into(t, x, self.u, self.hbuf)
            ph = _phi(phi, self.hbuf[0] / eps)
            alpha = 0.5 * (1.0 + ph)
            beta = 0.5 * (1.0 - ph)
            for i in range(n):
                out[i] = alpha * self.fp[i] + beta * self.fm[i]
        if self.has_B:
            for i in range(n):
                out[i] = out[i] + self.bu[i]

    cdef void _rk4(self, int mode, double t, double* x, double h, double eps, int phi,
                   bint have_k1) noexcept nogil:
        # in place on x; k1 must already hold f(t, x) when have_k1
        cdef int i, n = self.n
        cdef double hh = 0.5 * h, h6 = h / 6.0
        if not have_k1:
            self._rhs(mode, t, x, eps, phi, self.k1)
        for i in range(n):
            self.tmp[i] = x[i] + hh * self.k1[i]
        self._rhs(mode, t + hh, self.tmp, eps, phi, self.k2)
        for i in range(n):
            self.tmp[i] = x[i] + hh * self.k2[i]
        self._rhs(mode, t + hh, self.tmp, eps, phi, self.k3)
        for i in range(n):
            self.tmp[i] = x[i] + h * self.k3[i]
        self._rhs(mode, t + h, self.tmp, eps, phi, self.k4)
        for i in range(n):
            x[i] = x[i] + h6 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i])

    cdef void _copy_in(self, x):
        cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64).reshape(-1)
        cdef int i
        for i in range(self.n):
            self.xw[i] = xv[i]

    cdef _copy_out(self, double* src):
        cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(self.n, dtype=np.float64)
        cdef int i
        for i in range(self.n):
            out[i] = src[i]
        return out

    def input(self, double t):
        self._load_u(t)
        return np.array([self.u[i] for i in range(self.m)], dtype=float)

    def rhs(self, int mode, double t, x, double eps=1.0, int phi=0):
        self._copy_in(x)
        self._rhs(mode, t, self.xw, eps, phi, self.k4)
        return self._copy_out(self.k4)

    def rk4(self, int mode, double t, x, double h, double eps=1.0, int phi=0):
        self._copy_in(x)
        self._rk4(mode, t, self.xw, h, eps, phi, False)
        return self._copy_out(self.xw)

    def switching(self, double t, x):
        self._copy_in(x)
        self._load_u(t)
        self.h_set.eval_into(t, self.xw, self.u, self.hbuf)
        return self.hbuf[0]

    def normal_data(self, double t, x):
        cdef int i
        cdef double lp = 0.0, lm = 0.0, g2 = 0.0
        self._copy_in(x)
        self._load_u(t)
        self.fp_set.eval_into(t, self.xw, self.u, self.fp)
        self.fm_set.eval_into(t, self.xw, self.u, self.fm)
        if self.has_B:
            for i in range(self.n):
                self.fp[i] = self.fp[i] + self.bu[i]
                self.fm[i] = self.fm[i] + self.bu[i]
        self.g_set.eval_into(t, self.xw, self.u, self.g)
        for i in range(self.n):
            lp = lp + self.g[i] * self.fp[i]
        for i in range(self.n):
            lm = lm + self.g[i] * self.fm[i]
        for i in range(self.n):
            g2 = g2 + self.g[i] * self.g[i]
        self.h_set.eval_into(t, self.xw, self.u, self.hbuf)
        return self.hbuf[0], lp, lm, g2

    def project(self, double t, x):
        cdef int i
        cdef double g2 = 0.0, r
        self._copy_in(x)
        self._load_u(t)
        self.h_set.eval_into(t, self.xw, self.u, self.hbuf)
        self.g_set.eval_into(t, self.xw, self.u, self.g)
        for i in range(self.n):
            g2 = g2 + self.g[i] * self.g[i]
        if g2 != 0.0:
            r = self.hbuf[0] / g2
            for i in range(self.n):
                self.xw[i] = self.xw[i] - r * self.g[i]
        return self._copy_out(self.xw)

    def advance_regularized(self, double t, x, double t_end, double h, double eps,
                            int phi=0, double courant=0.5, long max_steps=100_000_000,
                            bint record=False):
        cdef int i, n = self.n
        cdef double dmax = 1.0 if phi == 0 else 1.5
        cdef double two_eps = 2.0 * eps
        cdef double hv, ph, alpha, beta, jump, cap, ahv, speed, dist, hs
        cdef long steps = 0
        cdef bint last, finite
        ts = []
        states = []
        self._copy_in(x)
        cdef double* xs = self.xw
        while t < t_end:
            self._load_u(t)
            self.fp_set.eval_into(t, xs, self.u, self.fp)
            self.fm_set.eval_into(t, xs, self.u, self.fm)
            self.h_set.eval_into(t, xs, self.u, self.hbuf)
            self.g_set.eval_into(t, xs, self.u, self.g)
            hv = self.hbuf[0]
            ph = _phi(phi, hv / eps)
            alpha = 0.5 * (1.0 + ph)
            beta = 0.5 * (1.0 - ph)
            for i in range(n):
                self.k1[i] = alpha * self.fp[i] + beta * self.fm[i]
            if self.has_B:
                for i in range(n):
                    self.k1[i] = self.k1[i] + self.bu[i]
            jump = 0.0
            for i in range(n):
                jump = jump + self.g[i] * (self.fp[i] - self.fm[i])
            jump = fabs(jump)
            cap = eps / 5.0
            if jump > 0.0:
                cap = min(cap, courant * two_eps / (dmax * jump))
            ahv = fabs(hv)
            if ahv < two_eps:
                hs = min(h, cap)
            else:
                speed = 0.0
                for i in range(n):
                    speed = speed + self.g[i] * self.k1[i]
                speed = fabs(speed)
                dist = ahv - two_eps
                if speed * h > dist:
                    hs = min(h, max(dist / speed, cap))
                else:
                    hs = h
            last = False
            if hs >= t_end - t:
                hs = t_end - t
                last = True
            elif hs < 1e-15 * max(1.0, fabs(t)):
                raise StepUnderflowError(f"step underflow at t={t!r} (eps={eps!r})")
            self._rk4(3, t, xs, hs, eps, phi, True)
            t = t_end if last else t + hs
            steps += 1
            finite = True
            for i in range(n):
                if not isfinite(xs[i]):
                    finite = False
            if not finite:
                raise NonFiniteStateError(f"non-finite state at t={t!r}")
            if steps > max_steps:
                raise StepUnderflowError(f"step budget {max_steps} exhausted at t={t!r}")
            if record:
                ts.append(t)
                states.append([xs[i] for i in range(n)])
        return self._copy_out(xs), steps, ts, states
