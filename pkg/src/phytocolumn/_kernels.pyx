# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for the Crank-Nicolson / Strang stepper.

Per-step data are stored row-wise: row ``k`` of the ``b*`` arrays holds the
implicit matrix ``B_k = I - dt/2 L(t_k + dt/2)`` and its Thomas factors
(``cprime``, ``invden``).  The explicit half of Crank-Nicolson is folded in
through ``(I + dt/2 L) = 2I - B``, so one transport step is
``z <- 2 B^{-1} z - z``.

Reaction data live on the quarter-step lattice ``t_k + j dt/4``.
"""
import numpy as np
from libc.math cimport exp, isfinite

__all__ = [
    "BACKEND",
    "factor_tridiagonal",
    "tridiagonal_solve",
    "linear_period",
    "linear_period_adjoint",
    "linear_period_block",
    "nonlinear_period",
]

BACKEND = "cython"


cdef inline void _solve_factored(const double* sub, const double* cp, const double* inv,
                                 const double* rhs, double* x, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    x[0] = rhs[0] * inv[0]
    for i in range(1, n):
        x[i] = (rhs[i] - sub[i] * x[i - 1]) * inv[i]
    for i in range(n - 2, -1, -1):
        x[i] -= cp[i] * x[i + 1]


cdef inline void _solve_factored_transpose(const double* sub, const double* cp, const double* inv,
                                           const double* rhs, double* x, Py_ssize_t n) noexcept nogil:
    # B = L U with L lower bidiagonal (diag = den, sub = sub) and U unit upper (cp)
    cdef Py_ssize_t i
    x[0] = rhs[0]
    for i in range(1, n):
        x[i] = rhs[i] - cp[i - 1] * x[i - 1]
    x[n - 1] *= inv[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = (x[i] - sub[i + 1] * x[i + 1]) * inv[i]


def factor_tridiagonal(double[:, ::1] sub, double[:, ::1] diag, double[:, ::1] sup,
                       double[:, ::1] cprime, double[:, ::1] invden):
    """Thomas-factor every row of a stack of tridiagonal matrices.

    Returns ``(-1, -1)`` on success, else ``(row, index)`` of the first
    nonpositive pivot.
    """
    cdef Py_ssize_t k, i, K = diag.shape[0], n = diag.shape[1]
    cdef double den
    with nogil:
        for k in range(K):
            for i in range(n):
                if i == 0:
                    den = diag[k, 0]
                else:
                    den = diag[k, i] - sub[k, i] * cprime[k, i - 1]
                if not den > 0.0:
                    with gil:
                        return (k, i)
                invden[k, i] = 1.0 / den
                cprime[k, i] = sup[k, i] / den if i < n - 1 else 0.0
    return (-1, -1)


def tridiagonal_solve(double[::1] sub, double[::1] diag, double[::1] sup, double[::1] rhs):
    """Solve one tridiagonal system by the Thomas algorithm (no pivoting)."""
    cdef Py_ssize_t i, n = diag.shape[0]
    cdef double[::1] cp = np.empty(n)
    cdef double[::1] x = np.empty(n)
    cdef double den
    with nogil:
        den = diag[0]
        if den == 0.0:
            with gil:
                raise ZeroDivisionError("zero pivot at row 0")
        cp[0] = sup[0] / den if n > 1 else 0.0
        x[0] = rhs[0] / den
        for i in range(1, n):
            den = diag[i] - sub[i] * cp[i - 1]
            if den == 0.0:
                with gil:
                    raise ZeroDivisionError(f"zero pivot at row {i}")
            cp[i] = sup[i] / den if i < n - 1 else 0.0
            x[i] = (rhs[i] - sub[i] * x[i - 1]) / den
        for i in range(n - 2, -1, -1):
            x[i] -= cp[i] * x[i + 1]
    return np.asarray(x)


def linear_period(double[::1] z, double[:, ::1] bsub, double[:, ::1] bdiag, double[:, ::1] bsup,
                  double[:, ::1] cprime, double[:, ::1] invden,
                  double[:, ::1] e1, double[:, ::1] e2):
    """Advance ``z`` in place through one period of the linear split scheme."""
    cdef Py_ssize_t k, i, K = bsub.shape[0], n = z.shape[0]
    cdef double[::1] x = np.empty(n)
    with nogil:
        for k in range(K):
            for i in range(n):
                z[i] *= e1[k, i]
            _solve_factored(&bsub[k, 0], &cprime[k, 0], &invden[k, 0], &z[0], &x[0], n)
            for i in range(n):
                z[i] = (2.0 * x[i] - z[i]) * e2[k, i]


def linear_period_adjoint(double[::1] w, double[:, ::1] bsub, double[:, ::1] bdiag,
                          double[:, ::1] bsup, double[:, ::1] cprime, double[:, ::1] invden,
                          double[:, ::1] e1, double[:, ::1] e2):
    """Apply the transpose of the period map to ``w`` in place (time reversed)."""
    cdef Py_ssize_t k, i, K = bsub.shape[0], n = w.shape[0]
    cdef double[::1] x = np.empty(n)
    with nogil:
        for k in range(K - 1, -1, -1):
            for i in range(n):
                w[i] *= e2[k, i]
            _solve_factored_transpose(&bsub[k, 0], &cprime[k, 0], &invden[k, 0], &w[0], &x[0], n)
            for i in range(n):
                w[i] = (2.0 * x[i] - w[i]) * e1[k, i]


def linear_period_block(double[:, ::1] Z, double[:, ::1] bsub, double[:, ::1] bdiag,
                        double[:, ::1] bsup, double[:, ::1] cprime, double[:, ::1] invden,
                        double[:, ::1] e1, double[:, ::1] e2):
    """Apply the period map to every row of ``Z`` (shape ``(m, N)``) in place."""
    cdef Py_ssize_t j, m = Z.shape[0]
    for j in range(m):
        linear_period(Z[j], bsub, bdiag, bsup, cprime, invden, e1, e2)


cdef inline void _rates(const double* zz, double* c, double* cum, const double* base,
                        const double* ilin, const double* m, double shade, double a, double b,
                        double h, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    cdef double vprev, vi, light, acc
    if shade != 0.0:
        acc = 0.0
        vprev = m[0] * zz[0]
        for i in range(1, n):
            vi = m[i] * zz[i]
            acc += 0.5 * h * (vprev + vi)
            cum[i] = acc
            vprev = vi
        cum[0] = 0.0
        for i in range(n):
            light = ilin[i] * exp(-shade * cum[i])
            c[i] = a * light / (1.0 + b * light) + base[i]
    else:
        for i in range(n):
            light = ilin[i]
            c[i] = a * light / (1.0 + b * light) + base[i]


cdef inline void _react(double* z, double* tmp, double* c, double* cum,
                        double[:, ::1] base, double[:, ::1] ilin, double[:, ::1] m,
                        double[::1] shade, Py_ssize_t q, double hstep,
                        double a, double b, double h, Py_ssize_t n) noexcept nogil:
    # exponential midpoint over [t_q, t_q + hstep]; lattice row q+1 is the midpoint
    cdef Py_ssize_t i
    _rates(z, c, cum, &base[q, 0], &ilin[q, 0], &m[q, 0], shade[q], a, b, h, n)
    for i in range(n):
        tmp[i] = z[i] * exp(0.5 * hstep * c[i])
    _rates(tmp, c, cum, &base[q + 1, 0], &ilin[q + 1, 0], &m[q + 1, 0], shade[q + 1], a, b, h, n)
    for i in range(n):
        z[i] *= exp(hstep * c[i])


def nonlinear_period(double[::1] z, double[:, ::1] bsub, double[:, ::1] bdiag,
                     double[:, ::1] bsup, double[:, ::1] cprime, double[:, ::1] invden,
                     double[:, ::1] base, double[:, ::1] ilin, double[:, ::1] m,
                     double[::1] shade, double a, double b, double h, double dt,
                     double[:, ::1] snaps, Py_ssize_t stride, double[::1] stats):
    """Advance the nonlinear state ``z`` in place through one full period.

    Each step is reaction(dt/2) - transport(dt) - reaction(dt/2).  After
    every ``stride`` steps the state is copied into the next row of
    ``snaps``.  ``stats`` receives ``(min v, max v)`` over all step ends.

    Returns -1 on success, else the index of the step that produced a
    non-finite value; ``z`` then holds the last finite state.
    """
    cdef Py_ssize_t k, i, q, qend, K = bsub.shape[0], n = z.shape[0], row = 0
    cdef double[::1] x = np.empty(n)
    cdef double[::1] tmp = np.empty(n)
    cdef double[::1] c = np.empty(n)
    cdef double[::1] cum = np.empty(n)
    cdef double[::1] prev = np.empty(n)
    cdef double vmin = np.inf, vmax = -np.inf, vi
    cdef bint bad
    with nogil:
        for k in range(K):
            for i in range(n):
                prev[i] = z[i]
            q = 4 * k
            _react(&z[0], &tmp[0], &c[0], &cum[0], base, ilin, m, shade, q, 0.5 * dt, a, b, h, n)
            _solve_factored(&bsub[k, 0], &cprime[k, 0], &invden[k, 0], &z[0], &x[0], n)
            for i in range(n):
                z[i] = 2.0 * x[i] - z[i]
            _react(&z[0], &tmp[0], &c[0], &cum[0], base, ilin, m, shade, q + 2, 0.5 * dt, a, b, h, n)
            qend = (4 * k + 4) % (4 * K)
            bad = False
            for i in range(n):
                if not isfinite(z[i]):
                    bad = True
                    break
                vi = m[qend, i] * z[i]
                if vi < vmin:
                    vmin = vi
                if vi > vmax:
                    vmax = vi
            if bad:
                for i in range(n):
                    z[i] = prev[i]
                stats[0] = vmin
                stats[1] = vmax
                with gil:
                    return k
            if stride > 0 and (k + 1) % stride == 0 and row < snaps.shape[0]:
                for i in range(n):
                    snaps[row, i] = z[i]
                row += 1
    stats[0] = vmin
    stats[1] = vmax
    return -1
