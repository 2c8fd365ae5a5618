"""Pure-Python fallback for the compiled kernels (same API, same results to rounding).

Tridiagonal solves go through :func:`scipy.linalg.solve_banded`; the
precomputed Thomas factors are accepted for signature compatibility but
only the bands are used.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

__all__ = [
    "BACKEND",
    "factor_tridiagonal",
    "tridiagonal_solve",
    "linear_period",
    "linear_period_adjoint",
    "linear_period_block",
    "nonlinear_period",
]

BACKEND = "python"


def _bands(sub, diag, sup):
    n = diag.size
    ab = np.zeros((3, n))
    ab[0, 1:] = sup[:-1]
    ab[1] = diag
    ab[2, :-1] = sub[1:]
    return ab


def _bands_transpose(sub, diag, sup):
    n = diag.size
    ab = np.zeros((3, n))
    ab[0, 1:] = sub[1:]
    ab[1] = diag
    ab[2, :-1] = sup[:-1]
    return ab


def factor_tridiagonal(sub, diag, sup, cprime, invden):
    """Thomas-factor every row of a stack of tridiagonal matrices.

    Vectorized across rows.  Returns ``(-1, -1)`` on success, else
    ``(row, index)`` of the first nonpositive pivot.
    """
    K, n = diag.shape
    den = diag[:, 0].copy()
    for i in range(n):
        if i > 0:
            den = diag[:, i] - sub[:, i] * cprime[:, i - 1]
        bad = np.flatnonzero(~(den > 0.0))
        if bad.size:
            return (int(bad[0]), i)
        invden[:, i] = 1.0 / den
        cprime[:, i] = sup[:, i] / den if i < n - 1 else 0.0
    return (-1, -1)


def tridiagonal_solve(sub, diag, sup, rhs):
    """Solve one tridiagonal system (LAPACK banded solver)."""
    sub, diag, sup = (np.asarray(a, dtype=float) for a in (sub, diag, sup))
    return solve_banded((1, 1), _bands(sub, diag, sup), np.asarray(rhs, dtype=float))


def linear_period(z, bsub, bdiag, bsup, cprime, invden, e1, e2):
    """Advance ``z`` in place through one period of the linear split scheme."""
    for k in range(bsub.shape[0]):
        z *= e1[k]
        x = solve_banded((1, 1), _bands(bsub[k], bdiag[k], bsup[k]), z, check_finite=False)
        z[:] = (2.0 * x - z) * e2[k]


def linear_period_adjoint(w, bsub, bdiag, bsup, cprime, invden, e1, e2):
    """Apply the transpose of the period map to ``w`` in place (time reversed)."""
    for k in range(bsub.shape[0] - 1, -1, -1):
        w *= e2[k]
        x = solve_banded((1, 1), _bands_transpose(bsub[k], bdiag[k], bsup[k]), w,
                         check_finite=False)
        w[:] = (2.0 * x - w) * e1[k]


def linear_period_block(Z, bsub, bdiag, bsup, cprime, invden, e1, e2):
    """Apply the period map to every row of ``Z`` in place (all rows per solve)."""
    for k in range(bsub.shape[0]):
        Z *= e1[k]
        X = solve_banded((1, 1), _bands(bsub[k], bdiag[k], bsup[k]), Z.T, check_finite=False)
        Z[:] = (2.0 * X.T - Z) * e2[k]


def _rates(zz, base, ilin, m, shade, a, b, h):
    if shade != 0.0:
        v = m * zz
        cum = np.empty_like(v)
        cum[0] = 0.0
        np.cumsum(0.5 * h * (v[:-1] + v[1:]), out=cum[1:])
        light = ilin * np.exp(-shade * cum)
    else:
        light = ilin
    return a * light / (1.0 + b * light) + base


def _react(z, base, ilin, m, shade, q, hstep, a, b, h):
    c = _rates(z, base[q], ilin[q], m[q], shade[q], a, b, h)
    tmp = z * np.exp(0.5 * hstep * c)
    c = _rates(tmp, base[q + 1], ilin[q + 1], m[q + 1], shade[q + 1], a, b, h)
    z *= np.exp(hstep * c)


def nonlinear_period(z, bsub, bdiag, bsup, cprime, invden, base, ilin, m, shade,
                     a, b, h, dt, snaps, stride, stats):
    """Advance the nonlinear state ``z`` in place through one full period.

    See the compiled version for the contract.
    """
    K = bsub.shape[0]
    row = 0
    vmin, vmax = np.inf, -np.inf
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(K):
            prev = z.copy()
            q = 4 * k
            _react(z, base, ilin, m, shade, q, 0.5 * dt, a, b, h)
            x = solve_banded((1, 1), _bands(bsub[k], bdiag[k], bsup[k]), z, check_finite=False)
            z[:] = 2.0 * x - z
            _react(z, base, ilin, m, shade, q + 2, 0.5 * dt, a, b, h)
            if not np.all(np.isfinite(z)):
                z[:] = prev
                stats[0], stats[1] = vmin, vmax
                return k
            v = m[(4 * k + 4) % (4 * K)] * z
            vmin = min(vmin, float(v.min()))
            vmax = max(vmax, float(v.max()))
            if stride > 0 and (k + 1) % stride == 0 and row < snaps.shape[0]:
                snaps[row] = z
                row += 1
    stats[0], stats[1] = vmin, vmax
    return -1
