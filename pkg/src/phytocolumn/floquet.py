"""Basic reproduction number of the linearized periodic column problem.

The linearization at the zero state, with growth weighted by ``1/mu``,

    z_t = (D/rho^2) z_yy + (alpha/rho) z_y
          + [g(I0 e^{-k0 rho y})/mu - d - rho'/rho - alpha y rho'/D] z,

has a positive period map whose principal multiplier ``r(mu)`` strictly
decreases in ``mu``.  ``R0`` is the root of ``r(mu) = 1`` and the principal
exponent is ``lambda0 = -ln r(1) / T``.

Closed-form companions (ratios of space-time integrals) give the small
transport limit, a general lower bound, and upper/lower bounds when
``alpha = 0``.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from ._backend import kernels
from .discretize import Grid, StateProfile, mass_weights, to_z_form
from .errors import ConvergenceError, DomainError, NumericalError, R0RangeError
from .model import ExpCosineEvolution, ModelParameters
from .timestep import PeriodPlan

__all__ = [
    "EigenSolveConfig",
    "QuadratureRatio",
    "R0Report",
    "MonotonicityResult",
    "SweepRow",
    "PeriodMap",
    "period_map_apply",
    "principal_multiplier",
    "compute_r0",
    "compute_lambda0",
    "r0_star",
    "r0_lower_bound_general",
    "r0_bounds_no_advection",
    "eigenprofile_monotonicity_check",
    "sweep_r0",
    "adjoint_consistency_check",
    "SWEEP_PARAMETERS",
]

logger = logging.getLogger(__name__)

SWEEP_PARAMETERS = ("L0", "D", "sigma", "alpha")


@dataclass(frozen=True)
class EigenSolveConfig:
    """Controls for the multiplier and root solves.

    Attributes
    ----------
    power_tol : float
        Stop power iteration when the multiplier estimate changes by less
        than this relative amount between periods.
    max_periods : int
        Power-iteration budget per multiplier.
    bisection_tol : float
        Relative tolerance on ``mu`` for the root solve.
    max_bisections : int
        Iteration budget of the root solve.
    steps_per_period : int
        Time steps per period of the linear flow.
    """

    power_tol: float = 1e-10
    max_periods: int = 500
    bisection_tol: float = 1e-6
    max_bisections: int = 80
    steps_per_period: int = 2000

    def __post_init__(self):
        if not (self.power_tol > 0 and self.bisection_tol > 0):
            raise DomainError("tolerances must be positive")
        if self.max_periods < 1 or self.max_bisections < 1 or self.steps_per_period < 1:
            raise DomainError("iteration budgets must be positive")


class QuadratureRatio(float):
    """A float carrying the integrals it is the ratio of.

    ``numerator`` and ``denominator`` are the two space-time (or time)
    integrals; ``error_estimate`` bounds the relative quadrature error of
    the ratio by a coarse/fine comparison.
    """

    numerator: float
    denominator: float
    error_estimate: float

    def __new__(cls, numerator, denominator, error_estimate=0.0):
        obj = super().__new__(cls, numerator / denominator)
        obj.numerator = float(numerator)
        obj.denominator = float(denominator)
        obj.error_estimate = float(error_estimate)
        return obj

    def __repr__(self):
        return f"QuadratureRatio({self.numerator!r} / {self.denominator!r} = {float(self)!r})"

    def __reduce__(self):
        return (QuadratureRatio, (self.numerator, self.denominator, self.error_estimate))


@dataclass(frozen=True, eq=False)
class R0Report:
    """Result of :func:`compute_r0`.

    ``bounds`` is ``(R2, R1)`` when ``alpha = 0`` and ``None`` otherwise.
    ``eigenprofile`` is the principal eigenfunction (z-form, sup-norm 1) of
    the period map at ``mu = r0``, i.e. at ``t = 0``.
    """

    r0: float
    lambda0: float
    multiplier_residual: float
    lower_bound: QuadratureRatio
    bounds: tuple | None
    r0_star: QuadratureRatio
    eigenprofile: StateProfile = field(repr=False)
    power_iterations: int = 0
    root_iterations: int = 0


@dataclass(frozen=True)
class MonotonicityResult:
    """``ok`` when no forward difference exceeds the tolerance."""

    ok: bool
    max_increase: float
    tolerance: float

    def __bool__(self):
        return self.ok


@dataclass(frozen=True)
class SweepRow:
    value: float
    r0: float
    lambda0: float
    residual: float
    status: str = "ok"


# ---------------------------------------------------------------------------
# period map


class PeriodMap:
    """The linear period map at fixed parameters, reusable across ``mu``.

    Transport factors are computed once; the reaction multipliers are
    cached for the most recent ``mu``.
    """

    def __init__(self, params: ModelParameters, grid: Grid, steps_per_period: int = 2000):
        self.params = params
        self.grid = grid
        self.plan = PeriodPlan(params, grid, steps_per_period)
        self._mu = None
        self._factors = None

    def factors(self, mu: float):
        if mu != self._mu:
            self._factors = self.plan.eigen_factors(mu)
            self._mu = mu
        return self._factors

    def apply(self, z, mu: float) -> np.ndarray:
        out = np.array(z, dtype=float)
        kernels.linear_period(out, *self.plan.transport, *self.factors(mu))
        return out

    def apply_adjoint(self, w, mu: float) -> np.ndarray:
        out = np.array(w, dtype=float)
        kernels.linear_period_adjoint(out, *self.plan.transport, *self.factors(mu))
        return out

    def multiplier(self, mu: float, *, tol: float = 1e-10, max_periods: int = 500,
                   start=None, adjoint: bool = False):
        """Power iteration with sup-norm normalization.

        Returns ``(r, profile, periods)``; ``profile`` has sup-norm 1.

        Raises
        ------
        ConvergenceError
            The estimate did not settle within ``max_periods``.
        NumericalError
            The iterate became non-finite or vanished.
        """
        z = np.ones(self.grid.N) if start is None else np.array(start, dtype=float)
        s0 = np.max(np.abs(z))
        if not s0 > 0.0:
            raise DomainError("start vector must be nonzero")
        z /= s0
        run = kernels.linear_period_adjoint if adjoint else kernels.linear_period
        e1, e2 = self.factors(mu)
        history = []
        prev = math.nan
        for it in range(1, max_periods + 1):
            run(z, *self.plan.transport, e1, e2)
            s = float(np.max(np.abs(z)))
            if not (math.isfinite(s) and s > 0.0):
                raise NumericalError(f"power iterate degenerated at period {it} (mu={mu!r})")
            z /= s
            history.append(s)
            if abs(s - prev) <= tol * s:
                return s, z, it
            prev = s
        tail = history[-10:]
        raise ConvergenceError(
            f"power iteration did not converge in {max_periods} periods at mu={mu!r}: "
            f"last ratio {history[-1]!r}, spread of last {len(tail)} ratios "
            f"{max(tail) - min(tail):.3e}",
            last_estimate=history[-1],
            history=np.asarray(history),
        )


def _config(config: EigenSolveConfig | None) -> EigenSolveConfig:
    return config if config is not None else EigenSolveConfig()


def period_map_apply(profile: StateProfile, mu: float, params: ModelParameters, grid: Grid,
                     config: EigenSolveConfig | None = None) -> StateProfile:
    """Advance ``profile`` through one period of the ``1/mu``-weighted linear flow."""
    config = _config(config)
    if not mu > 0.0:
        raise DomainError("mu must be positive")
    z = to_z_form(profile, params, 0.0).values
    pm = PeriodMap(params, grid, config.steps_per_period)
    return StateProfile(pm.apply(z, mu), "z")


def principal_multiplier(mu: float, params: ModelParameters, grid: Grid,
                         config: EigenSolveConfig | None = None):
    """Principal multiplier ``r(mu)`` of the period map and its eigenprofile.

    Returns
    -------
    r : float
    eigenprofile : StateProfile
        z-form, nonnegative, sup-norm 1.
    """
    config = _config(config)
    if not mu > 0.0:
        raise DomainError("mu must be positive")
    pm = PeriodMap(params, grid, config.steps_per_period)
    r, z, _ = pm.multiplier(mu, tol=config.power_tol, max_periods=config.max_periods)
    return r, StateProfile(z, "z")


# ---------------------------------------------------------------------------
# closed-form ratios


def _check_resolution(n_times, n_depths):
    if n_times < 4 or n_depths < 3 or (n_depths - 1) % 2:
        raise DomainError("need n_times >= 4 and an odd n_depths >= 3")


def _time_nodes(params: ModelParameters, n: int) -> np.ndarray:
    # equispaced over one period: the trapezoid rule for periodic integrands
    return np.arange(n) * (params.T / n)


def _space_time_integrals(params: ModelParameters, n_times: int, n_depths: int,
                          extra_death: float = 0.0):
    t = _time_nodes(params, n_times)
    rho, _ = params.evolution.rate(t)
    rho = np.asarray(rho, dtype=float)

    def integrate(ny):
        y = np.linspace(0.0, params.L0, ny)
        w = np.full(ny, params.L0 / (ny - 1))
        w[[0, -1]] *= 0.5
        x = rho[:, None] * y[None, :]
        light = np.asarray(params.light(t), dtype=float)[:, None] * np.exp(-params.k0 * x)
        num = params.growth(light) @ w
        den = (np.asarray(params.death.evaluate(x, t[:, None])) + extra_death) @ w
        dt = params.T / n_times
        return float(num.sum() * dt), float(den.sum() * dt)

    fine = integrate(n_depths)
    coarse = integrate((n_depths + 1) // 2)
    # Richardson: the trapezoid error is O(h^2), fine error ~ (fine - coarse) / 3
    err = max(abs(f - c) / 3.0 / abs(f) for f, c in zip(fine, coarse) if f != 0.0) \
        if any(fine) else 0.0
    if err > 1e-6:
        logger.warning("space-time quadrature error estimate %.2e exceeds 1e-6", err)
    return fine[0], fine[1], err


def r0_star(params: ModelParameters, n_times: int = 2048, n_depths: int = 513) -> QuadratureRatio:
    """Small-transport limit ``R0* = int int g(I0 e^{-k0 rho y}) / int int d(rho y, t)``.

    Product trapezoid rule on ``n_times x n_depths`` nodes over
    ``[0, T) x [0, L0]``; the depth rule is checked against half resolution.
    """
    _check_resolution(n_times, n_depths)
    num, den, err = _space_time_integrals(params, n_times, n_depths)
    return QuadratureRatio(num, den, err)


def r0_lower_bound_general(params: ModelParameters, n_times: int = 2048,
                           n_depths: int = 513) -> QuadratureRatio:
    """Lower bound on ``R0`` valid for any ``alpha``:
    ``int int g / int int (alpha^2/(4D) + d)``.
    """
    _check_resolution(n_times, n_depths)
    num, den, err = _space_time_integrals(
        params, n_times, n_depths, extra_death=params.alpha**2 / (4.0 * params.D))
    return QuadratureRatio(num, den, err)


def _time_ratio(params: ModelParameters, depth: float, n_times: int) -> QuadratureRatio:
    def integrate(n):
        t = _time_nodes(params, n)
        rho, _ = params.evolution.rate(t)
        x = np.asarray(rho, dtype=float) * depth
        light = np.asarray(params.light(t), dtype=float) * np.exp(-params.k0 * x)
        dt = params.T / n
        return (float(np.sum(params.growth(light)) * dt),
                float(np.sum(params.death.evaluate(x, t)) * dt))

    fine = integrate(n_times)
    coarse = integrate(n_times // 2)
    err = max((abs(f - c) / abs(f) for f, c in zip(fine, coarse) if f != 0.0), default=0.0)
    if err > 1e-8:
        logger.warning("time quadrature error estimate %.2e exceeds 1e-8", err)
    return QuadratureRatio(fine[0], fine[1], err)


def _upper_ratio(params: ModelParameters, n_times: int = 4096) -> QuadratureRatio:
    return _time_ratio(params, 0.0, n_times)


def r0_bounds_no_advection(params: ModelParameters, n_times: int = 4096):
    """Bounds ``(R2, R1)`` with ``R2 <= R0 <= R1`` when ``alpha = 0``.

    ``R2`` uses the light and death at the column bottom ``y = L0``,
    ``R1`` those at the surface ``y = 0``.

    Raises
    ------
    DomainError
        ``alpha != 0``.
    """
    if params.alpha != 0.0:
        raise DomainError("bounds require alpha = 0")
    return _time_ratio(params, params.L0, n_times), _time_ratio(params, 0.0, n_times)


# ---------------------------------------------------------------------------
# R0 and lambda0


def compute_lambda0(params: ModelParameters, grid: Grid,
                    config: EigenSolveConfig | None = None) -> float:
    """Principal exponent ``lambda0 = -ln r(1) / T``; positive means decay."""
    r, _ = principal_multiplier(1.0, params, grid, config)
    return -math.log(r) / params.T


def compute_r0(params: ModelParameters, grid: Grid, config: EigenSolveConfig | None = None,
               *, period_map: PeriodMap | None = None) -> R0Report:
    """Solve ``r(mu) = 1`` for ``mu = R0``.

    The bracket starts at ``[max(lower bound, 1e-8), R1]`` (``R1`` the
    surface ratio); the lower end is halved and the upper end doubled (at
    most 60 times each) until ``ln r`` changes sign.  The root of
    ``ln r(mu)`` is then found by Brent's method with relative tolerance
    ``bisection_tol``.  Power iterations are warm-started from the previous
    eigenprofile.

    Raises
    ------
    R0RangeError
        No sign change within the bracket expansion budget.
    """
    config = _config(config)
    pm = period_map or PeriodMap(params, grid, config.steps_per_period)
    state = {"start": None, "periods": 0, "calls": 0}

    def mult(mu):
        r, z, it = pm.multiplier(mu, tol=config.power_tol, max_periods=config.max_periods,
                                 start=state["start"])
        state["start"] = z
        state["periods"] += it
        return r, z

    def log_r(mu):
        state["calls"] += 1
        return math.log(mult(mu)[0])

    lower = r0_lower_bound_general(params)
    lo = max(float(lower), 1e-8)
    f_lo = log_r(lo)
    for _ in range(60):
        if f_lo >= 0.0:
            break
        lo *= 0.5
        f_lo = log_r(lo)
    else:
        raise R0RangeError("R0 out of range: r(mu) < 1 at the smallest trial mu")
    hi = max(float(_upper_ratio(params)), 2.0 * lo)
    f_hi = log_r(hi)
    for _ in range(60):
        if f_hi < 0.0:
            break
        lo, f_lo = hi, f_hi
        hi *= 2.0
        f_hi = log_r(hi)
    else:
        raise R0RangeError("R0 out of range: r(mu) >= 1 after 60 doublings")

    if f_lo == 0.0:
        mu0, iters = lo, 0
    else:
        mu0, info = brentq(log_r, lo, hi, xtol=1e-14, rtol=config.bisection_tol,
                           maxiter=config.max_bisections, full_output=True, disp=False)
        if not info.converged:
            raise ConvergenceError(f"root solve did not converge: {info.flag}",
                                   last_estimate=mu0)
        iters = info.iterations

    r_at, z_at = mult(mu0)
    r_one, _ = mult(1.0)
    lambda0 = -math.log(r_one) / params.T
    bounds = r0_bounds_no_advection(params) if params.alpha == 0.0 else None
    report = R0Report(
        r0=float(mu0),
        lambda0=lambda0,
        multiplier_residual=abs(r_at - 1.0),
        lower_bound=lower,
        bounds=bounds,
        r0_star=r0_star(params),
        eigenprofile=StateProfile(z_at, "z"),
        power_iterations=state["periods"],
        root_iterations=iters,
    )
    logger.info("R0 = %.10g (lambda0 = %.6g, residual %.2e, %d periods)",
                report.r0, lambda0, report.multiplier_residual, state["periods"])
    return report


# ---------------------------------------------------------------------------
# diagnostics


def eigenprofile_monotonicity_check(report, params: ModelParameters,
                                    tol: float = 1e-10) -> MonotonicityResult:
    """Check that the principal eigenprofile decreases with depth.

    ``report`` is an :class:`R0Report` or a bare profile.  Passes when
    every forward difference is below ``tol`` times the sup-norm.

    Raises
    ------
    DomainError
        ``alpha != 0``.
    """
    if params.alpha != 0.0:
        raise DomainError("the monotonicity check requires alpha = 0")
    prof = report.eigenprofile if isinstance(report, R0Report) else report
    vals = prof.values if isinstance(prof, StateProfile) else np.asarray(prof, dtype=float)
    scale = float(np.max(np.abs(vals)))
    worst = float(np.max(np.diff(vals)))
    return MonotonicityResult(worst < tol * scale, worst, tol * scale)


def adjoint_consistency_check(params: ModelParameters, grid: Grid,
                              config: EigenSolveConfig | None = None, mu: float = 1.0) -> float:
    """Relative gap between the principal multipliers of the period map and
    of its transpose (the time-reversed adjoint step sequence).

    The transposed iteration starts from the forward eigenprofile weighted
    by the discrete mass weights, which is the exact left eigenvector when
    the operator is symmetric in that weighted inner product.
    """
    config = _config(config)
    pm = PeriodMap(params, grid, config.steps_per_period)
    tol = min(config.power_tol, 1e-12)
    budget = max(config.max_periods, 2000)
    r_fwd, z, _ = pm.multiplier(mu, tol=tol, max_periods=budget)
    start = mass_weights(params, grid, 0.0) * z
    r_adj, _, _ = pm.multiplier(mu, tol=tol, max_periods=budget, start=start, adjoint=True)
    return abs(r_adj - r_fwd) / r_fwd


def _with_value(params: ModelParameters, parameter: str, value: float) -> ModelParameters:
    if parameter == "L0":
        return replace(params, L0=value)
    if parameter == "D":
        return replace(params, D=value)
    if parameter == "alpha":
        return replace(params, alpha=value)
    if parameter == "sigma":
        if not isinstance(params.evolution, ExpCosineEvolution):
            raise DomainError("sigma sweeps need the exp-cosine evolution family")
        return replace(params, evolution=replace(params.evolution, sigma=value))
    raise DomainError(f"unknown sweep parameter {parameter!r}; choose from {SWEEP_PARAMETERS}")


def _grid_for(parameter: str, value: float, params: ModelParameters, grid: Grid) -> Grid:
    if parameter != "L0":
        return grid
    # keep the spacing of the base grid so rows differ only in the physics
    n = int(round((grid.N - 1) * value / params.L0)) + 1
    return Grid(max(n, 5), value)


def sweep_r0(params: ModelParameters, parameter: str, values, grid: Grid,
             config: EigenSolveConfig | None = None, *, max_workers: int | None = None):
    """One :func:`compute_r0` per value, run concurrently, returned in input order.

    ``L0`` rows keep the base grid spacing (the node count scales with
    ``L0``).  A failing row is recorded with its error in ``status``.
    """
    config = _config(config)
    if parameter not in SWEEP_PARAMETERS:
        raise DomainError(f"unknown sweep parameter {parameter!r}; choose from {SWEEP_PARAMETERS}")
    values = [float(v) for v in values]
    if any(b <= a for a, b in zip(values, values[1:])):
        raise DomainError("sweep values must be strictly ascending")

    def row(value):
        try:
            p = _with_value(params, parameter, value)
            rep = compute_r0(p, _grid_for(parameter, value, params, grid), config)
            return SweepRow(value, rep.r0, rep.lambda0, rep.multiplier_residual)
        except Exception as exc:  # row failures are data, not fatal
            logger.warning("sweep row %s=%r failed: %s", parameter, value, exc)
            return SweepRow(value, math.nan, math.nan, math.nan,
                            f"{type(exc).__name__}: {exc}")

    workers = max_workers or min(len(values), os.cpu_count() or 1) or 1
    if workers == 1:
        return [row(v) for v in values]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(row, values))
