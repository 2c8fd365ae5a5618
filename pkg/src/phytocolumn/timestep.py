"""Time integration of the nonlinear nonlocal column model.

One step of size ``dt`` is the Strang composition

    reaction(dt/2) -> Crank-Nicolson transport(dt) -> reaction(dt/2)

where each reaction half-step is an exponential midpoint rule on the
diagonal rates ``c(y, t; z)`` (the nonlocal light integral is refreshed at
both stages), and the transport operator is frozen at ``t + dt/2``.

A :class:`PeriodPlan` caches every coefficient the stepper needs over one
period (the fields are ``T``-periodic, so the same plan serves every
period).  The per-period loops run in the compiled kernels.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ._backend import kernels
from .discretize import (
    Grid,
    PecletWarning,
    StateProfile,
    assemble_transport,
    mass_weights,
    reaction_coefficients,
    to_z_form,
)
from .errors import ConfigError, DomainError, NumericalError, ScalingError
from .model import ModelParameters

__all__ = [
    "SteppingConfig",
    "Thresholds",
    "PeriodPlan",
    "Trajectory",
    "DynamicsVerdict",
    "step",
    "simulate",
    "classify",
    "decay_rate_estimate",
    "initial_profile",
]

logger = logging.getLogger(__name__)

_EXP_LIMIT = 700.0


@dataclass(frozen=True)
class SteppingConfig:
    """Time-stepping controls.

    ``dt = T / steps_per_period`` exactly, so an integer number of steps
    tiles one period.  ``record_stride`` is the number of steps between
    stored snapshots and must divide ``steps_per_period``; ``None`` stores
    20 snapshots per period.
    """

    steps_per_period: int = 2000
    record_stride: int | None = None
    horizon_periods: int = 200

    def __post_init__(self):
        if int(self.steps_per_period) != self.steps_per_period or self.steps_per_period < 100:
            raise ConfigError("steps_per_period must be an integer >= 100")
        if int(self.horizon_periods) != self.horizon_periods or self.horizon_periods < 1:
            raise ConfigError("horizon_periods must be a positive integer")
        stride = self.record_stride
        if stride is None:
            stride = max(1, self.steps_per_period // 20)
            while self.steps_per_period % stride:
                stride -= 1
        if int(stride) != stride or stride < 1 or self.steps_per_period % stride:
            raise ConfigError("record_stride must be a positive divisor of steps_per_period")
        object.__setattr__(self, "record_stride", int(stride))

    @classmethod
    def from_dt(cls, dt: float, period: float, **kwargs) -> "SteppingConfig":
        """Round ``period / dt`` to the nearest integer step count."""
        if not dt > 0.0:
            raise ConfigError("dt must be positive")
        return cls(steps_per_period=int(round(period / dt)), **kwargs)

    def dt(self, period: float) -> float:
        return period / self.steps_per_period


@dataclass(frozen=True)
class Thresholds:
    """Verdict thresholds: relative extinction level, period residual, floor."""

    eps_ext: float = 1e-4
    eps_per: float = 1e-4
    delta_floor: float = 1e-4


class PeriodPlan:
    """Precomputed coefficients for one period at fixed parameters and grid.

    Attributes
    ----------
    bsub, bdiag, bsup : ndarray, shape (K, N)
        Bands of ``B_k = I - dt/2 L(t_k + dt/2)``.
    cprime, invden : ndarray, shape (K, N)
        Thomas factors of ``B_k``.
    base, ilin, growth_lin : ndarray, shape (4K, N)
        On the quarter-step lattice ``t = j dt / 4``: the state-independent
        part of the reaction rate, the unshaded light, and ``g`` of it.
    shade : ndarray, shape (4K,)
        ``k1 * rho(t)`` on the same lattice.
    """

    def __init__(self, params: ModelParameters, grid: Grid, steps_per_period: int):
        K = int(steps_per_period)
        if K < 1:
            raise ConfigError("steps_per_period must be positive")
        self.params = params
        self.grid = grid
        self.K = K
        self.dt = params.T / K
        y = grid.nodes
        h = grid.h
        n = grid.N
        dt = self.dt

        tm = (np.arange(K) + 0.5) * dt
        rho_m, _ = params.evolution.rate(tm)
        rho_m = np.asarray(rho_m, dtype=float)
        if not np.all(rho_m > 0.0):
            raise NumericalError("evolving rate not positive")
        diff = params.D / rho_m**2 / h**2
        adv = params.alpha / rho_m / (2.0 * h)
        self.cell_peclet = float(np.max(abs(params.alpha) * h * rho_m / (2.0 * params.D)))
        if self.cell_peclet >= 1.0:
            warnings.warn(f"cell Peclet number {self.cell_peclet:.3g} >= 1", PecletWarning,
                          stacklevel=2)
        half = 0.5 * dt
        self.bsub = np.ascontiguousarray(np.repeat((-half * (diff - adv))[:, None], n, axis=1))
        self.bsup = np.ascontiguousarray(np.repeat((-half * (diff + adv))[:, None], n, axis=1))
        self.bdiag = np.ascontiguousarray(np.repeat((1.0 + dt * diff)[:, None], n, axis=1))
        self.bsub[:, 0] = 0.0
        self.bsub[:, -1] = -dt * diff
        self.bsup[:, 0] = -dt * diff
        self.bsup[:, -1] = 0.0
        self.cprime = np.empty((K, n))
        self.invden = np.empty((K, n))
        row, idx = kernels.factor_tridiagonal(self.bsub, self.bdiag, self.bsup,
                                              self.cprime, self.invden)
        if row >= 0:
            raise NumericalError(
                f"nonpositive pivot in the implicit transport matrix (step {row}, node {idx})",
                time=(row + 0.5) * dt,
            )

        tq = np.arange(4 * K) * (0.25 * dt)
        self.tq = tq
        rho_q, rhodot_q = params.evolution.rate(tq)
        self.rho_q = np.asarray(rho_q, dtype=float)
        self.rhodot_q = np.asarray(rhodot_q, dtype=float)
        x = self.rho_q[:, None] * y[None, :]
        death = np.asarray(params.death.evaluate(x, tq[:, None]), dtype=float)
        self.base = np.ascontiguousarray(
            -death
            - (self.rhodot_q / self.rho_q)[:, None]
            - params.alpha * y[None, :] * self.rhodot_q[:, None] / params.D
        )
        light0 = np.asarray(params.light(tq), dtype=float)
        self.ilin = np.ascontiguousarray(light0[:, None] * np.exp(-params.k0 * x))
        self.growth_lin = np.ascontiguousarray(params.growth(self.ilin))
        self.shade = np.ascontiguousarray(params.k1 * self.rho_q)

    @property
    def transport(self):
        """Arguments shared by every kernel call: bands and Thomas factors."""
        return (self.bsub, self.bdiag, self.bsup, self.cprime, self.invden)

    @cached_property
    def z_to_v(self) -> np.ndarray:
        """``exp((alpha/D) rho(t) y)`` on the quarter-step lattice, shape (4K, N)."""
        rate = self.params.alpha / self.params.D
        if abs(rate) * float(np.max(self.rho_q)) * self.params.L0 > _EXP_LIMIT:
            raise ScalingError("|alpha/D| rho L0 overflows the z/v map")
        return np.ascontiguousarray(np.exp(rate * self.rho_q[:, None] * self.grid.nodes[None, :]))

    def eigen_factors(self, mu: float):
        """Per-step reaction multipliers of the linearized flow weighted by ``1/mu``.

        Returns ``(e1, e2)`` of shape (K, N): the exact exponentials of the
        two reaction half-steps, evaluated at their midpoints.
        """
        if not mu > 0.0:
            raise DomainError("mu must be positive")
        half = 0.5 * self.dt
        e1 = np.exp(half * (self.growth_lin[1::4] / mu + self.base[1::4]))
        e2 = np.exp(half * (self.growth_lin[3::4] / mu + self.base[3::4]))
        return np.ascontiguousarray(e1), np.ascontiguousarray(e2)


def _react(z, params, grid, t0, hstep):
    with np.errstate(over="ignore", invalid="ignore"):
        c = reaction_coefficients(params, grid, t0, state=StateProfile(z, "z"))
        zh = z * np.exp(0.5 * hstep * c)
        if not np.all(np.isfinite(zh)):
            raise NumericalError("non-finite state in reaction substep", time=t0)
        c = reaction_coefficients(params, grid, t0 + 0.5 * hstep, state=StateProfile(zh, "z"))
        out = z * np.exp(hstep * c)
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite state in reaction substep", time=t0)
    return out


def step(state: StateProfile, t: float, dt: float, params: ModelParameters,
         grid: Grid) -> StateProfile:
    """Advance the nonlinear model by one Strang step from ``t`` to ``t + dt``.

    Reference implementation built directly on :mod:`discretize`; the
    period loop in :func:`simulate` performs the same arithmetic in the
    compiled kernels.

    Raises
    ------
    NumericalError
        Nonpositive pivot in the transport solve, or a non-finite state.
    """
    if not dt > 0.0:
        raise DomainError("dt must be positive")
    z = np.array(to_z_form(state, params, t).values, dtype=float)
    z = _react(z, params, grid, t, 0.5 * dt)
    op = assemble_transport(params, grid, t + 0.5 * dt)
    sub = np.ascontiguousarray(-0.5 * dt * op.sub)[None, :]
    diag = np.ascontiguousarray(1.0 - 0.5 * dt * op.main)[None, :]
    sup = np.ascontiguousarray(-0.5 * dt * op.sup)[None, :]
    cp, inv = np.empty_like(diag), np.empty_like(diag)
    row, idx = kernels.factor_tridiagonal(sub, diag, sup, cp, inv)
    if row >= 0:
        raise NumericalError(f"nonpositive pivot at node {idx}", last_good=state, time=t)
    x = kernels.tridiagonal_solve(sub[0], diag[0], sup[0], z)
    z = 2.0 * x - z
    z = _react(z, params, grid, t + 0.5 * dt, 0.5 * dt)
    return StateProfile(z, "z")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time-stamped z-form snapshots with derived diagnostics.

    Attributes
    ----------
    times : ndarray, shape (M,)
        Strictly increasing sample times, starting at 0.
    states : ndarray, shape (M, N)
        z-form profiles at ``times``.
    params, grid
        The model and grid that produced the states.
    period_min : ndarray or None
        Per completed period, the minimum of ``v`` over every step end in
        that period (finer than the snapshots).  Computed from snapshots
        when absent.
    """

    times: np.ndarray
    states: np.ndarray
    params: ModelParameters
    grid: Grid
    period_min: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        s = np.asarray(self.states, dtype=float)
        if s.ndim != 2 or s.shape[0] != t.size or s.shape[1] != self.grid.N:
            raise ValueError("states must have shape (len(times), grid.N)")
        if t.size > 1 and np.any(np.diff(t) <= 0.0):
            raise ValueError("trajectory times must be strictly increasing")
        for arr in (t, s):
            arr.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", s)

    @classmethod
    def from_v(cls, times, v_states, params: ModelParameters, grid: Grid) -> "Trajectory":
        """Build a trajectory from v-form (density) snapshots."""
        times = np.asarray(times, dtype=float)
        rho, _ = params.evolution.rate(times)
        rate = params.alpha / params.D
        factor = np.exp(-rate * np.asarray(rho)[:, None] * grid.nodes[None, :])
        return cls(times, np.asarray(v_states, dtype=float) * factor, params, grid)

    @cached_property
    def v_states(self) -> np.ndarray:
        rho, _ = self.params.evolution.rate(self.times)
        rate = self.params.alpha / self.params.D
        return self.states * np.exp(rate * np.asarray(rho)[:, None] * self.grid.nodes[None, :])

    @cached_property
    def total_mass(self) -> np.ndarray:
        rho, _ = self.params.evolution.rate(self.times)
        out = np.empty(self.times.size)
        for j, t in enumerate(self.times):
            out[j] = float(rho[j]) * float(np.dot(mass_weights(self.params, self.grid, t),
                                                  self.states[j]))
        return out

    @property
    def sup_norm(self) -> np.ndarray:
        return np.max(np.abs(self.v_states), axis=1)

    @property
    def min_value(self) -> np.ndarray:
        return np.min(self.v_states, axis=1)

    @cached_property
    def period_indices(self) -> np.ndarray:
        """Snapshot indices at whole multiples of ``T`` (including ``t = 0``)."""
        ratio = self.times / self.params.T
        return np.flatnonzero(np.abs(ratio - np.round(ratio)) < 1e-9)

    @property
    def n_periods(self) -> int:
        idx = self.period_indices
        return int(round(self.times[idx[-1]] / self.params.T)) if idx.size else 0

    @cached_property
    def period_residuals(self) -> np.ndarray:
        """``||v(kT) - v((k-1)T)||_inf / max(||v(kT)||_inf, eps)`` for k = 1, 2, ..."""
        idx = self.period_indices
        v = self.v_states[idx]
        if v.shape[0] < 2:
            return np.empty(0)
        num = np.max(np.abs(v[1:] - v[:-1]), axis=1)
        den = np.maximum(np.max(np.abs(v[1:]), axis=1), np.finfo(float).tiny)
        return num / den

    @cached_property
    def period_minima(self) -> np.ndarray:
        if self.period_min is not None:
            return np.asarray(self.period_min, dtype=float)
        idx = self.period_indices
        mins = self.min_value
        return np.array([mins[i0 + 1:i1 + 1].min() for i0, i1 in zip(idx[:-1], idx[1:])])

    def snapshot(self, j: int) -> StateProfile:
        return StateProfile(self.states[j], "z")


@dataclass(frozen=True, eq=False)
class DynamicsVerdict:
    """Outcome of :func:`classify`.

    ``kind`` is ``"extinct"``, ``"persistent"`` or ``"undetermined"``.
    ``limit_cycle`` holds the v-form snapshots over the final period for a
    persistent verdict.
    """

    kind: str
    decay_factor: float
    period_residual: float
    final_period_min: float
    limit_cycle: np.ndarray | None = field(default=None, repr=False)

    def __str__(self):
        return self.kind


def classify(trajectory: Trajectory, thresholds: Thresholds = Thresholds()) -> DynamicsVerdict:
    """Long-run verdict from a trajectory.

    Extinct when the final sup-norm of ``v`` drops below ``eps_ext`` times
    the initial one (or is exactly zero); persistent when the last period
    residual is below ``eps_per`` and the minimum of ``v`` over the final
    period exceeds ``delta_floor``; otherwise undetermined.
    """
    sup = trajectory.sup_norm
    n = trajectory.n_periods
    decay = float((sup[-1] / sup[0]) ** (1.0 / n)) if n > 0 and sup[0] > 0 else float("nan")
    res = trajectory.period_residuals
    last_res = float(res[-1]) if res.size else float("nan")
    mins = trajectory.period_minima
    last_min = float(mins[-1]) if mins.size else float("nan")
    if sup[-1] == 0.0 or sup[-1] < thresholds.eps_ext * sup[0]:
        return DynamicsVerdict("extinct", decay, last_res, last_min)
    if res.size and last_res < thresholds.eps_per and last_min > thresholds.delta_floor:
        idx = trajectory.period_indices
        cycle = trajectory.v_states[idx[-2]:idx[-1] + 1] if idx.size >= 2 else None
        return DynamicsVerdict("persistent", decay, last_res, last_min, cycle)
    return DynamicsVerdict("undetermined", decay, last_res, last_min)


def decay_rate_estimate(trajectory: Trajectory, thresholds: Thresholds = Thresholds()) -> float:
    """Least-squares slope of ``ln ||v||_inf`` against ``t`` over the last half.

    Period-end samples are used when at least three fall in the last half
    (this filters the periodic modulation); otherwise all samples are.

    Raises
    ------
    DomainError
        Nonpositive sup-norms, fewer than 5 periods, or a persistent
        trajectory (no decay rate exists).
    """
    sup = trajectory.sup_norm
    if np.any(sup <= 0.0):
        raise DomainError("sup-norm vanishes; log-linear fit undefined")
    if trajectory.times[-1] < 5.0 * trajectory.params.T * (1.0 - 1e-12):
        raise DomainError("decay-rate fit needs at least 5 periods")
    if classify(trajectory, thresholds).kind == "persistent":
        raise DomainError("trajectory is persistent; decay rate undefined")
    t = trajectory.times
    half = t >= 0.5 * t[-1]
    ends = np.zeros(t.size, dtype=bool)
    ends[trajectory.period_indices] = True
    sel = half & ends if np.count_nonzero(half & ends) >= 3 else half
    slope, _ = np.polyfit(t[sel], np.log(sup[sel]), 1)
    return float(slope)


def initial_profile(grid: Grid, kind: str = "cosine", value: float = 1.0) -> StateProfile:
    """Standard z-form initial data.

    ``"cosine"`` is ``4 + 2 cos(pi y) + cos(2 pi y)``; ``"constant"`` is
    ``value`` everywhere.
    """
    y = grid.nodes
    if kind == "cosine":
        return StateProfile(4.0 + 2.0 * np.cos(np.pi * y) + np.cos(2.0 * np.pi * y), "z")
    if kind == "constant":
        return StateProfile(np.full(grid.N, float(value)), "z")
    raise ConfigError(f"unknown initial profile {kind!r}")


def simulate(params: ModelParameters, initial: StateProfile,
             config: SteppingConfig = SteppingConfig(), *, grid: Grid | None = None,
             thresholds: Thresholds = Thresholds(), stop_on_extinction: bool = True,
             plan: PeriodPlan | None = None) -> Trajectory:
    """Integrate the nonlinear model from ``initial`` for up to ``horizon_periods``.

    Stops after the first period whose end state satisfies the extinction
    criterion when ``stop_on_extinction`` is set.

    Raises
    ------
    DomainError
        Initial data negative or identically zero.
    NumericalError
        A non-finite value appeared; ``last_good`` holds the last finite
        z-form state and ``time`` its time.
    """
    grid = grid or Grid(len(initial), params.L0)
    z = np.array(to_z_form(initial, params, 0.0).values, dtype=float)
    if z.size != grid.N:
        raise DomainError("initial profile length does not match the grid")
    if np.any(z < 0.0) or not np.any(z > 0.0):
        raise DomainError("initial data must be nonnegative and not identically zero")
    K = config.steps_per_period
    if plan is None:
        plan = PeriodPlan(params, grid, K)
    elif plan.K != K or plan.grid != grid:
        raise ConfigError("plan does not match the stepping configuration")
    stride = config.record_stride
    per = K // stride
    m = plan.z_to_v
    v0_sup = float(np.max(np.abs(m[0] * z)))

    times = [np.zeros(1)]
    states = [z[None, :].copy()]
    period_min = []
    stats = np.empty(2)
    for p in range(config.horizon_periods):
        buf = np.empty((per, grid.N))
        status = kernels.nonlinear_period(
            z, *plan.transport, plan.base, plan.ilin, m, plan.shade,
            float(params.growth.a), float(params.growth.b), grid.h, plan.dt, buf, stride, stats,
        )
        if status >= 0:
            t_fail = params.T * (p + status / K)
            raise NumericalError(f"non-finite state at t = {t_fail:.6g}",
                                 last_good=StateProfile(z.copy(), "z"), time=t_fail)
        times.append(params.T * (p + np.arange(1, per + 1) * stride / K))
        states.append(buf)
        period_min.append(float(stats[0]))
        sup_end = float(np.max(np.abs(m[0] * z)))
        logger.debug("period %d: sup v = %.6g, min v = %.6g", p + 1, sup_end, stats[0])
        if stop_on_extinction and (sup_end == 0.0 or sup_end < thresholds.eps_ext * v0_sup):
            logger.info("extinction criterion met after %d periods", p + 1)
            break
    return Trajectory(np.concatenate(times), np.vstack(states), params, grid,
                      np.asarray(period_min))

