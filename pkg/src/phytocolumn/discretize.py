"""Spatial semi-discretization on the fixed reference interval ``[0, L0]``.

The primary state is the exponentially rescaled density
``z = exp(-(alpha/D) rho(t) y) v``, which turns the no-flux Robin condition
of the density ``v`` into a homogeneous Neumann condition.  Transport is
discretized with second-order central differences and a mirrored ghost
node at each end, giving a tridiagonal operator.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ScalingError
from .model import ModelParameters

__all__ = [
    "Grid",
    "StateProfile",
    "TridiagonalOperator",
    "PecletWarning",
    "assemble_transport",
    "reaction_coefficients",
    "cumulative_integral",
    "mass_weights",
    "total_mass",
    "to_v_form",
    "to_z_form",
]

_EXP_LIMIT = 700.0


class PecletWarning(RuntimeWarning):
    """Cell Peclet number reached 1; central advection may oscillate."""


@dataclass(frozen=True)
class Grid:
    """Uniform node-centred grid ``y_i = i h`` on ``[0, L0]``."""

    N: int
    L0: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 5:
            raise DomainError(f"grid needs at least 5 nodes, got {self.N}")
        if not self.L0 > 0.0:
            raise DomainError("grid length must be positive")
        object.__setattr__(self, "N", int(self.N))

    @property
    def h(self) -> float:
        return self.L0 / (self.N - 1)

    @property
    def nodes(self) -> np.ndarray:
        y = np.arange(self.N) * self.h
        y[-1] = self.L0
        return y


@dataclass(frozen=True, eq=False)
class StateProfile:
    """Nodal density values in either ``"z"`` or ``"v"`` representation."""

    values: np.ndarray
    form: str = "z"

    def __post_init__(self):
        if self.form not in ("z", "v"):
            raise ValueError(f"unknown representation {self.form!r}")
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 1:
            raise ValueError("profile values must be one-dimensional")
        if not np.all(np.isfinite(vals)):
            raise ValueError("profile values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True, eq=False)
class TridiagonalOperator:
    """Rows ``sub[i] u[i-1] + main[i] u[i] + sup[i] u[i+1]``.

    ``sub[0]`` and ``sup[-1]`` are unused and stored as zero.
    """

    sub: np.ndarray
    main: np.ndarray
    sup: np.ndarray
    cell_peclet: float = 0.0

    def __matmul__(self, u):
        u = np.asarray(u, dtype=float)
        out = self.main * u
        out[1:] += self.sub[1:] * u[:-1]
        out[:-1] += self.sup[:-1] * u[1:]
        return out

    def to_dense(self) -> np.ndarray:
        n = self.main.size
        a = np.diag(self.main)
        a[np.arange(1, n), np.arange(n - 1)] = self.sub[1:]
        a[np.arange(n - 1), np.arange(1, n)] = self.sup[:-1]
        return a


def assemble_transport(params: ModelParameters, grid: Grid, t: float) -> TridiagonalOperator:
    """Discretize ``(D/rho^2) d_yy + (alpha/rho) d_y`` with Neumann ends.

    Central differences throughout; the ghost-node closure ``z_{-1} = z_1``,
    ``z_N = z_{N-2}`` removes the advective term from the boundary rows.
    """
    rho, _ = params.evolution.rate(t)
    rho = float(rho)
    h = grid.h
    diff = params.D / rho**2 / h**2
    adv = params.alpha / rho / (2.0 * h)
    n = grid.N
    sub = np.full(n, diff - adv)
    main = np.full(n, -2.0 * diff)
    sup = np.full(n, diff + adv)
    sub[0] = 0.0
    sup[-1] = 0.0
    sup[0] = 2.0 * diff
    sub[-1] = 2.0 * diff
    peclet = abs(params.alpha) * h * rho / (2.0 * params.D)
    if peclet >= 1.0:
        warnings.warn(f"cell Peclet number {peclet:.3g} >= 1", PecletWarning, stacklevel=2)
    return TridiagonalOperator(sub, main, sup, peclet)


def cumulative_integral(profile, grid: Grid) -> np.ndarray:
    """Cumulative trapezoid integral ``int_0^{y_i} v ds`` of a v-form profile."""
    v = profile.values if isinstance(profile, StateProfile) else np.asarray(profile, dtype=float)
    out = np.empty(v.size)
    out[0] = 0.0
    np.cumsum(0.5 * grid.h * (v[:-1] + v[1:]), out=out[1:])
    return out


def _exp_factor(params: ModelParameters, y: np.ndarray, t: float) -> np.ndarray:
    rho, _ = params.evolution.rate(t)
    rate = params.alpha / params.D * float(rho)
    if abs(rate) * params.L0 > _EXP_LIMIT:
        raise ScalingError(
            f"|alpha/D| rho L0 = {abs(rate) * params.L0:.1f} overflows the z/v map; "
            "solve in v-form instead"
        )
    return np.exp(rate * y)


def _nodes_for(profile: StateProfile, params: ModelParameters) -> np.ndarray:
    return Grid(len(profile), params.L0).nodes


def to_v_form(profile: StateProfile, params: ModelParameters, t: float) -> StateProfile:
    """Map a profile to the density representation ``v = exp((alpha/D) rho y) z``."""
    if profile.form == "v":
        return profile
    return StateProfile(profile.values * _exp_factor(params, _nodes_for(profile, params), t), "v")


def to_z_form(profile: StateProfile, params: ModelParameters, t: float) -> StateProfile:
    """Inverse of :func:`to_v_form`."""
    if profile.form == "z":
        return profile
    return StateProfile(profile.values / _exp_factor(params, _nodes_for(profile, params), t), "z")


def reaction_coefficients(params: ModelParameters, grid: Grid, t: float, state=None, mu=None):
    """Diagonal reaction rates of the z-form equation at time ``t``.

    With ``state`` (nonlinear mode) the light includes self-shading computed
    from the state's cumulative density.  With ``mu`` (eigen mode) the light
    is the unshaded ``I0 exp(-k0 rho y)`` and growth is divided by ``mu``.
    """
    if (state is None) == (mu is None):
        raise ValueError("pass exactly one of state (nonlinear mode) or mu (eigen mode)")
    y = grid.nodes
    rho, rhodot = params.evolution.rate(t)
    rho, rhodot = float(rho), float(rhodot)
    shading = 0.0
    weight = 1.0
    if state is not None:
        v = to_v_form(state, params, t).values
        shading = params.k1 * rho * cumulative_integral(v, grid)
    else:
        if not mu > 0.0:
            raise DomainError("mu must be positive")
        weight = 1.0 / mu
    light = params.light(t) * np.exp(-params.k0 * rho * y - shading)
    death = params.death.evaluate(rho * y, t)
    return (weight * params.growth(light) - death - rhodot / rho
            - params.alpha * y * rhodot / params.D)


def mass_weights(params: ModelParameters, grid: Grid, t: float) -> np.ndarray:
    """Quadrature weights ``w`` with ``sum(w * z) ~ int_0^L0 v dy``.

    The weights form the left null vector of the transport stencil, so the
    discrete mass they define is conserved exactly by the transport solve.
    Interior weights are ``h r^i`` with ``r = (1+g)/(1-g)``, the discrete
    analogue of ``exp((alpha/D) rho h)``, where ``g`` is the cell Peclet
    number; end weights are ``h (1 +- g) / 2``.  For ``alpha = 0`` this is
    the trapezoid rule.
    """
    rho, _ = params.evolution.rate(t)
    g = params.alpha * grid.h * float(rho) / (2.0 * params.D)
    i = np.arange(grid.N)
    if abs(g) >= 1.0:
        # no positive null vector exists; fall back to trapezoid in v
        w = np.full(grid.N, grid.h)
        w[[0, -1]] *= 0.5
        return w * _exp_factor(params, grid.nodes, t)
    _exp_factor(params, grid.nodes, t)  # overflow guard
    log_r = np.log1p(g) - np.log1p(-g)
    w = grid.h * np.exp(log_r * i)
    w[0] = 0.5 * grid.h * (1.0 + g)
    w[-1] = 0.5 * grid.h * np.exp(log_r * (grid.N - 1)) * (1.0 - g)
    return w


def total_mass(profile: StateProfile, grid: Grid, t: float, params: ModelParameters,
               rule: str = "scheme") -> float:
    """Physical population ``int_0^{rho L0} u dx = rho(t) int_0^L0 v dy``.

    ``rule="scheme"`` uses :func:`mass_weights` (conserved by the solver);
    ``rule="trapezoid"`` applies the plain trapezoid rule to ``v``.  Both
    coincide when ``alpha = 0``.
    """
    rho, _ = params.evolution.rate(t)
    if rule == "scheme":
        z = to_z_form(profile, params, t).values
        return float(rho) * float(np.dot(mass_weights(params, grid, t), z))
    if rule == "trapezoid":
        v = to_v_form(profile, params, t).values
        return float(rho) * float(cumulative_integral(v, grid)[-1])
    raise ValueError(f"unknown quadrature rule {rule!r}")
