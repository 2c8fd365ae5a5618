"""Physical and biological model fields for a light-limited water column.

The column occupies the physical depth interval ``[0, rho(t) * L0]``.  All
solvers work on the fixed reference interval ``[0, L0]`` through the
isotropic change of variables ``x = rho(t) * y``; the helpers here evaluate
every field at a scaled depth ``y`` and time ``t``.

Everything in this module is immutable and side-effect free.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import ConfigError, DomainError, ModelValidityError

__all__ = [
    "GrowthFunction",
    "LightSchedule",
    "AffineDeath",
    "TabulatedDeath",
    "ExpCosineEvolution",
    "TabulatedEvolution",
    "ModelParameters",
    "Issue",
    "growth_rate",
    "light_intensity",
    "death_rate",
    "evolution_rate",
    "validate",
]


# ---------------------------------------------------------------------------
# periodic interpolation helpers


def _trig_interpolant(samples: np.ndarray, period: float):
    """Return a callable evaluating the trigonometric interpolant of
    equispaced periodic ``samples`` (first axis is time)."""
    samples = np.asarray(samples, dtype=float)
    m = samples.shape[0]
    coeffs = np.fft.rfft(samples, axis=0) / m
    k = np.arange(coeffs.shape[0])
    weights = np.full(coeffs.shape[0], 2.0)
    weights[0] = 1.0
    if m % 2 == 0:
        weights[-1] = 1.0
    coeffs = coeffs * weights.reshape((-1,) + (1,) * (samples.ndim - 1))
    omega = 2.0 * np.pi / period

    def evaluate(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        phase = np.exp(1j * omega * np.outer(t, k))
        return np.real(phase @ coeffs.reshape(coeffs.shape[0], -1)).reshape(
            (t.size,) + samples.shape[1:]
        )

    return evaluate


def _periodic_derivative(samples: np.ndarray, period: float) -> np.ndarray:
    """Fourth-order centred periodic difference of equispaced samples."""
    h = period / samples.size
    return (
        -np.roll(samples, -2) + 8.0 * np.roll(samples, -1)
        - 8.0 * np.roll(samples, 1) + np.roll(samples, 2)
    ) / (12.0 * h)


# ---------------------------------------------------------------------------
# field types


@dataclass(frozen=True)
class GrowthFunction:
    """Saturating light response ``g(I) = a I / (1 + b I)``.

    ``a`` is the maximal uptake rate (1/time), ``b`` the half-saturation
    shape coefficient (1/light).  ``g(0) = 0`` and ``g < a/b``.
    """

    a: float
    b: float

    def __post_init__(self):
        if not (self.a >= 0.0 and self.b >= 0.0):
            raise ConfigError(f"growth coefficients must be nonnegative, got a={self.a}, b={self.b}")

    def __call__(self, intensity):
        intensity = np.asarray(intensity, dtype=float)
        return self.a * intensity / (1.0 + self.b * intensity)


@dataclass(frozen=True)
class LightSchedule:
    """Incident surface light ``I0(t) = mean + amplitude * cos(omega t + phase)``."""

    mean: float
    amplitude: float = 0.0
    omega: float = 0.0
    phase: float = 0.0

    @property
    def is_constant(self) -> bool:
        return self.amplitude == 0.0 or self.omega == 0.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.mean + self.amplitude * np.cos(self.omega * t + self.phase)


@dataclass(frozen=True)
class AffineDeath:
    """Death rate ``d(x, t) = c0 + c1 * x`` at physical depth ``x``."""

    c0: float
    c1: float = 0.0

    kind = "affine"

    @property
    def is_time_constant(self) -> bool:
        return True

    @property
    def depth_monotone(self) -> bool:
        """True when ``d`` is nondecreasing and not constant in depth."""
        return self.c1 > 0.0

    @property
    def depth_independent(self) -> bool:
        return self.c1 == 0.0

    def evaluate(self, x, t=0.0):
        x, _ = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
        return self.c0 + self.c1 * x


@dataclass(frozen=True)
class TabulatedDeath:
    """Death rate tabulated on ``depths`` (physical) x equispaced times.

    ``values[j, i]`` is ``d(depths[i], j * period / n_times)``.  Depth is
    interpolated linearly (clamped outside the table), time by the
    trigonometric interpolant, so the field is smooth and exactly periodic.
    A single depth column gives a depth-independent ``d(t)``.
    """

    depths: tuple
    values: tuple
    period: float
    _interp: object = field(init=False, repr=False, compare=False)

    kind = "tabulated"

    def __post_init__(self):
        depths = np.asarray(self.depths, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != depths.size:
            raise ConfigError("death table must have shape (n_times, n_depths)")
        if depths.size > 1 and np.any(np.diff(depths) <= 0):
            raise ConfigError("death table depths must be strictly increasing")
        if values.shape[0] < 1:
            raise ConfigError("death table needs at least one time sample")
        object.__setattr__(self, "depths", tuple(depths.tolist()))
        object.__setattr__(self, "values", tuple(map(tuple, values.tolist())))
        object.__setattr__(self, "_interp", _trig_interpolant(values, self.period))

    @property
    def is_time_constant(self) -> bool:
        v = np.asarray(self.values)
        return bool(np.all(v == v[0]))

    @property
    def depth_independent(self) -> bool:
        v = np.asarray(self.values)
        return bool(np.all(v == v[:, :1]))

    @property
    def depth_monotone(self) -> bool:
        v = np.asarray(self.values)
        if v.shape[1] < 2:
            return False
        dv = np.diff(v, axis=1)
        return bool(np.all(dv >= 0.0) and np.any(dv > 0.0))

    def evaluate(self, x, t=0.0):
        x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
        depths = np.asarray(self.depths)
        tu, tinv = np.unique(t.ravel(), return_inverse=True)
        rows = self._interp(tu)
        if depths.size == 1:
            return rows[tinv, 0].reshape(x.shape)
        xc = np.clip(x.ravel(), depths[0], depths[-1])
        idx = np.clip(np.searchsorted(depths, xc, side="right") - 1, 0, depths.size - 2)
        frac = (xc - depths[idx]) / (depths[idx + 1] - depths[idx])
        out = (1.0 - frac) * rows[tinv, idx] + frac * rows[tinv, idx + 1]
        return out.reshape(x.shape)


DeathField = Union[AffineDeath, TabulatedDeath]


@dataclass(frozen=True)
class ExpCosineEvolution:
    """Evolving rate ``rho(t) = exp(sigma * (1 - cos(omega t)))``.

    ``sigma = 0`` is the fixed domain.  ``rho(0) = 1`` for every ``sigma``.
    """

    sigma: float
    omega: float

    kind = "exp-cosine"

    @classmethod
    def fixed(cls, period: float = 2.0 * math.pi) -> "ExpCosineEvolution":
        return cls(0.0, 2.0 * math.pi / period)

    @property
    def is_fixed(self) -> bool:
        return self.sigma == 0.0

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.omega

    def rate(self, t):
        t = np.asarray(t, dtype=float)
        if self.sigma == 0.0:
            return np.ones(t.shape), np.zeros(t.shape)
        rho = np.exp(self.sigma * (1.0 - np.cos(self.omega * t)))
        return rho, self.sigma * self.omega * np.sin(self.omega * t) * rho


@dataclass(frozen=True)
class TabulatedEvolution:
    """Evolving rate given by equispaced samples over one period.

    ``samples[j] = rho(j * period / n)``.  ``rho`` is the trigonometric
    interpolant of the samples; its derivative comes from fourth-order
    centred periodic differences of the samples, interpolated the same way.
    """

    samples: tuple
    period: float
    _rho: object = field(init=False, repr=False, compare=False)
    _rhodot: object = field(init=False, repr=False, compare=False)

    kind = "tabulated"

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 1 or s.size < 8:
            raise ConfigError("tabulated evolution needs at least 8 samples per period")
        object.__setattr__(self, "samples", tuple(s.tolist()))
        object.__setattr__(self, "_rho", _trig_interpolant(s, self.period))
        object.__setattr__(
            self, "_rhodot", _trig_interpolant(_periodic_derivative(s, self.period), self.period)
        )

    @property
    def is_fixed(self) -> bool:
        return bool(np.all(np.asarray(self.samples) == 1.0))

    def rate(self, t):
        t = np.asarray(t, dtype=float)
        return self._rho(t.ravel()).reshape(t.shape), self._rhodot(t.ravel()).reshape(t.shape)


EvolutionProfile = Union[ExpCosineEvolution, TabulatedEvolution]


@dataclass(frozen=True)
class ModelParameters:
    """Complete parameter set of the single-species column model.

    Attributes
    ----------
    D : float
        Vertical turbulent diffusion rate (length^2/time).
    alpha : float
        Sinking (> 0) or buoyant (< 0) velocity (length/time).
    k0, k1 : float
        Background turbidity and species self-shading coefficients.
    growth, light, death, evolution
        Field objects, see the classes above.
    L0 : float
        Column depth at ``t = 0``.
    T : float
        Period shared by all time-dependent fields.
    """

    D: float
    alpha: float
    k0: float
    k1: float
    growth: GrowthFunction
    light: LightSchedule
    death: DeathField
    evolution: EvolutionProfile
    L0: float
    T: float

    def __post_init__(self):
        if not self.D > 0.0:
            raise ConfigError(f"D must be positive, got {self.D}")
        if not self.L0 > 0.0:
            raise ConfigError(f"L0 must be positive, got {self.L0}")
        if not self.T > 0.0:
            raise ConfigError(f"T must be positive, got {self.T}")
        if not (self.k0 >= 0.0 and self.k1 >= 0.0):
            raise ConfigError("k0 and k1 must be nonnegative")
        if not math.isfinite(self.alpha):
            raise ConfigError("alpha must be finite")

    @property
    def peclet_ratio(self) -> float:
        """``alpha / D``, the exponent rate of the z/v transform."""
        return self.alpha / self.D


# ---------------------------------------------------------------------------
# pointwise operations


def growth_rate(g: GrowthFunction, intensity):
    """Evaluate ``g`` at a light intensity, rejecting negative input."""
    intensity = np.asarray(intensity, dtype=float)
    if np.any(intensity < 0.0):
        raise DomainError("light intensity must be nonnegative")
    out = g(intensity)
    return float(out) if out.ndim == 0 else out


def _check_depth(params: ModelParameters, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    tol = 1e-12 * params.L0
    if np.any(y < -tol) or np.any(y > params.L0 + tol):
        raise DomainError(f"scaled depth outside [0, {params.L0}]")
    return y


def light_intensity(params: ModelParameters, y, t: float, density_cumulative=0.0):
    """Light at scaled depth ``y``.

    ``density_cumulative`` is the reference-coordinate integral
    ``int_0^y v(s, t) ds``; the physical shading integral is ``rho(t)``
    times it.
    """
    y = _check_depth(params, y)
    rho, _ = params.evolution.rate(t)
    cum = np.asarray(density_cumulative, dtype=float)
    out = params.light(t) * np.exp(-params.k0 * rho * y - params.k1 * rho * cum)
    return float(out) if np.ndim(out) == 0 else out


def death_rate(params: ModelParameters, y, t: float):
    """Death rate ``d(rho(t) y, t)``; raises if it is not strictly positive."""
    y = _check_depth(params, y)
    rho, _ = params.evolution.rate(t)
    out = params.death.evaluate(rho * y, t)
    if np.any(~(out > 0.0)):
        raise ModelValidityError("death rate must be strictly positive")
    return float(out) if np.ndim(out) == 0 else out


def evolution_rate(profile: EvolutionProfile, t: float) -> tuple[float, float]:
    """Return ``(rho(t), rho'(t))``."""
    rho, rhodot = profile.rate(t)
    return float(rho), float(rhodot)


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Issue:
    severity: str  # "error" or "warning"
    code: str
    message: str


def _field_is_periodic(fn, T, tt, scale) -> float:
    return float(np.max(np.abs(fn(tt + T) - fn(tt)))) / max(scale, 1e-300)


def validate(params: ModelParameters, *, n_times: int = 97, n_depths: int = 33) -> list[Issue]:
    """Check the standing hypotheses on a sampling lattice.

    Returns the list of violated invariants; an empty list means the
    parameter set is admissible.  Nothing is raised.
    """
    issues: list[Issue] = []
    T = params.T
    tt = np.linspace(0.0, T, n_times, endpoint=False)
    rho, _ = params.evolution.rate(tt)

    if np.any(~(rho > 0.0)):
        issues.append(Issue("error", "rho-positive", "evolving rate must stay positive"))
    rho0, _ = evolution_rate(params.evolution, 0.0)
    if abs(rho0 - 1.0) > 1e-12:
        issues.append(Issue("error", "rho-initial", f"rho(0) = {rho0!r}, expected 1"))

    light = params.light(tt)
    if np.any(light < 0.0):
        issues.append(Issue("error", "light-negative", "incident light must be nonnegative"))
    if np.all(light == 0.0):
        issues.append(Issue("error", "light-zero", "incident light vanishes over the period"))

    if params.growth.a <= 0.0:
        issues.append(Issue("error", "growth-zero", "growth function vanishes identically"))

    xmax = float(np.max(rho)) * params.L0 if np.all(rho > 0) else params.L0
    xx = np.linspace(0.0, xmax, n_depths)
    X, TT = np.meshgrid(xx, tt)
    d = params.death.evaluate(X, TT)
    if np.any(~(d > 0.0)):
        issues.append(Issue("error", "death-positive",
                            f"death rate not strictly positive (min {float(np.min(d))!r})"))

    # periodicity with the declared period
    def rho_fn(t):
        return params.evolution.rate(t)[0]

    def death_fn(t):
        Xs, Ts = np.meshgrid(xx, t)
        return params.death.evaluate(Xs, Ts)

    fields = {"rho": rho_fn, "light": params.light, "death": death_fn}
    scales = {"rho": float(np.max(np.abs(rho))), "light": float(np.max(np.abs(light))) or 1.0,
              "death": float(np.max(np.abs(d))) or 1.0}
    for name, fn in fields.items():
        res = _field_is_periodic(fn, T, tt, scales[name])
        if res > 1e-9:
            issues.append(Issue("error", f"{name}-periodic",
                                f"{name} is not {T!r}-periodic (residual {res:.3e})"))

    # declared period minimality: only meaningful if something varies in time
    varying = [
        name for name, fn in fields.items()
        if float(np.max(np.ptp(np.reshape(fn(tt), (tt.size, -1)), axis=0)))
        > 1e-12 * scales[name]
    ]
    if varying and not any(i.code.endswith("-periodic") for i in issues):
        for k in range(2, 13):
            if all(_field_is_periodic(fields[n], T / k, tt, scales[n]) < 1e-9 for n in varying):
                issues.append(Issue("warning", "period-minimality",
                                    f"all fields are also {T / k!r}-periodic (T/{k}); "
                                    "declared period is not minimal"))
                break

    # standing monotonicity hypothesis of the threshold theory
    death = params.death
    if not (death.depth_monotone or (death.depth_independent and params.k0 > 0.0)):
        issues.append(Issue("warning", "standing-hypothesis",
                            "expected d increasing in depth, or d = d(t) with k0 > 0"))
    return issues
