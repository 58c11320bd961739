"""
Background matter and opacities.

Profiles are piecewise linear in r (optionally tabulated per energy) and
hold the epsilon-independent rates; ``evaluate`` applies the scaling of the
model on the way out.
"""
import enum
import logging
from dataclasses import dataclass, replace

import numpy as np
from django.conf import settings
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import brentq

from .exceptions import InvalidArgument, OutOfDomain, SingularOpacity

logger = logging.getLogger(__name__)


class ScalingMode(enum.Enum):
    NONE = 'none'
    REACTION_COLLISION = 'reaction_collision'
    TIME = 'time'
    BOTH = 'both'
    TIME_SQUARED = 'time_squared'

    @property
    def rate_power(self):
        """Exponent p of the rate scaling j = epsilon**p * j_bar."""
        if self in (ScalingMode.REACTION_COLLISION, ScalingMode.BOTH):
            return -1
        if self is ScalingMode.TIME_SQUARED:
            return 1
        return 0

    @property
    def time_power(self):
        """Exponent of epsilon multiplying the D+ part of the operator."""
        if self in (ScalingMode.TIME, ScalingMode.BOTH):
            return 1
        if self is ScalingMode.TIME_SQUARED:
            return 2
        return 0


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Piecewise-linear table in r; ``values`` is (n_knots,) or (n_knots, n_energies)."""
    radii: np.ndarray
    values: np.ndarray
    energies: np.ndarray = None

    def __post_init__(self):
        radii = np.asarray(self.radii, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if radii.ndim != 1 or radii.size < 1 or np.any(np.diff(radii) <= 0):
            raise InvalidArgument('profile radii must be strictly increasing')
        if values.shape[0] != radii.size or values.ndim > 2:
            raise InvalidArgument('profile values must have one row per radius')
        energies = None
        if values.ndim == 2:
            energies = np.asarray(self.energies, dtype=float)
            if energies.shape != (values.shape[1],) or np.any(np.diff(energies) <= 0):
                raise InvalidArgument('energy-dependent profiles need increasing energies')
        object.__setattr__(self, 'radii', radii)
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'energies', energies)

    @classmethod
    def constant(cls, value):
        return cls(radii=np.array([0.0]), values=np.array([float(value)]))

    def __call__(self, r, omega=None):
        r = np.asarray(r, dtype=float)
        if self.values.ndim == 1:
            if self.radii.size == 1:
                return np.full(np.broadcast(r, omega if omega is not None else 0.0).shape,
                               self.values[0])
            out = np.interp(r, self.radii, self.values)
            if omega is not None:
                out = np.broadcast_to(out, np.broadcast(r, omega).shape).copy()
            return out
        if omega is None:
            raise InvalidArgument('energy-dependent profile evaluated without energy')
        omega = np.asarray(omega, dtype=float)
        if np.any(omega < self.energies[0]) or np.any(omega > self.energies[-1]):
            raise OutOfDomain(f'omega outside tabulated range [{self.energies[0]}, {self.energies[-1]}]')
        r_b, omega_b = np.broadcast_arrays(r, omega)
        if self.radii.size == 1:
            return np.interp(omega_b, self.energies, self.values[0])
        r_b = np.clip(r_b, self.radii[0], self.radii[-1])
        if self.energies.size == 1:
            return np.interp(r_b, self.radii, self.values[:, 0])
        table = RegularGridInterpolator((self.radii, self.energies), self.values)
        return table(np.stack([r_b, omega_b], axis=-1))

    def derivative(self, r):
        """Slope of the linear segment containing r (omega-independent tables)."""
        r = np.asarray(r, dtype=float)
        if self.values.ndim != 1 or self.radii.size == 1:
            return np.zeros_like(r)
        slopes = np.diff(self.values) / np.diff(self.radii)
        index = np.clip(np.searchsorted(self.radii, r, side='right') - 1, 0, slopes.size - 1)
        inside = (r >= self.radii[0]) & (r <= self.radii[-1])
        return np.where(inside, slopes[index], 0.0)


@dataclass(frozen=True, eq=False)
class TimeProfile:
    times: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        return float(np.interp(t, self.times, self.values))


@dataclass(frozen=True, eq=False)
class MaterialState:
    """Matter and rates at one phase point, or arrays of them indexed (r, omega)."""
    rho: np.ndarray
    v: np.ndarray
    dlnrho_cdt: np.ndarray
    j: np.ndarray
    chi: np.ndarray
    phi0: np.ndarray
    phi1: np.ndarray

    @property
    def chi_tilde(self):
        return self.j + self.chi

    def check(self):
        if np.any(np.asarray(self.j) < 0) or np.any(np.asarray(self.chi) < 0):
            raise InvalidArgument('emissivity and absorptivity must be non-negative')
        if np.any(np.abs(self.phi1) > self.phi0):
            raise InvalidArgument('|phi1| must not exceed phi0')
        return self


@dataclass(frozen=True, eq=False)
class MatterModel:
    radius: float
    rho: RadialProfile
    v: RadialProfile
    j: RadialProfile
    chi: RadialProfile
    phi0: RadialProfile
    phi1: RadialProfile
    compression: object = None
    scaling: ScalingMode = ScalingMode.NONE
    epsilon: float = 1.0
    c: float = None
    omega_max: float = np.inf
    kernel: object = None

    def __post_init__(self):
        if self.radius <= 0:
            raise InvalidArgument('model radius must be positive')
        object.__setattr__(self, 'scaling', ScalingMode(self.scaling))
        if self.c is None:
            object.__setattr__(self, 'c', settings.SPEED_OF_LIGHT)
        if self.epsilon <= 0:
            raise InvalidArgument(f'epsilon must be positive, got {self.epsilon}')

    @property
    def rate_factor(self):
        return self.epsilon ** self.scaling.rate_power

    @property
    def time_weight(self):
        """Weight of D+ in the assembled operator (epsilon**k D+ + D-)."""
        return self.epsilon ** self.scaling.time_power

    def compression_rate(self, t):
        if self.compression is None:
            return 0.0
        if callable(self.compression):
            return float(self.compression(t))
        return float(self.compression)

    @classmethod
    def uniform(cls, radius, j, chi, phi0=0.0, phi1=0.0, rho=1.0, v=0.0, **kwargs):
        """Spatially constant model, convenient for scenarios and tests."""
        return cls(radius=radius,
                   rho=RadialProfile.constant(rho),
                   v=RadialProfile.constant(v),
                   j=RadialProfile.constant(j),
                   chi=RadialProfile.constant(chi),
                   phi0=RadialProfile.constant(phi0),
                   phi1=RadialProfile.constant(phi1),
                   **kwargs)


def evaluate(model, r, omega, t=0.0):
    """Interpolate the model at (r, omega, t); arrays broadcast against each other."""
    r = np.asarray(r, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if np.any(r < 0) or np.any(r > model.radius * (1 + 1e-12)):
        raise OutOfDomain(f'r outside [0, {model.radius}]')
    if np.any(omega <= 0) or np.any(omega > model.omega_max):
        raise OutOfDomain(f'omega outside (0, {model.omega_max}]')

    shape = np.broadcast(r, omega).shape
    rho = np.broadcast_to(model.rho(r), shape)
    if np.any(rho <= 0):
        raise InvalidArgument('density must be positive')
    weight = model.time_weight
    v = weight * np.broadcast_to(model.v(r), shape)
    dlnrho_dr = np.broadcast_to(model.rho.derivative(r), shape) / rho
    dlnrho_cdt = (weight * model.compression_rate(t) + v * dlnrho_dr) / model.c

    factor = model.rate_factor
    state = MaterialState(rho=rho,
                          v=v,
                          dlnrho_cdt=dlnrho_cdt,
                          j=factor * model.j(r, omega),
                          chi=factor * model.chi(r, omega),
                          phi0=factor * model.phi0(r, omega),
                          phi1=factor * model.phi1(r, omega))
    return state.check()


def evaluate_on_grid(model, grid, t=0.0):
    """Material state arrays indexed (r_center, omega_group)."""
    return evaluate(model, grid.r_centers[:, None], grid.omega_groups[None, :], t)


def mean_free_path(state):
    denominator = state.chi_tilde + state.phi0 - state.phi1
    if np.any(np.asarray(denominator) <= 0):
        raise SingularOpacity('chi_tilde + phi0 - phi1 <= 0')
    return 1.0 / denominator


def opacity(model, r, omega, t=0.0):
    state = evaluate(model, r, omega, t)
    return state.chi_tilde + state.phi0 - state.phi1


def scattering_sphere_radius(model, omega, tau_threshold=None, t=0.0):
    """Largest r whose outward optical depth reaches ``tau_threshold``.

    The optical depth is integrated on the union of all profile knots and a
    fine uniform mesh, so it is exact for piecewise-linear opacities.
    """
    if tau_threshold is None:
        tau_threshold = settings.TAU_THRESHOLD
    knots = [model.radius * np.linspace(0.0, 1.0, 2049)]
    for profile in (model.j, model.chi, model.phi0, model.phi1):
        knots.append(profile.radii[(profile.radii >= 0) & (profile.radii <= model.radius)])
    mesh = np.unique(np.concatenate(knots))

    kappa = opacity(model, mesh, omega, t)
    if np.all(kappa <= 0):
        return 0.0
    # tau(r) = integral from r to R
    tau = cumulative_trapezoid(kappa[::-1], -mesh[::-1], initial=0.0)[::-1]
    if tau[0] < tau_threshold:
        return 0.0
    above = np.nonzero(tau >= tau_threshold)[0]
    i = above[-1]
    if i == mesh.size - 1 or tau[i] == tau_threshold:
        return float(mesh[i])
    a, b = mesh[i], mesh[i + 1]
    kappa_a, kappa_b = kappa[i], kappa[i + 1]

    def excess(x):
        kappa_x = kappa_a + (kappa_b - kappa_a) * (x - a) / (b - a)
        return tau[i + 1] + 0.5 * (kappa_x + kappa_b) * (b - x) - tau_threshold

    return float(brentq(excess, a, b, xtol=1e-14 * max(1.0, b)))


def scattering_sphere_radii(model, grid, tau_threshold=None, t=0.0):
    return np.array([scattering_sphere_radius(model, omega, tau_threshold, t)
                     for omega in grid.omega_groups])


def apply_scaling(model, epsilon, mode):
    """Attach (epsilon, mode) to the model; the profiles keep their unscaled values."""
    if epsilon <= 0:
        raise InvalidArgument(f'epsilon must be positive, got {epsilon}')
    return replace(model, epsilon=float(epsilon), scaling=ScalingMode(mode))
