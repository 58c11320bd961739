"""
Phase-space discretization of (r, mu, omega) and the angular quadrature.

Every angular mean in the package goes through ``angular_moment`` or
``field_moment`` so that the Gauss-Legendre exactness carries over to the
discrete moment identities.
"""
import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from django.conf import settings

from .exceptions import InvalidArgument


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.nodes)

    @cached_property
    def differentiation_matrix(self):
        """Collocation derivative on the nodes.

        Exact for polynomials of degree below the number of nodes. The
        diagonal is set from the row sums so constants map to zero exactly.
        """
        x = self.nodes
        diff = x[:, None] - x[None, :]
        np.fill_diagonal(diff, 1.0)
        scale = np.prod(diff, axis=1)
        matrix = (scale[:, None] / scale[None, :]) / diff
        np.fill_diagonal(matrix, 0.0)
        np.fill_diagonal(matrix, -matrix.sum(axis=1))
        return matrix


def gauss_legendre_rule(n_ordinates):
    if int(n_ordinates) != n_ordinates or n_ordinates < 2:
        raise InvalidArgument(f'need at least 2 ordinates, got {n_ordinates}')
    x, w = np.polynomial.legendre.leggauss(int(n_ordinates))
    # enforce exact mirror symmetry of the node set
    nodes = 0.5 * (x - x[::-1])
    weights = 0.5 * (w + w[::-1])
    return QuadratureRule(nodes=nodes, weights=weights)


def angular_moment(f_slice, order, rule):
    """Return (1/2) sum_k w_k f(mu_k) mu_k**order for one (r, omega) point."""
    f_slice = np.asarray(f_slice, dtype=float)
    if order not in (0, 1, 2):
        raise InvalidArgument(f'moment order must be 0, 1 or 2, got {order}')
    if f_slice.shape != (len(rule),):
        raise InvalidArgument(
            f'slice has {f_slice.size} values for {len(rule)} ordinates')
    return 0.5 * np.sum(rule.weights * rule.nodes ** order * f_slice)


def field_moment(values, order, rule, axis=1):
    """Vectorized ``angular_moment`` along the ordinate axis of an array."""
    values = np.asarray(values, dtype=float)
    if values.shape[axis] != len(rule):
        raise InvalidArgument(
            f'axis {axis} has {values.shape[axis]} entries for {len(rule)} ordinates')
    kernel = 0.5 * rule.weights * rule.nodes ** order
    return np.tensordot(np.moveaxis(values, axis, -1), kernel, axes=([-1], [0]))


class MomentRole(enum.Enum):
    BETA = 'beta'
    BETA_T = 'beta_t'
    BETA_S = 'beta_s'
    FIRST_MOMENT = 'first_moment'
    RESIDUAL = 'residual'


@dataclass(frozen=True, eq=False)
class MomentField:
    values: np.ndarray
    role: MomentRole = MomentRole.BETA

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise InvalidArgument('moment fields are indexed (r, omega)')
        if not np.all(np.isfinite(values)):
            raise InvalidArgument(f'{self.role.value} contains non-finite values')
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'role', MomentRole(self.role))

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True, eq=False)
class DistributionField:
    """Occupation numbers indexed (r, mu, omega).

    ``admissible`` marks physical data expected to stay within [0, 1];
    manufactured verification fields set it to False.
    """
    values: np.ndarray
    admissible: bool = True

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 3:
            raise InvalidArgument('distribution fields are indexed (r, mu, omega)')
        if not np.all(np.isfinite(values)):
            raise InvalidArgument('distribution field contains non-finite values')
        object.__setattr__(self, 'values', values)

    @property
    def shape(self):
        return self.values.shape

    def bounds_violation(self):
        """Largest excursion outside [0, 1], zero when inside."""
        return float(max(0.0, -self.values.min(), self.values.max() - 1.0))

    def with_values(self, values):
        return DistributionField(values=values, admissible=self.admissible)


@dataclass(frozen=True, eq=False)
class PhaseGrid:
    r_edges: np.ndarray
    mu_nodes: np.ndarray
    mu_weights: np.ndarray
    omega_groups: np.ndarray
    c: float = field(default=None)

    def __post_init__(self):
        r_edges = np.asarray(self.r_edges, dtype=float)
        mu_nodes = np.asarray(self.mu_nodes, dtype=float)
        mu_weights = np.asarray(self.mu_weights, dtype=float)
        omega_groups = np.atleast_1d(np.asarray(self.omega_groups, dtype=float))
        c = settings.SPEED_OF_LIGHT if self.c is None else float(self.c)

        if r_edges.size < 2 or np.any(np.diff(r_edges) <= 0) or r_edges[0] < 0:
            raise InvalidArgument('radial edges must be non-negative and strictly increasing')
        if mu_nodes.shape != mu_weights.shape or mu_nodes.size < 2:
            raise InvalidArgument('ordinates and weights must match')
        if np.any(np.diff(mu_nodes) <= 0):
            raise InvalidArgument('ordinates must be strictly increasing')
        if not np.allclose(mu_nodes, -mu_nodes[::-1], rtol=0, atol=1e-14):
            raise InvalidArgument('ordinates must be symmetric about zero')
        if np.any(mu_weights <= 0) or abs(mu_weights.sum() - 2.0) > 1e-14:
            raise InvalidArgument('weights must be positive and sum to 2')
        if np.any(omega_groups <= 0) or np.any(np.diff(omega_groups) <= 0):
            raise InvalidArgument('energy groups must be positive and strictly increasing')
        if c <= 0:
            raise InvalidArgument('speed of light must be positive')

        object.__setattr__(self, 'r_edges', r_edges)
        object.__setattr__(self, 'mu_nodes', mu_nodes)
        object.__setattr__(self, 'mu_weights', mu_weights)
        object.__setattr__(self, 'omega_groups', omega_groups)
        object.__setattr__(self, 'c', c)

    @classmethod
    def build(cls, n_r, radius, n_ordinates=None, n_groups=1, omega_min=1.0,
              group_ratio=None, c=None):
        """Uniform radial cells on [0, radius] and geometric energy groups."""
        if n_r < 1 or radius <= 0:
            raise InvalidArgument('need at least one radial cell on a positive radius')
        if n_ordinates is None:
            n_ordinates = settings.DEFAULT_ORDINATES
        if group_ratio is None:
            group_ratio = settings.DEFAULT_GROUP_RATIO
        if n_groups > 1 and group_ratio <= 1:
            raise InvalidArgument('group ratio must exceed 1')
        rule = gauss_legendre_rule(n_ordinates)
        omega = omega_min * group_ratio ** np.arange(n_groups)
        return cls(r_edges=np.linspace(0.0, radius, n_r + 1),
                   mu_nodes=rule.nodes,
                   mu_weights=rule.weights,
                   omega_groups=omega,
                   c=c)

    @cached_property
    def rule(self):
        return QuadratureRule(nodes=self.mu_nodes, weights=self.mu_weights)

    @cached_property
    def r_centers(self):
        return 0.5 * (self.r_edges[1:] + self.r_edges[:-1])

    @cached_property
    def dr(self):
        return np.diff(self.r_edges)

    @cached_property
    def face_areas(self):
        return self.r_edges ** 2

    @cached_property
    def volumes(self):
        return np.diff(self.r_edges ** 3) / 3.0

    @property
    def radius(self):
        return self.r_edges[-1]

    @property
    def n_r(self):
        return self.r_centers.size

    @property
    def n_mu(self):
        return self.mu_nodes.size

    @property
    def n_omega(self):
        return self.omega_groups.size

    @property
    def shape(self):
        return (self.n_r, self.n_mu, self.n_omega)

    def same_as(self, other):
        return (self.shape == other.shape
                and np.array_equal(self.r_edges, other.r_edges)
                and np.array_equal(self.mu_nodes, other.mu_nodes)
                and np.array_equal(self.omega_groups, other.omega_groups)
                and self.c == other.c)

    def isotropic(self, moment_values, admissible=True):
        """Spread (r, omega) values over all ordinates."""
        moment_values = np.asarray(moment_values, dtype=float)
        values = np.broadcast_to(moment_values[:, None, :], self.shape).copy()
        return DistributionField(values=values, admissible=admissible)

    def moment(self, distribution, order=0, role=None):
        if distribution.shape != self.shape:
            raise InvalidArgument(
                f'field shape {distribution.shape} does not match grid {self.shape}')
        if role is None:
            role = MomentRole.FIRST_MOMENT if order == 1 else MomentRole.BETA
        return MomentField(field_moment(distribution.values, order, self.rule), role)

    def weighted_norm(self, values, mask=None):
        """L2 norm with r^2 dr and d omega weights over (r, omega) values."""
        values = np.asarray(values, dtype=float)
        weights = (self.r_centers ** 2 * self.dr)[:, None] * _group_widths(self.omega_groups)[None, :]
        if mask is not None:
            weights = weights * mask
        return float(np.sqrt(np.sum(weights * values ** 2)))


def _group_widths(omega):
    if omega.size == 1:
        return np.ones(1)
    edges = np.concatenate([[omega[0]], 0.5 * (omega[1:] + omega[:-1]), [omega[-1]]])
    widths = np.diff(edges)
    widths[0] += 0.5 * (omega[1] - omega[0])
    widths[-1] += 0.5 * (omega[-1] - omega[-2])
    return widths
