"""
Discrete kinetic operators: collision integrals, the right-hand side
j + J(f) and the transport operator D = D+ + D-.

Per-ordinate routines take the ordinate axis as ``axis`` (last by default,
``1`` for arrays laid out like ``DistributionField.values``).
"""
import enum
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .exceptions import InvalidArgument, InvalidKernel
from .grid import field_moment
from .matter import evaluate_on_grid


class OperatorPart(enum.Enum):
    FULL = 'full'
    PLUS = 'plus'
    MINUS = 'minus'
    FROZEN = 'frozen'


class Scheme(enum.Enum):
    UPWIND = 'upwind'
    CENTERED = 'centered'


class Inflow(enum.Enum):
    VACUUM = 'vacuum'
    EQUILIBRIUM = 'equilibrium'
    EXTRAPOLATE = 'extrapolate'


@dataclass(frozen=True, eq=False)
class CollisionKernel:
    """Premultiplied kernel samples K(mu_k, mu_l), shape (n, n) or (n_omega, n, n)."""
    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim not in (2, 3) or samples.shape[-1] != samples.shape[-2]:
            raise InvalidKernel('kernel samples must be square in the ordinates')
        if not np.allclose(samples, np.swapaxes(samples, -1, -2), rtol=0, atol=1e-13):
            raise InvalidKernel()
        if np.any(samples < 0):
            raise InvalidKernel('kernel samples must be non-negative')
        object.__setattr__(self, 'samples', samples)

    @property
    def symmetric(self):
        return True

    @classmethod
    def from_legendre(cls, phi0, phi1, rule):
        """Kernel (1/2) phi0 + (3/2) phi1 mu mu' for scalar or per-group coefficients."""
        mumu = np.outer(rule.nodes, rule.nodes)
        phi0 = np.asarray(phi0, dtype=float)[..., None, None]
        phi1 = np.asarray(phi1, dtype=float)[..., None, None]
        return cls(samples=0.5 * phi0 + 1.5 * phi1 * mumu)

    def group(self, index):
        if self.samples.ndim == 2:
            return self
        return CollisionKernel(samples=self.samples[index])


def _expand(value, ndim, axis):
    value = np.asarray(value, dtype=float)
    if value.ndim == 0 or value.ndim == ndim:
        return value
    return np.expand_dims(value, axis)


def _ordinates(rule, ndim, axis):
    shape = [1] * ndim
    shape[axis] = len(rule)
    return rule.nodes.reshape(shape)


def collision_full(f_slice, kernel, rule, axis=-1):
    samples = kernel.samples if isinstance(kernel, CollisionKernel) else CollisionKernel(kernel).samples
    f = np.moveaxis(np.asarray(f_slice, dtype=float), axis, -1)
    if f.shape[-1] != len(rule):
        raise InvalidArgument('slice length does not match the ordinate count')
    weighted = samples * rule.weights
    gain = np.matmul(weighted, f[..., None])[..., 0]
    loss = f * np.matmul(samples, rule.weights)
    return np.moveaxis(gain - loss, -1, axis)


def legendre_truncate(kernel, rule):
    """L2 projection of the kernel on span{1/2, (3/2) mu mu'} under the quadrature."""
    samples = kernel.samples if isinstance(kernel, CollisionKernel) else CollisionKernel(kernel).samples
    weights = np.outer(rule.weights, rule.weights)
    basis = np.stack([np.full_like(weights, 0.5), 1.5 * np.outer(rule.nodes, rule.nodes)])
    gram = np.einsum('akl,bkl,kl->ab', basis, basis, weights)
    projection = np.einsum('...kl,akl,kl->...a', samples, basis, weights)
    coefficients = np.linalg.solve(gram, np.moveaxis(projection, -1, 0).reshape(2, -1))
    coefficients = coefficients.reshape((2,) + projection.shape[:-1])
    return coefficients[0], coefficients[1]


def collision_truncated(f_slice, state, rule, axis=-1):
    f = np.asarray(f_slice, dtype=float)
    if f.shape[axis] != len(rule):
        raise InvalidArgument('slice length does not match the ordinate count')
    ndim = f.ndim
    beta = _expand(field_moment(f, 0, rule, axis), ndim, axis)
    first = _expand(field_moment(f, 1, rule, axis), ndim, axis)
    phi0 = _expand(state.phi0, ndim, axis)
    phi1 = _expand(state.phi1, ndim, axis)
    mu = _ordinates(rule, ndim, axis)
    return -phi0 * f + phi0 * beta + 3.0 * mu * phi1 * first


def interaction(f_slice, state, rule, use_full_kernel=False, kernel=None, axis=-1):
    """J(f) = -chi_tilde f + C(f)."""
    f = np.asarray(f_slice, dtype=float)
    if use_full_kernel:
        if kernel is None:
            raise InvalidArgument('full collision kernel requested but none supplied')
        collision = collision_full(f, kernel, rule, axis)
    else:
        collision = collision_truncated(f, state, rule, axis)
    return -_expand(state.chi_tilde, f.ndim, axis) * f + collision


def rhs_J(f_slice, state, rule, use_full_kernel=False, kernel=None, axis=-1):
    f = np.asarray(f_slice, dtype=float)
    return _expand(state.j, f.ndim, axis) + interaction(f, state, rule, use_full_kernel, kernel, axis)


def model_kernel(model):
    """The model's tabulated kernel with the scaling of its rates applied, or None."""
    if model.kernel is None:
        return None
    return CollisionKernel(samples=model.kernel.samples * model.rate_factor)


def model_interaction(values, model, state, grid):
    """J(f) on a (r, mu, omega) array, with the model's kernel when it carries one."""
    kernel = model_kernel(model)
    return interaction(values, state, grid.rule, kernel is not None, kernel, axis=1)


@dataclass(frozen=True, eq=False)
class StreamingOperator:
    """Sparse D- on the flattened (r, mu) index i * n_mu + k, shared by all groups.

    D-(f) = matrix @ f + inflow_coefficients[k] * g_k on the outer cell,
    g being the prescribed inflow for mu_k < 0.
    """
    matrix: sparse.csr_matrix
    inflow_coefficients: np.ndarray
    scheme: Scheme
    inflow: Inflow
    grid: object

    def apply(self, values, inflow_values=None):
        n_r, n_mu, n_omega = values.shape
        out = (self.matrix @ values.reshape(n_r * n_mu, n_omega)).reshape(values.shape)
        if inflow_values is not None and self.inflow is not Inflow.EXTRAPOLATE:
            out[-1] += self.inflow_coefficients[:, None] * inflow_values
        return out

    def boundary_flux(self, values, inflow_values=None):
        """Outward number flux A_R (1/2) sum w mu f_face through the outer surface, per group."""
        grid = self.grid
        face = values[-1].copy()
        incoming = grid.mu_nodes < 0
        if self.inflow is not Inflow.EXTRAPOLATE:
            face[incoming] = 0.0 if inflow_values is None else inflow_values[incoming]
        return grid.face_areas[-1] * 0.5 * np.tensordot(grid.mu_weights * grid.mu_nodes, face, axes=1)

    @property
    def diagonal(self):
        return self.matrix.diagonal()


def streaming_matrix(grid, scheme='upwind', inflow='extrapolate'):
    scheme = Scheme(scheme)
    inflow = Inflow(inflow)
    if scheme is Scheme.UPWIND:
        matrix, coefficients = _upwind_matrix(grid, inflow)
    else:
        matrix, coefficients = _centered_matrix(grid, inflow)
    return StreamingOperator(matrix=matrix, inflow_coefficients=coefficients,
                             scheme=scheme, inflow=inflow, grid=grid)


def angular_coefficients(grid):
    """Redistribution coefficients alpha_{k+1/2}, zero at both ends."""
    alpha = np.concatenate([[0.0], -np.cumsum(2.0 * grid.mu_weights * grid.mu_nodes)])
    alpha[0] = alpha[-1] = 0.0
    return alpha


class _Triplets:
    """COO accumulator for entries coupling (i, k) to (j, l)."""

    def __init__(self, n_r, n_mu):
        self.n_mu = n_mu
        self.size = n_r * n_mu
        self.rows, self.cols, self.data = [], [], []

    def __call__(self, i, k, j, l, value):
        i, j, value = np.broadcast_arrays(np.atleast_1d(i), np.atleast_1d(j),
                                          np.atleast_1d(np.asarray(value, dtype=float)))
        self.rows.append(i * self.n_mu + k)
        self.cols.append(j * self.n_mu + l)
        self.data.append(value)

    def tocsr(self):
        return sparse.coo_matrix(
            (np.concatenate(self.data), (np.concatenate(self.rows), np.concatenate(self.cols))),
            shape=(self.size, self.size)).tocsr()


def _upwind_matrix(grid, inflow):
    n_r, n_mu = grid.n_r, grid.n_mu
    areas, volumes = grid.face_areas, grid.volumes
    geometry = (areas[1:] - areas[:-1]) / (2.0 * volumes)
    alpha = angular_coefficients(grid)
    cells = np.arange(n_r)
    add = _Triplets(n_r, n_mu)
    coefficients = np.zeros(n_mu)

    for k, mu in enumerate(grid.mu_nodes):
        mirror = n_mu - 1 - k
        if mu > 0:
            add(cells, k, cells, k, mu * areas[1:] / volumes)
            add(cells[1:], k, cells[:-1], k, -mu * areas[1:-1] / volumes[1:])
            if areas[0] > 0:
                add(0, k, 0, mirror, -mu * areas[0] / volumes[0])
        else:
            add(cells, k, cells, k, -mu * areas[:-1] / volumes)
            add(cells[:-1], k, cells[1:], k, mu * areas[1:-1] / volumes[:-1])
            outer = mu * areas[-1] / volumes[-1]
            if inflow is Inflow.EXTRAPOLATE:
                add(n_r - 1, k, n_r - 1, k, outer)
            else:
                coefficients[k] = outer
        add(cells, k, cells, k, geometry * alpha[k + 1] / grid.mu_weights[k])
        if k > 0:
            add(cells, k, cells, k - 1, -geometry * alpha[k] / grid.mu_weights[k])

    return add.tocsr(), coefficients


def _centered_matrix(grid, inflow):
    n_r, n_mu = grid.n_r, grid.n_mu
    if n_r < 3:
        raise InvalidArgument('centered differences need at least three radial cells')
    r = grid.r_centers
    derivative = grid.rule.differentiation_matrix
    cells = np.arange(n_r)
    add = _Triplets(n_r, n_mu)
    coefficients = np.zeros(n_mu)

    inner = np.arange(1, n_r - 1)
    h1 = r[-1] - r[-2]
    h2 = r[-2] - r[-3]
    one_sided = (1.0 / h1 + 1.0 / (h1 + h2), -(h1 + h2) / (h1 * h2), h1 / (h2 * (h1 + h2)))
    ghost_span = 2.0 * grid.radius - r[-1] - r[-2]

    for k, mu in enumerate(grid.mu_nodes):
        mirror = n_mu - 1 - k
        span = r[inner + 1] - r[inner - 1]
        add(inner, k, inner + 1, k, mu / span)
        add(inner, k, inner - 1, k, -mu / span)
        # mirrored ghost f(-r_0, mu) = f(r_0, -mu)
        add(0, k, 1, k, mu / (r[1] + r[0]))
        add(0, k, 0, mirror, -mu / (r[1] + r[0]))
        if mu < 0 and inflow is not Inflow.EXTRAPOLATE:
            # ghost 2 g - f across the outer face
            add(n_r - 1, k, n_r - 1, k, -mu / ghost_span)
            add(n_r - 1, k, n_r - 2, k, -mu / ghost_span)
            coefficients[k] = 2.0 * mu / ghost_span
        else:
            for offset, weight in enumerate(one_sided):
                add(n_r - 1, k, n_r - 1 - offset, k, mu * weight)
        for l in range(n_mu):
            if derivative[k, l] != 0.0:
                add(cells, k, cells, l, (1.0 - mu ** 2) * derivative[k, l] / r)

    return add.tocsr(), coefficients


def inflow_values(state, grid, inflow):
    """Values imposed on incoming ordinates at r = R, shape (n_mu, n_omega)."""
    inflow = Inflow(inflow)
    if inflow is Inflow.EXTRAPOLATE:
        return None
    values = np.zeros((grid.n_mu, grid.n_omega))
    if inflow is Inflow.EQUILIBRIUM:
        chi_tilde = np.broadcast_to(state.chi_tilde, (grid.n_r, grid.n_omega))[-1]
        j = np.broadcast_to(state.j, (grid.n_r, grid.n_omega))[-1]
        equilibrium = np.divide(j, chi_tilde, out=np.zeros_like(j), where=chi_tilde > 0)
        values[:] = equilibrium[None, :]
    return values


def compression_coefficients(state, grid):
    """F_mu^1 and F_omega sampled on the (r, mu, omega) grid."""
    r = grid.r_centers[:, None, None]
    mu = grid.mu_nodes[None, :, None]
    omega = grid.omega_groups[None, None, :]
    v = np.broadcast_to(state.v, (grid.n_r, grid.n_omega))[:, None, :]
    dlnrho = np.broadcast_to(state.dlnrho_cdt, (grid.n_r, grid.n_omega))[:, None, :]
    expansion = dlnrho + 3.0 * v / (grid.c * r)
    f_mu = mu * expansion * (1.0 - mu ** 2)
    f_omega = (mu ** 2 * expansion - v / (grid.c * r)) * omega
    return f_mu, f_omega


def compression_terms(values, state, grid, scheme='upwind'):
    """F_mu^1 df/dmu + F_omega df/domega."""
    scheme = Scheme(scheme)
    f_mu, f_omega = compression_coefficients(state, grid)
    if not np.any(f_mu) and not np.any(f_omega):
        return np.zeros_like(values)
    if scheme is Scheme.CENTERED:
        d_mu = np.einsum('kl,ilj->ikj', grid.rule.differentiation_matrix, values)
        if grid.n_omega > 1:
            d_omega = np.gradient(values, grid.omega_groups, axis=2,
                                  edge_order=2 if grid.n_omega > 2 else 1)
        else:
            d_omega = np.zeros_like(values)
    else:
        d_mu = upwind_difference(values, grid.mu_nodes, f_mu, axis=1)
        d_omega = upwind_difference(values, grid.omega_groups, f_omega, axis=2)
    return f_mu * d_mu + f_omega * d_omega


def upwind_difference(values, coordinate, speed, axis):
    if coordinate.size == 1:
        return np.zeros_like(values)
    speed = np.moveaxis(np.broadcast_to(speed, values.shape), axis, -1)
    values = np.moveaxis(values, axis, -1)
    slopes = np.diff(values, axis=-1) / np.diff(coordinate)
    zero = np.zeros(values.shape[:-1] + (1,))
    backward = np.concatenate([zero, slopes], axis=-1)
    forward = np.concatenate([slopes, zero], axis=-1)
    return np.moveaxis(np.where(speed > 0, backward, forward), -1, axis)


def compression_rate_bound(state, grid):
    """Upper bound on the explicit rate of the compression terms (1/cm)."""
    f_mu, f_omega = compression_coefficients(state, grid)
    bound = np.max(np.abs(f_mu)) / np.min(np.diff(grid.mu_nodes))
    if grid.n_omega > 1:
        bound += np.max(np.abs(f_omega) / np.min(np.diff(grid.omega_groups)))
    return float(bound)


def transport_apply(f, model, grid, part, time_derivative=None, t=0.0,
                    scheme='upwind', inflow='extrapolate', operator=None, state=None):
    """Apply a part of D to a distribution field.

    ``time_derivative`` holds df/(c dt) in the model's own time variable; it
    enters the plus part with the model's time weight.
    """
    part = OperatorPart(part)
    values = f.values if hasattr(f, 'values') else np.asarray(f, dtype=float)
    if values.shape != grid.shape:
        raise InvalidArgument(f'field shape {values.shape} does not match grid {grid.shape}')
    if state is None:
        state = evaluate_on_grid(model, grid, t)
    if time_derivative is not None:
        time_derivative = getattr(time_derivative, 'values', time_derivative)
        time_derivative = np.asarray(time_derivative, dtype=float)
    if part in (OperatorPart.PLUS, OperatorPart.FULL) and time_derivative is None:
        raise InvalidArgument(f'{part.value} part needs the time derivative of f')

    result = np.zeros_like(values)
    if part in (OperatorPart.MINUS, OperatorPart.FULL, OperatorPart.FROZEN):
        if operator is None:
            operator = streaming_matrix(grid, scheme, inflow)
        result += operator.apply(values, inflow_values(state, grid, operator.inflow))
    if part in (OperatorPart.PLUS, OperatorPart.FULL):
        result += model.time_weight * time_derivative + compression_terms(values, state, grid, scheme)
    if part is OperatorPart.FROZEN and time_derivative is not None:
        result += time_derivative
    return result
