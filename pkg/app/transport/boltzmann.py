"""
Reference solver for the (optionally epsilon-scaled) Boltzmann equation

    (w / c) df/dt + F terms + D-(f) = j - chi_tilde f + C(f)

on prescribed background matter, w being the time weight of the scaling.
"""
import enum
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from django.conf import settings
from scipy import sparse
from scipy.sparse.linalg import splu

from .exceptions import InvalidArgument, SingularOpacity, StepRejected
from .grid import DistributionField, MomentField, MomentRole, field_moment
from .kinetics import (Inflow, Scheme, compression_rate_bound, compression_terms,
                       inflow_values, model_kernel, streaming_matrix)
from .matter import ScalingMode, apply_scaling, evaluate_on_grid

logger = logging.getLogger(__name__)


class TimeScheme(enum.Enum):
    IMEX = 'imex'
    IMPLICIT = 'implicit'


@dataclass(frozen=True)
class BalanceEntry:
    step: int
    t: float
    dt: float
    particles: float
    emission: float
    absorption: float
    boundary_flux: float
    compression: float
    mismatch: float
    cfl: float


@dataclass(frozen=True, eq=False)
class MomentSnapshot:
    t: float
    beta: MomentField
    first_moment: MomentField
    rate: MomentField


@dataclass(eq=False)
class BoltzmannSolution:
    final: DistributionField
    snapshots: list = field(default_factory=list)
    balance: list = field(default_factory=list)
    steps: int = 0
    time_variable: str = 't'

    @property
    def particles(self):
        return [entry.particles for entry in self.balance]

    @property
    def cfl_numbers(self):
        return [entry.cfl for entry in self.balance]


def _default_discretization(scheme):
    return Scheme.UPWIND if scheme is TimeScheme.IMEX else Scheme.CENTERED


class BoltzmannStepper:
    """Advances f by one step; owns the streaming operator and cached factorizations."""

    def __init__(self, model, grid, scheme='imex', discretization=None, inflow='vacuum',
                 threads=None, cfl_limit=None):
        self.model = model
        self.grid = grid
        self.scheme = TimeScheme(scheme)
        self.discretization = Scheme(discretization) if discretization else _default_discretization(self.scheme)
        self.inflow = Inflow(inflow)
        self.threads = threads or settings.THREADS
        self.cfl_limit = cfl_limit or settings.CFL_LIMIT
        self.operator = streaming_matrix(grid, self.discretization, self.inflow)
        self._static = model.compression is None or not callable(model.compression)
        self._state = None
        self._factors = {}

    def state(self, t):
        if self._static and self._state is not None:
            return self._state
        state = evaluate_on_grid(self.model, self.grid, t)
        if self._static:
            self._state = state
        return state

    @property
    def weight(self):
        return self.model.time_weight

    def rate_bound(self, t=0.0):
        return float(np.max(self.operator.diagonal)) + compression_rate_bound(self.state(t), self.grid)

    def stable_dt(self, t=0.0):
        rate = self.rate_bound(t)
        if rate <= 0:
            return np.inf
        return settings.CFL_TARGET * self.cfl_limit * self.weight / (self.grid.c * rate)

    def advance(self, f, dt, t=0.0, step_index=0):
        if dt <= 0:
            raise InvalidArgument(f'time step must be positive, got {dt}')
        values = f.values
        state = self.state(t)
        h = self.grid.c * dt / self.weight
        inflow = inflow_values(state, self.grid, self.inflow)
        cfl = h * self.rate_bound(t)

        if self.scheme is TimeScheme.IMEX:
            if cfl > self.cfl_limit:
                raise StepRejected(cfl, dt * settings.CFL_TARGET * self.cfl_limit / cfl)
            transported = values
            compression = compression_terms(values, state, self.grid, self.discretization)
            star = values - h * (self.operator.apply(values, inflow) + compression)
            new_values = implicit_collision(star, state, self.grid, h, self._kernel())
        else:
            compression = compression_terms(values, state, self.grid, self.discretization)
            new_values = self._implicit_solve(values, compression, state, inflow, h, dt)
            transported = new_values

        entry = self._ledger(values, new_values, transported, compression, state, inflow,
                             h, dt, t, cfl, step_index)
        return f.with_values(new_values), entry

    def _kernel(self):
        return model_kernel(self.model)

    def _implicit_solve(self, values, compression, state, inflow, h, dt):
        shift = 1.0 / h
        rhs = shift * values - compression + np.broadcast_to(state.j, (self.grid.n_r, self.grid.n_omega))[:, None, :]
        if inflow is not None:
            rhs[-1] -= self.operator.inflow_coefficients[:, None] * inflow
        key = (dt, id(state)) if self._static else None
        return solve_groups(self.operator, state, self.grid, shift, rhs, self._kernel(),
                            self.threads, self._factors, key)

    def _ledger(self, old, new, transported, compression, state, inflow, h, dt, t, cfl, step_index):
        grid = self.grid
        volumes = grid.volumes[:, None]
        beta_old = field_moment(old, 0, grid.rule)
        beta_new = field_moment(new, 0, grid.rule)
        j = np.broadcast_to(state.j, beta_new.shape)
        chi_tilde = np.broadcast_to(state.chi_tilde, beta_new.shape)
        particles_old = float(np.sum(volumes * beta_old))
        particles = float(np.sum(volumes * beta_new))
        emission = float(np.sum(volumes * j))
        absorption = float(np.sum(volumes * chi_tilde * beta_new))
        boundary = float(np.sum(self.operator.boundary_flux(transported, inflow)))
        squeezed = float(np.sum(volumes * field_moment(compression, 0, grid.rule)))
        expected = h * (emission - absorption - boundary - squeezed)
        scale = max(abs(particles), abs(particles_old), abs(h * emission), np.finfo(float).tiny)
        mismatch = abs(particles - particles_old - expected) / scale
        return BalanceEntry(step=step_index, t=t + dt, dt=dt, particles=particles,
                            emission=emission, absorption=absorption, boundary_flux=boundary,
                            compression=squeezed, mismatch=mismatch, cfl=cfl)


def implicit_collision(star, state, grid, h, kernel=None):
    """Backward-Euler solve of f = star + h (j - chi_tilde f + C(f)) per (r, omega)."""
    shape = (grid.n_r, grid.n_omega)
    j = np.broadcast_to(state.j, shape)
    chi_tilde = np.broadcast_to(state.chi_tilde, shape)
    if kernel is not None:
        return _implicit_full_kernel(star, j, chi_tilde, grid, h, kernel)

    phi0 = np.broadcast_to(state.phi0, shape)
    phi1 = np.broadcast_to(state.phi1, shape)
    beta_star = field_moment(star, 0, grid.rule)
    first_star = field_moment(star, 1, grid.rule)
    # the truncated operator only couples ordinates through beta and H
    den_beta = 1.0 + h * chi_tilde
    den_first = 1.0 + h * (chi_tilde + phi0 - phi1)
    den_point = 1.0 + h * (chi_tilde + phi0)
    if np.any(den_beta <= 0) or np.any(den_first <= 0) or np.any(den_point <= 0):
        raise SingularOpacity('implicit collision system is not invertible')
    beta = (beta_star + h * j) / den_beta
    first = first_star / den_first
    mu = grid.mu_nodes[None, :, None]
    source = j[:, None, :] + phi0[:, None, :] * beta[:, None, :] + 3.0 * mu * phi1[:, None, :] * first[:, None, :]
    return (star + h * source) / den_point[:, None, :]


def _implicit_full_kernel(star, j, chi_tilde, grid, h, kernel):
    samples = kernel.samples
    if samples.ndim == 2:
        samples = np.broadcast_to(samples, (grid.n_omega,) + samples.shape)
    loss = np.einsum('gkl,l->gk', samples, grid.mu_weights)
    collision = samples * grid.mu_weights - loss[..., None] * np.eye(grid.n_mu)
    system = (1.0 + h * chi_tilde)[..., None, None] * np.eye(grid.n_mu) - h * collision[None]
    rhs = np.moveaxis(star, 1, -1) + h * j[..., None]
    try:
        solution = np.linalg.solve(system, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise SingularOpacity(str(exc))
    return np.moveaxis(solution, -1, 1)


def group_matrix(operator, state, grid, group, shift, kernel=None):
    """Sparse shift + D- + chi_tilde - C for one energy group."""
    n_r, n_mu = grid.n_r, grid.n_mu
    shape = (n_r, grid.n_omega)
    chi_tilde = np.broadcast_to(state.chi_tilde, shape)[:, group]
    matrix = operator.matrix + sparse.diags(np.repeat(shift + chi_tilde, n_mu))
    weights, mu = grid.mu_weights, grid.mu_nodes
    if kernel is None:
        phi0 = np.broadcast_to(state.phi0, shape)[:, group]
        phi1 = np.broadcast_to(state.phi1, shape)[:, group]
        isotropic = 0.5 * np.outer(np.ones(n_mu), weights) - np.eye(n_mu)
        dipole = 1.5 * np.outer(mu, weights * mu)
        collision = sparse.kron(sparse.diags(phi0), isotropic) + sparse.kron(sparse.diags(phi1), dipole)
    else:
        samples = kernel.group(group).samples
        block = samples * weights - np.diag(samples @ weights)
        collision = sparse.kron(sparse.identity(n_r), block)
    return (matrix - collision).tocsc()


def solve_groups(operator, state, grid, shift, rhs, kernel=None, threads=1, cache=None, key=None):
    """Solve the per-group sparse systems; groups run on up to ``threads`` workers."""
    n_r, n_mu = grid.n_r, grid.n_mu

    def solve(group):
        factor = None if cache is None or key is None else cache.get((key, group))
        if factor is None:
            try:
                factor = splu(group_matrix(operator, state, grid, group, shift, kernel))
            except RuntimeError as exc:
                raise SingularOpacity(f'group {group}: {exc}')
            if cache is not None and key is not None:
                cache[(key, group)] = factor
        return factor.solve(rhs[:, :, group].reshape(n_r * n_mu)).reshape(n_r, n_mu)

    groups = range(grid.n_omega)
    if threads > 1 and grid.n_omega > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            columns = list(pool.map(solve, groups))
    else:
        columns = [solve(group) for group in groups]
    return np.stack(columns, axis=-1)


def step(f, dt, model, grid, scaling=None, t=0.0, scheme='imex', discretization=None,
         inflow='vacuum', threads=None):
    if scaling is not None:
        model = apply_scaling(model, model.epsilon, scaling)
    stepper = BoltzmannStepper(model, grid, scheme, discretization, inflow, threads)
    new_field, _ = stepper.advance(f, dt, t)
    return new_field


def snapshot(f, model, grid, t, state=None):
    if state is None:
        state = evaluate_on_grid(model, grid, t)
    beta = grid.moment(f, 0)
    return MomentSnapshot(t=t, beta=beta,
                          first_moment=grid.moment(f, 1, MomentRole.FIRST_MOMENT),
                          rate=_interaction_rate(beta.values, state))


def solve(model, grid, f_init, t_end, scaling=None, dt=None, cadence=1, scheme='imex',
          discretization=None, inflow='vacuum', threads=None, on_step=None):
    """Time loop over ``BoltzmannStepper.advance``.

    IMEX steps adapt to the CFL bound unless ``dt`` is given; implicit steps
    default to ``DEFAULT_IMPLICIT_STEPS`` equal steps.
    """
    if t_end < 0:
        raise InvalidArgument(f't_end must be non-negative, got {t_end}')
    if f_init.shape != grid.shape:
        raise InvalidArgument(f'initial field shape {f_init.shape} does not match grid {grid.shape}')
    if scaling is not None:
        model = apply_scaling(model, model.epsilon, scaling)
    stepper = BoltzmannStepper(model, grid, scheme, discretization, inflow, threads)
    time_variable = 't_bar' if model.scaling.time_power else 't'
    solution = BoltzmannSolution(final=f_init, time_variable=time_variable)
    solution.snapshots.append(snapshot(f_init, model, grid, 0.0, stepper.state(0.0)))
    if t_end == 0:
        return solution

    if dt is None and stepper.scheme is TimeScheme.IMPLICIT:
        dt = t_end / settings.DEFAULT_IMPLICIT_STEPS
    f, t, count = f_init, 0.0, 0
    while t < t_end * (1 - 1e-12):
        trial = min(dt if dt is not None else stepper.stable_dt(t), t_end - t)
        try:
            f_next, entry = stepper.advance(f, trial, t, count + 1)
        except StepRejected as exc:
            logger.info('step %d rejected (cfl %.3g), retrying with dt=%.3g',
                        count + 1, exc.cfl, exc.suggested_dt)
            f_next, entry = stepper.advance(f, exc.suggested_dt, t, count + 1)
            trial = exc.suggested_dt
        f, t, count = f_next, t + trial, count + 1
        solution.balance.append(entry)
        if entry.mismatch > settings.BALANCE_TOLERANCE and stepper.discretization is Scheme.UPWIND:
            logger.warning('particle ledger open at step %d: relative mismatch %.3g', count, entry.mismatch)
        if count % cadence == 0 or t >= t_end * (1 - 1e-12):
            solution.snapshots.append(snapshot(f, model, grid, t, stepper.state(t)))
        if on_step is not None:
            on_step(count, t, f)

    solution.final = f
    solution.steps = count
    logger.debug('boltzmann solve finished after %d steps at %s=%g', count, time_variable, t)
    return solution


def solve_steady(model, grid, discretization='upwind', inflow='vacuum', source=None,
                 threads=None, t=0.0, compression=False, tolerance=1e-13, max_iterations=500):
    """Stationary solution of D-(f) = j + J(f) (+ source) with frozen coefficients.

    With ``compression`` the D+ compression terms join the left-hand side
    through a fixed-point iteration on the lagged field.

    Vacuum inflow is not an equilibrium fixed point: even a uniform medium
    falls below j/chi_tilde within a few mean free paths of the surface.
    Use ``inflow='equilibrium'`` to reproduce a uniform equilibrium.
    """
    operator = streaming_matrix(grid, discretization, inflow)
    state = evaluate_on_grid(model, grid, t)
    rhs = np.broadcast_to(np.broadcast_to(state.j, (grid.n_r, grid.n_omega))[:, None, :], grid.shape).copy()
    if source is not None:
        rhs += getattr(source, 'values', source)
    values = inflow_values(state, grid, operator.inflow)
    if values is not None:
        rhs[-1] -= operator.inflow_coefficients[:, None] * values
    kernel = model_kernel(model)
    threads = threads or settings.THREADS
    factors = {}
    result = solve_groups(operator, state, grid, 0.0, rhs, kernel, threads, factors, 'steady')
    if compression:
        for _ in range(max_iterations):
            lagged = compression_terms(result, state, grid, operator.scheme)
            updated = solve_groups(operator, state, grid, 0.0, rhs - lagged, kernel, threads, factors, 'steady')
            change = np.max(np.abs(updated - result))
            result = updated
            if change <= tolerance * max(np.max(np.abs(result)), np.finfo(float).tiny):
                break
        else:
            logger.warning('steady compression iteration stopped after %d sweeps, last change %.3g',
                           max_iterations, change)
    return DistributionField(values=result, admissible=False)


def _interaction_rate(beta, state):
    return MomentField(np.broadcast_to(state.j, beta.shape) - np.broadcast_to(state.chi_tilde, beta.shape) * beta,
                       MomentRole.RESIDUAL)


def total_interaction_rate(f, model, grid, t=0.0):
    """s = j - chi_tilde beta; the collision integral has zero angular mean."""
    beta = grid.moment(f, 0)
    return _interaction_rate(beta.values, evaluate_on_grid(model, grid, t))


__all__ = ['BalanceEntry', 'BoltzmannSolution', 'BoltzmannStepper', 'MomentSnapshot',
           'ScalingMode', 'TimeScheme', 'implicit_collision', 'solve', 'solve_steady',
           'step', 'total_interaction_rate']
