"""
Hilbert-expansion terms, moment identities and the epsilon sweeps that
measure how fast the scaled Boltzmann solutions approach their limit
equations.

All fields are in the units of the model they are evaluated with, so a
scaled model yields the products epsilon f_1, epsilon^2 f_2 directly.
"""
import enum
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from django.conf import settings

from .boltzmann import BoltzmannStepper, solve_steady
from .exceptions import InvalidArgument, SingularOpacity
from .grid import DistributionField, MomentField, MomentRole, field_moment
from .idsa import diffusion_couplings
from .kinetics import (OperatorPart, compression_terms, model_interaction,
                       streaming_matrix, transport_apply)
from .matter import ScalingMode, apply_scaling, evaluate_on_grid, mean_free_path

logger = logging.getLogger(__name__)


class HierarchyVariant(enum.Enum):
    REACTION_SCALED = 'reaction_scaled'
    TIME_AND_REACTION_SCALED = 'time_and_reaction_scaled'
    TIME_SCALED = 'time_scaled'

    @property
    def levels(self):
        return 3 if self is HierarchyVariant.TIME_AND_REACTION_SCALED else 2


class LimitKind(enum.Enum):
    DIFFUSION = 'diffusion'
    REACTION = 'reaction'
    FREE_STREAMING = 'free_streaming'

    @property
    def scaling(self):
        return {LimitKind.DIFFUSION: ScalingMode.BOTH,
                LimitKind.REACTION: ScalingMode.REACTION_COLLISION,
                LimitKind.FREE_STREAMING: ScalingMode.TIME}[self]


class FirstOrderVariant(enum.Enum):
    FULL = 'full'
    MINUS = 'minus'


class SweepPreset(enum.Enum):
    FIRST_ORDER = 'first_order'
    SECOND_ORDER = 'second_order'


@dataclass(frozen=True, eq=False)
class ConvergenceReport:
    epsilons: np.ndarray
    errors: np.ndarray
    floors: np.ndarray
    fitted_slope: float
    limit: LimitKind
    preset: SweepPreset = SweepPreset.FIRST_ORDER
    expected_slope: float = None
    roundoff: float = 0.0

    def __post_init__(self):
        epsilons = np.asarray(self.epsilons, dtype=float)
        errors = np.asarray(self.errors, dtype=float)
        if np.any(np.diff(epsilons) >= 0) or np.any(epsilons <= 0):
            raise InvalidArgument('sweep epsilons must be positive and strictly decreasing')
        if errors.shape != epsilons.shape or np.any(errors <= 0):
            raise InvalidArgument('sweep errors must be positive, one per epsilon')
        object.__setattr__(self, 'epsilons', epsilons)
        object.__setattr__(self, 'errors', errors)
        object.__setattr__(self, 'floors', np.asarray(self.floors, dtype=float))
        object.__setattr__(self, 'limit', LimitKind(self.limit))
        object.__setattr__(self, 'preset', SweepPreset(self.preset))

    @property
    def key(self):
        if self.preset is SweepPreset.SECOND_ORDER:
            return f'{self.limit.value}_second_order'
        return self.limit.value

    @property
    def resolved(self):
        """False when some error is at or below the round-off floor."""
        return bool(np.all(self.errors > self.roundoff))

    @property
    def passed(self):
        if not self.resolved:
            return False
        return self.expected_slope is None or self.fitted_slope >= self.expected_slope

    @property
    def verdict(self):
        outcome = 'PASS' if self.passed else 'FAIL'
        expected = '' if self.expected_slope is None else f' (expected >= {self.expected_slope:g})'
        if not self.resolved:
            expected += f' errors below {self.roundoff:g}'
        return f'{self.key}: fitted slope {self.fitted_slope:.3f}{expected} {outcome}'


@dataclass(frozen=True)
class MomentIdentities:
    plus: float
    diffusion: float
    leading_order: float
    plus_plus: float = None
    scale: float = 1.0


def _values(field):
    return getattr(field, 'values', field)


def _phase_norm(values, grid, mask=None):
    """L2 norm over r^2 dr d omega and the angular mean."""
    return grid.weighted_norm(np.sqrt(field_moment(np.asarray(values) ** 2, 0, grid.rule)), mask)


def _interior_rows(grid, boundary_rows):
    mask = np.ones((grid.n_r, 1))
    if boundary_rows:
        mask[grid.n_r - boundary_rows:] = 0.0
    return mask


def _omega_gradient(beta, grid):
    if grid.n_omega < 2:
        return np.zeros_like(beta)
    return np.gradient(beta, grid.omega_groups, axis=1, edge_order=2 if grid.n_omega > 2 else 1)


def hilbert_f0(model, grid, t=0.0):
    state = evaluate_on_grid(model, grid, t)
    chi_tilde = np.broadcast_to(state.chi_tilde, (grid.n_r, grid.n_omega))
    if np.any(chi_tilde <= 0):
        raise SingularOpacity('chi_tilde = 0')
    return grid.isotropic(np.broadcast_to(state.j, chi_tilde.shape) / chi_tilde)


def invert_interaction(source, state, grid, drop_mean=False):
    """The g with J(g) = source for the truncated collision operator.

    ``drop_mean`` discards the term carrying the angular mean of the source,
    which vanishes for D- applied to isotropic fields.
    """
    shape = (grid.n_r, grid.n_omega)
    chi_tilde = np.broadcast_to(state.chi_tilde, shape)
    phi0 = np.broadcast_to(state.phi0, shape)
    phi1 = np.broadcast_to(state.phi1, shape)
    if np.any(chi_tilde + phi0 <= 0):
        raise SingularOpacity('chi_tilde + phi0 <= 0')
    lam = mean_free_path(state)
    lam = np.broadcast_to(lam, shape)
    mu = grid.mu_nodes[None, :, None]
    bracket = source + 3.0 * mu * (phi1 * lam * field_moment(source, 1, grid.rule))[:, None, :]
    if not drop_mean:
        if np.any(chi_tilde <= 0):
            raise SingularOpacity('chi_tilde = 0')
        bracket = bracket + (phi0 / chi_tilde * field_moment(source, 0, grid.rule))[:, None, :]
    return -bracket / (chi_tilde + phi0)[:, None, :]


def hilbert_f1(f0, model, grid, variant='minus', time_derivative=None, scheme='centered',
               inflow='extrapolate', t=0.0):
    """epsilon f_1 from D(f0) (``full``) or D-(f0) (``minus``)."""
    variant = FirstOrderVariant(variant)
    state = evaluate_on_grid(model, grid, t)
    part = OperatorPart.FULL if variant is FirstOrderVariant.FULL else OperatorPart.MINUS
    transported = transport_apply(f0, model, grid, part, time_derivative, t, scheme, inflow, state=state)
    values = invert_interaction(transported, state, grid, drop_mean=variant is FirstOrderVariant.MINUS)
    return DistributionField(values=values, admissible=False)


def hilbert_f2(f0, f1, model, grid, time_derivative, scheme='centered', inflow='extrapolate', t=0.0):
    """epsilon^2 f_2 from D+(f0) + D-(epsilon f_1)."""
    state = evaluate_on_grid(model, grid, t)
    source = (transport_apply(f0, model, grid, OperatorPart.PLUS, time_derivative, t, scheme, inflow, state=state)
              + transport_apply(f1, model, grid, OperatorPart.MINUS, None, t, scheme, inflow, state=state))
    return DistributionField(values=invert_interaction(source, state, grid), admissible=False)


def plus_plus_terms(f0, model, grid, time_derivative=None, scheme='centered', t=0.0,
                    inner_time_derivative=None):
    """Angular mean of D+ applied to -[D+(f0) + (phi0/chi_tilde)<D+(f0)>]/(chi_tilde + phi0).

    The outer D+ sees ``inner_time_derivative`` as the time derivative of the
    bracket; without it only its compression terms contribute.
    """
    state = evaluate_on_grid(model, grid, t)
    if time_derivative is None:
        time_derivative = np.zeros(grid.shape)
    plus = transport_apply(f0, model, grid, OperatorPart.PLUS, time_derivative, t, scheme, state=state)
    shape = (grid.n_r, grid.n_omega)
    chi_tilde = np.broadcast_to(state.chi_tilde, shape)
    phi0 = np.broadcast_to(state.phi0, shape)
    if np.any(chi_tilde <= 0) or np.any(chi_tilde + phi0 <= 0):
        raise SingularOpacity('chi_tilde or chi_tilde + phi0 not positive')
    inner = -(plus + (phi0 / chi_tilde * field_moment(plus, 0, grid.rule))[:, None, :]) / (chi_tilde + phi0)[:, None, :]
    if inner_time_derivative is None:
        inner_time_derivative = np.zeros(grid.shape)
    outer = transport_apply(inner, model, grid, OperatorPart.PLUS, inner_time_derivative, t, scheme, state=state)
    return MomentField(field_moment(outer, 0, grid.rule), MomentRole.RESIDUAL)


def diffusion_divergence(beta, state, grid):
    """(1/r^2) d/dr (r^2 (lambda/3) d beta/dr) in conservative finite-volume form.

    Interior faces use the harmonic-mean coefficient; the outer face takes the
    gradient of the quadratic through the last three cell centres.
    """
    beta = _values(beta)
    faces = np.zeros((grid.n_r + 1, grid.n_omega))
    faces[1:-1] = diffusion_couplings(state, grid) * (beta[1:] - beta[:-1])
    if grid.n_r >= 3:
        nodes = grid.r_centers[-3:]
        x = grid.radius
        weights = np.array([
            ((x - nodes[1]) + (x - nodes[2])) / ((nodes[0] - nodes[1]) * (nodes[0] - nodes[2])),
            ((x - nodes[0]) + (x - nodes[2])) / ((nodes[1] - nodes[0]) * (nodes[1] - nodes[2])),
            ((x - nodes[0]) + (x - nodes[1])) / ((nodes[2] - nodes[0]) * (nodes[2] - nodes[1])),
        ])
        third = np.broadcast_to(mean_free_path(state), (grid.n_r, grid.n_omega))[-1] / 3.0
        faces[-1] = grid.face_areas[-1] * third * (weights @ beta[-3:])
    return np.diff(faces, axis=0) / grid.volumes[:, None]


def kinetic_diffusion(beta, state, grid, scheme='centered', inflow='extrapolate'):
    """<D-(lambda D-(beta))> for the isotropic extension of beta."""
    operator = streaming_matrix(grid, scheme, inflow)
    isotropic = grid.isotropic(_values(beta), admissible=False).values
    lam = np.broadcast_to(mean_free_path(state), (grid.n_r, grid.n_omega))[:, None, :]
    inner = lam * operator.apply(isotropic)
    return field_moment(operator.apply(inner), 0, grid.rule)


def moment_identities_report(f0, model, grid, time_derivative=None, scheme='centered', t=0.0,
                             include_plus_plus=False, boundary_rows=2):
    """Residual norms of the angular-mean identities for an isotropic f0.

    ``plus``: <D+(f0)> against the reaction-equation left-hand side.
    ``diffusion``: <D-(lambda D-(f0))> against the conservative diffusion form,
    over all but the last ``boundary_rows`` cells.
    ``leading_order``: <D+(f0) + D-(epsilon f_1)> against the diffusion-reaction
    left-hand side.
    """
    state = evaluate_on_grid(model, grid, t)
    values = _values(f0)
    beta0 = field_moment(values, 0, grid.rule)
    if time_derivative is None:
        time_derivative = np.zeros(grid.shape)
    time_derivative = _values(time_derivative)
    shape = beta0.shape

    plus = field_moment(transport_apply(values, model, grid, OperatorPart.PLUS, time_derivative, t,
                                        scheme, state=state), 0, grid.rule)
    dlnrho = np.broadcast_to(state.dlnrho_cdt, shape)
    reaction_lhs = (model.time_weight * field_moment(time_derivative, 0, grid.rule)
                    + dlnrho * grid.omega_groups[None, :] * _omega_gradient(beta0, grid) / 3.0)

    kinetic = kinetic_diffusion(beta0, state, grid, scheme)
    conservative = diffusion_divergence(beta0, state, grid)
    mask = _interior_rows(grid, boundary_rows)

    f1 = hilbert_f1(values, model, grid, 'minus', scheme=scheme, t=t)
    minus_f1 = field_moment(transport_apply(f1, model, grid, OperatorPart.MINUS, scheme=scheme, state=state),
                            0, grid.rule)
    leading = plus + minus_f1 - (reaction_lhs - conservative)

    plus_plus = None
    if include_plus_plus:
        plus_plus = grid.weighted_norm(plus_plus_terms(values, model, grid, time_derivative, scheme, t).values)
    scale = max(grid.weighted_norm(reaction_lhs), grid.weighted_norm(conservative, mask), np.finfo(float).tiny)
    return MomentIdentities(plus=grid.weighted_norm(plus - reaction_lhs),
                            diffusion=grid.weighted_norm(kinetic - conservative, mask),
                            leading_order=grid.weighted_norm(leading, mask),
                            plus_plus=plus_plus,
                            scale=scale)


def _require(fields, *names):
    missing = [name for name in names if fields.get(name) is None]
    if missing:
        raise InvalidArgument(f'hierarchy level needs {", ".join(missing)}')
    return [_values(fields[name]) for name in names]


def hierarchy_residual(variant, level, fields, model, grid, time_derivative=None, scheme='centered',
                       inflow='extrapolate', t=0.0, relative=False):
    """Norm of one equation of a Hilbert hierarchy.

    ``fields`` maps f0, f1, f2 to the products epsilon^i f_i in model units;
    ``time_derivative`` is df0/(c dt) for the levels that apply D+ to f0.
    With ``relative`` the norm is divided by the largest term norm, floored
    by the norms of j and chi_tilde f0.
    """
    variant = HierarchyVariant(variant)
    if not 0 <= level < variant.levels:
        raise InvalidArgument(f'{variant.value} has levels 0..{variant.levels - 1}, got {level}')
    state = evaluate_on_grid(model, grid, t)
    j = np.broadcast_to(state.j, (grid.n_r, grid.n_omega))[:, None, :] * np.ones((1, grid.n_mu, 1))

    def apply(field, part, derivative=None):
        return transport_apply(field, model, grid, part, derivative, t, scheme, inflow, state=state)

    def interaction(field):
        return model_interaction(field, model, state, grid)

    if derivative_needed(variant, level) and time_derivative is None:
        time_derivative = np.zeros(grid.shape)

    if level == 0 and variant is not HierarchyVariant.TIME_SCALED:
        f0, = _require(fields, 'f0')
        terms = [j, interaction(f0)]
    elif level == 0:
        f0, = _require(fields, 'f0')
        terms = [apply(f0, OperatorPart.MINUS), -j, -interaction(f0)]
    elif variant is HierarchyVariant.REACTION_SCALED:
        f0, f1 = _require(fields, 'f0', 'f1')
        terms = [apply(f0, OperatorPart.FULL, time_derivative), -interaction(f1)]
    elif variant is HierarchyVariant.TIME_AND_REACTION_SCALED and level == 1:
        f0, f1 = _require(fields, 'f0', 'f1')
        terms = [apply(f0, OperatorPart.MINUS), -interaction(f1)]
    elif variant is HierarchyVariant.TIME_AND_REACTION_SCALED:
        f0, f1, f2 = _require(fields, 'f0', 'f1', 'f2')
        terms = [apply(f0, OperatorPart.PLUS, time_derivative), apply(f1, OperatorPart.MINUS), -interaction(f2)]
    else:
        f0, f1 = _require(fields, 'f0', 'f1')
        terms = [apply(f0, OperatorPart.PLUS, time_derivative), apply(f1, OperatorPart.MINUS), -interaction(f1)]

    residual = _phase_norm(sum(terms), grid)
    if not relative:
        return residual
    chi_tilde = np.broadcast_to(state.chi_tilde, (grid.n_r, grid.n_omega))[:, None, :]
    physical = max(_phase_norm(j, grid), _phase_norm(chi_tilde * f0, grid))
    scale = max(max(_phase_norm(term, grid) for term in terms), physical, np.finfo(float).tiny)
    return residual / scale


def derivative_needed(variant, level):
    variant = HierarchyVariant(variant)
    if variant is HierarchyVariant.REACTION_SCALED:
        return level == 1
    if variant is HierarchyVariant.TIME_AND_REACTION_SCALED:
        return level == 2
    return level == 1


def limit_equation_rhs(limit, beta, model, grid, beta_s=None, first_moment=None, beta_rate=None,
                       compression=None, divergence=None, diffusion_form='conservative', t=0.0):
    """Residual (left minus right side) of an angular-mean limit equation.

    ``beta_rate`` is the weighted time derivative w d beta/(c dt) and
    defaults to zero; ``compression`` overrides (1/3)(d ln rho/(c dt)) omega
    d beta/d omega. The free-streaming equation takes the divergence of the
    first moment either precomputed or from a cell-centred ``first_moment``.
    """
    limit = LimitKind(limit)
    state = evaluate_on_grid(model, grid, t)
    beta = _values(beta)
    shape = beta.shape
    j = np.broadcast_to(state.j, shape)
    chi_tilde = np.broadcast_to(state.chi_tilde, shape)
    beta_s = np.zeros(shape) if beta_s is None else _values(beta_s)

    if limit is LimitKind.FREE_STREAMING:
        if divergence is None:
            if first_moment is None:
                raise InvalidArgument('free-streaming residual needs the first moment')
            divergence = moment_divergence(first_moment, grid)
        return MomentField(_values(divergence) - (j - chi_tilde * beta), MomentRole.RESIDUAL)

    lhs = np.zeros(shape) if beta_rate is None else np.array(_values(beta_rate), dtype=float)
    if compression is None:
        dlnrho = np.broadcast_to(state.dlnrho_cdt, shape)
        compression = dlnrho * grid.omega_groups[None, :] * _omega_gradient(beta, grid) / 3.0
    lhs = lhs + _values(compression)
    if limit is LimitKind.DIFFUSION:
        if diffusion_form == 'kinetic':
            lhs = lhs - kinetic_diffusion(beta, state, grid)
        else:
            lhs = lhs - diffusion_divergence(beta, state, grid)
    return MomentField(lhs - (j - chi_tilde * (beta + beta_s)), MomentRole.RESIDUAL)


def moment_divergence(first_moment, grid):
    """(1/r^2) d/dr (r^2 H) from cell-centred H, zero flux at the centre."""
    first = _values(first_moment)
    faces = np.zeros((grid.n_r + 1, grid.n_omega))
    faces[1:-1] = 0.5 * (first[1:] + first[:-1])
    if grid.n_r >= 2:
        slope = (first[-1] - first[-2]) / (grid.r_centers[-1] - grid.r_centers[-2])
        faces[-1] = first[-1] + slope * (grid.radius - grid.r_centers[-1])
    else:
        faces[-1] = first[-1]
    return np.diff(grid.face_areas[:, None] * faces, axis=0) / grid.volumes[:, None]


def diffusion_flux_residual(f, model, grid, t=0.0):
    """H + (lambda/3) d beta/dr: the stationary flux relation of the diffusion regime."""
    state = evaluate_on_grid(model, grid, t)
    beta = grid.moment(f, 0).values
    first = grid.moment(f, 1).values
    lam = np.broadcast_to(mean_free_path(state), beta.shape)
    gradient = np.gradient(beta, grid.r_centers, axis=0, edge_order=2 if grid.n_r > 2 else 1)
    return MomentField(first + lam * gradient / 3.0, MomentRole.RESIDUAL)


def _unscaled_emission(model, grid):
    state = evaluate_on_grid(replace(model, epsilon=1.0), grid)
    return grid.weighted_norm(np.broadcast_to(state.j, (grid.n_r, grid.n_omega)))


def _static(model, grid):
    state = evaluate_on_grid(replace(model, epsilon=1.0), grid)
    return not np.any(state.dlnrho_cdt) and not np.any(state.v)


def _relaxation_member(model, grid, epsilon, limit, t_end, steps):
    scaled = apply_scaling(model, epsilon, limit.scaling)
    stepper = BoltzmannStepper(scaled, grid, 'implicit', 'centered', 'extrapolate', threads=1)
    dt = t_end / steps
    f = hilbert_f0(scaled, grid)
    previous, t = f, 0.0
    for index in range(steps):
        previous = f
        f, _ = stepper.advance(f, dt, t, index + 1)
        t += dt
    state = stepper.state(t)
    beta = field_moment(f.values, 0, grid.rule)
    rate = scaled.time_weight * (beta - field_moment(previous.values, 0, grid.rule)) / (grid.c * dt)
    compression = field_moment(compression_terms(previous.values, state, grid, 'centered'), 0, grid.rule)
    residual = limit_equation_rhs(limit, beta, scaled, grid, beta_rate=rate, compression=compression,
                                  diffusion_form='kinetic', t=t)
    floor = kinetic_diffusion(beta, state, grid) - diffusion_divergence(beta, state, grid)
    return grid.weighted_norm(residual.values), grid.weighted_norm(floor)


def _streaming_member(model, grid, epsilon, preset):
    mode = ScalingMode.TIME_SQUARED if preset is SweepPreset.SECOND_ORDER else ScalingMode.TIME
    scaled = apply_scaling(model, epsilon, mode)
    f = solve_steady(scaled, grid, 'upwind', 'vacuum', threads=1, compression=True)
    state = evaluate_on_grid(scaled, grid)
    operator = streaming_matrix(grid, 'upwind', 'vacuum')
    divergence = field_moment(operator.apply(f.values, np.zeros((grid.n_mu, grid.n_omega))), 0, grid.rule)
    beta = field_moment(f.values, 0, grid.rule)
    residual = limit_equation_rhs(LimitKind.FREE_STREAMING, beta, scaled, grid, divergence=divergence)
    floor = divergence - moment_divergence(field_moment(f.values, 1, grid.rule), grid)
    error, floor = grid.weighted_norm(residual.values), grid.weighted_norm(floor)
    if preset is SweepPreset.SECOND_ORDER:
        # emission itself carries one power of epsilon here
        error, floor = error / epsilon, floor / epsilon
    return error, floor


def epsilon_sweep(scenario, epsilons, limit, preset='first_order', t_end=None, steps=None, threads=None):
    """Fit the order at which scaled Boltzmann solutions satisfy a limit equation.

    ``scenario`` provides the unscaled ``model`` and the ``grid``. Diffusion
    and reaction members relax from f0 with implicit centered steps up to
    ``t_end`` in the scaled time; free-streaming members solve the
    stationary problem. Errors are residual norms relative to the unscaled
    emission, floors the gap between two discretizations of the same term.
    """
    limit = LimitKind(limit)
    preset = SweepPreset(preset)
    epsilons = [float(eps) for eps in epsilons]
    if len(epsilons) < 3:
        raise InvalidArgument('an epsilon sweep needs at least three values')
    if any(b >= a for a, b in zip(epsilons, epsilons[1:])) or min(epsilons) <= 0:
        raise InvalidArgument('sweep epsilons must be positive and strictly decreasing')
    if preset is SweepPreset.SECOND_ORDER and limit is not LimitKind.FREE_STREAMING:
        raise InvalidArgument('the second-order preset applies to the free-streaming limit only')
    model, grid = scenario.model, scenario.grid
    if t_end is None:
        t_end = grid.radius / grid.c
    steps = steps or settings.DEFAULT_IMPLICIT_STEPS
    norm = _unscaled_emission(model, grid)
    if norm <= 0:
        raise InvalidArgument('sweeps need a non-zero emissivity')
    if limit is LimitKind.FREE_STREAMING and _static(model, grid):
        raise InvalidArgument('the free-streaming limit needs moving matter, a velocity or a compression rate')

    def member(epsilon):
        logger.info('%s sweep: epsilon=%g', limit.value, epsilon)
        if limit is LimitKind.FREE_STREAMING:
            return _streaming_member(model, grid, epsilon, preset)
        return _relaxation_member(model, grid, epsilon, limit, t_end, steps)

    workers = threads or settings.THREADS
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(member, epsilons))
    else:
        results = [member(epsilon) for epsilon in epsilons]

    errors = np.array([error for error, _ in results]) / norm
    floors = np.array([floor for _, floor in results]) / norm
    slope = float(np.polyfit(np.log(epsilons), np.log(errors), 1)[0])
    key = f'{limit.value}_second_order' if preset is SweepPreset.SECOND_ORDER else limit.value
    report = ConvergenceReport(epsilons=epsilons, errors=errors, floors=floors, fitted_slope=slope,
                               limit=limit, preset=preset, expected_slope=settings.SWEEP_SLOPES.get(key),
                               roundoff=settings.SWEEP_ROUNDOFF)
    logger.info(report.verdict)
    return report
