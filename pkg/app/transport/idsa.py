"""
Isotropic diffusion source approximation.

The angular means are split into a trapped part beta_t, evolved by a
reaction equation with source -Sigma, and a streaming part beta_s, obtained
from a stationary outward march closed by the geometric flux factor.
"""
import enum
import logging
from dataclasses import dataclass, field

import numpy as np
from django.conf import settings
from scipy.linalg import solve_banded

from .exceptions import InvalidArgument, SingularOpacity
from .grid import MomentField, MomentRole
from .kinetics import upwind_difference
from .matter import evaluate_on_grid, mean_free_path, scattering_sphere_radii

logger = logging.getLogger(__name__)


class LimiterVariant(enum.Enum):
    IDSA = 'idsa'
    GLOBAL = 'global'


class Regime(enum.Enum):
    DIFFUSION = 'diffusion'
    FREE_STREAMING = 'free_streaming'
    REACTION = 'reaction'


@dataclass(frozen=True, eq=False)
class SourceField:
    sigma_ids: MomentField
    sigma: MomentField
    regime: np.ndarray
    limiter_variant: LimiterVariant = LimiterVariant.IDSA

    def mask(self, regime):
        return self.regime == Regime(regime).value

    def occupancy(self, cells=None):
        """Fraction of (r, omega) points per regime, optionally over a boolean row mask."""
        tags = self.regime if cells is None else self.regime[cells]
        total = max(tags.size, 1)
        return {regime.value: float(np.count_nonzero(tags == regime.value)) / total
                for regime in Regime}


@dataclass(frozen=True, eq=False)
class StreamingSolution:
    beta_s: MomentField
    flux_factor: np.ndarray
    clipped: int = 0


@dataclass(frozen=True, eq=False)
class IDSASnapshot:
    t: float
    beta_t: MomentField
    beta_s: MomentField
    source: SourceField
    flux_factor: np.ndarray


@dataclass(eq=False)
class IDSASolution:
    snapshots: list = field(default_factory=list)
    scattering_radii: np.ndarray = None
    steps: int = 0
    clipped: int = 0

    @property
    def final(self):
        return self.snapshots[-1]

    @property
    def beta_t(self):
        return [snap.beta_t for snap in self.snapshots]

    @property
    def beta_s(self):
        return [snap.beta_s for snap in self.snapshots]

    @property
    def sources(self):
        return [snap.source for snap in self.snapshots]


def flux_factor(r, omega, R_nu):
    """Geometric flux factor of a sphere of radius R_nu seen from r.

    ``omega`` only selects ``R_nu`` upstream; it is accepted to keep call
    sites uniform over energy groups.
    """
    r = np.asarray(r, dtype=float)
    R_nu = np.asarray(R_nu, dtype=float)
    outside = np.maximum(r, R_nu)
    ratio = np.divide(R_nu, outside, out=np.zeros(np.broadcast(r, R_nu).shape), where=outside > 0)
    value = 0.5 * (1.0 + np.sqrt(1.0 - ratio ** 2))
    return float(value) if value.ndim == 0 else value


def flux_factor_field(grid, radii):
    """Flux factor at the outer face of every cell, shape (n_r, n_omega)."""
    return flux_factor(grid.r_edges[1:, None], grid.omega_groups[None, :], np.asarray(radii)[None, :])


def diffusion_couplings(state, grid):
    """A_face * (lambda/3)_face / dr_face on interior faces, shape (n_r - 1, n_omega).

    The face coefficient is the harmonic mean of the adjacent cells.
    """
    third = np.broadcast_to(mean_free_path(state), (grid.n_r, grid.n_omega)) / 3.0
    left, right = third[:-1], third[1:]
    face = 2.0 * left * right / (left + right)
    distance = np.diff(grid.r_centers)[:, None]
    return grid.face_areas[1:-1, None] * face / distance


def diffusion_apply(beta, couplings, grid):
    """-(1/r^2) d/dr (r^2 (lambda/3) d beta/dr) with zero flux at both ends."""
    flux = couplings * (beta[:-1] - beta[1:])
    out = np.zeros_like(beta)
    out[:-1] += flux
    out[1:] -= flux
    return out / grid.volumes[:, None]


@dataclass(frozen=True, eq=False)
class TrappedDiffusion:
    """Radial operator of the trapped diffusion term.

    Without scattering spheres it is ``diffusion_apply`` with zero flux at
    both ends. With them, faces beyond the sphere of a group carry no
    trapped flux, and the last cell inside the sphere loses particles
    through its outer face as an isotropic outgoing hemisphere, a flux of
    beta/4 per unit area. A sphere beyond the last cell centre puts that
    face on the outer boundary.
    """
    couplings: np.ndarray
    escape: np.ndarray

    @classmethod
    def build(cls, state, grid, radii=None):
        couplings = diffusion_couplings(state, grid)
        escape = np.zeros((grid.n_r, grid.n_omega))
        if radii is None:
            return cls(couplings=couplings, escape=escape)
        inside = grid.r_centers[:, None] < np.asarray(radii, dtype=float)[None, :]
        surface = inside[:-1] & ~inside[1:]
        escape[:-1] = np.where(surface, 0.25 * grid.face_areas[1:-1, None], 0.0)
        escape[-1] = np.where(inside[-1], 0.25 * grid.face_areas[-1], 0.0)
        return cls(couplings=np.where(inside[:-1] & inside[1:], couplings, 0.0), escape=escape)

    def apply(self, beta, grid):
        return diffusion_apply(beta, self.couplings, grid) + self.escape * beta / grid.volumes[:, None]


def compute_sigma_ids(beta_t, beta_s, model, grid, t=0.0, state=None, radii=None):
    """Sigma_ids = -(1/r^2) d/dr (r^2 (lambda/3) d beta_t/dr) + chi_tilde beta_s.

    ``radii`` are the scattering-sphere radii per group; see ``TrappedDiffusion``.
    """
    if state is None:
        state = evaluate_on_grid(model, grid, t)
    beta_t = getattr(beta_t, 'values', beta_t)
    beta_s = getattr(beta_s, 'values', beta_s)
    if beta_t.shape != (grid.n_r, grid.n_omega) or beta_s.shape != beta_t.shape:
        raise InvalidArgument('moment fields do not match the grid')
    chi_tilde = np.broadcast_to(state.chi_tilde, beta_t.shape)
    sigma = TrappedDiffusion.build(state, grid, radii).apply(beta_t, grid) + chi_tilde * beta_s
    return MomentField(sigma, MomentRole.RESIDUAL)


def limit_sigma(sigma_ids, state, beta_s=None, variant='idsa'):
    """Clamp Sigma_ids into [lower, j] and tag which branch fired."""
    variant = LimiterVariant(variant)
    raw = getattr(sigma_ids, 'values', sigma_ids)
    j = np.broadcast_to(state.j, raw.shape)
    if variant is LimiterVariant.GLOBAL:
        if beta_s is None:
            raise InvalidArgument('the global limiter needs beta_s')
        lower = np.broadcast_to(state.chi_tilde, raw.shape) * getattr(beta_s, 'values', beta_s)
    else:
        lower = np.zeros_like(raw)
    raised = np.maximum(raw, lower)
    sigma = np.minimum(raised, j)
    regime = np.full(raw.shape, Regime.DIFFUSION.value, dtype='<U14')
    regime[raw < lower] = Regime.REACTION.value
    regime[raised > j] = Regime.FREE_STREAMING.value
    return SourceField(sigma_ids=MomentField(raw, MomentRole.RESIDUAL),
                       sigma=MomentField(sigma, MomentRole.RESIDUAL),
                       regime=regime,
                       limiter_variant=variant)


def trapped_step(beta_t, sigma, model, grid, dt, t=0.0, beta_s=None, state=None, radii=None):
    """One step of d beta_t/(c dt) + (1/3) (d ln rho/(c dt)) omega d beta_t/d omega = j - chi_tilde beta_t - Sigma.

    ``sigma`` is either a plain field, used as an explicit source, or a
    ``SourceField``; with a ``SourceField`` and ``beta_s`` the diffusion
    tagged points take the diffusion part of Sigma implicitly, with the
    operator ``compute_sigma_ids`` built for the same ``radii``.
    """
    if dt <= 0:
        raise InvalidArgument(f'time step must be positive, got {dt}')
    if state is None:
        state = evaluate_on_grid(model, grid, t)
    values = beta_t.values if isinstance(beta_t, MomentField) else np.asarray(beta_t, dtype=float)
    shape = values.shape
    h = grid.c * dt / model.time_weight
    j = np.broadcast_to(state.j, shape)
    chi_tilde = np.broadcast_to(state.chi_tilde, shape)

    speed = np.broadcast_to(state.dlnrho_cdt, shape) * grid.omega_groups[None, :] / 3.0
    rhs = values - h * speed * upwind_difference(values, grid.omega_groups, speed, axis=1)

    source = sigma.sigma.values if isinstance(sigma, SourceField) else getattr(sigma, 'values', sigma)
    implicit = None
    if isinstance(sigma, SourceField) and beta_s is not None:
        implicit = sigma.mask(Regime.DIFFUSION)
    if implicit is None or not implicit.any():
        return MomentField((rhs + h * (j - source)) / (1.0 + h * chi_tilde), MomentRole.BETA_T)

    beta_s = getattr(beta_s, 'values', beta_s)
    diffusion = TrappedDiffusion.build(state, grid, radii)
    couplings = diffusion.couplings
    result = np.empty(shape)
    for group in range(grid.n_omega):
        rows = implicit[:, group]
        diagonal = 1.0 + h * chi_tilde[:, group] + np.where(rows, h * diffusion.escape[:, group] / grid.volumes, 0.0)
        explicit_rhs = rhs[:, group] + h * (j[:, group] - np.where(rows, chi_tilde[:, group] * beta_s[:, group],
                                                                  source[:, group]))
        scaled = h * couplings[:, group] / grid.volumes[:-1]
        scaled_below = h * couplings[:, group] / grid.volumes[1:]
        upper = np.where(rows[:-1], -scaled, 0.0)
        lower = np.where(rows[1:], -scaled_below, 0.0)
        diagonal = diagonal - np.concatenate([upper, [0.0]]) - np.concatenate([[0.0], lower])
        banded = np.zeros((3, grid.n_r))
        banded[0, 1:] = upper
        banded[1] = diagonal
        banded[2, :-1] = lower
        try:
            result[:, group] = solve_banded((1, 1), banded, explicit_rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularOpacity(f'trapped diffusion solve, group {group}: {exc}')
    return MomentField(result, MomentRole.BETA_T)


def streaming_solve(sigma, model, grid, t=0.0, radii=None, flux_factors=None, state=None):
    """March (1/r^2) d/dr (r^2 FF beta_s) = -chi_tilde beta_s + Sigma outward from r = 0."""
    if state is None:
        state = evaluate_on_grid(model, grid, t)
    source = sigma.sigma.values if isinstance(sigma, SourceField) else getattr(sigma, 'values', sigma)
    shape = (grid.n_r, grid.n_omega)
    if flux_factors is None:
        if radii is None:
            radii = scattering_sphere_radii(model, grid, t=t)
        flux_factors = flux_factor_field(grid, radii)
    flux_factors = np.broadcast_to(np.asarray(flux_factors, dtype=float), shape)
    chi_tilde = np.broadcast_to(state.chi_tilde, shape)
    areas, volumes = grid.face_areas, grid.volumes

    beta_s = np.empty(shape)
    incoming = np.zeros(grid.n_omega)
    for i in range(grid.n_r):
        outflow = areas[i + 1] * flux_factors[i] + volumes[i] * chi_tilde[i]
        beta_s[i] = (areas[i] * incoming + volumes[i] * source[i]) / outflow
        incoming = flux_factors[i] * beta_s[i]

    negative = beta_s < 0
    breakdown = beta_s < -settings.CLOSURE_TOLERANCE
    clipped = int(np.count_nonzero(breakdown))
    if clipped:
        logger.warning('streaming closure produced %d negative densities (min %.3g); clipped to 0',
                       clipped, beta_s.min())
    beta_s[negative] = 0.0
    return StreamingSolution(beta_s=MomentField(beta_s, MomentRole.BETA_S),
                             flux_factor=np.array(flux_factors), clipped=clipped)


def _stable_dt(state, grid, weight):
    if grid.n_omega < 2:
        return np.inf
    speed = np.abs(np.asarray(state.dlnrho_cdt)) * grid.omega_groups.max() / 3.0
    rate = np.max(speed) / np.min(np.diff(grid.omega_groups))
    if rate <= 0:
        return np.inf
    return settings.CFL_TARGET * weight / (grid.c * rate)


def idsa_run(model, grid, beta_t_init, t_end, variant='idsa', dt=None, cadence=1,
             tau_threshold=None, on_step=None):
    """Couple the trapped and streaming components.

    Each step evaluates Sigma_ids on the current fields, limits it, advances
    beta_t and then solves for beta_s with the limited source.
    """
    if t_end < 0:
        raise InvalidArgument(f't_end must be non-negative, got {t_end}')
    variant = LimiterVariant(variant)
    beta_t = getattr(beta_t_init, 'values', beta_t_init)
    if beta_t.shape != (grid.n_r, grid.n_omega):
        raise InvalidArgument('initial beta_t does not match the grid')
    beta_t = MomentField(beta_t, MomentRole.BETA_T)
    static = model.compression is None or not callable(model.compression)
    state = evaluate_on_grid(model, grid, 0.0)
    radii = scattering_sphere_radii(model, grid, tau_threshold)
    factors = flux_factor_field(grid, radii)
    logger.debug('scattering sphere radii %s', radii)

    def close(beta_t, beta_s, state):
        sigma_ids = compute_sigma_ids(beta_t, beta_s, model, grid, state=state, radii=radii)
        source = limit_sigma(sigma_ids, state, beta_s, variant)
        return source, streaming_solve(source, model, grid, flux_factors=factors, state=state)

    solution = IDSASolution(scattering_radii=radii)
    source, streaming = close(beta_t, np.zeros(beta_t.shape), state)
    beta_s = streaming.beta_s
    solution.clipped += streaming.clipped
    solution.snapshots.append(IDSASnapshot(0.0, beta_t, beta_s, source, factors))
    if t_end == 0:
        return solution

    if dt is None:
        dt = t_end / settings.DEFAULT_IMPLICIT_STEPS
    dt = min(dt, _stable_dt(state, grid, model.time_weight))
    t, count = 0.0, 0
    while t < t_end * (1 - 1e-12):
        step_dt = min(dt, t_end - t)
        if not static:
            state = evaluate_on_grid(model, grid, t)
        sigma_ids = compute_sigma_ids(beta_t, beta_s, model, grid, state=state, radii=radii)
        source = limit_sigma(sigma_ids, state, beta_s, variant)
        beta_t = trapped_step(beta_t, source, model, grid, step_dt, t, beta_s=beta_s, state=state, radii=radii)
        streaming = streaming_solve(source, model, grid, flux_factors=factors, state=state)
        beta_s = streaming.beta_s
        solution.clipped += streaming.clipped
        t, count = t + step_dt, count + 1
        if count % cadence == 0 or t >= t_end * (1 - 1e-12):
            solution.snapshots.append(IDSASnapshot(t, beta_t, beta_s, source, factors))
        if on_step is not None:
            on_step(count, t, beta_t)

    solution.steps = count
    return solution


def limiter_bounds_check(state, sigma_value):
    """Stationary trapped value (j - Sigma)/chi_tilde and whether -chi <= Sigma <= j."""
    j = np.asarray(state.j, dtype=float)
    chi = np.asarray(state.chi, dtype=float)
    chi_tilde = j + chi
    if np.any(chi_tilde <= 0):
        raise SingularOpacity('chi_tilde = 0')
    sigma_value = np.asarray(sigma_value, dtype=float)
    stationary = (j - sigma_value) / chi_tilde
    verdict = (-chi <= sigma_value) & (sigma_value <= j)
    if stationary.ndim == 0:
        return float(stationary), bool(verdict)
    return stationary, verdict
