"""
Mode dispatch shared by the management commands.
"""
import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np
from django.conf import settings

from transport import asymptotics, boltzmann, idsa
from transport.asymptotics import HierarchyVariant
from transport.kinetics import OperatorPart, transport_apply
from transport.matter import evaluate_on_grid

from . import reports
from .exceptions import ScenarioError
from .scenario import load_scenario

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HierarchyCheck:
    variant: str
    level: int
    residual: float
    tolerance: float

    @property
    def passed(self):
        return self.residual <= self.tolerance


@dataclass
class RunResult:
    mode: str
    files: list = field(default_factory=list)
    passed: bool = True
    messages: list = field(default_factory=list)


def run_boltzmann(scenario, threads):
    return boltzmann.solve(scenario.model, scenario.grid, scenario.initial_field(), scenario.t_end,
                           dt=scenario.dt,
                           cadence=scenario.cadence,
                           scheme=scenario.scheme,
                           discretization=scenario.discretization,
                           inflow=scenario.inflow,
                           threads=threads)


def run_idsa(scenario):
    return idsa.idsa_run(scenario.model, scenario.grid, scenario.initial_beta(), scenario.t_end,
                         variant=scenario.limiter,
                         dt=scenario.dt,
                         cadence=scenario.cadence,
                         tau_threshold=scenario.tau_threshold)


def hierarchy_checks(scenario, threads=None, tolerance=None):
    """Residuals of the stationary hierarchy levels for the scenario's matter.

    The reaction-scaled hierarchies use centered differences and the
    truncated collision operator the Hilbert terms are inverted with; the
    time-scaled one starts from the stationary upwind solution.
    """
    if tolerance is None:
        tolerance = settings.HIERARCHY_TOLERANCE
    grid = scenario.grid
    model = scenario.model
    if model.kernel is not None:
        logger.info('hierarchy levels built on the truncated collision operator; ignoring the kernel table')
        model = replace(model, kernel=None)
    zero = np.zeros(grid.shape)

    f0 = asymptotics.hilbert_f0(model, grid)
    f1_full = asymptotics.hilbert_f1(f0, model, grid, 'full', time_derivative=zero)
    f1_minus = asymptotics.hilbert_f1(f0, model, grid, 'minus')
    f2 = asymptotics.hilbert_f2(f0, f1_minus, model, grid, time_derivative=zero)
    cases = [
        (HierarchyVariant.REACTION_SCALED, 0, {'f0': f0}, 'centered', 'extrapolate'),
        (HierarchyVariant.REACTION_SCALED, 1, {'f0': f0, 'f1': f1_full}, 'centered', 'extrapolate'),
        (HierarchyVariant.TIME_AND_REACTION_SCALED, 0, {'f0': f0}, 'centered', 'extrapolate'),
        (HierarchyVariant.TIME_AND_REACTION_SCALED, 1, {'f0': f0, 'f1': f1_minus}, 'centered', 'extrapolate'),
        (HierarchyVariant.TIME_AND_REACTION_SCALED, 2, {'f0': f0, 'f1': f1_minus, 'f2': f2},
         'centered', 'extrapolate'),
    ]

    steady = boltzmann.solve_steady(model, grid, 'upwind', scenario.inflow, threads=threads)
    plus = transport_apply(steady, model, grid, OperatorPart.PLUS, zero, scheme='upwind')
    state = evaluate_on_grid(model, grid)
    j = np.broadcast_to(state.j, (grid.n_r, grid.n_omega))[:, None, :]
    streaming_f1 = boltzmann.solve_steady(model, grid, 'upwind', scenario.inflow, source=-plus - j,
                                          threads=threads)
    cases += [
        (HierarchyVariant.TIME_SCALED, 0, {'f0': steady}, 'upwind', scenario.inflow),
        (HierarchyVariant.TIME_SCALED, 1, {'f0': steady, 'f1': streaming_f1}, 'upwind', scenario.inflow),
    ]

    checks = []
    for variant, level, fields, scheme, inflow in cases:
        residual = asymptotics.hierarchy_residual(variant, level, fields, model, grid, scheme=scheme,
                                                  inflow=inflow, relative=True)
        checks.append(HierarchyCheck(variant.value, level, float(residual), tolerance))
        logger.info('%s level %d: relative residual %.3g', variant.value, level, residual)
    return checks


def run(scenario_path, out_dir, mode=None, threads=None):
    """Execute the scenario's mode (or ``mode``) and write its artifacts into ``out_dir``.

    Configuration problems raise ``ScenarioError``; numerical ones propagate
    as ``TransportError``.
    """
    scenario = load_scenario(scenario_path)
    mode = mode or scenario.mode
    if mode != scenario.mode:
        logger.info('scenario mode %s overridden by %s', scenario.mode, mode)
    if mode in ('boltzmann', 'idsa', 'compare') and scenario.t_end is None:
        raise ScenarioError(line_num=0, line=f'mode {mode} needs run.t_end')
    if mode == 'epsilon-sweep' and (scenario.sweep_limit is None or scenario.sweep_epsilons is None):
        raise ScenarioError(line_num=0, line='mode epsilon-sweep needs sweep.limit and sweep.epsilons')
    threads = threads or settings.THREADS
    os.makedirs(out_dir, exist_ok=True)
    result = RunResult(mode=mode)
    grid = scenario.grid

    if mode in ('boltzmann', 'compare'):
        solution = run_boltzmann(scenario, threads)
        result.files += reports.write_boltzmann(solution, grid, out_dir)
        result.messages.append(f'boltzmann: {solution.steps} steps to {solution.time_variable}={scenario.t_end:g}')
    if mode in ('idsa', 'compare'):
        idsa_solution = run_idsa(scenario)
        result.files += reports.write_idsa(idsa_solution, grid, out_dir)
        result.messages.append(f'idsa: {idsa_solution.steps} steps, {idsa_solution.clipped} clipped cells')
    if mode == 'compare':
        summary = reports.compare_report(solution, idsa_solution, grid)
        result.files += reports.write_compare(summary, out_dir)
        occupancy = summary.overall_occupancy()
        result.messages.append('regimes: ' + ', '.join(f'{key} {value:.1%}' for key, value in occupancy.items()))
    if mode == 'hierarchy-check':
        checks = hierarchy_checks(scenario, threads)
        result.files += reports.write_hierarchy(checks, out_dir)
        result.passed = all(check.passed for check in checks)
        worst = max(checks, key=lambda check: check.residual)
        result.messages.append(f'largest residual {worst.residual:.3g} ({worst.variant} level {worst.level})')
    if mode == 'epsilon-sweep':
        report = asymptotics.epsilon_sweep(scenario, scenario.sweep_epsilons, scenario.sweep_limit,
                                           preset=scenario.sweep_preset,
                                           t_end=scenario.sweep_t_end,
                                           steps=scenario.sweep_steps,
                                           threads=threads)
        result.files += reports.write_sweep(report, out_dir)
        result.messages.append(report.verdict)

    result.files.append(reports.write_manifest(scenario, mode, threads, out_dir, result.files))
    return result
