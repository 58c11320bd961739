"""
CSV and manifest writers for the run modes, and the Boltzmann versus
IDSA comparison.
"""
import json
import logging
import platform
from dataclasses import dataclass, field
from importlib import metadata
from os import path

import django
import numpy as np
import pyexcel
import scipy

from transport.exceptions import InvalidArgument
from transport.grid import field_moment
from transport.idsa import Regime

logger = logging.getLogger(__name__)

MOMENT_HEADER = ['t', 'r', 'omega', 'beta', 'H', 's']
BALANCE_HEADER = ['step', 't', 'dt', 'particles', 'emission', 'absorption',
                  'boundary_flux', 'compression', 'mismatch', 'cfl']
IDSA_HEADER = ['t', 'r', 'omega', 'beta_t', 'beta_s', 'sigma_ids', 'sigma', 'regime', 'flux_factor']
COMPARE_HEADER = ['omega', 'beta_rel_l2', 'first_moment_rel_l2'] + [regime.value for regime in Regime]
HIERARCHY_HEADER = ['variant', 'level', 'residual', 'tolerance', 'passed']
SWEEP_HEADER = ['epsilon', 'error', 'floor', 'slope']


@dataclass
class CompareSummary:
    omega: np.ndarray
    beta_difference: np.ndarray
    first_moment_difference: np.ndarray
    occupancy: list = field(default_factory=list)

    def rows(self):
        for k, omega in enumerate(self.omega):
            fractions = self.occupancy[k]
            yield ([float(omega), float(self.beta_difference[k]), float(self.first_moment_difference[k])]
                   + [fractions[regime.value] for regime in Regime])

    def overall_occupancy(self):
        return {regime.value: float(np.mean([fractions[regime.value] for fractions in self.occupancy]))
                for regime in Regime}


def _relative_l2(a, b, grid):
    weights = (grid.r_centers ** 2 * grid.dr)[:, None]
    difference = np.sqrt(np.sum(weights * (a - b) ** 2, axis=0))
    scale = np.sqrt(np.sum(weights * a ** 2, axis=0))
    return np.divide(difference, scale, out=np.array(difference, dtype=float), where=scale > 0)


def compare_report(boltzmann_solution, idsa_solution, grid):
    """Per energy group relative differences between the two solvers at their final times.

    beta is compared with beta_t + beta_s, the first moment H with
    flux_factor * beta_s; regime fractions come from the final IDSA source.
    """
    final = boltzmann_solution.final
    snapshot = idsa_solution.final
    if final.shape != grid.shape or snapshot.beta_t.shape != (grid.n_r, grid.n_omega):
        raise InvalidArgument('Boltzmann and IDSA solutions live on different grids')
    last = boltzmann_solution.snapshots[-1].t if boltzmann_solution.snapshots else None
    if last is not None and not np.isclose(last, snapshot.t):
        logger.warning('comparing Boltzmann at t=%g with IDSA at t=%g', last, snapshot.t)

    beta = field_moment(final.values, 0, grid.rule)
    first_moment = field_moment(final.values, 1, grid.rule)
    beta_idsa = snapshot.beta_t.values + snapshot.beta_s.values
    first_idsa = snapshot.flux_factor * snapshot.beta_s.values
    return CompareSummary(omega=grid.omega_groups,
                          beta_difference=_relative_l2(beta, beta_idsa, grid),
                          first_moment_difference=_relative_l2(first_moment, first_idsa, grid),
                          occupancy=[snapshot.source.occupancy(np.s_[:, k]) for k in range(grid.n_omega)])


def _save(rows, header, out_dir, filename):
    dest = path.join(out_dir, filename)
    pyexcel.save_as(array=[header] + list(rows), dest_file_name=dest)
    logger.debug('wrote %s', dest)
    return dest


def _grid_rows(grid):
    for i, r in enumerate(grid.r_centers):
        for k, omega in enumerate(grid.omega_groups):
            yield i, k, float(r), float(omega)


def write_boltzmann(solution, grid, out_dir):
    def moments():
        for snap in solution.snapshots:
            for i, k, r, omega in _grid_rows(grid):
                yield [float(snap.t), r, omega, float(snap.beta.values[i, k]),
                       float(snap.first_moment.values[i, k]), float(snap.rate.values[i, k])]

    balance = ([entry.step, entry.t, entry.dt, entry.particles, entry.emission, entry.absorption,
                entry.boundary_flux, entry.compression, entry.mismatch, entry.cfl]
               for entry in solution.balance)
    return [_save(moments(), MOMENT_HEADER, out_dir, 'boltzmann_moments.csv'),
            _save(balance, BALANCE_HEADER, out_dir, 'boltzmann_balance.csv')]


def write_idsa(solution, grid, out_dir):
    def snapshots():
        for snap in solution.snapshots:
            source = snap.source
            for i, k, r, omega in _grid_rows(grid):
                yield [float(snap.t), r, omega, float(snap.beta_t.values[i, k]), float(snap.beta_s.values[i, k]),
                       float(source.sigma_ids.values[i, k]), float(source.sigma.values[i, k]),
                       str(source.regime[i, k]), float(snap.flux_factor[i, k])]

    return [_save(snapshots(), IDSA_HEADER, out_dir, 'idsa_snapshots.csv')]


def write_compare(summary, out_dir):
    return [_save(summary.rows(), COMPARE_HEADER, out_dir, 'compare_summary.csv')]


def write_hierarchy(checks, out_dir):
    rows = ([check.variant, check.level, check.residual, check.tolerance, str(check.passed).lower()]
            for check in checks)
    return [_save(rows, HIERARCHY_HEADER, out_dir, 'hierarchy.csv')]


def write_sweep(report, out_dir):
    rows = ([float(eps), float(error), float(floor), report.fitted_slope]
            for eps, error, floor in zip(report.epsilons, report.errors, report.floors))
    dest = path.join(out_dir, 'sweep.txt')
    with open(dest, 'w', encoding='utf-8') as f:
        f.write(report.verdict + '\n')
    return [_save(rows, SWEEP_HEADER, out_dir, 'sweep.csv'), dest]


def package_version():
    try:
        return metadata.version('idsakit')
    except metadata.PackageNotFoundError:
        return 'unknown'


def versions():
    return {
        'python': platform.python_version(),
        'django': django.get_version(),
        'numpy': np.__version__,
        'scipy': scipy.__version__,
        'idsakit': package_version(),
    }


def write_manifest(scenario, mode, threads, out_dir, files=()):
    manifest = {
        'mode': mode,
        'scenario': scenario.echo(),
        'versions': versions(),
        'seed': scenario.seed,
        'threads': threads,
        'files': sorted(path.basename(name) for name in files),
    }
    dest = path.join(out_dir, 'manifest.json')
    with open(dest, 'w', encoding='utf-8') as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write('\n')
    return dest
