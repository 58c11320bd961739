"""
Scenario files.

A scenario is a dotenv file of dotted keys::

    run.mode=compare
    run.t_end=2.0
    grid.n_r=60
    grid.radius=1.0
    rates.j=0:5.0, 0.3:5.0, 0.31:1e-6, 1.0:1e-6
    rates.chi=0:5.0, 0.3:5.0, 0.31:1e-3, 1.0:1e-3

Every binding keeps the line it came from so errors point back into the
file.
"""
import io
import logging
from dataclasses import dataclass, field
from os import path

import numpy as np
import pyexcel
from dotenv.parser import parse_stream

from transport.asymptotics import hilbert_f0
from transport.exceptions import TransportError
from transport.grid import PhaseGrid
from transport.kinetics import CollisionKernel
from transport.matter import MatterModel, RadialProfile, TimeProfile, apply_scaling

from .exceptions import ScenarioError, ScenarioParseException
from .forms import ScenarioForm, scenario_fields

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Binding:
    key: str
    value: str
    line: int


@dataclass(eq=False)
class Scenario:
    mode: str
    grid: PhaseGrid
    model: MatterModel
    t_end: float = None
    dt: float = None
    cadence: int = 1
    inflow: str = 'vacuum'
    scheme: str = 'imex'
    discretization: str = None
    seed: int = 0
    initial_kind: str = 'vacuum'
    initial_table: RadialProfile = None
    noise: float = 0.0
    limiter: str = 'idsa'
    tau_threshold: float = None
    sweep_limit: str = None
    sweep_epsilons: list = None
    sweep_t_end: float = None
    sweep_steps: int = None
    sweep_preset: str = 'first_order'
    source: str = None
    bindings: list = field(default_factory=list)

    def initial_field(self):
        grid = self.grid
        if self.initial_kind == 'vacuum':
            return grid.isotropic(np.zeros((grid.n_r, grid.n_omega)))
        if self.initial_kind == 'custom':
            values = self.initial_table(grid.r_centers[:, None], grid.omega_groups[None, :])
            return grid.isotropic(np.broadcast_to(values, (grid.n_r, grid.n_omega)))
        equilibrium = hilbert_f0(self.model, grid)
        if self.initial_kind == 'equilibrium':
            return equilibrium
        rng = np.random.default_rng(self.seed)
        noise = 1.0 + self.noise * rng.uniform(-1.0, 1.0, size=grid.shape)
        return equilibrium.with_values(np.clip(equilibrium.values * noise, 0.0, 1.0))

    def initial_beta(self):
        return self.grid.moment(self.initial_field())

    def echo(self):
        return [{'key': binding.key, 'value': binding.value, 'line': binding.line}
                for binding in self.bindings]


def _line_of(binding):
    """First line of the binding itself; dotenv folds leading blank lines into it."""
    string = binding.original.string
    return binding.original.line + string[:len(string) - len(string.lstrip())].count('\n')


def read_bindings(stream):
    """Dotenv bindings of a scenario, rejecting malformed, empty and repeated keys."""
    known = scenario_fields()
    bindings = {}
    for binding in parse_stream(stream):
        line = _line_of(binding)
        if binding.error:
            raise ScenarioParseException(line_num=line, line=binding.original.string.strip())
        if binding.key is None:
            continue
        if binding.value is None:
            raise ScenarioParseException(line_num=line, line=f'{binding.key} has no value')
        if binding.key not in known:
            raise ScenarioError(line_num=line, line=f'unknown key {binding.key}')
        if binding.key in bindings:
            raise ScenarioError(line_num=line, line=f'{binding.key} repeats line {bindings[binding.key].line}')
        bindings[binding.key] = Binding(binding.key, binding.value, line)
    return bindings


def _profile(table, energies=None, default=None):
    if table is None:
        return RadialProfile.constant(default)
    values = np.asarray(table.values, dtype=float)
    if values.shape[1] == 1:
        values = values[:, 0]
        energies = None
    return RadialProfile(radii=np.asarray(table.radii), values=values, energies=energies)


def _time_profile(table):
    if table is None:
        return None
    if len(table.radii) == 1:
        return table.values[0][0]
    return TimeProfile(times=np.asarray(table.radii), values=np.asarray([row[0] for row in table.values]))


def read_kernel(filename, n_groups, n_ordinates):
    """Kernel samples from a CSV with columns group, k, l, value (omitted entries are 0)."""
    if not path.isfile(filename):
        raise TransportError(f'kernel table {filename} not found')
    records = pyexcel.get_records(file_name=filename)
    groups = max(int(record['group']) for record in records) + 1 if records else 1
    if groups not in (1, n_groups):
        raise TransportError(f'kernel has {groups} groups for {n_groups} energy groups')
    samples = np.zeros((groups, n_ordinates, n_ordinates))
    for record in records:
        samples[int(record['group']), int(record['k']), int(record['l'])] = float(record['value'])
    return CollisionKernel(samples=samples[0] if groups == 1 else samples)


def _anchor(bindings, *keys):
    for key in keys:
        if key in bindings:
            return bindings[key].line
    return 0


def build_scenario(bindings, source=None):
    form = ScenarioForm(data={key: binding.value for key, binding in bindings.items()})
    if not form.is_valid():
        key, messages = next(iter(form.errors.items()))
        raise ScenarioError(line_num=_anchor(bindings, key), line=f'{key}: {" ".join(messages)}')
    data = {key: value for key, value in form.cleaned_data.items() if value not in (None, '')}

    try:
        grid = PhaseGrid.build(n_r=data['grid.n_r'],
                               radius=data['grid.radius'],
                               n_ordinates=data.get('grid.n_ordinates'),
                               n_groups=data.get('grid.n_groups', 1),
                               omega_min=data.get('grid.omega_min', 1.0),
                               group_ratio=data.get('grid.group_ratio'),
                               c=data.get('grid.c'))
    except TransportError as exc:
        raise ScenarioError(line_num=_anchor(bindings, 'grid.n_r', 'grid.radius'), line=exc.detail)

    energies = data.get('rates.energies')
    energies = None if energies is None else np.asarray(energies)
    try:
        kernel = None
        if 'rates.kernel' in data:
            base = path.dirname(source) if source else '.'
            kernel = read_kernel(path.join(base, data['rates.kernel']), grid.n_omega, grid.n_mu)
        model = MatterModel(radius=grid.radius,
                            rho=_profile(data.get('matter.rho'), default=1.0),
                            v=_profile(data.get('matter.v'), default=0.0),
                            j=_profile(data['rates.j'], energies),
                            chi=_profile(data['rates.chi'], energies),
                            phi0=_profile(data.get('rates.phi0'), energies, 0.0),
                            phi1=_profile(data.get('rates.phi1'), energies, 0.0),
                            compression=_time_profile(data.get('matter.compression')),
                            c=grid.c,
                            omega_max=data.get('matter.omega_max', np.inf),
                            kernel=kernel)
        model = apply_scaling(model, data.get('scaling.epsilon', 1.0), data.get('scaling.mode', 'none'))
        initial_table = None
        if 'initial.table' in data:
            initial_table = _profile(data['initial.table'], energies)
    except (TransportError, OSError, KeyError, ValueError) as exc:
        raise ScenarioError(line_num=_anchor(bindings, 'rates.kernel', 'rates.j'),
                            line=getattr(exc, 'detail', str(exc)))

    return Scenario(mode=data['run.mode'],
                    grid=grid,
                    model=model,
                    t_end=data.get('run.t_end'),
                    dt=data.get('run.dt'),
                    cadence=data.get('run.cadence', 1),
                    inflow=data.get('run.inflow', 'vacuum'),
                    scheme=data.get('run.scheme', 'imex'),
                    discretization=data.get('run.discretization'),
                    seed=data.get('run.seed', 0),
                    initial_kind=data.get('initial.kind', 'vacuum'),
                    initial_table=initial_table,
                    noise=data.get('initial.noise', 0.0),
                    limiter=data.get('idsa.limiter', 'idsa'),
                    tau_threshold=data.get('idsa.tau_threshold'),
                    sweep_limit=data.get('sweep.limit'),
                    sweep_epsilons=data.get('sweep.epsilons'),
                    sweep_t_end=data.get('sweep.t_end'),
                    sweep_steps=data.get('sweep.steps'),
                    sweep_preset=data.get('sweep.preset', 'first_order'),
                    source=source,
                    bindings=sorted(bindings.values(), key=lambda binding: binding.line))


def load_scenario(filename):
    with io.open(filename, encoding='utf-8') as stream:
        bindings = read_bindings(stream)
    logger.debug('read %d scenario keys from %s', len(bindings), filename)
    return build_scenario(bindings, source=filename)


def loads_scenario(text):
    return build_scenario(read_bindings(io.StringIO(text)))
