from django import forms
from django.core.exceptions import ValidationError

from transport.asymptotics import LimitKind, SweepPreset
from transport.boltzmann import TimeScheme
from transport.idsa import LimiterVariant
from transport.kinetics import Inflow, Scheme
from transport.matter import ScalingMode

MODES = ('boltzmann', 'idsa', 'compare', 'hierarchy-check', 'epsilon-sweep')
INITIAL_KINDS = ('vacuum', 'equilibrium', 'custom', 'perturbed')
TIMED_MODES = ('boltzmann', 'idsa', 'compare')


def _choices(values):
    return [(value, value) for value in values]


def _enum_choices(enum_class):
    return _choices(member.value for member in enum_class)


class ProfileTable:
    """Parsed ``r:value`` table; ``values`` has one row per radius."""

    def __init__(self, radii, values):
        self.radii = radii
        self.values = values

    @property
    def width(self):
        return len(self.values[0])

    def __repr__(self):
        return f'ProfileTable({self.radii!r}, {self.values!r})'


def _number(text, message):
    try:
        return float(text)
    except ValueError:
        raise ValidationError(message, code='invalid')


class ProfileField(forms.CharField):
    """A radial table ``r:v, r:v`` (``r:v1/v2`` per energy) or a bare constant."""
    default_error_messages = {
        'invalid': 'Enter a number or a comma-separated list of r:value pairs.',
        'order': 'Table radii must be strictly increasing.',
        'ragged': 'Every table entry needs the same number of values.',
    }

    def to_python(self, value):
        value = super().to_python(value)
        if value in self.empty_values:
            return None
        if ':' not in value:
            return ProfileTable([0.0], [[_number(value, self.error_messages['invalid'])]])
        radii, rows = [], []
        for entry in value.split(','):
            if entry.count(':') != 1:
                raise ValidationError(self.error_messages['invalid'], code='invalid')
            radius, values = entry.split(':')
            radii.append(_number(radius, self.error_messages['invalid']))
            rows.append([_number(item, self.error_messages['invalid']) for item in values.split('/')])
        if any(b <= a for a, b in zip(radii, radii[1:])):
            raise ValidationError(self.error_messages['order'], code='order')
        if len({len(row) for row in rows}) != 1:
            raise ValidationError(self.error_messages['ragged'], code='ragged')
        return ProfileTable(radii, rows)


class TimeTableField(ProfileField):
    """``t:value`` pairs or a constant; energy columns are not allowed."""

    def to_python(self, value):
        table = super().to_python(value)
        if table is not None and table.width != 1:
            raise ValidationError('Time tables take a single value per entry.', code='invalid')
        return table


class FloatListField(forms.CharField):
    default_error_messages = {
        'invalid': 'Enter a comma-separated list of numbers.',
    }

    def to_python(self, value):
        value = super().to_python(value)
        if value in self.empty_values:
            return None
        return [_number(item, self.error_messages['invalid']) for item in value.split(',')]


def scenario_fields():
    """Field per dotted scenario key."""
    return {
        'run.mode': forms.ChoiceField(choices=_choices(MODES)),
        'run.t_end': forms.FloatField(required=False, min_value=0.0),
        'run.dt': forms.FloatField(required=False, min_value=0.0),
        'run.cadence': forms.IntegerField(required=False, min_value=1),
        'run.inflow': forms.ChoiceField(required=False, choices=_enum_choices(Inflow)),
        'run.scheme': forms.ChoiceField(required=False, choices=_enum_choices(TimeScheme)),
        'run.discretization': forms.ChoiceField(required=False, choices=_enum_choices(Scheme)),
        'run.seed': forms.IntegerField(required=False, min_value=0),
        'grid.n_r': forms.IntegerField(min_value=1),
        'grid.radius': forms.FloatField(min_value=0.0),
        'grid.n_ordinates': forms.IntegerField(required=False, min_value=2),
        'grid.n_groups': forms.IntegerField(required=False, min_value=1),
        'grid.omega_min': forms.FloatField(required=False, min_value=0.0),
        'grid.group_ratio': forms.FloatField(required=False, min_value=1.0),
        'grid.c': forms.FloatField(required=False, min_value=0.0),
        'matter.rho': ProfileField(required=False),
        'matter.v': ProfileField(required=False),
        'matter.compression': TimeTableField(required=False),
        'matter.omega_max': forms.FloatField(required=False, min_value=0.0),
        'rates.j': ProfileField(),
        'rates.chi': ProfileField(),
        'rates.phi0': ProfileField(required=False),
        'rates.phi1': ProfileField(required=False),
        'rates.energies': FloatListField(required=False),
        'rates.kernel': forms.CharField(required=False),
        'scaling.mode': forms.ChoiceField(required=False, choices=_enum_choices(ScalingMode)),
        'scaling.epsilon': forms.FloatField(required=False, min_value=0.0),
        'initial.kind': forms.ChoiceField(required=False, choices=_choices(INITIAL_KINDS)),
        'initial.table': ProfileField(required=False),
        'initial.noise': forms.FloatField(required=False, min_value=0.0, max_value=1.0),
        'idsa.limiter': forms.ChoiceField(required=False, choices=_enum_choices(LimiterVariant)),
        'idsa.tau_threshold': forms.FloatField(required=False, min_value=0.0),
        'sweep.limit': forms.ChoiceField(required=False, choices=_enum_choices(LimitKind)),
        'sweep.epsilons': FloatListField(required=False),
        'sweep.t_end': forms.FloatField(required=False, min_value=0.0),
        'sweep.steps': forms.IntegerField(required=False, min_value=1),
        'sweep.preset': forms.ChoiceField(required=False, choices=_enum_choices(SweepPreset)),
    }


class ScenarioForm(forms.Form):

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.fields.update(scenario_fields())

    def _positive(self, cleaned, key):
        if cleaned.get(key) is not None and cleaned[key] <= 0:
            self.add_error(key, 'Ensure this value is greater than 0.')

    def clean(self):
        cleaned = super().clean()
        for key in ('run.dt', 'grid.radius', 'grid.omega_min', 'grid.c', 'scaling.epsilon', 'matter.omega_max'):
            self._positive(cleaned, key)
        if cleaned.get('grid.group_ratio') is not None and cleaned['grid.group_ratio'] <= 1:
            self.add_error('grid.group_ratio', 'Ensure this value is greater than 1.')

        mode = cleaned.get('run.mode')
        if mode in TIMED_MODES and cleaned.get('run.t_end') is None:
            self.add_error('run.mode', f'Mode {mode} needs run.t_end.')
        if mode == 'epsilon-sweep':
            epsilons = cleaned.get('sweep.epsilons')
            if not cleaned.get('sweep.limit'):
                self.add_error('run.mode', 'Mode epsilon-sweep needs sweep.limit.')
            if not epsilons or len(epsilons) < 3:
                self.add_error('sweep.epsilons' if epsilons else 'run.mode',
                               'An epsilon sweep needs at least three values.')
            elif any(b >= a for a, b in zip(epsilons, epsilons[1:])) or min(epsilons) <= 0:
                self.add_error('sweep.epsilons', 'Sweep epsilons must be positive and strictly decreasing.')
        if cleaned.get('initial.kind') == 'custom' and cleaned.get('initial.table') is None:
            self.add_error('initial.kind', 'A custom initial condition needs initial.table.')

        energies = cleaned.get('rates.energies')
        for key in ('rates.j', 'rates.chi', 'rates.phi0', 'rates.phi1', 'initial.table'):
            table = cleaned.get(key)
            if table is None or table.width == 1:
                continue
            if energies is None:
                self.add_error(key, 'Tables with one value per energy need rates.energies.')
            elif table.width != len(energies):
                self.add_error(key, f'Expected {len(energies)} values per entry, got {table.width}.')
        if energies is not None and any(b <= a for a, b in zip(energies, energies[1:])):
            self.add_error('rates.energies', 'Energies must be strictly increasing.')
        return cleaned
